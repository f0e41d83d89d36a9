#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "flgn/tensor.hpp"

namespace flgn {

// (base_steps * cfg_factor) / (K * retention). cfg_factor 2 models the two
// forward passes classifier-free guidance costs per step; the distilled
// student runs guidance-free.
double theoretical_speedup(double base_steps, double cfg_factor, int64_t steps,
                           double retention);

// 2E|a-b| - E|a-a'| - E|b-b'| with exact double sums over all ordered pairs
// including self-pairs, samples flattened. The cross-sum accumulation order
// is canonicalized so energy_distance(a, b) == energy_distance(b, a) to the
// bit.
double energy_distance(const std::vector<Tensor>& a, const std::vector<Tensor>& b);

// Mean over videos of the mean L2 norm of consecutive-frame differences.
double dynamic_degree(const std::vector<Tensor>& videos);
// exp(-mean L2 norm of the second differences); 1 for linear motion.
double motion_smoothness(const std::vector<Tensor>& videos);
// Mean cosine similarity of frame 0 with each later frame.
double subject_consistency(const std::vector<Tensor>& videos);

struct MetricReport {
    double energy_distance = 0.0;
    double dynamic_degree = 0.0;
    double motion_smoothness = 0.0;
    double subject_consistency = 0.0;
    int64_t n_samples = 0;
    // Hash of the resolved run configuration, so a report can be traced
    // back to the exact settings that produced it.
    std::string config_fingerprint;
};

MetricReport evaluate_samples(const std::vector<Tensor>& generated,
                              const std::vector<Tensor>& reference);

std::string metric_report_json(const MetricReport& r);

}  // namespace flgn
