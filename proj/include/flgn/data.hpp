#pragma once

#include <cstdint>
#include <vector>

#include "flgn/rng.hpp"
#include "flgn/tensor.hpp"

namespace flgn {

struct DataConfig {
    int64_t grid_h = 8;
    int64_t grid_w = 8;
    int64_t frames_T = 8;
    int64_t n_classes = 5;  // up, down, left, right, static
    double blob_sigma = 1.0;
    double speed = 0.75;
};

void validate(const DataConfig& cfg);

// A toy video: a Gaussian blob translating toroidally across the grid, one
// row per frame, flattened to grid_h*grid_w columns, values in [0, 1].
struct VideoSample {
    Tensor x0;      // [frames_T x grid_h*grid_w]
    int64_t label;  // motion class, 0..n_classes-1
};

// The (x_t, t) pairs a flow-matching step consumes. Invariant, exact:
// xt = (1-t)*x0 + t*x1 elementwise.
struct DiffusionBatch {
    std::vector<Tensor> x0;
    std::vector<Tensor> x1;
    std::vector<Tensor> xt;
    std::vector<double> t;
    std::vector<int64_t> labels;

    int64_t size() const { return static_cast<int64_t>(x0.size()); }
};

struct TSampling {
    bool fixed = false;
    double t = 0.5;  // only read when fixed

    static TSampling uniform() { return {false, 0.0}; }
    static TSampling fixed_at(double t) { return {true, t}; }
};

// Uniform t draws are clamped to [kTMin, kTMax]; fixed-t mode is not clamped
// so interpolant endpoints t=0 and t=1 stay reachable.
inline constexpr double kTMin = 0.001;
inline constexpr double kTMax = 0.999;

std::vector<VideoSample> generate_dataset(const DataConfig& cfg, int64_t n, uint64_t seed);

Tensor interpolant(const Tensor& x0, const Tensor& x1, double t);

// Draws batch_size distinct samples from the pool, then per sample a fresh
// standard-normal x1 and a time t. With uncond_drop > 0 each label is
// independently replaced by null_label with that probability (classifier-free
// conditioning dropout).
DiffusionBatch make_batch(const std::vector<VideoSample>& samples, int64_t batch_size,
                          TSampling ts, RngStream& stream, int64_t null_label = -1,
                          double uncond_drop = 0.0);
DiffusionBatch make_batch(const std::vector<VideoSample>& samples, int64_t batch_size,
                          TSampling ts, uint64_t seed, int64_t null_label = -1,
                          double uncond_drop = 0.0);

}  // namespace flgn
