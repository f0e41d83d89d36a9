#pragma once

#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "flgn/data.hpp"
#include "flgn/model.hpp"
#include "flgn/optim.hpp"

namespace flgn {

struct GuidanceParams {
    double beta1 = 2.0;  // conditional guidance strength inside the teacher
    double beta2 = 0.25; // pruned-to-unpruned interpolation strength
    double a1 = 1.0;     // jitter half-widths: beta1 ~ U[beta1-a1, beta1+b1]
    double b1 = 1.0;
    double a2 = 0.1;     // beta2 ~ U[beta2-a2, beta2+b2]
    double b2 = 0.1;
};

// Warns (stderr) when beta2 - a2 < 0; jitter widths must be non-negative.
void validate(const GuidanceParams& gp);

std::pair<double, double> sample_guidance_scales(const GuidanceParams& gp, RngStream& stream);

// Rectified-flow noise scale: x_t = (1-t)x0 + t*eps carries noise scale t.
inline double sigma_t(double t) { return t; }

// v_real = b1*(v_pr_c - v_pr_null) + b2*(v_unpr_c - v_pr_c) + v_pr_null.
// Implemented with grouped coefficients (b1-b2, 1-b1, b2) so the endpoints
// (1,0) -> v_pr_c and (1,1) -> v_unpr_c hold bit-exactly.
Tensor combine_guidance(const Tensor& v_pr_c, const Tensor& v_pr_null, const Tensor& v_unpr_c,
                        double b1, double b2);

// Three frozen-teacher forwards plus the combination above; no gradient ever
// reaches theta.
Tensor real_velocity(const ModelParams& theta, const Tensor& xt, double t, int64_t cond,
                     const SkipMask& pruned_mask, double b1, double b2);

enum class LambdaMode {
    kOne,        // surrogate gradient is exactly sigma_t * (v_fake - v_real)
    kPerSample,  // normalized by 1 / (mean |g| + 1e-8) per sample
};

enum class TeacherBase {
    kPruned,    // theta and the fake model start from the Stage-II checkpoint
    kUnpruned,  // both start from the base checkpoint instead
};

struct Stage3Config {
    int64_t iterations = 600;   // repeats of (update_ratio fake steps + 1 generator step)
    int64_t update_ratio = 5;   // fake updates per generator update
    int64_t batch_size = 8;
    int64_t steps = 4;          // K of the few-step schedule
    double lr_gen = 2e-4;
    double lr_fake = 1e-3;
    LambdaMode lambda_mode = LambdaMode::kOne;
    TeacherBase teacher_base = TeacherBase::kPruned;
    double t_min = 0.02;  // diffusion-time range for the distillation draws
    double t_max = 0.98;
    uint64_t seed = 1;
    GuidanceParams guidance;
};

void validate(const Stage3Config& cfg);

// Trainable generator phi and fake model, frozen teacher theta, and the
// deterministic pruned mask they share. theta is never mutated; its checksum
// is re-verified when the loop exits.
struct DistillState {
    ModelParams generator;  // phi
    ModelParams fake;
    ModelParams real;  // theta, frozen
    SkipMask pruned_mask;
    std::vector<double> schedule;
    Stage3Config cfg;
    std::unique_ptr<AdamW> opt_gen;
    std::unique_ptr<AdamW> opt_fake;
    RngStream noise;     // generator inputs and re-noising
    RngStream data;      // labels, step truncation, diffusion times
    RngStream guidance;  // per-step CFG jitter
    uint64_t theta_checksum = 0;
};

DistillState init_distill(const ModelParams& stage2_params, const ModelParams& base_params,
                          const std::vector<int64_t>& keep_set, const Stage3Config& cfg);

struct FakeStepInfo {
    double loss;
    double mean_t;
};

// One denoising-objective update of the fake model on fresh generator
// samples; phi receives no gradient.
FakeStepInfo fake_step(DistillState& st);

struct GenStepInfo {
    double loss;  // 0.5 * sum(lambda*g)^2 over the batch
    double beta1_cur;
    double beta2_cur;
    double mean_t;
};

// One distribution-matching update of phi through the surrogate loss
// 0.5 * sum((x0_hat - SG(x0_hat - lambda*g))^2) with
// g = sigma_t * (v_fake - v_real) treated as constant.
GenStepInfo generator_step(DistillState& st);

struct Stage3TraceRow {
    int64_t iteration;
    const char* phase;  // "fake" or "gen"
    double loss;
    double beta1_cur;
    double beta2_cur;
    double t;
};

struct Stage3Result {
    std::vector<Stage3TraceRow> trace;
};

// repeat iterations times: update_ratio fake steps, then one generator step.
Stage3Result distill_loop(DistillState& st, int64_t iterations);

void write_stage3_trace(const std::string& path, const std::vector<Stage3TraceRow>& trace);

}  // namespace flgn
