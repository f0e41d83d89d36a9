#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "flgn/data.hpp"
#include "flgn/rng.hpp"
#include "flgn/tensor.hpp"

namespace flgn {

struct DiTConfig {
    int64_t n_blocks = 12;
    int64_t token_dim = 64;  // grid_h * grid_w
    int64_t hidden_dim = 64;
    int64_t frames_T = 8;
    int64_t n_classes = 5;
    int64_t time_embed_dim = 32;

    int64_t null_label() const { return n_classes; }
    bool operator==(const DiTConfig&) const = default;
};

// Enforced on user-supplied configs; library callers (tests, gradcheck) may
// construct smaller models directly.
void validate(const DiTConfig& cfg);

// One residual block: modulated single-head self-attention over the T frame
// tokens, then a modulated MLP. Shift/scale/gate for both branches come from
// one modulation matrix applied to the time+class conditioning vector.
struct BlockParams {
    Tensor wq, wk, wv, wo;  // [hidden x hidden]
    Tensor w1;              // [hidden x 4*hidden]
    Tensor w2;              // [4*hidden x hidden]
    Tensor wmod;            // [time_embed_dim x 6*hidden]
};

struct ModelParams {
    DiTConfig cfg;
    Tensor g1;  // [token_dim x hidden]
    std::vector<BlockParams> blocks;
    Tensor g2;           // [hidden x token_dim]
    Tensor class_embed;  // [(n_classes+1) x te], last row is the null label
    Tensor time_embed;   // [te x te], applied to the sinusoidal features
};

// Gate, modulation and g2 weights start at zero so every residual branch is
// initially the identity and the initial velocity field is exactly zero.
ModelParams init_params(const DiTConfig& cfg, uint64_t seed);
ModelParams clone_params(const ModelParams& p);
void set_trainable(ModelParams& p, bool trainable);
std::vector<Tensor> param_list(const ModelParams& p);
std::vector<std::pair<std::string, Tensor>> named_params(const ModelParams& p);
int64_t param_count(const DiTConfig& cfg);
// FNV-1a over every parameter byte in named order; detects any mutation.
uint64_t params_checksum(const ModelParams& p);

struct SkipMask {
    std::vector<uint8_t> skip;  // 1 = block bypassed

    static SkipMask none(int64_t n_blocks) { return SkipMask{std::vector<uint8_t>(n_blocks, 0)}; }
    // Skip everything outside the keep set.
    static SkipMask complement_of(const std::vector<int64_t>& keep_set, int64_t n_blocks);
    int64_t popcount() const;
};

// Fraction of parameters still active under the mask, counting g1/g2 and the
// embedding tables as always retained.
double retention_ratio(const DiTConfig& cfg, int64_t kept_blocks);
double retention_ratio(const DiTConfig& cfg, const SkipMask& mask);

// Velocity prediction for one sample. cond may be a class index or
// cfg.null_label(). Skipped blocks are exact identities on the hidden state.
Tensor forward_velocity(Tape& tape, const ModelParams& p, const Tensor& xt, double t,
                        int64_t cond, const SkipMask& mask);

// x^0 = xt - t*v under the x_t = (1-t)x0 + t*x1 convention.
Tensor x0_from_velocity(Tape& tape, const Tensor& xt, double t, const Tensor& v);

// Mean over batch and elements of loss_weight(t) * (v - (x1-x0))^2.
Tensor fm_loss(Tape& tape, const ModelParams& p, const DiffusionBatch& batch,
               const SkipMask& mask,
               const std::function<double(double)>& loss_weight = nullptr);

// K uniform Euler steps from t=0.999 down to t=0.001 with classifier-free
// guidance v_cfg = v(null) + w*(v(c) - v(null)). w == 1 evaluates only the
// conditional branch so the shortcut is bit-identical to plain conditional
// sampling.
Tensor euler_sample(const ModelParams& p, int64_t cond, int64_t steps, double cfg_scale,
                    const SkipMask& mask, RngStream& noise);

// t_k = k/K for k = K..1, capped at 0.999, descending.
std::vector<double> default_schedule(int64_t K);

// The few-step procedure over an arbitrary velocity field, for oracle tests:
// few_step_sample(p, ...) is bit-identical to this with v wrapping
// forward_velocity on p.
using VelocityFn = std::function<Tensor(const Tensor& x, double t)>;
Tensor few_step_sample_fn(const VelocityFn& v, int64_t rows, int64_t cols,
                          const std::vector<double>& schedule, RngStream& noise);

// Backward re-noising sampler: predict x0 at each schedule time, re-noise
// with fresh noise toward the next time, return the final x0 prediction.
Tensor few_step_sample(const ModelParams& p, int64_t cond, const std::vector<double>& schedule,
                       const SkipMask& mask, RngStream& noise);

// Same procedure cut short at schedule index stop_idx; only the velocity
// evaluation at that index runs on the caller's tape, so the generator
// gradient flows through exactly one forward.
Tensor few_step_truncated(Tape& tape, const ModelParams& p, int64_t cond,
                          const std::vector<double>& schedule, const SkipMask& mask,
                          RngStream& noise, int64_t stop_idx);

}  // namespace flgn
