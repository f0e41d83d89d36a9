#pragma once

#include <cstdint>
#include <functional>
#include <vector>

#include "flgn/data.hpp"
#include "flgn/model.hpp"

namespace flgn {

enum class MaskMode {
    kStochastic,  // fresh Bernoulli sub-model every iteration
    kFixed,       // the deterministic fully-pruned complement of the keep set
};

struct Stage2Config {
    double alpha = 1.0;   // distillation weight; 1 removes ground-truth supervision
    double p_skip = 0.5;  // per-block Bernoulli skip probability outside the keep set
    std::vector<int64_t> keep_set;
    // At alpha = 1 nothing anchors the self-distillation target, so the step
    // must stay small enough that the unpruned output drifts slower than the
    // pruned path converges; 1e-4 and above runs away.
    double lr = 1e-5;
    int64_t iterations = 2000;
    int64_t batch_size = 8;
    uint64_t seed = 1;
    MaskMode mask_mode = MaskMode::kStochastic;
    double uncond_drop = 0.1;
    // Every ckpt_interval iterations on_checkpoint fires with the current
    // parameters; 0 disables mid-run snapshots (the caller still persists the
    // final result).
    int64_t ckpt_interval = 0;
    std::function<void(int64_t, const ModelParams&)> on_checkpoint;
};

void validate(const Stage2Config& cfg, int64_t n_blocks);

// Blocks in the keep set are never skipped; every other block is skipped
// independently with probability p.
SkipMask sample_skip_mask(const std::vector<int64_t>& keep_set, int64_t n_blocks, double p,
                          RngStream& stream);

struct Stage2Losses {
    Tensor total;       // on tape, drives backward
    double l_training;  // (1-alpha) * (fm pruned + fm unpruned)
    double l_distill;   // alpha * mean |v_pruned - SG(v_unpruned)|^2
    double l_total;
};

// Both forwards share one batch and one tape; the distillation target is the
// detached unpruned velocity, so its parameters receive gradient only through
// the pruned branch and, when alpha < 1, the unpruned flow-matching term.
Stage2Losses stage2_losses(Tape& tape, const ModelParams& p, const DiffusionBatch& batch,
                           const SkipMask& mask, double alpha);

struct Stage2TraceRow {
    int64_t iteration;
    double l_training;
    double l_distill;
    double l_total;
    int64_t mask_popcount;
};

struct Stage2Result {
    ModelParams params;
    std::vector<Stage2TraceRow> trace;
};

Stage2Result train_stage2(const Stage2Config& cfg, const std::vector<VideoSample>& dataset,
                          const ModelParams& init);

void write_stage2_trace(const std::string& path, const std::vector<Stage2TraceRow>& trace);

}  // namespace flgn
