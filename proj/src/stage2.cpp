#include "flgn/stage2.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>

#include "flgn/optim.hpp"

namespace flgn {

void validate(const Stage2Config& cfg, int64_t n_blocks) {
    if (cfg.alpha < 0.0 || cfg.alpha > 1.0) throw ConfigError("alpha must lie in [0, 1]");
    if (cfg.p_skip < 0.0 || cfg.p_skip > 1.0) throw ConfigError("p_skip must lie in [0, 1]");
    if (cfg.lr <= 0.0) throw ConfigError("stage2 lr must be positive");
    if (cfg.iterations < 0) throw ConfigError("stage2 iterations must be >= 0");
    if (cfg.batch_size < 1) throw ConfigError("stage2 batch_size must be >= 1");
    if (cfg.ckpt_interval < 0) throw ConfigError("stage2 ckpt_interval must be >= 0");
    if (cfg.keep_set.empty()) throw ConfigError("stage2 keep_set must not be empty");
    for (int64_t i : cfg.keep_set) {
        if (i < 0 || i >= n_blocks) {
            throw ConfigError("keep_set index " + std::to_string(i) + " out of range");
        }
    }
}

SkipMask sample_skip_mask(const std::vector<int64_t>& keep_set, int64_t n_blocks, double p,
                          RngStream& stream) {
    SkipMask mask = SkipMask::none(n_blocks);
    std::vector<uint8_t> essential(static_cast<size_t>(n_blocks), 0);
    for (int64_t i : keep_set) {
        if (i < 0 || i >= n_blocks) {
            throw PreconditionError("keep_set index " + std::to_string(i) + " out of range");
        }
        essential[static_cast<size_t>(i)] = 1;
    }
    for (int64_t b = 0; b < n_blocks; ++b) {
        if (essential[static_cast<size_t>(b)]) continue;
        // p=0 and p=1 must be exact, which < on a [0,1) draw gives.
        if (stream.next_unit() < p) mask.skip[static_cast<size_t>(b)] = 1;
    }
    return mask;
}

Stage2Losses stage2_losses(Tape& tape, const ModelParams& p, const DiffusionBatch& batch,
                           const SkipMask& mask, double alpha) {
    if (batch.size() == 0) throw PreconditionError("stage2_losses: empty batch");
    const SkipMask none = SkipMask::none(p.cfg.n_blocks);

    Tensor fm_pruned_acc, fm_unpruned_acc, distill_acc;
    for (int64_t s = 0; s < batch.size(); ++s) {
        Tensor v_pr = forward_velocity(tape, p, batch.xt[s], batch.t[s], batch.labels[s], mask);
        Tensor v_unpr = forward_velocity(tape, p, batch.xt[s], batch.t[s], batch.labels[s], none);

        Tensor target = make_tensor(v_pr->rows, v_pr->cols);
        for (int64_t i = 0; i < target->size(); ++i) {
            target->data[i] = batch.x1[s]->data[i] - batch.x0[s]->data[i];
        }
        Tensor fm_pr = tape.mse_loss(v_pr, target);
        Tensor fm_unpr = tape.mse_loss(v_unpr, target);
        Tensor dist = tape.mse_loss(v_pr, tape.detach(v_unpr));

        fm_pruned_acc = fm_pruned_acc ? tape.add(fm_pruned_acc, fm_pr) : fm_pr;
        fm_unpruned_acc = fm_unpruned_acc ? tape.add(fm_unpruned_acc, fm_unpr) : fm_unpr;
        distill_acc = distill_acc ? tape.add(distill_acc, dist) : dist;
    }
    const double inv_b = 1.0 / static_cast<double>(batch.size());
    Tensor training_sum =
        tape.scale(tape.add(fm_pruned_acc, fm_unpruned_acc), inv_b);  // T
    Tensor distill_sum = tape.scale(distill_acc, inv_b);              // D

    Stage2Losses out;
    Tensor l_training = tape.scale(training_sum, 1.0 - alpha);
    Tensor l_distill = tape.scale(distill_sum, alpha);
    out.total = tape.add(l_training, l_distill);
    out.l_training = l_training->data[0];
    out.l_distill = l_distill->data[0];
    out.l_total = out.total->data[0];
    return out;
}

Stage2Result train_stage2(const Stage2Config& cfg, const std::vector<VideoSample>& dataset,
                          const ModelParams& init) {
    validate(cfg, init.cfg.n_blocks);
    Stage2Result result;
    result.params = clone_params(init);
    set_trainable(result.params, true);

    AdamWConfig opt_cfg;
    opt_cfg.lr = cfg.lr;
    AdamW opt(param_list(result.params), opt_cfg);

    RngStream data_stream(cfg.seed, "data");
    RngStream mask_stream(cfg.seed, "mask");
    const SkipMask fixed = SkipMask::complement_of(cfg.keep_set, init.cfg.n_blocks);

    for (int64_t it = 0; it < cfg.iterations; ++it) {
        DiffusionBatch batch =
            make_batch(dataset, cfg.batch_size, TSampling::uniform(), data_stream,
                       init.cfg.null_label(), cfg.uncond_drop);
        SkipMask mask = (cfg.mask_mode == MaskMode::kStochastic)
                            ? sample_skip_mask(cfg.keep_set, init.cfg.n_blocks, cfg.p_skip,
                                               mask_stream)
                            : fixed;
        Tape tape;
        Stage2Losses losses = stage2_losses(tape, result.params, batch, mask, cfg.alpha);
        if (!std::isfinite(losses.l_total)) {
            throw NumericsError("stage2 diverged at iteration " + std::to_string(it));
        }
        opt.zero_grad();
        tape.backward(losses.total);
        opt.step();
        result.trace.push_back(Stage2TraceRow{it, losses.l_training, losses.l_distill,
                                              losses.l_total, mask.popcount()});
        if (cfg.ckpt_interval > 0 && cfg.on_checkpoint && (it + 1) % cfg.ckpt_interval == 0)
            cfg.on_checkpoint(it + 1, result.params);
    }
    return result;
}

void write_stage2_trace(const std::string& path, const std::vector<Stage2TraceRow>& trace) {
    std::ofstream out(path);
    if (!out) throw PreconditionError("cannot write " + path);
    out << "iteration,L_training,L_distill,L_total,mask_popcount\n";
    char a[64], b[64], c[64];
    for (const auto& row : trace) {
        std::snprintf(a, sizeof(a), "%.17g", row.l_training);
        std::snprintf(b, sizeof(b), "%.17g", row.l_distill);
        std::snprintf(c, sizeof(c), "%.17g", row.l_total);
        out << row.iteration << "," << a << "," << b << "," << c << "," << row.mask_popcount
            << "\n";
    }
}

}  // namespace flgn
