#include "flgn/stage3.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <iostream>

#include "flgn/kernels.hpp"

namespace flgn {

void validate(const GuidanceParams& gp) {
    if (gp.a1 < 0.0 || gp.b1 < 0.0 || gp.a2 < 0.0 || gp.b2 < 0.0) {
        throw ConfigError("guidance jitter widths must be non-negative");
    }
    if (gp.beta2 - gp.a2 < 0.0) {
        std::cerr << "warning: beta2 - a2 = " << (gp.beta2 - gp.a2)
                  << " < 0; the intra-CFG draw can go negative\n";
    }
}

void validate(const Stage3Config& cfg) {
    validate(cfg.guidance);
    if (cfg.iterations < 0) throw ConfigError("stage3 iterations must be >= 0");
    if (cfg.update_ratio < 0) throw ConfigError("stage3 update_ratio must be >= 0");
    if (cfg.batch_size < 1) throw ConfigError("stage3 batch_size must be >= 1");
    if (cfg.steps < 1) throw ConfigError("stage3 steps must be >= 1");
    if (cfg.lr_gen <= 0.0 || cfg.lr_fake <= 0.0) throw ConfigError("stage3 lrs must be positive");
    if (cfg.t_min < kTMin || cfg.t_max > kTMax || cfg.t_min >= cfg.t_max) {
        throw ConfigError("stage3 diffusion-time range must satisfy 0.001 <= t_min < t_max <= 0.999");
    }
}

std::pair<double, double> sample_guidance_scales(const GuidanceParams& gp, RngStream& stream) {
    const double b1 = stream.uniform(gp.beta1 - gp.a1, gp.beta1 + gp.b1);
    const double b2 = stream.uniform(gp.beta2 - gp.a2, gp.beta2 + gp.b2);
    return {b1, b2};
}

Tensor combine_guidance(const Tensor& v_pr_c, const Tensor& v_pr_null, const Tensor& v_unpr_c,
                        double b1, double b2) {
    if (!same_shape(v_pr_c, v_pr_null) || !same_shape(v_pr_c, v_unpr_c)) {
        throw ShapeError("combine_guidance: velocity shapes differ");
    }
    // b1*(v_pr_c - v_pr_null) + b2*(v_unpr_c - v_pr_c) + v_pr_null regrouped
    // by velocity so coefficients 1 and 0 drop out without rounding.
    const double c_pr_c = b1 - b2;
    const double c_null = 1.0 - b1;
    const double c_unpr = b2;
    Tensor out = make_tensor(v_pr_c->rows, v_pr_c->cols);
    for (int64_t i = 0; i < out->size(); ++i) {
        double acc = c_pr_c * v_pr_c->data[i];
        if (c_null != 0.0) acc += c_null * v_pr_null->data[i];
        if (c_unpr != 0.0) acc += c_unpr * v_unpr_c->data[i];
        out->data[i] = acc;
    }
    return out;
}

Tensor real_velocity(const ModelParams& theta, const Tensor& xt, double t, int64_t cond,
                     const SkipMask& pruned_mask, double b1, double b2) {
    Tape tape(/*recording=*/false);
    const SkipMask none = SkipMask::none(theta.cfg.n_blocks);
    Tensor v_pr_c = forward_velocity(tape, theta, xt, t, cond, pruned_mask);
    Tensor v_pr_null = forward_velocity(tape, theta, xt, t, theta.cfg.null_label(), pruned_mask);
    Tensor v_unpr_c = forward_velocity(tape, theta, xt, t, cond, none);
    return combine_guidance(v_pr_c, v_pr_null, v_unpr_c, b1, b2);
}

DistillState init_distill(const ModelParams& stage2_params, const ModelParams& base_params,
                          const std::vector<int64_t>& keep_set, const Stage3Config& cfg) {
    validate(cfg);
    if (stage2_params.cfg != base_params.cfg) {
        throw PreconditionError("stage2 and base checkpoints disagree on the model shape");
    }
    DistillState st;
    st.cfg = cfg;
    st.pruned_mask = SkipMask::complement_of(keep_set, stage2_params.cfg.n_blocks);
    st.schedule = default_schedule(cfg.steps);

    // The generator always starts from the pruning-robust Stage-II weights;
    // the teacher-base toggle picks what the frozen teacher and the fake
    // scorer start from.
    st.generator = clone_params(stage2_params);
    const ModelParams& teacher_src =
        (cfg.teacher_base == TeacherBase::kPruned) ? stage2_params : base_params;
    st.real = clone_params(teacher_src);
    st.fake = clone_params(teacher_src);

    set_trainable(st.generator, true);
    set_trainable(st.fake, true);
    set_trainable(st.real, false);
    st.theta_checksum = params_checksum(st.real);

    AdamWConfig gen_cfg;
    gen_cfg.lr = cfg.lr_gen;
    st.opt_gen = std::make_unique<AdamW>(param_list(st.generator), gen_cfg);
    AdamWConfig fake_cfg;
    fake_cfg.lr = cfg.lr_fake;
    st.opt_fake = std::make_unique<AdamW>(param_list(st.fake), fake_cfg);

    st.noise = RngStream(cfg.seed, "noise");
    st.data = RngStream(cfg.seed, "data");
    st.guidance = RngStream(cfg.seed, "guidance");
    return st;
}

namespace {

struct GeneratorDraw {
    Tensor x0_hat;  // value-only
    int64_t label;
};

// Samples from the few-step generator exactly the way generator_step sees
// it: per sample a uniform truncation index over the schedule. No gradient.
std::vector<GeneratorDraw> sample_generator_batch(DistillState& st) {
    std::vector<GeneratorDraw> out;
    out.reserve(st.cfg.batch_size);
    Tape silent(/*recording=*/false);
    for (int64_t b = 0; b < st.cfg.batch_size; ++b) {
        const int64_t label =
            static_cast<int64_t>(st.data.next_below(st.generator.cfg.n_classes));
        const int64_t stop =
            static_cast<int64_t>(st.data.next_below(st.schedule.size()));
        Tensor x0_hat = few_step_truncated(silent, st.generator, label, st.schedule,
                                           st.pruned_mask, st.noise, stop);
        out.push_back(GeneratorDraw{x0_hat, label});
    }
    return out;
}

}  // namespace

FakeStepInfo fake_step(DistillState& st) {
    const std::vector<GeneratorDraw> draws = sample_generator_batch(st);

    // Standard denoising objective with the generator outputs as data.
    DiffusionBatch batch;
    double t_acc = 0.0;
    for (const auto& d : draws) {
        Tensor x1 = make_tensor(d.x0_hat->rows, d.x0_hat->cols);
        for (auto& v : x1->data) v = st.noise.normal();
        const double t = st.data.uniform(kTMin, kTMax);
        batch.x0.push_back(d.x0_hat);
        batch.xt.push_back(interpolant(d.x0_hat, x1, t));
        batch.x1.push_back(std::move(x1));
        batch.t.push_back(t);
        batch.labels.push_back(d.label);
        t_acc += t;
    }

    Tape tape;
    Tensor loss = fm_loss(tape, st.fake, batch, st.pruned_mask);
    const double loss_val = loss->data[0];
    if (!std::isfinite(loss_val)) throw NumericsError("fake model diverged");
    st.opt_fake->zero_grad();
    tape.backward(loss);
    st.opt_fake->step();
    return FakeStepInfo{loss_val, t_acc / static_cast<double>(draws.size())};
}

GenStepInfo generator_step(DistillState& st) {
    const auto [b1_cur, b2_cur] = sample_guidance_scales(st.cfg.guidance, st.guidance);

    Tape tape;
    Tensor loss_acc;
    double t_acc = 0.0;
    for (int64_t b = 0; b < st.cfg.batch_size; ++b) {
        const int64_t label =
            static_cast<int64_t>(st.data.next_below(st.generator.cfg.n_classes));
        const int64_t stop =
            static_cast<int64_t>(st.data.next_below(st.schedule.size()));
        Tensor x0_hat = few_step_truncated(tape, st.generator, label, st.schedule,
                                           st.pruned_mask, st.noise, stop);

        const double t = st.data.uniform(st.cfg.t_min, st.cfg.t_max);
        t_acc += t;
        Tensor eps = make_tensor(x0_hat->rows, x0_hat->cols);
        for (auto& v : eps->data) v = st.noise.normal();
        // The diffused generator output is a constant for the two scorers.
        Tensor xt = interpolant(x0_hat, eps, t);

        Tape silent(/*recording=*/false);
        Tensor v_fake = forward_velocity(silent, st.fake, xt, t, label, st.pruned_mask);
        Tensor v_real = real_velocity(st.real, xt, t, label, st.pruned_mask, b1_cur, b2_cur);

        // g = sigma_t * (v_fake - v_real), the score-difference direction.
        Tensor g = make_tensor(x0_hat->rows, x0_hat->cols);
        const double sig = sigma_t(t);
        for (int64_t i = 0; i < g->size(); ++i) {
            g->data[i] = sig * (v_fake->data[i] - v_real->data[i]);
        }
        if (!kern::all_finite(g->data.data(), g->size())) {
            throw NumericsError("non-finite distribution-matching direction g at a generator "
                                "step; teacher and fake velocities disagree beyond f64 range");
        }
        double lambda = 1.0;
        if (st.cfg.lambda_mode == LambdaMode::kPerSample) {
            lambda = 1.0 / (kern::sum_abs(g->data.data(), g->size()) /
                                static_cast<double>(g->size()) +
                            1e-8);
        }
        // Surrogate whose gradient w.r.t. x0_hat is exactly lambda*g.
        Tensor target = make_tensor(x0_hat->rows, x0_hat->cols);
        for (int64_t i = 0; i < target->size(); ++i) {
            target->data[i] = x0_hat->data[i] - lambda * g->data[i];
        }
        Tensor term = tape.half_sum_sq_diff(x0_hat, target);
        loss_acc = loss_acc ? tape.add(loss_acc, term) : term;
    }

    const double loss_val = loss_acc->data[0];
    st.opt_gen->zero_grad();
    tape.backward(loss_acc);
    st.opt_gen->step();
    return GenStepInfo{loss_val, b1_cur, b2_cur,
                       t_acc / static_cast<double>(st.cfg.batch_size)};
}

Stage3Result distill_loop(DistillState& st, int64_t iterations) {
    Stage3Result result;
    for (int64_t it = 0; it < iterations; ++it) {
        for (int64_t f = 0; f < st.cfg.update_ratio; ++f) {
            FakeStepInfo info = fake_step(st);
            result.trace.push_back(Stage3TraceRow{it, "fake", info.loss, 0.0, 0.0, info.mean_t});
        }
        GenStepInfo info = generator_step(st);
        result.trace.push_back(
            Stage3TraceRow{it, "gen", info.loss, info.beta1_cur, info.beta2_cur, info.mean_t});
    }
    if (params_checksum(st.real) != st.theta_checksum) {
        throw PreconditionError("frozen teacher parameters changed during distillation");
    }
    return result;
}

void write_stage3_trace(const std::string& path, const std::vector<Stage3TraceRow>& trace) {
    std::ofstream out(path);
    if (!out) throw PreconditionError("cannot write " + path);
    out << "iteration,phase,loss,beta1_cur,beta2_cur,t\n";
    char a[64], b[64], c[64], d[64];
    for (const auto& row : trace) {
        std::snprintf(a, sizeof(a), "%.17g", row.loss);
        std::snprintf(b, sizeof(b), "%.17g", row.beta1_cur);
        std::snprintf(c, sizeof(c), "%.17g", row.beta2_cur);
        std::snprintf(d, sizeof(d), "%.17g", row.t);
        out << row.iteration << "," << row.phase << "," << a << "," << b << "," << c << ","
            << d << "\n";
    }
}

}  // namespace flgn
