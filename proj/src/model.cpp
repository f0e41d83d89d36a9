#include "flgn/model.hpp"

#include <cmath>
#include <cstring>
#include <string>

#include "flgn/kernels.hpp"

namespace flgn {

void validate(const DiTConfig& cfg) {
    if (cfg.n_blocks < 4) throw ConfigError("n_blocks must be >= 4");
    if (cfg.hidden_dim < 8) throw ConfigError("hidden_dim must be >= 8");
    if (cfg.token_dim < 1) throw ConfigError("token_dim must be >= 1");
    if (cfg.frames_T < 2) throw ConfigError("frames_T must be >= 2");
    if (cfg.n_classes < 2) throw ConfigError("n_classes must be >= 2");
    if (cfg.time_embed_dim < 2 || cfg.time_embed_dim % 2 != 0) {
        throw ConfigError("time_embed_dim must be even and >= 2");
    }
}

ModelParams init_params(const DiTConfig& cfg, uint64_t seed) {
    RngStream rng(seed, "params");
    ModelParams p;
    p.cfg = cfg;
    const int64_t h = cfg.hidden_dim;
    const int64_t te = cfg.time_embed_dim;
    const double s_in = 1.0 / std::sqrt(static_cast<double>(cfg.token_dim));
    const double s_h = 1.0 / std::sqrt(static_cast<double>(h));
    const double s_te = 1.0 / std::sqrt(static_cast<double>(te));

    p.g1 = make_randn(cfg.token_dim, h, s_in, rng, true);
    for (int64_t b = 0; b < cfg.n_blocks; ++b) {
        BlockParams blk;
        blk.wq = make_randn(h, h, s_h, rng, true);
        blk.wk = make_randn(h, h, s_h, rng, true);
        blk.wv = make_randn(h, h, s_h, rng, true);
        blk.wo = make_randn(h, h, s_h, rng, true);
        blk.w1 = make_randn(h, 4 * h, s_h, rng, true);
        blk.w2 = make_randn(4 * h, h, 0.25 * s_h, rng, true);
        blk.wmod = make_param(te, 6 * h);
        p.blocks.push_back(std::move(blk));
    }
    p.g2 = make_param(h, cfg.token_dim);
    p.class_embed = make_randn(cfg.n_classes + 1, te, s_te, rng, true);
    p.time_embed = make_randn(te, te, s_te, rng, true);
    return p;
}

ModelParams clone_params(const ModelParams& p) {
    ModelParams c;
    c.cfg = p.cfg;
    auto copy = [](const Tensor& t) {
        Tensor out = clone_values(t);
        out->requires_grad = t->requires_grad;
        if (out->requires_grad) out->grad.assign(out->data.size(), 0.0);
        return out;
    };
    c.g1 = copy(p.g1);
    for (const auto& b : p.blocks) {
        c.blocks.push_back(BlockParams{copy(b.wq), copy(b.wk), copy(b.wv), copy(b.wo),
                                       copy(b.w1), copy(b.w2), copy(b.wmod)});
    }
    c.g2 = copy(p.g2);
    c.class_embed = copy(p.class_embed);
    c.time_embed = copy(p.time_embed);
    return c;
}

void set_trainable(ModelParams& p, bool trainable) {
    for (auto& [name, t] : named_params(p)) {
        (void)name;
        t->requires_grad = trainable;
        if (trainable) {
            t->grad.assign(t->data.size(), 0.0);
        } else {
            t->grad.clear();
        }
    }
}

std::vector<Tensor> param_list(const ModelParams& p) {
    std::vector<Tensor> out;
    for (auto& [name, t] : named_params(p)) {
        (void)name;
        out.push_back(t);
    }
    return out;
}

std::vector<std::pair<std::string, Tensor>> named_params(const ModelParams& p) {
    std::vector<std::pair<std::string, Tensor>> out;
    out.emplace_back("g1/W", p.g1);
    for (size_t b = 0; b < p.blocks.size(); ++b) {
        const std::string base = "block/" + std::to_string(b) + "/";
        out.emplace_back(base + "attn/Wq", p.blocks[b].wq);
        out.emplace_back(base + "attn/Wk", p.blocks[b].wk);
        out.emplace_back(base + "attn/Wv", p.blocks[b].wv);
        out.emplace_back(base + "attn/Wo", p.blocks[b].wo);
        out.emplace_back(base + "mlp/W1", p.blocks[b].w1);
        out.emplace_back(base + "mlp/W2", p.blocks[b].w2);
        out.emplace_back(base + "mod/W", p.blocks[b].wmod);
    }
    out.emplace_back("g2/W", p.g2);
    out.emplace_back("embed/class", p.class_embed);
    out.emplace_back("embed/time", p.time_embed);
    return out;
}

namespace {

int64_t block_param_count(const DiTConfig& cfg) {
    const int64_t h = cfg.hidden_dim;
    return 4 * h * h + 2 * (h * 4 * h) + cfg.time_embed_dim * 6 * h;
}

int64_t shared_param_count(const DiTConfig& cfg) {
    const int64_t h = cfg.hidden_dim;
    const int64_t te = cfg.time_embed_dim;
    return cfg.token_dim * h + h * cfg.token_dim + (cfg.n_classes + 1) * te + te * te;
}

}  // namespace

int64_t param_count(const DiTConfig& cfg) {
    return shared_param_count(cfg) + cfg.n_blocks * block_param_count(cfg);
}

uint64_t params_checksum(const ModelParams& p) {
    uint64_t h = 0xcbf29ce484222325ULL;
    auto feed = [&h](const void* ptr, size_t n) {
        const auto* b = static_cast<const unsigned char*>(ptr);
        for (size_t i = 0; i < n; ++i) {
            h ^= b[i];
            h *= 0x100000001b3ULL;
        }
    };
    for (const auto& [name, t] : named_params(p)) {
        feed(name.data(), name.size());
        feed(t->data.data(), t->data.size() * sizeof(double));
    }
    return h;
}

SkipMask SkipMask::complement_of(const std::vector<int64_t>& keep_set, int64_t n_blocks) {
    SkipMask m{std::vector<uint8_t>(static_cast<size_t>(n_blocks), 1)};
    for (int64_t i : keep_set) {
        if (i < 0 || i >= n_blocks) {
            throw PreconditionError("keep set index " + std::to_string(i) + " out of range");
        }
        m.skip[static_cast<size_t>(i)] = 0;
    }
    return m;
}

int64_t SkipMask::popcount() const {
    int64_t n = 0;
    for (uint8_t s : skip) n += s;
    return n;
}

double retention_ratio(const DiTConfig& cfg, int64_t kept_blocks) {
    const double shared = static_cast<double>(shared_param_count(cfg));
    const double per_block = static_cast<double>(block_param_count(cfg));
    return (shared + per_block * static_cast<double>(kept_blocks)) /
           (shared + per_block * static_cast<double>(cfg.n_blocks));
}

double retention_ratio(const DiTConfig& cfg, const SkipMask& mask) {
    return retention_ratio(cfg, cfg.n_blocks - mask.popcount());
}

namespace {

// Half sine, half cosine features of t scaled into the usual positional
// range; frequencies fall geometrically from 1 to 1e-4.
Tensor sinusoidal_features(const DiTConfig& cfg, double t) {
    const int64_t te = cfg.time_embed_dim;
    const int64_t half = te / 2;
    Tensor f = make_tensor(1, te);
    const double s = t * 1000.0;
    for (int64_t j = 0; j < half; ++j) {
        const double freq =
            std::exp(-std::log(10000.0) * static_cast<double>(j) / static_cast<double>(half));
        f->data[j] = std::sin(s * freq);
        f->data[half + j] = std::cos(s * freq);
    }
    return f;
}

Tensor condition_vector(Tape& tape, const ModelParams& p, double t, int64_t cond) {
    if (cond < 0 || cond > p.cfg.n_classes) {
        throw PreconditionError("condition index " + std::to_string(cond) +
                                " out of range (null label is " +
                                std::to_string(p.cfg.n_classes) + ")");
    }
    Tensor tfeat = sinusoidal_features(p.cfg, t);
    Tensor temb = tape.matmul(tfeat, p.time_embed);
    Tensor cemb = tape.select_row(p.class_embed, cond);
    return tape.add(temb, cemb);
}

// h * (1 + scale) + shift with [1 x hidden] row vectors broadcast over rows.
Tensor modulate(Tape& tape, const Tensor& h, const Tensor& shift, const Tensor& scl) {
    Tensor one_plus = tape.add_scalar(scl, 1.0);
    Tensor scaled = tape.mul(h, tape.repeat_row(one_plus, h->rows));
    return tape.add(scaled, tape.repeat_row(shift, h->rows));
}

}  // namespace

Tensor forward_velocity(Tape& tape, const ModelParams& p, const Tensor& xt, double t,
                        int64_t cond, const SkipMask& mask) {
    const DiTConfig& cfg = p.cfg;
    if (static_cast<int64_t>(mask.skip.size()) != cfg.n_blocks) {
        throw ShapeError("skip mask length " + std::to_string(mask.skip.size()) +
                         " does not match " + std::to_string(cfg.n_blocks) + " blocks");
    }
    if (xt->rows != cfg.frames_T || xt->cols != cfg.token_dim) {
        throw ShapeError("input shape " + std::to_string(xt->rows) + "x" +
                         std::to_string(xt->cols) + " does not match model");
    }
    if (t < kTMin || t > kTMax) {
        throw PreconditionError("forward time " + std::to_string(t) + " outside [" +
                                std::to_string(kTMin) + ", " + std::to_string(kTMax) + "]");
    }
    if (!kern::all_finite(xt->data.data(), xt->size())) {
        throw NumericsError("forward_velocity input is not finite");
    }

    Tensor cond_vec = condition_vector(tape, p, t, cond);
    Tensor cond_act = tape.silu(cond_vec);
    Tensor h = tape.matmul(xt, p.g1);
    const int64_t hd = cfg.hidden_dim;
    const double attn_scale = 1.0 / std::sqrt(static_cast<double>(hd));

    for (int64_t b = 0; b < cfg.n_blocks; ++b) {
        if (mask.skip[static_cast<size_t>(b)]) continue;
        const BlockParams& blk = p.blocks[static_cast<size_t>(b)];
        Tensor mod = tape.matmul(cond_act, blk.wmod);
        Tensor shift1 = tape.slice_cols(mod, 0, hd);
        Tensor scale1 = tape.slice_cols(mod, hd, 2 * hd);
        Tensor gate1 = tape.slice_cols(mod, 2 * hd, 3 * hd);
        Tensor shift2 = tape.slice_cols(mod, 3 * hd, 4 * hd);
        Tensor scale2 = tape.slice_cols(mod, 4 * hd, 5 * hd);
        Tensor gate2 = tape.slice_cols(mod, 5 * hd, 6 * hd);

        Tensor u = modulate(tape, tape.layer_norm(h), shift1, scale1);
        Tensor q = tape.matmul(u, blk.wq);
        Tensor k = tape.matmul(u, blk.wk);
        Tensor v = tape.matmul(u, blk.wv);
        Tensor attn = tape.softmax(tape.scale(tape.matmul_nt(q, k), attn_scale));
        Tensor o = tape.matmul(tape.matmul(attn, v), blk.wo);
        h = tape.add(h, tape.mul(o, tape.repeat_row(gate1, o->rows)));

        Tensor u2 = modulate(tape, tape.layer_norm(h), shift2, scale2);
        Tensor m = tape.matmul(tape.silu(tape.matmul(u2, blk.w1)), blk.w2);
        h = tape.add(h, tape.mul(m, tape.repeat_row(gate2, m->rows)));
    }
    return tape.matmul(h, p.g2);
}

Tensor x0_from_velocity(Tape& tape, const Tensor& xt, double t, const Tensor& v) {
    if (!same_shape(xt, v)) throw ShapeError("x0_from_velocity: xt and v shapes differ");
    return tape.sub(xt, tape.scale(v, t));
}

Tensor fm_loss(Tape& tape, const ModelParams& p, const DiffusionBatch& batch,
               const SkipMask& mask, const std::function<double(double)>& loss_weight) {
    if (batch.size() == 0) throw PreconditionError("fm_loss: empty batch");
    Tensor acc;
    for (int64_t s = 0; s < batch.size(); ++s) {
        Tensor v = forward_velocity(tape, p, batch.xt[s], batch.t[s], batch.labels[s], mask);
        Tensor target = make_tensor(v->rows, v->cols);
        kern::ew_binary(kern::BinOp::Sub, batch.x1[s]->data.data(), batch.x0[s]->data.data(),
                        target->data.data(), target->size());
        Tensor term = tape.mse_loss(v, target);
        if (loss_weight) term = tape.scale(term, loss_weight(batch.t[s]));
        acc = acc ? tape.add(acc, term) : term;
    }
    return tape.scale(acc, 1.0 / static_cast<double>(batch.size()));
}

Tensor euler_sample(const ModelParams& p, int64_t cond, int64_t steps, double cfg_scale,
                    const SkipMask& mask, RngStream& noise) {
    if (steps < 1) throw PreconditionError("euler_sample: steps must be >= 1");
    if (cfg_scale < 0.0) throw PreconditionError("euler_sample: cfg_scale must be >= 0");
    Tape tape(/*recording=*/false);
    Tensor x = make_tensor(p.cfg.frames_T, p.cfg.token_dim);
    for (auto& v : x->data) v = noise.normal();
    const double dt = (kTMax - kTMin) / static_cast<double>(steps);
    for (int64_t k = 0; k < steps; ++k) {
        const double t = kTMax - static_cast<double>(k) * dt;
        Tensor v;
        if (cfg_scale == 1.0) {
            v = forward_velocity(tape, p, x, t, cond, mask);
        } else {
            Tensor vc = forward_velocity(tape, p, x, t, cond, mask);
            Tensor vn = forward_velocity(tape, p, x, t, p.cfg.null_label(), mask);
            v = tape.add(vn, tape.scale(tape.sub(vc, vn), cfg_scale));
        }
        x = tape.sub(x, tape.scale(v, dt));
    }
    return x;
}

std::vector<double> default_schedule(int64_t K) {
    if (K < 1) throw PreconditionError("schedule needs at least one step");
    std::vector<double> ts;
    for (int64_t k = K; k >= 1; --k) {
        ts.push_back(std::min(static_cast<double>(k) / static_cast<double>(K), 0.999));
    }
    return ts;
}

namespace {

void validate_schedule(const std::vector<double>& schedule) {
    if (schedule.empty()) throw PreconditionError("empty sampling schedule");
    for (size_t i = 0; i < schedule.size(); ++i) {
        if (schedule[i] <= 0.0 || schedule[i] > 1.0) {
            throw PreconditionError("schedule times must lie in (0, 1]");
        }
        if (i > 0 && schedule[i] >= schedule[i - 1]) {
            throw PreconditionError("schedule must be strictly decreasing");
        }
    }
}

}  // namespace

Tensor few_step_sample(const ModelParams& p, int64_t cond, const std::vector<double>& schedule,
                       const SkipMask& mask, RngStream& noise) {
    Tape tape(/*recording=*/false);
    return few_step_truncated(tape, p, cond, schedule, mask, noise,
                              static_cast<int64_t>(schedule.size()) - 1);
}

Tensor few_step_truncated(Tape& tape, const ModelParams& p, int64_t cond,
                          const std::vector<double>& schedule, const SkipMask& mask,
                          RngStream& noise, int64_t stop_idx) {
    validate_schedule(schedule);
    if (stop_idx < 0 || stop_idx >= static_cast<int64_t>(schedule.size())) {
        throw PreconditionError("truncation index out of schedule range");
    }
    Tape silent(/*recording=*/false);
    Tensor x = make_tensor(p.cfg.frames_T, p.cfg.token_dim);
    for (auto& v : x->data) v = noise.normal();
    for (int64_t idx = 0; idx <= stop_idx; ++idx) {
        const double t = schedule[static_cast<size_t>(idx)];
        // Only the final evaluation contributes gradient.
        Tape& active = (idx == stop_idx) ? tape : silent;
        Tensor v = forward_velocity(active, p, x, t, cond, mask);
        Tensor x0_hat = x0_from_velocity(active, x, t, v);
        if (idx == stop_idx) return x0_hat;
        const double t_next = schedule[static_cast<size_t>(idx + 1)];
        Tensor fresh = make_tensor(x->rows, x->cols);
        for (auto& e : fresh->data) e = noise.normal();
        x = interpolant(x0_hat, fresh, t_next);
    }
    throw PreconditionError("unreachable: schedule loop ended without returning");
}

Tensor few_step_sample_fn(const VelocityFn& vfn, int64_t rows, int64_t cols,
                          const std::vector<double>& schedule, RngStream& noise) {
    validate_schedule(schedule);
    Tape silent(/*recording=*/false);
    Tensor x = make_tensor(rows, cols);
    for (auto& e : x->data) e = noise.normal();
    const int64_t last = static_cast<int64_t>(schedule.size()) - 1;
    for (int64_t idx = 0; idx <= last; ++idx) {
        const double t = schedule[static_cast<size_t>(idx)];
        Tensor v = vfn(x, t);
        Tensor x0_hat = x0_from_velocity(silent, x, t, v);
        if (idx == last) return x0_hat;
        const double t_next = schedule[static_cast<size_t>(idx + 1)];
        Tensor fresh = make_tensor(x->rows, x->cols);
        for (auto& e : fresh->data) e = noise.normal();
        x = interpolant(x0_hat, fresh, t_next);
    }
    throw PreconditionError("unreachable: schedule loop ended without returning");
}

}  // namespace flgn
