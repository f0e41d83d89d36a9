#include "flgn/pipeline.hpp"

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>

#include "flgn/errors.hpp"
#include "flgn/gradcheck.hpp"
#include "flgn/optim.hpp"
#include "json.hpp"

namespace flgn {

uint64_t derive_seed(uint64_t run_seed, std::string_view tag) {
    return mix64(run_seed, fnv1a64(tag));
}

std::vector<VideoSample> train_dataset(const RunConfig& cfg) {
    return generate_dataset(cfg.data, cfg.n_train, derive_seed(cfg.seed, "train-data"));
}

std::vector<VideoSample> heldout_dataset(const RunConfig& cfg) {
    return generate_dataset(cfg.data, cfg.eval.n_ref, derive_seed(cfg.seed, "heldout-data"));
}

BaseResult train_base(const RunConfig& cfg, const std::vector<VideoSample>& dataset) {
    const DiTConfig dit = cfg.dit_config();
    BaseResult out;
    out.params = init_params(dit, derive_seed(cfg.seed, "base-init"));
    set_trainable(out.params, true);

    AdamWConfig opt_cfg;
    opt_cfg.lr = cfg.train_base.lr;
    AdamW opt(param_list(out.params), opt_cfg);

    RngStream data_stream(derive_seed(cfg.seed, "base-train"), "data");
    const SkipMask no_mask = SkipMask::none(dit.n_blocks);
    for (int64_t it = 0; it < cfg.train_base.iterations; ++it) {
        DiffusionBatch batch =
            make_batch(dataset, cfg.train_base.batch_size, TSampling::uniform(), data_stream,
                       dit.null_label(), cfg.train_base.uncond_drop);
        Tape tape;
        Tensor loss = fm_loss(tape, out.params, batch, no_mask);
        const double loss_val = loss->data[0];
        if (!std::isfinite(loss_val))
            throw NumericsError("base training diverged at iteration " + std::to_string(it));
        opt.zero_grad();
        tape.backward(loss);
        opt.step();
        out.trace.push_back(BaseTraceRow{it, loss_val});
    }
    return out;
}

void write_base_trace(const std::string& path, const std::vector<BaseTraceRow>& trace) {
    std::ofstream out(path);
    if (!out) throw PreconditionError("cannot write " + path);
    out << "iteration,fm_loss\n";
    char buf[64];
    for (const auto& row : trace) {
        std::snprintf(buf, sizeof buf, "%.17g", row.fm_loss);
        out << row.iteration << "," << buf << "\n";
    }
}

namespace {

nlohmann::json dit_to_json(const DiTConfig& m) {
    return {{"n_blocks", m.n_blocks},         {"token_dim", m.token_dim},
            {"hidden_dim", m.hidden_dim},     {"frames_T", m.frames_T},
            {"n_classes", m.n_classes},       {"time_embed_dim", m.time_embed_dim}};
}

DiTConfig dit_from_json(const nlohmann::json& j) {
    DiTConfig m;
    m.n_blocks = j.at("n_blocks").get<int64_t>();
    m.token_dim = j.at("token_dim").get<int64_t>();
    m.hidden_dim = j.at("hidden_dim").get<int64_t>();
    m.frames_T = j.at("frames_T").get<int64_t>();
    m.n_classes = j.at("n_classes").get<int64_t>();
    m.time_embed_dim = j.at("time_embed_dim").get<int64_t>();
    return m;
}

// Shape-checked tensor lookup during model reconstruction.
Tensor expect_tensor(const Checkpoint& ckpt, const std::string& name, int64_t rows,
                     int64_t cols) {
    const Tensor& t = ckpt.find(name);
    if (t->rows != rows || t->cols != cols)
        throw CheckpointError("tensor '" + name + "' has shape " + std::to_string(t->rows) +
                              "x" + std::to_string(t->cols) + ", expected " +
                              std::to_string(rows) + "x" + std::to_string(cols));
    return t;
}

}  // namespace

void save_model_checkpoint(const std::string& path, const ModelParams& p, const CkptMeta& meta) {
    Checkpoint ckpt;
    for (const auto& [name, t] : named_params(p)) ckpt.tensors.push_back({name, t});
    nlohmann::json j;
    j["stage"] = meta.stage;
    j["config_hash"] = meta.config_hash;
    j["iteration"] = meta.iteration;
    j["seed"] = meta.seed;
    j["keep_set"] = meta.keep_set;
    j["model"] = dit_to_json(p.cfg);
    ckpt.metadata_json = j.dump(2);
    save_checkpoint(path, ckpt);
}

LoadedModel load_model_checkpoint(const std::string& path) {
    Checkpoint ckpt = load_checkpoint(path);
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(ckpt.metadata_json);
    } catch (const nlohmann::json::exception&) {
        throw CheckpointError("'" + path + "' carries malformed metadata");
    }
    LoadedModel out;
    try {
        out.meta.stage = j.at("stage").get<std::string>();
        out.meta.config_hash = j.at("config_hash").get<std::string>();
        out.meta.iteration = j.at("iteration").get<int64_t>();
        out.meta.seed = j.at("seed").get<uint64_t>();
        out.meta.keep_set = j.at("keep_set").get<std::vector<int64_t>>();
        out.meta.model = dit_from_json(j.at("model"));
    } catch (const nlohmann::json::exception&) {
        throw CheckpointError("'" + path + "' metadata is missing required fields");
    }

    const DiTConfig& m = out.meta.model;
    ModelParams p;
    p.cfg = m;
    p.g1 = expect_tensor(ckpt, "g1/W", m.token_dim, m.hidden_dim);
    p.blocks.resize(m.n_blocks);
    for (int64_t b = 0; b < m.n_blocks; ++b) {
        const std::string base = "block/" + std::to_string(b) + "/";
        auto& blk = p.blocks[b];
        blk.wq = expect_tensor(ckpt, base + "attn/Wq", m.hidden_dim, m.hidden_dim);
        blk.wk = expect_tensor(ckpt, base + "attn/Wk", m.hidden_dim, m.hidden_dim);
        blk.wv = expect_tensor(ckpt, base + "attn/Wv", m.hidden_dim, m.hidden_dim);
        blk.wo = expect_tensor(ckpt, base + "attn/Wo", m.hidden_dim, m.hidden_dim);
        blk.w1 = expect_tensor(ckpt, base + "mlp/W1", m.hidden_dim, 4 * m.hidden_dim);
        blk.w2 = expect_tensor(ckpt, base + "mlp/W2", 4 * m.hidden_dim, m.hidden_dim);
        blk.wmod = expect_tensor(ckpt, base + "mod/W", m.time_embed_dim, 6 * m.hidden_dim);
    }
    p.g2 = expect_tensor(ckpt, "g2/W", m.hidden_dim, m.token_dim);
    p.class_embed = expect_tensor(ckpt, "embed/class", m.n_classes + 1, m.time_embed_dim);
    p.time_embed = expect_tensor(ckpt, "embed/time", m.time_embed_dim, m.time_embed_dim);
    out.params = std::move(p);
    return out;
}

void require_stage(const LoadedModel& m, const std::string& expected_stage,
                   const std::string& needed_by) {
    if (m.meta.stage != expected_stage)
        throw PreconditionError(needed_by + " requires a '" + expected_stage +
                                "' checkpoint, but the given file is tagged '" + m.meta.stage +
                                "'");
}

void require_model_shape(const LoadedModel& m, const DiTConfig& expected) {
    if (!(m.meta.model == expected))
        throw PreconditionError(
            "checkpoint model shape does not match the run config (checkpoint was written for a "
            "different [model]/[data] section)");
}

void save_videos(const std::string& path, const std::vector<Tensor>& videos,
                 const std::string& metadata_json) {
    Checkpoint ckpt;
    for (size_t i = 0; i < videos.size(); ++i)
        ckpt.tensors.push_back({"x0/" + std::to_string(i), videos[i]});
    ckpt.metadata_json = metadata_json.empty() ? "{}" : metadata_json;
    save_checkpoint(path, ckpt);
}

std::vector<Tensor> load_videos(const std::string& path) {
    Checkpoint ckpt = load_checkpoint(path);
    std::vector<Tensor> out;
    out.reserve(ckpt.tensors.size());
    for (size_t i = 0; i < ckpt.tensors.size(); ++i) {
        const std::string want = "x0/" + std::to_string(i);
        // Videos are stored dense and in order; anything else is a different
        // kind of container.
        if (!ckpt.contains(want))
            throw CheckpointError("'" + path + "' is not a video container (missing '" + want +
                                  "')");
        out.push_back(ckpt.find(want));
    }
    if (out.empty()) throw CheckpointError("'" + path + "' holds no videos");
    return out;
}

void write_labels_csv(const std::string& path, const std::vector<int64_t>& labels) {
    std::ofstream out(path);
    if (!out) throw PreconditionError("cannot write " + path);
    out << "index,label\n";
    for (size_t i = 0; i < labels.size(); ++i) out << i << "," << labels[i] << "\n";
}

ImportanceReport run_stage1(const RunConfig& cfg, const ModelParams& base,
                            const std::vector<VideoSample>& dataset) {
    const int64_t n_short = resolve_n_short(cfg.stage1, base.cfg);
    const uint64_t seed = derive_seed(cfg.seed, "stage1");
    std::vector<double> scores = score_all_blocks(base, dataset, cfg.stage1.n_samples, seed);
    ImportanceReport report = rank_and_select(scores, n_short);
    report.n_samples = cfg.stage1.n_samples;
    report.seed = seed;
    return report;
}

Stage2Result run_stage2(const RunConfig& cfg, const std::vector<VideoSample>& dataset,
                        const ModelParams& init, const std::vector<int64_t>& keep_set) {
    Stage2Config s2 = cfg.stage2;
    s2.keep_set = keep_set;
    s2.seed = derive_seed(cfg.seed, "stage2");
    return train_stage2(s2, dataset, init);
}

DistillRun run_distill(const RunConfig& cfg, const ModelParams& stage2_params,
                       const ModelParams* base, const std::vector<int64_t>& keep_set) {
    Stage3Config s3 = cfg.stage3;
    s3.seed = derive_seed(cfg.seed, "stage3");
    if (s3.teacher_base == TeacherBase::kUnpruned && base == nullptr)
        throw PreconditionError(
            "the unpruned-teacher ablation requires the base checkpoint (--base-init)");
    // With a pruned teacher the base parameters are never read; the Stage-II
    // set stands in so the shape check still runs.
    const ModelParams& base_ref = base ? *base : stage2_params;
    DistillRun run{init_distill(stage2_params, base_ref, keep_set, s3), {}};
    run.result = distill_loop(run.state, s3.iterations);
    return run;
}

SampleSet sample_videos(const ModelParams& p, const SkipMask& mask, SamplerKind sampler,
                        int64_t steps, double cfg_scale, int64_t n, int64_t n_classes,
                        uint64_t seed) {
    if (n < 1) throw PreconditionError("sample count must be >= 1");
    SampleSet out;
    RngStream root(seed, "noise");
    const std::vector<double> schedule = default_schedule(steps);
    for (int64_t i = 0; i < n; ++i) {
        const int64_t label = i % n_classes;
        RngStream noise = root.fork(static_cast<uint64_t>(i));
        Tensor video = (sampler == SamplerKind::kFewStep)
                           ? few_step_sample(p, label, schedule, mask, noise)
                           : euler_sample(p, label, steps, cfg_scale, mask, noise);
        out.videos.push_back(video);
        out.labels.push_back(label);
    }
    return out;
}

MetricReport evaluate_against_heldout(const RunConfig& cfg, const std::vector<Tensor>& generated) {
    const std::vector<VideoSample> heldout = heldout_dataset(cfg);
    std::vector<Tensor> reference;
    reference.reserve(heldout.size());
    for (const auto& s : heldout) reference.push_back(s.x0);
    MetricReport r = evaluate_samples(generated, reference);
    r.config_fingerprint = config_fingerprint(cfg);
    return r;
}

void ensure_dir(const std::string& path) {
    std::error_code ec;
    std::filesystem::create_directories(path, ec);
    if (ec) throw PreconditionError("cannot create directory '" + path + "': " + ec.message());
}

void write_text_file(const std::string& path, const std::string& content) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw PreconditionError("cannot write " + path);
    out << content;
}

namespace {

// Small model in general position: the zero-initialized modulation and
// output-projection weights are nudged off zero so gradient flows through
// every parameter.
ModelParams gradcheck_model(uint64_t seed) {
    DiTConfig cfg;
    cfg.n_blocks = 2;
    cfg.token_dim = 16;
    cfg.hidden_dim = 8;
    cfg.frames_T = 4;
    cfg.n_classes = 3;
    cfg.time_embed_dim = 8;
    ModelParams p = init_params(cfg, seed);
    RngStream jog(seed, "gradcheck-jog");
    for (auto& [name, t] : named_params(p)) {
        (void)name;
        for (auto& v : t->data) v += 0.05 * jog.normal();
    }
    set_trainable(p, true);
    return p;
}

DiffusionBatch gradcheck_batch(const DiTConfig& cfg, uint64_t seed) {
    DataConfig dcfg;
    dcfg.grid_h = 4;
    dcfg.grid_w = 4;
    dcfg.frames_T = cfg.frames_T;
    dcfg.n_classes = cfg.n_classes;
    auto samples = generate_dataset(dcfg, 4, seed);
    RngStream batch_stream(seed, "gradcheck-batch");
    return make_batch(samples, 2, TSampling::uniform(), batch_stream);
}

}  // namespace

GradSuiteReport run_gradcheck_suite(uint64_t seed) {
    GradSuiteReport report;
    ModelParams p = gradcheck_model(seed);
    const std::vector<Tensor> params = param_list(p);
    DiffusionBatch batch = gradcheck_batch(p.cfg, derive_seed(seed, "data"));
    const SkipMask none = SkipMask::none(p.cfg.n_blocks);
    SkipMask pruned = none;
    pruned.skip[1] = 1;
    const std::vector<int64_t> keep_set{0};

    auto add = [&](const std::string& name, const std::function<Tensor(Tape&)>& loss) {
        GradCheckReport r = grad_check(loss, params);
        report.entries.push_back({name, r.max_rel_error, r.pass});
        report.all_pass = report.all_pass && r.pass;
    };

    add("fm_loss unpruned", [&](Tape& tape) { return fm_loss(tape, p, batch, none); });
    add("fm_loss pruned", [&](Tape& tape) { return fm_loss(tape, p, batch, pruned); });

    // The distillation target is a stop-gradient in production, so the probe
    // function freezes it at the center-point parameters; only then does its
    // finite-difference gradient equal the tape's. Everything else mirrors
    // stage2_losses operation for operation.
    std::vector<Tensor> distill_targets;
    {
        Tape silent(/*recording=*/false);
        for (int64_t s = 0; s < batch.size(); ++s) {
            distill_targets.push_back(forward_velocity(silent, p, batch.xt[static_cast<size_t>(s)],
                                                       batch.t[static_cast<size_t>(s)],
                                                       batch.labels[static_cast<size_t>(s)],
                                                       none));
        }
    }
    for (double alpha : {0.0, 0.5, 1.0}) {
        add("stage2 L_total alpha=" + std::to_string(alpha).substr(0, 3), [&, alpha](Tape& tape) {
            Tensor fm_pruned_acc, fm_unpruned_acc, distill_acc;
            for (int64_t s = 0; s < batch.size(); ++s) {
                const auto su = static_cast<size_t>(s);
                Tensor v_pr = forward_velocity(tape, p, batch.xt[su], batch.t[su],
                                               batch.labels[su], pruned);
                Tensor v_unpr = forward_velocity(tape, p, batch.xt[su], batch.t[su],
                                                 batch.labels[su], none);
                Tensor target = make_tensor(v_pr->rows, v_pr->cols);
                for (int64_t i = 0; i < target->size(); ++i) {
                    target->data[i] = batch.x1[su]->data[i] - batch.x0[su]->data[i];
                }
                Tensor fm_pr = tape.mse_loss(v_pr, target);
                Tensor fm_unpr = tape.mse_loss(v_unpr, target);
                Tensor dist = tape.mse_loss(v_pr, distill_targets[su]);
                fm_pruned_acc = fm_pruned_acc ? tape.add(fm_pruned_acc, fm_pr) : fm_pr;
                fm_unpruned_acc = fm_unpruned_acc ? tape.add(fm_unpruned_acc, fm_unpr) : fm_unpr;
                distill_acc = distill_acc ? tape.add(distill_acc, dist) : dist;
            }
            const double inv_b = 1.0 / static_cast<double>(batch.size());
            Tensor training_sum = tape.scale(tape.add(fm_pruned_acc, fm_unpruned_acc), inv_b);
            Tensor distill_sum = tape.scale(distill_acc, inv_b);
            return tape.add(tape.scale(training_sum, 1.0 - alpha),
                            tape.scale(distill_sum, alpha));
        });
    }

    // Generator surrogate. Production backpropagates through exactly one
    // sampler step: the re-noising prefix ahead of the truncation index and
    // the distribution-matching direction are both stop-gradients. The probe
    // function freezes the prefix state and the target at the center-point
    // parameters so its finite-difference gradient equals the tape's. The
    // prefix replays few_step_truncated's draw order: init noise first, one
    // fresh-noise tensor per completed step.
    {
        const std::vector<double> schedule = default_schedule(2);
        const int64_t b = batch.size();
        std::vector<int64_t> stop_idx{1, 0};
        std::vector<double> dm_t{0.4, 0.7};
        RngStream noise_proto(derive_seed(seed, "surrogate"), "noise");

        auto x_in_at = [&](int64_t i) {
            RngStream noise = noise_proto.fork(static_cast<uint64_t>(i));
            Tape silent(/*recording=*/false);
            Tensor x = make_tensor(p.cfg.frames_T, p.cfg.token_dim);
            for (auto& v : x->data) v = noise.normal();
            const int64_t label = batch.labels[static_cast<size_t>(i)];
            for (int64_t idx = 0; idx < stop_idx[static_cast<size_t>(i)]; ++idx) {
                const double t = schedule[static_cast<size_t>(idx)];
                Tensor v = forward_velocity(silent, p, x, t, label, pruned);
                Tensor x0_hat = x0_from_velocity(silent, x, t, v);
                const double t_next = schedule[static_cast<size_t>(idx + 1)];
                Tensor fresh = make_tensor(x->rows, x->cols);
                for (auto& e : fresh->data) e = noise.normal();
                x = interpolant(x0_hat, fresh, t_next);
            }
            return x;
        };

        std::vector<Tensor> x_ins, targets;
        RngStream eps_stream(derive_seed(seed, "surrogate-eps"));
        for (int64_t i = 0; i < b; ++i) {
            const int64_t label = batch.labels[static_cast<size_t>(i)];
            const double t_stop = schedule[static_cast<size_t>(stop_idx[static_cast<size_t>(i)])];
            Tensor x_in = x_in_at(i);
            Tape silent(false);
            Tensor v_stop = forward_velocity(silent, p, x_in, t_stop, label, pruned);
            Tensor x0_hat = x0_from_velocity(silent, x_in, t_stop, v_stop);
            Tensor eps = make_tensor(x0_hat->rows, x0_hat->cols);
            for (auto& v : eps->data) v = eps_stream.normal();
            const double t = dm_t[static_cast<size_t>(i)];
            Tensor xt = interpolant(x0_hat, eps, t);
            Tensor v_fake = forward_velocity(silent, p, xt, t, label, pruned);
            Tensor v_real = real_velocity(p, xt, t, label, pruned, 2.0, 0.25);
            Tensor target = make_tensor(x0_hat->rows, x0_hat->cols);
            for (int64_t k = 0; k < target->size(); ++k)
                target->data[k] =
                    x0_hat->data[k] - sigma_t(t) * (v_fake->data[k] - v_real->data[k]);
            x_ins.push_back(x_in);
            targets.push_back(target);
        }
        add("generator surrogate", [&](Tape& tape) {
            Tensor acc;
            for (int64_t i = 0; i < b; ++i) {
                const auto iu = static_cast<size_t>(i);
                const double t_stop = schedule[static_cast<size_t>(stop_idx[iu])];
                Tensor v = forward_velocity(tape, p, x_ins[iu], t_stop, batch.labels[iu], pruned);
                Tensor x0_hat = x0_from_velocity(tape, x_ins[iu], t_stop, v);
                Tensor term = tape.half_sum_sq_diff(x0_hat, targets[iu]);
                acc = acc ? tape.add(acc, term) : term;
            }
            return acc;
        });
    }
    return report;
}

}  // namespace flgn
