// Command-line front end for the full pipeline: synthetic data, base
// training, block scoring, dynamically-pruned fine-tuning, few-step
// distillation, sampling, evaluation, and the steps-by-retention sweep.
//
// Every command is a pure function of (config file, seed, input
// checkpoints); re-running reproduces its outputs byte for byte. Exit codes:
// 0 success, 2 config error, 3 precondition error, 4 numerical divergence.
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <iostream>
#include <limits>
#include <optional>
#include <string>

#include "CLI11.hpp"
#include "flgn/checkpoint.hpp"
#include "flgn/config.hpp"
#include "flgn/errors.hpp"
#include "flgn/gradcheck.hpp"
#include "flgn/metrics.hpp"
#include "flgn/pipeline.hpp"
#include "flgn/stage1.hpp"
#include "flgn/stage2.hpp"
#include "flgn/stage3.hpp"
#include "flgn/sweep.hpp"

namespace {

struct CommonArgs {
    std::string config;
    std::optional<uint64_t> seed;
    std::string out;
    std::string init;
    std::string base_init;
    std::optional<int64_t> jobs;
};

// --config/--seed/--out are shared by every command; stage commands add
// --init where they consume an upstream artifact.
void add_common(CLI::App* sub, CommonArgs& args, bool with_init) {
    sub->add_option("--config", args.config, "run configuration (INI)")->required();
    sub->add_option("--seed", args.seed, "override [run] seed");
    sub->add_option("--out", args.out, "override [run] out_dir");
    if (with_init) sub->add_option("--init", args.init, "input checkpoint");
}

flgn::RunConfig resolve(const CommonArgs& args) {
    flgn::RunConfig cfg = flgn::parse_run_config(args.config);
    if (args.seed) cfg.seed = *args.seed;
    if (!args.out.empty()) cfg.out_dir = args.out;
    if (const char* env = std::getenv("FLGN_OUT"); env && *env) cfg.out_dir = env;
    if (args.jobs) {
        cfg.sweep.jobs = *args.jobs;
        if (cfg.sweep.jobs < 1) throw flgn::ConfigError("--jobs must be >= 1");
    }
    flgn::ensure_dir(cfg.out_dir);
    flgn::write_text_file(cfg.out_dir + "/resolved_config.ini", flgn::serialize(cfg));
    return cfg;
}

std::string out_path(const flgn::RunConfig& cfg, const std::string& name) {
    return cfg.out_dir + "/" + name;
}

flgn::CkptMeta meta_for(const flgn::RunConfig& cfg, const std::string& stage, int64_t iteration,
                        std::vector<int64_t> keep_set = {}) {
    flgn::CkptMeta m;
    m.stage = stage;
    m.config_hash = flgn::config_fingerprint(cfg);
    m.iteration = iteration;
    m.seed = cfg.seed;
    m.keep_set = std::move(keep_set);
    m.model = cfg.dit_config();
    return m;
}

void require_init(const CommonArgs& args, const std::string& what) {
    if (args.init.empty())
        throw flgn::PreconditionError("this command requires --init <" + what + ">");
}

int cmd_gen_data(const CommonArgs& args) {
    flgn::RunConfig cfg = resolve(args);
    const auto dataset = flgn::train_dataset(cfg);
    std::vector<flgn::Tensor> videos;
    std::vector<int64_t> labels;
    for (const auto& s : dataset) {
        videos.push_back(s.x0);
        labels.push_back(s.label);
    }
    const std::string meta = "{\n  \"kind\": \"dataset\",\n  \"config_hash\": \"" +
                             flgn::config_fingerprint(cfg) + "\",\n  \"seed\": " +
                             std::to_string(cfg.seed) + "\n}";
    flgn::save_videos(out_path(cfg, "dataset.ckpt"), videos, meta);
    flgn::write_labels_csv(out_path(cfg, "dataset_labels.csv"), labels);
    std::cout << "wrote " << videos.size() << " videos to " << out_path(cfg, "dataset.ckpt")
              << "\n";
    return 0;
}

int cmd_train_base(const CommonArgs& args) {
    flgn::RunConfig cfg = resolve(args);
    const auto dataset = flgn::train_dataset(cfg);
    flgn::BaseResult res = flgn::train_base(cfg, dataset);
    flgn::write_base_trace(out_path(cfg, "base_trace.csv"), res.trace);
    flgn::save_model_checkpoint(out_path(cfg, "base.ckpt"), res.params,
                                meta_for(cfg, "base", cfg.train_base.iterations));
    const double final_loss = res.trace.empty() ? 0.0 : res.trace.back().fm_loss;
    std::cout << "base model trained for " << cfg.train_base.iterations
              << " iterations, final fm_loss " << final_loss << "\n";
    return 0;
}

int cmd_score_blocks(const CommonArgs& args) {
    require_init(args, "base checkpoint");
    flgn::RunConfig cfg = resolve(args);
    flgn::LoadedModel base = flgn::load_model_checkpoint(args.init);
    flgn::require_stage(base, "base", "score-blocks");
    flgn::require_model_shape(base, cfg.dit_config());
    const auto dataset = flgn::train_dataset(cfg);
    flgn::ImportanceReport report = flgn::run_stage1(cfg, base.params, dataset);
    double ushape = std::numeric_limits<double>::quiet_NaN();
    if (static_cast<int64_t>(report.scores.size()) >= 8)
        ushape = flgn::ushape_diagnostic(report.scores).ratio;
    flgn::write_importance_csv(out_path(cfg, "importance.csv"), out_path(cfg, "importance.json"),
                               report, ushape);
    std::cout << "scored " << report.scores.size() << " blocks; keep set of " << report.n_short
              << " written to " << out_path(cfg, "importance.csv") << "\n";
    return 0;
}

int cmd_train_stage2(const CommonArgs& args) {
    require_init(args, "base checkpoint");
    flgn::RunConfig cfg = resolve(args);
    flgn::LoadedModel base = flgn::load_model_checkpoint(args.init);
    flgn::require_stage(base, "base", "train-stage2");
    flgn::require_model_shape(base, cfg.dit_config());
    const auto dataset = flgn::train_dataset(cfg);
    flgn::ImportanceReport report = flgn::run_stage1(cfg, base.params, dataset);
    if (cfg.stage2.ckpt_interval > 0) {
        cfg.stage2.on_checkpoint = [&cfg, &report](int64_t it, const flgn::ModelParams& p) {
            flgn::save_model_checkpoint(
                out_path(cfg, "stage2_iter" + std::to_string(it) + ".ckpt"), p,
                meta_for(cfg, "stage2", it, report.keep_set));
        };
    }
    flgn::Stage2Result res = flgn::run_stage2(cfg, dataset, base.params, report.keep_set);
    flgn::write_stage2_trace(out_path(cfg, "stage2_trace.csv"), res.trace);
    flgn::save_model_checkpoint(out_path(cfg, "stage2.ckpt"), res.params,
                                meta_for(cfg, "stage2", cfg.stage2.iterations, report.keep_set));
    const double final_loss = res.trace.empty() ? 0.0 : res.trace.back().l_total;
    std::cout << "stage2 trained for " << cfg.stage2.iterations << " iterations, final L_total "
              << final_loss << "\n";
    return 0;
}

int cmd_distill(const CommonArgs& args) {
    require_init(args, "stage2 checkpoint");
    flgn::RunConfig cfg = resolve(args);
    flgn::LoadedModel s2 = flgn::load_model_checkpoint(args.init);
    flgn::require_stage(s2, "stage2", "distill");
    flgn::require_model_shape(s2, cfg.dit_config());
    if (s2.meta.keep_set.empty())
        throw flgn::PreconditionError("the stage2 checkpoint records no keep set");

    flgn::LoadedModel base;
    const flgn::ModelParams* base_ptr = nullptr;
    if (!args.base_init.empty()) {
        base = flgn::load_model_checkpoint(args.base_init);
        flgn::require_stage(base, "base", "distill --base-init");
        flgn::require_model_shape(base, cfg.dit_config());
        base_ptr = &base.params;
    }
    flgn::DistillRun run = flgn::run_distill(cfg, s2.params, base_ptr, s2.meta.keep_set);
    flgn::write_stage3_trace(out_path(cfg, "stage3_trace.csv"), run.result.trace);
    flgn::save_model_checkpoint(out_path(cfg, "generator.ckpt"), run.state.generator,
                                meta_for(cfg, "generator", cfg.stage3.iterations,
                                         s2.meta.keep_set));
    flgn::save_model_checkpoint(out_path(cfg, "fake.ckpt"), run.state.fake,
                                meta_for(cfg, "fake", cfg.stage3.iterations, s2.meta.keep_set));
    std::cout << "distilled " << cfg.stage3.iterations << " iterations at " << cfg.stage3.steps
              << " steps; wrote " << out_path(cfg, "generator.ckpt") << "\n";
    return 0;
}

int cmd_sample(const CommonArgs& args) {
    require_init(args, "model checkpoint");
    flgn::RunConfig cfg = resolve(args);
    flgn::LoadedModel m = flgn::load_model_checkpoint(args.init);
    flgn::require_model_shape(m, cfg.dit_config());

    flgn::SkipMask mask = flgn::SkipMask::none(m.meta.model.n_blocks);
    if (cfg.sample.mask == flgn::SampleMaskChoice::kPruned) {
        if (m.meta.keep_set.empty())
            throw flgn::PreconditionError(
                "the checkpoint records no keep set; set [sample] mask = none or use a pruned "
                "checkpoint");
        mask = flgn::SkipMask::complement_of(m.meta.keep_set, m.meta.model.n_blocks);
    }
    flgn::SampleSet set = flgn::sample_videos(
        m.params, mask, cfg.sample.sampler, cfg.sample.steps, cfg.sample.cfg_scale,
        cfg.sample.n_samples, m.meta.model.n_classes, flgn::derive_seed(cfg.seed, "sample"));
    const std::string meta = "{\n  \"kind\": \"samples\",\n  \"config_hash\": \"" +
                             flgn::config_fingerprint(cfg) + "\",\n  \"seed\": " +
                             std::to_string(cfg.seed) + "\n}";
    flgn::save_videos(out_path(cfg, "samples.ckpt"), set.videos, meta);
    flgn::write_labels_csv(out_path(cfg, "samples_labels.csv"), set.labels);
    std::cout << "sampled " << set.videos.size() << " videos to " << out_path(cfg, "samples.ckpt")
              << "\n";
    return 0;
}

int cmd_eval(const CommonArgs& args) {
    require_init(args, "video container");
    flgn::RunConfig cfg = resolve(args);
    const std::vector<flgn::Tensor> videos = flgn::load_videos(args.init);
    flgn::MetricReport report = flgn::evaluate_against_heldout(cfg, videos);
    flgn::write_text_file(out_path(cfg, "metrics.json"), flgn::metric_report_json(report));
    std::cout << flgn::metric_report_json(report);
    return 0;
}

int cmd_sweep(const CommonArgs& args) {
    flgn::RunConfig cfg = resolve(args);
    std::vector<flgn::SweepCellResult> cells = flgn::run_sweep(cfg);
    flgn::write_sweep_csv(out_path(cfg, "sweep.csv"), cells);
    flgn::write_sweep_surface(out_path(cfg, "sweep_surface.dat"), cells);
    int64_t failed = 0;
    for (const auto& c : cells) {
        if (c.failed) {
            ++failed;
            std::cerr << "cell steps=" << c.steps << " retention=" << c.retention
                      << " failed: " << c.error << "\n";
        }
    }
    std::cout << "sweep wrote " << cells.size() << " rows (" << failed << " failed) to "
              << out_path(cfg, "sweep.csv") << "\n";
    return 0;
}

int cmd_gradcheck(const CommonArgs& args) {
    flgn::RunConfig cfg = resolve(args);
    flgn::GradSuiteReport report = flgn::run_gradcheck_suite(flgn::derive_seed(cfg.seed, "gradcheck"));
    double worst = 0.0;
    for (const auto& e : report.entries) {
        std::printf("%-28s max rel error %.3e  %s\n", e.name.c_str(), e.max_rel_error,
                    e.pass ? "ok" : "FAIL");
        worst = std::max(worst, e.max_rel_error);
    }
    std::printf("overall max rel error %.3e\n", worst);
    char json[256];
    std::snprintf(json, sizeof json,
                  "{\n  \"max_rel_error\": %.17g,\n  \"pass\": %s\n}\n", worst,
                  report.all_pass ? "true" : "false");
    flgn::write_text_file(out_path(cfg, "gradcheck.json"), json);
    return report.all_pass ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"three-stage pruning and few-step distillation pipeline"};
    app.require_subcommand(1);

    CommonArgs gen_data, train_base, score_blocks, train_stage2, distill, sample, eval_args,
        sweep, gradcheck;

    add_common(app.add_subcommand("gen-data", "export the synthetic training set"), gen_data,
               false);
    add_common(app.add_subcommand("train-base", "fit the unpruned velocity model"), train_base,
               false);
    add_common(app.add_subcommand("score-blocks", "rank blocks by skip loss"), score_blocks,
               true);
    add_common(app.add_subcommand("train-stage2", "fine-tune under stochastic block skipping"),
               train_stage2, true);
    CLI::App* distill_cmd =
        app.add_subcommand("distill", "few-step distribution-matching distillation");
    add_common(distill_cmd, distill, true);
    distill_cmd->add_option("--base-init", distill.base_init,
                            "base checkpoint for the unpruned-teacher ablation");
    add_common(app.add_subcommand("sample", "generate videos from a checkpoint"), sample, true);
    add_common(app.add_subcommand("eval", "score a video container against held-out data"),
               eval_args, true);
    CLI::App* sweep_cmd = app.add_subcommand("sweep", "steps x retention grid");
    add_common(sweep_cmd, sweep, false);
    sweep_cmd->add_option("--jobs", sweep.jobs, "parallel sweep cells");
    add_common(app.add_subcommand("gradcheck", "finite-difference autodiff validation"),
               gradcheck, false);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e);
    }

    try {
        if (app.got_subcommand("gen-data")) return cmd_gen_data(gen_data);
        if (app.got_subcommand("train-base")) return cmd_train_base(train_base);
        if (app.got_subcommand("score-blocks")) return cmd_score_blocks(score_blocks);
        if (app.got_subcommand("train-stage2")) return cmd_train_stage2(train_stage2);
        if (app.got_subcommand("distill")) return cmd_distill(distill);
        if (app.got_subcommand("sample")) return cmd_sample(sample);
        if (app.got_subcommand("eval")) return cmd_eval(eval_args);
        if (app.got_subcommand("sweep")) return cmd_sweep(sweep);
        if (app.got_subcommand("gradcheck")) return cmd_gradcheck(gradcheck);
    } catch (const flgn::ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 2;
    } catch (const flgn::PreconditionError& e) {
        std::cerr << "precondition error: " << e.what() << "\n";
        return 3;
    } catch (const flgn::NumericsError& e) {
        std::cerr << "numerical divergence: " << e.what() << "\n";
        return 4;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
