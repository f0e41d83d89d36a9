#include "flgn/sweep.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <set>
#include <thread>

#include "flgn/errors.hpp"
#include "flgn/pipeline.hpp"
#include "flgn/stage1.hpp"

namespace flgn {

namespace {

constexpr double kNan = std::numeric_limits<double>::quiet_NaN();

struct Grid {
    std::vector<int64_t> steps;
    std::vector<double> retentions;
};

Grid sorted_grid(const SweepConfig& cfg) {
    Grid g;
    {
        std::set<int64_t> s(cfg.steps_list.begin(), cfg.steps_list.end());
        g.steps.assign(s.begin(), s.end());
    }
    {
        std::set<double> s(cfg.retention_list.begin(), cfg.retention_list.end());
        g.retentions.assign(s.begin(), s.end());
    }
    return g;
}

// One full cell from the shared prerequisites. Throws on any stage failure;
// the caller records it.
SweepCellResult run_cell(const RunConfig& base_cfg, const std::vector<VideoSample>& dataset,
                         const ModelParams& base_model, const std::vector<double>& scores,
                         const std::vector<Tensor>& reference, int64_t k, double rho,
                         uint64_t cell_seed) {
    RunConfig cfg = base_cfg;
    cfg.seed = cell_seed;
    cfg.stage1.retention = rho;
    cfg.stage1.n_short = 0;
    cfg.stage3.steps = k;
    cfg.sample.steps = k;

    const int64_t n_short = n_short_for_retention(base_model.cfg, rho);
    ImportanceReport selection = rank_and_select(scores, n_short);

    Stage2Result s2 = run_stage2(cfg, dataset, base_model, selection.keep_set);
    DistillRun distill = run_distill(cfg, s2.params, &base_model, selection.keep_set);

    const SkipMask pruned = SkipMask::complement_of(selection.keep_set, base_model.cfg.n_blocks);
    SampleSet samples = sample_videos(distill.state.generator, pruned, SamplerKind::kFewStep, k,
                                      cfg.sample.cfg_scale, cfg.sample.n_samples,
                                      base_model.cfg.n_classes,
                                      derive_seed(cell_seed, "sweep-sample"));

    SweepCellResult cell;
    cell.steps = k;
    cell.retention = rho;
    cell.metrics = evaluate_samples(samples.videos, reference);
    cell.metrics.config_fingerprint = config_fingerprint(cfg);
    cell.speedup = theoretical_speedup(50.0, 2.0, k, rho);
    return cell;
}

}  // namespace

std::vector<SweepCellResult> run_sweep(const RunConfig& cfg) {
    const Grid grid = sorted_grid(cfg.sweep);
    const int64_t n_cells = static_cast<int64_t>(grid.steps.size() * grid.retentions.size());

    const std::vector<VideoSample> dataset = train_dataset(cfg);
    const BaseResult base = train_base(cfg, dataset);
    const std::vector<double> scores = score_all_blocks(
        base.params, dataset, cfg.stage1.n_samples, derive_seed(cfg.seed, "stage1"));
    const std::vector<VideoSample> heldout = heldout_dataset(cfg);
    std::vector<Tensor> reference;
    reference.reserve(heldout.size());
    for (const auto& s : heldout) reference.push_back(s.x0);

    std::vector<SweepCellResult> cells(n_cells);
    std::atomic<int64_t> next{0};
    auto worker = [&]() {
        for (;;) {
            const int64_t idx = next.fetch_add(1);
            if (idx >= n_cells) return;
            const int64_t ik = idx / static_cast<int64_t>(grid.retentions.size());
            const int64_t ir = idx % static_cast<int64_t>(grid.retentions.size());
            const int64_t k = grid.steps[ik];
            const double rho = grid.retentions[ir];
            const uint64_t cell_seed = cfg.seed ^ static_cast<uint64_t>(idx);
            try {
                cells[idx] =
                    run_cell(cfg, dataset, base.params, scores, reference, k, rho, cell_seed);
            } catch (const std::exception& e) {
                SweepCellResult& cell = cells[idx];
                cell.steps = k;
                cell.retention = rho;
                cell.metrics.energy_distance = kNan;
                cell.metrics.dynamic_degree = kNan;
                cell.metrics.motion_smoothness = kNan;
                cell.metrics.subject_consistency = kNan;
                cell.speedup = theoretical_speedup(50.0, 2.0, k, rho);
                cell.failed = true;
                cell.error = e.what();
            }
        }
    };

    const int64_t jobs = std::min<int64_t>(std::max<int64_t>(cfg.sweep.jobs, 1), n_cells);
    if (jobs <= 1) {
        worker();
    } else {
        std::vector<std::thread> pool;
        for (int64_t j = 0; j < jobs; ++j) pool.emplace_back(worker);
        for (auto& t : pool) t.join();
    }
    return cells;
}

void write_sweep_csv(const std::string& path, const std::vector<SweepCellResult>& cells) {
    std::ofstream out(path);
    if (!out) throw PreconditionError("cannot write " + path);
    out << "steps,retention,energy_distance,dynamic_degree,motion_smoothness,"
           "subject_consistency,speedup\n";
    char buf[512];
    for (const auto& c : cells) {
        std::snprintf(buf, sizeof buf, "%lld,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g\n",
                      static_cast<long long>(c.steps), c.retention, c.metrics.energy_distance,
                      c.metrics.dynamic_degree, c.metrics.motion_smoothness,
                      c.metrics.subject_consistency, c.speedup);
        out << buf;
    }
}

namespace {

// Min-max position of x; a degenerate range maps everything to 0.5.
double normalized(double x, double lo, double hi) {
    if (!std::isfinite(x)) return kNan;
    if (hi <= lo) return 0.5;
    return (x - lo) / (hi - lo);
}

}  // namespace

void write_sweep_surface(const std::string& path, const std::vector<SweepCellResult>& cells) {
    std::vector<int64_t> steps;
    std::vector<double> retentions;
    for (const auto& c : cells) {
        if (std::find(steps.begin(), steps.end(), c.steps) == steps.end())
            steps.push_back(c.steps);
        if (std::find(retentions.begin(), retentions.end(), c.retention) == retentions.end())
            retentions.push_back(c.retention);
    }
    std::sort(steps.begin(), steps.end());
    std::sort(retentions.begin(), retentions.end());

    auto range_of = [&](auto pick) {
        double lo = std::numeric_limits<double>::infinity(), hi = -lo;
        for (const auto& c : cells) {
            const double v = pick(c);
            if (!std::isfinite(v)) continue;
            lo = std::min(lo, v);
            hi = std::max(hi, v);
        }
        return std::pair<double, double>{lo, hi};
    };
    const auto [ed_lo, ed_hi] = range_of([](const SweepCellResult& c) {
        return c.metrics.energy_distance;
    });
    const auto [dd_lo, dd_hi] = range_of([](const SweepCellResult& c) {
        return c.metrics.dynamic_degree;
    });
    const auto [ms_lo, ms_hi] = range_of([](const SweepCellResult& c) {
        return c.metrics.motion_smoothness;
    });

    std::ofstream out(path);
    if (!out) throw PreconditionError("cannot write " + path);
    out << "# composite = mean(norm(dynamic_degree), 1 - norm(energy_distance), "
           "norm(motion_smoothness))\n";
    out << "# rows: steps =";
    for (int64_t k : steps) out << " " << k;
    out << "\n# cols: retention =";
    char buf[64];
    for (double r : retentions) {
        std::snprintf(buf, sizeof buf, " %.17g", r);
        out << buf;
    }
    out << "\n";
    for (int64_t k : steps) {
        bool first = true;
        for (double r : retentions) {
            const SweepCellResult* cell = nullptr;
            for (const auto& c : cells)
                if (c.steps == k && c.retention == r) cell = &c;
            double composite = kNan;
            if (cell && !cell->failed) {
                const double dd = normalized(cell->metrics.dynamic_degree, dd_lo, dd_hi);
                const double ed = normalized(cell->metrics.energy_distance, ed_lo, ed_hi);
                const double ms = normalized(cell->metrics.motion_smoothness, ms_lo, ms_hi);
                composite = (dd + (1.0 - ed) + ms) / 3.0;
            }
            std::snprintf(buf, sizeof buf, "%s%.17g", first ? "" : " ", composite);
            out << buf;
            first = false;
        }
        out << "\n";
    }
}

}  // namespace flgn
