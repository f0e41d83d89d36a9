#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "flgn/config.hpp"
#include "flgn/metrics.hpp"
#include "flgn/model.hpp"

namespace flgn {

struct SweepCellResult {
    int64_t steps = 0;
    double retention = 0.0;  // requested ratio, also used in the speedup
    MetricReport metrics;    // NaN-filled when the cell failed
    double speedup = 0.0;
    bool failed = false;
    std::string error;
};

// Full steps x retention grid. The training set, the base model, and the
// block scores are computed once from the run seed; each cell then runs
// Stage-I selection at its retention, Stage II, Stage III at its step count,
// and evaluation against one shared held-out reference. Cell seeds are
// run_seed ^ cell_index over the sorted grid, K-major, so any sub-grid of a
// larger sweep reproduces the same rows. A failed cell keeps its row (NaN
// metrics) and the sweep continues. Cells run on up to cfg.sweep.jobs
// threads; results are ordered by (K, retention) regardless of completion
// order.
std::vector<SweepCellResult> run_sweep(const RunConfig& cfg);

void write_sweep_csv(const std::string& path, const std::vector<SweepCellResult>& cells);

// Gnuplot-style matrix of the composite score, one row per step count, one
// column per retention: mean of min-max normalized dynamic_degree, negated
// energy_distance, and motion_smoothness. A metric constant across the grid
// contributes 0.5.
void write_sweep_surface(const std::string& path, const std::vector<SweepCellResult>& cells);

}  // namespace flgn
