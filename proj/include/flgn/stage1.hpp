#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "flgn/data.hpp"
#include "flgn/model.hpp"

namespace flgn {

// One Monte-Carlo draw of the skip-loss estimator: a dataset sample diffused
// to a uniform time. The same draw list is reused for every block index so
// scores stay comparable.
struct ScoreDraw {
    Tensor x0;
    Tensor xt;
    double t;
    int64_t label;
};

std::vector<ScoreDraw> make_score_draws(const std::vector<VideoSample>& samples,
                                        int64_t n_samples, uint64_t seed);

// Mean over draws of the squared norm of (xt - t*v^{skip-i}(xt, t) - x0).
double score_block_with_draws(const ModelParams& p, const std::vector<ScoreDraw>& draws,
                              int64_t block_idx);
double score_block(const ModelParams& p, const std::vector<VideoSample>& samples,
                   int64_t block_idx, int64_t n_samples, uint64_t seed);
// All blocks against one shared draw stream.
std::vector<double> score_all_blocks(const ModelParams& p,
                                     const std::vector<VideoSample>& samples, int64_t n_samples,
                                     uint64_t seed);

struct ImportanceReport {
    std::vector<double> scores;     // E[i] per block
    std::vector<int64_t> ranked;    // block indices, score descending, ties by lower index
    std::vector<int64_t> keep_set;  // first n_short of ranked, sorted ascending
    int64_t n_short = 0;
    int64_t n_samples = 0;
    uint64_t seed = 0;
};

ImportanceReport rank_and_select(const std::vector<double>& scores, int64_t n_short);

struct SubsetScore {
    std::vector<int64_t> keep;
    double objective;  // mean over draws of |v_unpruned - v_subset|^2
};

struct OracleResult {
    std::vector<int64_t> best_keep_set;
    std::vector<SubsetScore> table;  // every C(N, n_short) subset, enumeration order
    int64_t greedy_rank = 0;         // 1 = the greedy keep set ties the best objective
};

// Brute force over every size-n_short keep subset; guarded to
// C(N, n_short) <= 10,000 so it stays a desk-scale oracle.
OracleResult exhaustive_oracle(const ModelParams& p, const std::vector<VideoSample>& samples,
                               int64_t n_short, int64_t n_samples, uint64_t seed,
                               const std::vector<int64_t>& greedy_keep);

struct UShapeDiagnostic {
    double edge_mean = 0.0;    // first and last quartile of block indices
    double middle_mean = 0.0;  // the middle half
    double ratio = 0.0;
};

// Purely informational; reported with the run and never asserted against.
UShapeDiagnostic ushape_diagnostic(const std::vector<double>& scores);

void write_importance_csv(const std::string& csv_path, const std::string& json_path,
                          const ImportanceReport& report, double ushape_ratio);

}  // namespace flgn
