#include "flgn/stage1.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <numeric>

#include "flgn/kernels.hpp"

namespace flgn {

std::vector<ScoreDraw> make_score_draws(const std::vector<VideoSample>& samples,
                                        int64_t n_samples, uint64_t seed) {
    if (samples.empty()) throw PreconditionError("make_score_draws: empty sample list");
    if (n_samples < 1) throw PreconditionError("make_score_draws: n_samples must be >= 1");
    RngStream stream(seed, "score");
    std::vector<ScoreDraw> draws;
    draws.reserve(n_samples);
    for (int64_t d = 0; d < n_samples; ++d) {
        const auto& s = samples[stream.next_below(samples.size())];
        Tensor x1 = make_tensor(s.x0->rows, s.x0->cols);
        for (auto& v : x1->data) v = stream.normal();
        const double t = stream.uniform(kTMin, kTMax);
        draws.push_back(ScoreDraw{clone_values(s.x0), interpolant(s.x0, x1, t), t, s.label});
    }
    return draws;
}

double score_block_with_draws(const ModelParams& p, const std::vector<ScoreDraw>& draws,
                              int64_t block_idx) {
    if (block_idx < 0 || block_idx >= p.cfg.n_blocks) {
        throw PreconditionError("block index " + std::to_string(block_idx) + " out of range");
    }
    SkipMask mask = SkipMask::none(p.cfg.n_blocks);
    mask.skip[static_cast<size_t>(block_idx)] = 1;
    Tape tape(/*recording=*/false);
    double acc = 0.0;
    for (const auto& d : draws) {
        Tensor v = forward_velocity(tape, p, d.xt, d.t, d.label, mask);
        Tensor x0_hat = x0_from_velocity(tape, d.xt, d.t, v);
        acc += kern::sum_sq_diff(x0_hat->data.data(), d.x0->data.data(), x0_hat->size());
    }
    return acc / static_cast<double>(draws.size());
}

double score_block(const ModelParams& p, const std::vector<VideoSample>& samples,
                   int64_t block_idx, int64_t n_samples, uint64_t seed) {
    return score_block_with_draws(p, make_score_draws(samples, n_samples, seed), block_idx);
}

std::vector<double> score_all_blocks(const ModelParams& p,
                                     const std::vector<VideoSample>& samples, int64_t n_samples,
                                     uint64_t seed) {
    const auto draws = make_score_draws(samples, n_samples, seed);
    std::vector<double> scores;
    scores.reserve(p.cfg.n_blocks);
    for (int64_t i = 0; i < p.cfg.n_blocks; ++i) {
        scores.push_back(score_block_with_draws(p, draws, i));
    }
    return scores;
}

ImportanceReport rank_and_select(const std::vector<double>& scores, int64_t n_short) {
    const int64_t n = static_cast<int64_t>(scores.size());
    if (n_short < 1 || n_short > n) {
        throw PreconditionError("n_short " + std::to_string(n_short) +
                                " out of range for " + std::to_string(n) + " blocks");
    }
    ImportanceReport report;
    report.scores = scores;
    report.n_short = n_short;
    report.ranked.resize(static_cast<size_t>(n));
    std::iota(report.ranked.begin(), report.ranked.end(), 0);
    std::stable_sort(report.ranked.begin(), report.ranked.end(),
                     [&scores](int64_t a, int64_t b) { return scores[a] > scores[b]; });
    report.keep_set.assign(report.ranked.begin(), report.ranked.begin() + n_short);
    std::sort(report.keep_set.begin(), report.keep_set.end());
    return report;
}

namespace {

int64_t binomial_guarded(int64_t n, int64_t k) {
    int64_t c = 1;
    for (int64_t i = 1; i <= k; ++i) {
        c = c * (n - k + i) / i;
        if (c > 10000) return c;
    }
    return c;
}

}  // namespace

OracleResult exhaustive_oracle(const ModelParams& p, const std::vector<VideoSample>& samples,
                               int64_t n_short, int64_t n_samples, uint64_t seed,
                               const std::vector<int64_t>& greedy_keep) {
    const int64_t n = p.cfg.n_blocks;
    if (n_short < 1 || n_short > n) throw PreconditionError("oracle: n_short out of range");
    if (binomial_guarded(n, n_short) > 10000) {
        throw PreconditionError("oracle guard: C(" + std::to_string(n) + ", " +
                                std::to_string(n_short) + ") exceeds 10,000 subsets");
    }
    const auto draws = make_score_draws(samples, n_samples, seed);

    // The unpruned reference output, once per draw.
    Tape tape(/*recording=*/false);
    const SkipMask none = SkipMask::none(n);
    std::vector<Tensor> reference;
    reference.reserve(draws.size());
    for (const auto& d : draws) {
        reference.push_back(forward_velocity(tape, p, d.xt, d.t, d.label, none));
    }

    OracleResult result;
    std::vector<int64_t> subset(static_cast<size_t>(n_short));
    std::iota(subset.begin(), subset.end(), 0);
    while (true) {
        SkipMask mask = SkipMask::complement_of(subset, n);
        double acc = 0.0;
        for (size_t d = 0; d < draws.size(); ++d) {
            Tensor v = forward_velocity(tape, p, draws[d].xt, draws[d].t, draws[d].label, mask);
            acc += kern::sum_sq_diff(v->data.data(), reference[d]->data.data(), v->size());
        }
        result.table.push_back(SubsetScore{subset, acc / static_cast<double>(draws.size())});

        // Next combination in lexicographic order.
        int64_t i = n_short - 1;
        while (i >= 0 && subset[static_cast<size_t>(i)] == n - n_short + i) --i;
        if (i < 0) break;
        ++subset[static_cast<size_t>(i)];
        for (int64_t j = i + 1; j < n_short; ++j) {
            subset[static_cast<size_t>(j)] = subset[static_cast<size_t>(j - 1)] + 1;
        }
    }

    const auto best = std::min_element(
        result.table.begin(), result.table.end(),
        [](const SubsetScore& a, const SubsetScore& b) { return a.objective < b.objective; });
    result.best_keep_set = best->keep;

    std::vector<int64_t> sorted_greedy = greedy_keep;
    std::sort(sorted_greedy.begin(), sorted_greedy.end());
    double greedy_obj = -1.0;
    for (const auto& row : result.table) {
        if (row.keep == sorted_greedy) {
            greedy_obj = row.objective;
            break;
        }
    }
    if (greedy_obj < 0.0) {
        throw PreconditionError("oracle: greedy keep set is not a size-n_short subset");
    }
    int64_t better = 0;
    for (const auto& row : result.table) {
        if (row.objective < greedy_obj) ++better;
    }
    result.greedy_rank = better + 1;
    return result;
}

UShapeDiagnostic ushape_diagnostic(const std::vector<double>& scores) {
    const int64_t n = static_cast<int64_t>(scores.size());
    if (n < 8) throw PreconditionError("u-shape diagnostic needs at least 8 blocks");
    const int64_t q = n / 4;
    UShapeDiagnostic d;
    double edge = 0.0, middle = 0.0;
    int64_t n_edge = 0, n_middle = 0;
    for (int64_t i = 0; i < n; ++i) {
        if (i < q || i >= n - q) {
            edge += scores[static_cast<size_t>(i)];
            ++n_edge;
        } else {
            middle += scores[static_cast<size_t>(i)];
            ++n_middle;
        }
    }
    d.edge_mean = edge / static_cast<double>(n_edge);
    d.middle_mean = middle / static_cast<double>(n_middle);
    d.ratio = d.edge_mean / d.middle_mean;
    return d;
}

void write_importance_csv(const std::string& csv_path, const std::string& json_path,
                          const ImportanceReport& report, double ushape_ratio) {
    std::ofstream csv(csv_path);
    if (!csv) throw PreconditionError("cannot write " + csv_path);
    csv << "block_index,score,rank,kept\n";
    std::vector<int64_t> rank_of(report.scores.size());
    for (size_t r = 0; r < report.ranked.size(); ++r) {
        rank_of[static_cast<size_t>(report.ranked[r])] = static_cast<int64_t>(r);
    }
    char buf[64];
    for (size_t i = 0; i < report.scores.size(); ++i) {
        const bool kept = std::find(report.keep_set.begin(), report.keep_set.end(),
                                    static_cast<int64_t>(i)) != report.keep_set.end();
        std::snprintf(buf, sizeof(buf), "%.17g", report.scores[i]);
        csv << i << "," << buf << "," << rank_of[i] << "," << (kept ? 1 : 0) << "\n";
    }

    std::ofstream js(json_path);
    if (!js) throw PreconditionError("cannot write " + json_path);
    std::snprintf(buf, sizeof(buf), "%.17g", ushape_ratio);
    js << "{\n"
       << "  \"n_samples\": " << report.n_samples << ",\n"
       << "  \"n_short\": " << report.n_short << ",\n"
       << "  \"seed\": " << report.seed << ",\n"
       << "  \"ushape_ratio\": " << buf << "\n"
       << "}\n";
}

}  // namespace flgn
