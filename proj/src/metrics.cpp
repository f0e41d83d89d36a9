#include "flgn/metrics.hpp"

#include <cmath>
#include <cstdio>

#include "flgn/errors.hpp"

namespace flgn {

double theoretical_speedup(double base_steps, double cfg_factor, int64_t steps,
                           double retention) {
    if (base_steps <= 0.0 || cfg_factor <= 0.0)
        throw PreconditionError("speedup: base_steps and cfg_factor must be positive");
    if (steps <= 0 || retention <= 0.0)
        throw PreconditionError("speedup: steps and retention must be positive");
    return (base_steps * cfg_factor) / (static_cast<double>(steps) * retention);
}

namespace {

// Euclidean distance between two samples flattened to vectors. Shapes must
// agree across the whole set; the caller guarantees it.
double sample_dist(const Tensor& a, const Tensor& b) {
    if (a->size() != b->size())
        throw ShapeError("energy_distance: samples have mismatched sizes");
    double acc = 0.0;
    for (int64_t i = 0; i < a->size(); ++i) {
        const double d = a->data[i] - b->data[i];
        acc += d * d;
    }
    return std::sqrt(acc);
}

// Mean pairwise distance over all ordered pairs of two sets, self-pairs
// included when the sets coincide elementwise. Outer loop always walks
// `lhs`; callers pick the canonical side ordering.
double mean_cross_dist(const std::vector<Tensor>& lhs, const std::vector<Tensor>& rhs) {
    double acc = 0.0;
    for (const auto& a : lhs)
        for (const auto& b : rhs) acc += sample_dist(a, b);
    return acc / (static_cast<double>(lhs.size()) * static_cast<double>(rhs.size()));
}

// Lexicographic comparison of the flattened values, used only to fix the
// accumulation order of the symmetric cross term.
bool lex_precedes(const std::vector<Tensor>& a, const std::vector<Tensor>& b) {
    const size_t n = std::min(a.size(), b.size());
    for (size_t s = 0; s < n; ++s) {
        const int64_t m = std::min(a[s]->size(), b[s]->size());
        for (int64_t i = 0; i < m; ++i) {
            if (a[s]->data[i] < b[s]->data[i]) return true;
            if (a[s]->data[i] > b[s]->data[i]) return false;
        }
        if (a[s]->size() != b[s]->size()) return a[s]->size() < b[s]->size();
    }
    return a.size() < b.size();
}

}  // namespace

double energy_distance(const std::vector<Tensor>& a, const std::vector<Tensor>& b) {
    if (a.empty() || b.empty())
        throw PreconditionError("energy_distance: both sample sets must be non-empty");
    const bool swap = lex_precedes(b, a);
    const auto& first = swap ? b : a;
    const auto& second = swap ? a : b;
    // Both within-set terms also follow the canonical order; subtracting in
    // argument order would break bit symmetry in the final rounding.
    const double cross = mean_cross_dist(first, second);
    const double within_first = mean_cross_dist(first, first);
    const double within_second = mean_cross_dist(second, second);
    return 2.0 * cross - within_first - within_second;
}

namespace {

double frame_diff_norm(const Tensor& v, int64_t j, int64_t k) {
    double acc = 0.0;
    for (int64_t c = 0; c < v->cols; ++c) {
        const double d = v->data[j * v->cols + c] - v->data[k * v->cols + c];
        acc += d * d;
    }
    return std::sqrt(acc);
}

void check_frames(const std::vector<Tensor>& videos, int64_t min_frames, const char* what) {
    if (videos.empty()) throw PreconditionError(std::string(what) + ": empty video set");
    for (const auto& v : videos)
        if (v->rows < min_frames)
            throw PreconditionError(std::string(what) + ": video has too few frames");
}

}  // namespace

double dynamic_degree(const std::vector<Tensor>& videos) {
    check_frames(videos, 2, "dynamic_degree");
    double total = 0.0;
    for (const auto& v : videos) {
        double acc = 0.0;
        for (int64_t j = 0; j + 1 < v->rows; ++j) acc += frame_diff_norm(v, j + 1, j);
        total += acc / static_cast<double>(v->rows - 1);
    }
    return total / static_cast<double>(videos.size());
}

double motion_smoothness(const std::vector<Tensor>& videos) {
    check_frames(videos, 3, "motion_smoothness");
    double total = 0.0;
    for (const auto& v : videos) {
        double acc = 0.0;
        for (int64_t j = 0; j + 2 < v->rows; ++j) {
            // ||f_{j+2} - 2 f_{j+1} + f_j||_2
            double sq = 0.0;
            for (int64_t c = 0; c < v->cols; ++c) {
                const double d = v->data[(j + 2) * v->cols + c] -
                                 2.0 * v->data[(j + 1) * v->cols + c] +
                                 v->data[j * v->cols + c];
                sq += d * d;
            }
            acc += std::sqrt(sq);
        }
        total += acc / static_cast<double>(v->rows - 2);
    }
    return std::exp(-total / static_cast<double>(videos.size()));
}

double subject_consistency(const std::vector<Tensor>& videos) {
    check_frames(videos, 2, "subject_consistency");
    double total = 0.0;
    int64_t count = 0;
    for (const auto& v : videos) {
        double n0 = 0.0;
        for (int64_t c = 0; c < v->cols; ++c) n0 += v->data[c] * v->data[c];
        n0 = std::sqrt(n0);
        for (int64_t j = 1; j < v->rows; ++j) {
            double dot = 0.0, nj = 0.0;
            for (int64_t c = 0; c < v->cols; ++c) {
                dot += v->data[c] * v->data[j * v->cols + c];
                nj += v->data[j * v->cols + c] * v->data[j * v->cols + c];
            }
            nj = std::sqrt(nj);
            double cosv;
            if (n0 == 0.0 && nj == 0.0) cosv = 1.0;      // both frames blank
            else if (n0 == 0.0 || nj == 0.0) cosv = 0.0; // one blank, one not
            else cosv = dot / (n0 * nj);
            total += cosv;
            ++count;
        }
    }
    return total / static_cast<double>(count);
}

MetricReport evaluate_samples(const std::vector<Tensor>& generated,
                              const std::vector<Tensor>& reference) {
    MetricReport r;
    r.energy_distance = energy_distance(generated, reference);
    r.dynamic_degree = dynamic_degree(generated);
    r.motion_smoothness = motion_smoothness(generated);
    r.subject_consistency = subject_consistency(generated);
    r.n_samples = static_cast<int64_t>(generated.size());
    return r;
}

std::string metric_report_json(const MetricReport& r) {
    char buf[640];
    std::snprintf(buf, sizeof buf,
                  "{\n"
                  "  \"energy_distance\": %.17g,\n"
                  "  \"dynamic_degree\": %.17g,\n"
                  "  \"motion_smoothness\": %.17g,\n"
                  "  \"subject_consistency\": %.17g,\n"
                  "  \"n_samples\": %lld,\n"
                  "  \"config_fingerprint\": \"%s\"\n"
                  "}\n",
                  r.energy_distance, r.dynamic_degree, r.motion_smoothness,
                  r.subject_consistency, static_cast<long long>(r.n_samples),
                  r.config_fingerprint.c_str());
    return std::string(buf);
}

}  // namespace flgn
