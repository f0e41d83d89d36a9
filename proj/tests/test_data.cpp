#include <algorithm>
#include <cmath>
#include <cstring>
#include <vector>

#include "doctest.h"
#include "flgn/data.hpp"

using namespace flgn;

namespace {

constexpr double kTwoPi = 6.283185307179586477;

// Intensity-weighted circular mean of the row (axis=0) or column (axis=1)
// coordinate; circular so toroidal wrap does not bias the estimate.
double circular_centroid(const Tensor& x0, int64_t frame, int64_t h, int64_t w, int axis) {
    double s = 0, c = 0;
    const double* f = x0->data.data() + frame * h * w;
    for (int64_t r = 0; r < h; ++r) {
        for (int64_t col = 0; col < w; ++col) {
            const double weight = f[r * w + col];
            const double extent = axis == 0 ? static_cast<double>(h) : static_cast<double>(w);
            const double coord = axis == 0 ? static_cast<double>(r) : static_cast<double>(col);
            const double ang = kTwoPi * coord / extent;
            s += weight * std::sin(ang);
            c += weight * std::cos(ang);
        }
    }
    const double extent = axis == 0 ? static_cast<double>(h) : static_cast<double>(w);
    double ang = std::atan2(s, c);
    if (ang < 0) ang += kTwoPi;
    return ang * extent / kTwoPi;
}

// Signed displacement on a circle of the given extent, in (-extent/2, extent/2].
double wrap_delta(double b, double a, double extent) {
    double d = std::fmod(b - a, extent);
    if (d > extent / 2) d -= extent;
    if (d <= -extent / 2) d += extent;
    return d;
}

bool same_bits(const Tensor& a, const Tensor& b) {
    return a->rows == b->rows && a->cols == b->cols &&
           std::memcmp(a->data.data(), b->data.data(), a->data.size() * sizeof(double)) == 0;
}

}  // namespace

TEST_SUITE("data") {

TEST_CASE("config validation") {
    DataConfig bad;
    bad.grid_h = 3;
    CHECK_THROWS_AS(validate(bad), ConfigError);
    bad = DataConfig{};
    bad.frames_T = 1;
    CHECK_THROWS_AS(validate(bad), ConfigError);
    bad = DataConfig{};
    bad.blob_sigma = 0.0;
    CHECK_THROWS_AS(validate(bad), ConfigError);
    bad = DataConfig{};
    bad.n_classes = 1;
    CHECK_THROWS_AS(validate(bad), ConfigError);
    CHECK_NOTHROW(validate(DataConfig{}));
}

TEST_CASE("datasets replay bit-identically per seed") {
    DataConfig cfg;
    auto a = generate_dataset(cfg, 12, 99);
    auto b = generate_dataset(cfg, 12, 99);
    auto c = generate_dataset(cfg, 12, 100);
    REQUIRE(a.size() == 12);
    bool all_same = true, any_diff = false;
    for (size_t i = 0; i < a.size(); ++i) {
        all_same &= same_bits(a[i].x0, b[i].x0) && a[i].label == b[i].label;
        any_diff |= !same_bits(a[i].x0, c[i].x0);
    }
    CHECK(all_same);
    CHECK(any_diff);
    CHECK_THROWS_AS(generate_dataset(cfg, 0, 1), PreconditionError);
}

TEST_CASE("pixels live in [0,1] and every frame shows the blob") {
    DataConfig cfg;
    auto ds = generate_dataset(cfg, 40, 7);
    for (const auto& s : ds) {
        CHECK(s.x0->rows == cfg.frames_T);
        CHECK(s.x0->cols == cfg.grid_h * cfg.grid_w);
        for (int64_t f = 0; f < cfg.frames_T; ++f) {
            double mx = 0;
            for (int64_t j = 0; j < s.x0->cols; ++j) {
                const double v = s.x0->at(f, j);
                CHECK(v >= 0.0);
                CHECK(v <= 1.0);
                mx = std::max(mx, v);
            }
            CHECK(mx >= 0.5);
            CHECK(mx <= 1.0);
        }
    }
}

TEST_CASE("the static class freezes every frame") {
    DataConfig cfg;
    auto ds = generate_dataset(cfg, 200, 3);
    const int64_t dim = cfg.grid_h * cfg.grid_w;
    bool found = false;
    for (const auto& s : ds) {
        if (s.label != 4) continue;  // static is the fifth class
        found = true;
        for (int64_t f = 1; f < cfg.frames_T; ++f) {
            CHECK(std::memcmp(s.x0->data.data(), s.x0->data.data() + f * dim,
                              static_cast<size_t>(dim) * sizeof(double)) == 0);
        }
        break;
    }
    CHECK(found);
}

TEST_CASE("moving classes displace the centroid along their direction") {
    DataConfig cfg;
    cfg.speed = 1.0;
    auto ds = generate_dataset(cfg, 300, 17);
    // direction per class: (dr, dc) rows x columns
    const double dirs[5][2] = {{-1, 0}, {1, 0}, {0, -1}, {0, 1}, {0, 0}};
    int checked = 0;
    for (const auto& s : ds) {
        if (checked >= 40) break;
        ++checked;
        const auto& d = dirs[s.label % 5];
        for (int64_t f = 0; f + 1 < cfg.frames_T; ++f) {
            const double r0 = circular_centroid(s.x0, f, cfg.grid_h, cfg.grid_w, 0);
            const double r1 = circular_centroid(s.x0, f + 1, cfg.grid_h, cfg.grid_w, 0);
            const double c0 = circular_centroid(s.x0, f, cfg.grid_h, cfg.grid_w, 1);
            const double c1 = circular_centroid(s.x0, f + 1, cfg.grid_h, cfg.grid_w, 1);
            CHECK(std::fabs(wrap_delta(r1, r0, cfg.grid_h) - d[0] * cfg.speed) < 0.5);
            CHECK(std::fabs(wrap_delta(c1, c0, cfg.grid_w) - d[1] * cfg.speed) < 0.5);
        }
    }
    CHECK(checked == 40);
}

TEST_CASE("labels are roughly balanced") {
    DataConfig cfg;
    const int64_t n = 500;
    auto ds = generate_dataset(cfg, n, 11);
    std::vector<int64_t> counts(static_cast<size_t>(cfg.n_classes), 0);
    for (const auto& s : ds) {
        REQUIRE(s.label >= 0);
        REQUIRE(s.label < cfg.n_classes);
        ++counts[static_cast<size_t>(s.label)];
    }
    const double expect = static_cast<double>(n) / static_cast<double>(cfg.n_classes);
    const double slack = 3.0 * std::sqrt(static_cast<double>(n));
    for (int64_t c : counts) CHECK(std::fabs(static_cast<double>(c) - expect) <= slack);
}

TEST_CASE("interpolant endpoints and arithmetic") {
    auto x0 = make_tensor(2, 2, {1, 2, 3, 4});
    auto x1 = make_tensor(2, 2, {-4, -3, -2, -1});
    CHECK(same_bits(interpolant(x0, x1, 0.0), x0));
    CHECK(same_bits(interpolant(x0, x1, 1.0), x1));
    auto mid = interpolant(x0, x1, 0.5);
    CHECK(mid->data == std::vector<double>{-1.5, -0.5, 0.5, 1.5});

    // scalar probe: t=0.5, x0=0, x1=2 -> 1
    auto a = make_tensor(1, 1, 0.0), b = make_tensor(1, 1, 2.0);
    CHECK(interpolant(a, b, 0.5)->data[0] == 1.0);

    auto bad = make_tensor(1, 3, 0.0);
    CHECK_THROWS_AS(interpolant(x0, bad, 0.5), ShapeError);
}

TEST_CASE("x0 is recoverable from (xt, x1, t)") {
    DataConfig cfg;
    auto ds = generate_dataset(cfg, 8, 21);
    RngStream stream(5, "recover");
    auto batch = make_batch(ds, 8, TSampling::uniform(), stream);
    for (int64_t i = 0; i < batch.size(); ++i) {
        const double t = batch.t[i];
        REQUIRE(t >= kTMin);
        REQUIRE(t <= kTMax);
        for (int64_t j = 0; j < batch.x0[i]->size(); ++j) {
            const double rec =
                (batch.xt[i]->data[j] - t * batch.x1[i]->data[j]) / (1.0 - t);
            CHECK(std::fabs(rec - batch.x0[i]->data[j]) < 1e-12);
        }
    }
}

TEST_CASE("batches satisfy the interpolant invariant exactly") {
    DataConfig cfg;
    auto ds = generate_dataset(cfg, 16, 2);
    auto batch = make_batch(ds, 6, TSampling::uniform(), uint64_t{77});
    for (int64_t i = 0; i < batch.size(); ++i) {
        auto expect = interpolant(batch.x0[i], batch.x1[i], batch.t[i]);
        CHECK(same_bits(batch.xt[i], expect));
    }
}

TEST_CASE("fixed-t batches hit the exact endpoints") {
    DataConfig cfg;
    auto ds = generate_dataset(cfg, 8, 2);
    auto b0 = make_batch(ds, 4, TSampling::fixed_at(0.0), uint64_t{1});
    for (int64_t i = 0; i < b0.size(); ++i) CHECK(same_bits(b0.xt[i], b0.x0[i]));
    auto b1 = make_batch(ds, 4, TSampling::fixed_at(1.0), uint64_t{1});
    for (int64_t i = 0; i < b1.size(); ++i) CHECK(same_bits(b1.xt[i], b1.x1[i]));
    auto bh = make_batch(ds, 4, TSampling::fixed_at(0.5), uint64_t{1});
    for (double t : bh.t) CHECK(t == 0.5);
}

TEST_CASE("a batch never repeats a sample") {
    DataConfig cfg;
    auto ds = generate_dataset(cfg, 8, 31);
    // batch over the whole pool: the multiset of first pixels must match
    auto batch = make_batch(ds, 8, TSampling::uniform(), uint64_t{9});
    std::vector<double> got, want;
    for (const auto& t : batch.x0) got.push_back(t->data[0]);
    for (const auto& s : ds) want.push_back(s.x0->data[0]);
    std::sort(got.begin(), got.end());
    std::sort(want.begin(), want.end());
    CHECK(got == want);
}

TEST_CASE("conditioning dropout replaces labels with the null index") {
    DataConfig cfg;
    auto ds = generate_dataset(cfg, 32, 13);
    const int64_t null_label = cfg.n_classes;
    auto all = make_batch(ds, 32, TSampling::uniform(), uint64_t{3}, null_label, 1.0);
    for (int64_t l : all.labels) CHECK(l == null_label);
    auto none = make_batch(ds, 32, TSampling::uniform(), uint64_t{3}, null_label, 0.0);
    for (int64_t l : none.labels) CHECK(l != null_label);

    // around 10% at drop 0.1, over many draws
    int64_t dropped = 0, total = 0;
    RngStream stream(8, "drop");
    for (int rep = 0; rep < 40; ++rep) {
        auto b = make_batch(ds, 32, TSampling::uniform(), stream, null_label, 0.1);
        for (int64_t l : b.labels) {
            ++total;
            dropped += (l == null_label);
        }
    }
    const double rate = static_cast<double>(dropped) / static_cast<double>(total);
    CHECK(rate > 0.05);
    CHECK(rate < 0.16);
}

TEST_CASE("batch errors") {
    std::vector<VideoSample> empty;
    CHECK_THROWS_AS(make_batch(empty, 1, TSampling::uniform(), uint64_t{1}),
                    PreconditionError);
    DataConfig cfg;
    auto ds = generate_dataset(cfg, 4, 1);
    CHECK_THROWS_AS(make_batch(ds, 5, TSampling::uniform(), uint64_t{1}),
                    PreconditionError);
}

}  // TEST_SUITE
