#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <vector>

#include "doctest.h"
#include "flgn/stage1.hpp"

using namespace flgn;

namespace {

DiTConfig toy_cfg(int64_t n_blocks = 4) {
    DiTConfig cfg;
    cfg.n_blocks = n_blocks;
    cfg.token_dim = 16;
    cfg.hidden_dim = 8;
    cfg.frames_T = 4;
    cfg.n_classes = 3;
    cfg.time_embed_dim = 8;
    return cfg;
}

ModelParams toy_params(const DiTConfig& cfg, uint64_t seed) {
    ModelParams p = init_params(cfg, seed);
    RngStream jog(seed, "jog");
    for (auto& t : param_list(p))
        for (auto& v : t->data) v += 0.05 * jog.normal();
    return p;
}

std::vector<VideoSample> toy_data(int64_t n, uint64_t seed) {
    DataConfig dc;
    dc.grid_h = 4;
    dc.grid_w = 4;
    dc.frames_T = 4;
    dc.n_classes = 3;
    return generate_dataset(dc, n, seed);
}

}  // namespace

TEST_SUITE("stage1") {

TEST_CASE("ranking sorts descending with ties toward lower indices") {
    auto r = rank_and_select({5, 1, 3, 2}, 2);
    CHECK(r.ranked == std::vector<int64_t>{0, 2, 3, 1});
    CHECK(r.keep_set == std::vector<int64_t>{0, 2});
    CHECK(r.n_short == 2);

    auto tie = rank_and_select({1, 1, 2}, 2);
    CHECK(tie.ranked == std::vector<int64_t>{2, 0, 1});
    CHECK(tie.keep_set == std::vector<int64_t>{0, 2});

    auto all = rank_and_select({4, 2, 9}, 3);
    CHECK(all.keep_set == std::vector<int64_t>{0, 1, 2});
    CHECK(SkipMask::complement_of(all.keep_set, 3).popcount() == 0);

    CHECK_THROWS_AS(rank_and_select({1, 2}, 0), PreconditionError);
    CHECK_THROWS_AS(rank_and_select({1, 2}, 3), PreconditionError);
}

TEST_CASE("ranking is a permutation consistent under score shuffles") {
    RngStream rng(5, "perm");
    for (int rep = 0; rep < 20; ++rep) {
        std::vector<double> scores;
        for (int i = 0; i < 9; ++i) scores.push_back(rng.uniform(0.0, 10.0));
        auto r = rank_and_select(scores, 4);
        std::vector<int64_t> sorted_idx = r.ranked;
        std::sort(sorted_idx.begin(), sorted_idx.end());
        for (int64_t i = 0; i < 9; ++i) CHECK(sorted_idx[static_cast<size_t>(i)] == i);
        for (size_t j = 0; j + 1 < r.ranked.size(); ++j) {
            const double a = scores[static_cast<size_t>(r.ranked[j])];
            const double b = scores[static_cast<size_t>(r.ranked[j + 1])];
            CHECK(a >= b);
            if (a == b) CHECK(r.ranked[j] < r.ranked[j + 1]);
        }
        // keep set is the prefix, as a sorted set
        std::vector<int64_t> prefix(r.ranked.begin(), r.ranked.begin() + 4);
        std::sort(prefix.begin(), prefix.end());
        CHECK(r.keep_set == prefix);
    }
}

TEST_CASE("score draws replay and are shared across blocks") {
    auto ds = toy_data(6, 3);
    auto d1 = make_score_draws(ds, 8, 11);
    auto d2 = make_score_draws(ds, 8, 11);
    REQUIRE(d1.size() == 8);
    for (size_t i = 0; i < d1.size(); ++i) {
        CHECK(d1[i].t == d2[i].t);
        CHECK(d1[i].label == d2[i].label);
        CHECK(d1[i].xt->data == d2[i].xt->data);
        CHECK(d1[i].t >= kTMin);
        CHECK(d1[i].t <= kTMax);
    }

    // score_all_blocks uses one draw list: equals per-block scoring on it
    auto cfg = toy_cfg();
    auto p = toy_params(cfg, 7);
    auto all = score_all_blocks(p, ds, 8, 11);
    REQUIRE(static_cast<int64_t>(all.size()) == cfg.n_blocks);
    for (int64_t b = 0; b < cfg.n_blocks; ++b) {
        CHECK(all[static_cast<size_t>(b)] == score_block_with_draws(p, d1, b));
        CHECK(all[static_cast<size_t>(b)] == score_block(p, ds, b, 8, 11));
        CHECK(all[static_cast<size_t>(b)] >= 0.0);
    }
    CHECK_THROWS_AS(score_block(p, ds, -1, 8, 11), PreconditionError);
    CHECK_THROWS_AS(score_block(p, ds, 4, 8, 11), PreconditionError);
}

TEST_CASE("score matches a hand-rolled forward loop bitwise") {
    auto cfg = toy_cfg();
    auto p = toy_params(cfg, 13);
    auto ds = toy_data(5, 17);
    auto draws = make_score_draws(ds, 6, 19);
    const int64_t block = 2;

    SkipMask mask = SkipMask::none(cfg.n_blocks);
    mask.skip[static_cast<size_t>(block)] = 1;
    double acc = 0.0;
    Tape silent(false);
    for (const auto& d : draws) {
        auto v = forward_velocity(silent, p, d.xt, d.t, d.label, mask);
        // |xt - t*v - x0|^2, summed over elements
        double norm = 0;
        for (int64_t i = 0; i < v->size(); ++i) {
            const double pred = d.xt->data[i] - d.t * v->data[i];
            const double diff = pred - d.x0->data[i];
            norm += diff * diff;
        }
        acc += norm;
    }
    const double manual = acc / static_cast<double>(draws.size());
    CHECK(score_block_with_draws(p, draws, block) == manual);
}

TEST_CASE("a zeroed-residual block scores exactly the no-skip baseline") {
    auto cfg = toy_cfg();
    auto p = toy_params(cfg, 23);
    for (auto& v : p.blocks[1].wo->data) v = 0.0;
    for (auto& v : p.blocks[1].w2->data) v = 0.0;
    auto ds = toy_data(5, 29);
    auto draws = make_score_draws(ds, 6, 31);

    // baseline: nothing skipped, same draws
    Tape silent(false);
    double acc = 0.0;
    for (const auto& d : draws) {
        auto v = forward_velocity(silent, p, d.xt, d.t, d.label, SkipMask::none(cfg.n_blocks));
        double norm = 0;
        for (int64_t i = 0; i < v->size(); ++i) {
            const double pred = d.xt->data[i] - d.t * v->data[i];
            const double diff = pred - d.x0->data[i];
            norm += diff * diff;
        }
        acc += norm;
    }
    const double baseline = acc / static_cast<double>(draws.size());
    CHECK(score_block_with_draws(p, draws, 1) == doctest::Approx(baseline).epsilon(1e-12));
}

TEST_CASE("exhaustive oracle enumerates every subset") {
    auto cfg = toy_cfg();
    auto p = toy_params(cfg, 37);
    auto ds = toy_data(4, 41);
    auto greedy = rank_and_select(score_all_blocks(p, ds, 4, 43), 2);
    auto oracle = exhaustive_oracle(p, ds, 2, 4, 43, greedy.keep_set);
    CHECK(oracle.table.size() == 6);  // C(4,2)
    CHECK(oracle.greedy_rank >= 1);
    CHECK(oracle.greedy_rank <= 6);
    CHECK(oracle.best_keep_set.size() == 2);
    // best subset's objective is the table minimum
    double best = oracle.table.front().objective;
    for (const auto& row : oracle.table) best = std::min(best, row.objective);
    for (const auto& row : oracle.table) {
        if (row.keep == oracle.best_keep_set) CHECK(row.objective == best);
    }
}

TEST_CASE("keeping every block makes the oracle objective zero") {
    auto cfg = toy_cfg();
    auto p = toy_params(cfg, 47);
    auto ds = toy_data(4, 53);
    auto oracle = exhaustive_oracle(p, ds, 4, 4, 59, {0, 1, 2, 3});
    REQUIRE(oracle.table.size() == 1);
    CHECK(oracle.table[0].objective == 0.0);
    CHECK(oracle.greedy_rank == 1);
}

TEST_CASE("the oracle excludes a dead block when keeping all but one") {
    auto cfg = toy_cfg();
    auto p = toy_params(cfg, 61);
    // zero block 2's residual projections: skipping it is free
    for (auto& v : p.blocks[2].wo->data) v = 0.0;
    for (auto& v : p.blocks[2].w2->data) v = 0.0;
    auto ds = toy_data(5, 67);
    auto greedy = rank_and_select(score_all_blocks(p, ds, 6, 71), 3);
    auto oracle = exhaustive_oracle(p, ds, 3, 6, 71, greedy.keep_set);
    REQUIRE(oracle.table.size() == 4);  // C(4,3)
    // the subset keeping all live blocks {0,1,3} beats every other subset
    const std::vector<int64_t> live{0, 1, 3};
    double live_obj = -1;
    for (const auto& row : oracle.table)
        if (row.keep == live) live_obj = row.objective;
    REQUIRE(live_obj >= 0);
    for (const auto& row : oracle.table) {
        if (row.keep != live) CHECK(live_obj < row.objective);
    }
    CHECK(oracle.best_keep_set == live);
}

TEST_CASE("combinatorial guard") {
    auto cfg = toy_cfg(16);
    auto p = toy_params(cfg, 73);
    auto ds = toy_data(4, 79);
    // C(16,8) = 12870 > 10000
    CHECK_THROWS_AS(exhaustive_oracle(p, ds, 8, 2, 83, {0, 1, 2, 3, 4, 5, 6, 7}),
                    PreconditionError);
}

TEST_CASE("u-shape diagnostic arithmetic") {
    auto d = ushape_diagnostic({4, 3, 1, 1, 1, 1, 3, 4});
    CHECK(d.edge_mean == 3.5);
    CHECK(d.middle_mean == 1.0);
    CHECK(d.ratio == 3.5);

    auto flat = ushape_diagnostic({2, 2, 2, 2, 2, 2, 2, 2});
    CHECK(flat.ratio == 1.0);

    // strictly increasing scores still produce a ratio, no error
    auto inc = ushape_diagnostic({1, 2, 3, 4, 5, 6, 7, 8});
    CHECK(std::isfinite(inc.ratio));

    CHECK_THROWS_AS(ushape_diagnostic({1, 2, 3}), PreconditionError);
}

TEST_CASE("importance report lands on disk as CSV plus JSON") {
    auto report = rank_and_select({5, 1, 3, 2}, 2);
    report.n_samples = 8;
    report.seed = 99;
    std::filesystem::create_directories(UNIT_TEST_TMP);
    const std::string csv = std::string(UNIT_TEST_TMP) + "/importance.csv";
    const std::string json = std::string(UNIT_TEST_TMP) + "/importance.json";
    write_importance_csv(csv, json, report, 1.25);

    std::ifstream in(csv);
    REQUIRE(in.good());
    std::string header;
    std::getline(in, header);
    CHECK(header == "block_index,score,rank,kept");
    int rows = 0;
    for (std::string line; std::getline(in, line) && !line.empty();) ++rows;
    CHECK(rows == 4);

    std::ifstream jn(json);
    REQUIRE(jn.good());
    std::stringstream ss;
    ss << jn.rdbuf();
    CHECK(ss.str().find("\"n_short\": 2") != std::string::npos);
    CHECK(ss.str().find("ushape_ratio") != std::string::npos);
}

}  // TEST_SUITE
