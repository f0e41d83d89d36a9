#include <cmath>
#include <cstdlib>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "doctest.h"
#include "flgn/pipeline.hpp"
#include "flgn/sweep.hpp"

using namespace flgn;

namespace {

std::string tmp_path(const std::string& name) {
    std::filesystem::create_directories(UNIT_TEST_TMP);
    return std::string(UNIT_TEST_TMP) + "/" + name;
}

std::string slurp(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    REQUIRE(f.good());
    return std::string((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
}

bool same_bits(const Tensor& a, const Tensor& b) {
    if (a->rows != b->rows || a->cols != b->cols) return false;
    return std::memcmp(a->data.data(), b->data.data(), a->data.size() * sizeof(double)) == 0;
}

// Small enough that a whole sweep cell finishes in well under a second.
RunConfig micro_config() {
    RunConfig cfg;
    cfg.out_dir = tmp_path("micro");
    cfg.seed = 555;
    cfg.data.grid_h = 4;
    cfg.data.grid_w = 4;
    cfg.data.frames_T = 4;
    cfg.data.n_classes = 3;
    cfg.n_train = 12;
    cfg.n_blocks = 4;
    cfg.hidden_dim = 8;
    cfg.time_embed_dim = 8;
    cfg.train_base.iterations = 30;
    cfg.train_base.batch_size = 4;
    cfg.stage1.n_samples = 4;
    cfg.stage2.iterations = 8;
    cfg.stage2.batch_size = 2;
    cfg.stage3.iterations = 2;
    cfg.stage3.update_ratio = 1;
    cfg.stage3.batch_size = 2;
    cfg.stage3.steps = 2;
    cfg.sample.steps = 2;
    cfg.sample.n_samples = 4;
    cfg.eval.n_ref = 4;
    cfg.sweep.steps_list = {2};
    cfg.sweep.retention_list = {0.5, 1.0};
    validate(cfg);
    return cfg;
}

ModelParams micro_model(const RunConfig& cfg, uint64_t seed) {
    ModelParams p = init_params(cfg.dit_config(), seed);
    RngStream jog(seed, "jog");
    for (auto& t : param_list(p))
        for (auto& v : t->data) v += 0.05 * jog.normal();
    return p;
}

}  // namespace

TEST_SUITE("pipeline") {

TEST_CASE("per-stage seeds replay and separate") {
    CHECK(derive_seed(7, "stage1") == derive_seed(7, "stage1"));
    CHECK(derive_seed(7, "stage1") != derive_seed(7, "stage2"));
    CHECK(derive_seed(7, "stage1") != derive_seed(8, "stage1"));
}

TEST_CASE("training and held-out data come from disjoint streams") {
    RunConfig cfg = micro_config();
    auto train = train_dataset(cfg);
    auto heldout = heldout_dataset(cfg);
    REQUIRE(static_cast<int64_t>(train.size()) == cfg.n_train);
    REQUIRE(static_cast<int64_t>(heldout.size()) == cfg.eval.n_ref);
    CHECK(!same_bits(train[0].x0, heldout[0].x0));
    // replays bit-identically
    auto train2 = train_dataset(cfg);
    CHECK(same_bits(train[0].x0, train2[0].x0));
    CHECK(train[0].label == train2[0].label);
}

TEST_CASE("base training reduces the flow-matching loss") {
    RunConfig cfg = micro_config();
    cfg.train_base.iterations = 150;
    auto dataset = train_dataset(cfg);
    BaseResult base = train_base(cfg, dataset);
    REQUIRE(static_cast<int64_t>(base.trace.size()) == cfg.train_base.iterations);
    double first = 0, last = 0;
    for (int i = 0; i < 10; ++i) {
        first += base.trace[static_cast<size_t>(i)].fm_loss;
        last += base.trace[base.trace.size() - 10 + static_cast<size_t>(i)].fm_loss;
    }
    CHECK(last / 10.0 < first / 10.0);
    for (const auto& row : base.trace) CHECK(std::isfinite(row.fm_loss));

    const std::string path = tmp_path("base_trace.csv");
    write_base_trace(path, {{0, 0.5}, {1, 0.25}});
    std::ifstream in(path);
    std::string line;
    std::getline(in, line);
    CHECK(line == "iteration,fm_loss");
    std::getline(in, line);
    CHECK(line == "0,0.5");
}

TEST_CASE("model checkpoints round trip with their metadata") {
    RunConfig cfg = micro_config();
    ModelParams p = micro_model(cfg, 11);
    CkptMeta meta;
    meta.stage = "base";
    meta.config_hash = config_fingerprint(cfg);
    meta.iteration = 30;
    meta.seed = cfg.seed;
    meta.keep_set = {0};
    meta.model = p.cfg;

    const std::string path = tmp_path("model.ckpt");
    save_model_checkpoint(path, p, meta);
    LoadedModel back = load_model_checkpoint(path);

    CHECK(back.meta.stage == "base");
    CHECK(back.meta.config_hash == meta.config_hash);
    CHECK(back.meta.iteration == 30);
    CHECK(back.meta.seed == cfg.seed);
    CHECK(back.meta.keep_set == meta.keep_set);
    CHECK(back.meta.model == p.cfg);
    CHECK(back.params.cfg == p.cfg);
    CHECK(params_checksum(back.params) == params_checksum(p));
    auto orig = named_params(p);
    auto loaded = named_params(back.params);
    REQUIRE(orig.size() == loaded.size());
    for (size_t i = 0; i < orig.size(); ++i) {
        CHECK(orig[i].first == loaded[i].first);
        CHECK(same_bits(orig[i].second, loaded[i].second));
    }
}

TEST_CASE("stage and shape guards reject mismatched checkpoints") {
    RunConfig cfg = micro_config();
    ModelParams p = micro_model(cfg, 13);
    CkptMeta meta;
    meta.stage = "base";
    meta.model = p.cfg;
    const std::string path = tmp_path("guard.ckpt");
    save_model_checkpoint(path, p, meta);
    LoadedModel m = load_model_checkpoint(path);

    CHECK_NOTHROW(require_stage(m, "base", "score-blocks"));
    try {
        require_stage(m, "stage2", "distill");
        FAIL("expected a stage mismatch");
    } catch (const PreconditionError& e) {
        const std::string what = e.what();
        CHECK(what.find("stage2") != std::string::npos);
        CHECK(what.find("distill") != std::string::npos);
    }

    CHECK_NOTHROW(require_model_shape(m, p.cfg));
    DiTConfig other = p.cfg;
    other.hidden_dim = 16;
    CHECK_THROWS_AS(require_model_shape(m, other), PreconditionError);
}

TEST_CASE("corrupted model checkpoints are diagnosed") {
    RunConfig cfg = micro_config();
    ModelParams p = micro_model(cfg, 17);
    CkptMeta meta;
    meta.stage = "base";
    const std::string good = tmp_path("good.ckpt");
    save_model_checkpoint(good, p, meta);

    SUBCASE("malformed metadata") {
        Checkpoint raw = load_checkpoint(good);
        raw.metadata_json = "{not json";
        const std::string path = tmp_path("badmeta.ckpt");
        save_checkpoint(path, raw);
        CHECK_THROWS_AS(load_model_checkpoint(path), CheckpointError);
    }
    SUBCASE("metadata missing fields") {
        Checkpoint raw = load_checkpoint(good);
        raw.metadata_json = "{}";
        const std::string path = tmp_path("nometa.ckpt");
        save_checkpoint(path, raw);
        CHECK_THROWS_AS(load_model_checkpoint(path), CheckpointError);
    }
    SUBCASE("missing tensor") {
        Checkpoint raw = load_checkpoint(good);
        raw.tensors.erase(raw.tensors.begin());
        const std::string path = tmp_path("notensor.ckpt");
        save_checkpoint(path, raw);
        CHECK_THROWS_AS(load_model_checkpoint(path), CheckpointError);
    }
    SUBCASE("tensor shape drift") {
        Checkpoint raw = load_checkpoint(good);
        raw.tensors[0].tensor = make_tensor(1, 1, {0.0});
        const std::string path = tmp_path("badshape.ckpt");
        save_checkpoint(path, raw);
        CHECK_THROWS_AS(load_model_checkpoint(path), CheckpointError);
    }
}

TEST_CASE("video containers round trip and reject foreign files") {
    RngStream rng(19, "videos");
    std::vector<Tensor> videos;
    for (int i = 0; i < 3; ++i) {
        Tensor v = make_tensor(4, 16);
        for (auto& x : v->data) x = rng.next_unit();
        videos.push_back(v);
    }
    const std::string path = tmp_path("videos.ckpt");
    save_videos(path, videos, "{\"kind\":\"samples\"}");
    auto back = load_videos(path);
    REQUIRE(back.size() == videos.size());
    for (size_t i = 0; i < videos.size(); ++i) CHECK(same_bits(back[i], videos[i]));

    const std::string labels_path = tmp_path("labels.csv");
    write_labels_csv(labels_path, {2, 0, 1});
    CHECK(slurp(labels_path) == "index,label\n0,2\n1,0\n2,1\n");

    SUBCASE("an empty container is rejected on load") {
        const std::string empty = tmp_path("novideos.ckpt");
        save_videos(empty, {}, "");
        CHECK_THROWS_AS(load_videos(empty), CheckpointError);
    }
    SUBCASE("a model checkpoint is not a video container") {
        RunConfig cfg = micro_config();
        ModelParams p = micro_model(cfg, 23);
        CkptMeta meta;
        meta.stage = "base";
        const std::string model_path = tmp_path("notvideos.ckpt");
        save_model_checkpoint(model_path, p, meta);
        CHECK_THROWS_AS(load_videos(model_path), CheckpointError);
    }
}

TEST_CASE("sampling cycles labels and replays per seed") {
    RunConfig cfg = micro_config();
    ModelParams p = micro_model(cfg, 29);
    const SkipMask none = SkipMask::none(cfg.n_blocks);

    SampleSet a = sample_videos(p, none, SamplerKind::kFewStep, 2, 2.0, 5, 3, 77);
    CHECK(a.labels == std::vector<int64_t>{0, 1, 2, 0, 1});
    REQUIRE(a.videos.size() == 5);
    for (const auto& v : a.videos) {
        CHECK(v->rows == cfg.data.frames_T);
        CHECK(v->cols == 16);
        for (double x : v->data) CHECK(std::isfinite(x));
    }

    SampleSet b = sample_videos(p, none, SamplerKind::kFewStep, 2, 2.0, 5, 3, 77);
    for (size_t i = 0; i < a.videos.size(); ++i) CHECK(same_bits(a.videos[i], b.videos[i]));
    SampleSet c = sample_videos(p, none, SamplerKind::kFewStep, 2, 2.0, 5, 3, 78);
    CHECK(!same_bits(a.videos[0], c.videos[0]));

    SampleSet e = sample_videos(p, none, SamplerKind::kEuler, 3, 2.0, 2, 3, 77);
    for (const auto& v : e.videos)
        for (double x : v->data) CHECK(std::isfinite(x));

    CHECK_THROWS_AS(sample_videos(p, none, SamplerKind::kFewStep, 2, 2.0, 0, 3, 1),
                    PreconditionError);
}

TEST_CASE("held-out evaluation stamps the config fingerprint") {
    RunConfig cfg = micro_config();
    RngStream rng(31, "gen");
    std::vector<Tensor> generated;
    for (int i = 0; i < 3; ++i) {
        Tensor v = make_tensor(cfg.data.frames_T, 16);
        for (auto& x : v->data) x = rng.next_unit();
        generated.push_back(v);
    }
    MetricReport r = evaluate_against_heldout(cfg, generated);
    CHECK(r.config_fingerprint == config_fingerprint(cfg));
    CHECK(r.n_samples == 3);
    CHECK(std::isfinite(r.energy_distance));
}

TEST_CASE("text files and directories") {
    const std::string dir = tmp_path("nested/a/b");
    ensure_dir(dir);
    CHECK(std::filesystem::is_directory(dir));
    write_text_file(dir + "/note.txt", "hello\n");
    CHECK(slurp(dir + "/note.txt") == "hello\n");
}

TEST_CASE("every trainable loss passes finite-difference validation") {
    GradSuiteReport report = run_gradcheck_suite(2024);
    REQUIRE(report.entries.size() == 6);
    for (const auto& e : report.entries) {
        INFO(e.name << " max rel error " << e.max_rel_error);
        CHECK(e.pass);
        CHECK(e.max_rel_error < 1e-5);
    }
    CHECK(report.all_pass);
}

}  // TEST_SUITE

TEST_SUITE("sweep") {

TEST_CASE("a single-cell grid produces one complete row") {
    RunConfig cfg = micro_config();
    cfg.sweep.steps_list = {3};
    cfg.sweep.retention_list = {0.7};
    auto cells = run_sweep(cfg);
    REQUIRE(cells.size() == 1);
    CHECK(!cells[0].failed);
    CHECK(cells[0].steps == 3);
    CHECK(cells[0].retention == 0.7);
    CHECK(cells[0].speedup == theoretical_speedup(50.0, 2.0, 3, 0.7));
    CHECK(std::isfinite(cells[0].metrics.energy_distance));
    CHECK(std::isfinite(cells[0].metrics.dynamic_degree));
    CHECK(std::isfinite(cells[0].metrics.motion_smoothness));
    CHECK(std::isfinite(cells[0].metrics.subject_consistency));
}

TEST_CASE("rows come back sorted by steps and retention") {
    RunConfig cfg = micro_config();
    cfg.sweep.steps_list = {2, 1};       // deliberately unsorted
    cfg.sweep.retention_list = {1.0, 0.5};
    auto cells = run_sweep(cfg);
    REQUIRE(cells.size() == 4);
    CHECK(cells[0].steps == 1);
    CHECK(cells[0].retention == 0.5);
    CHECK(cells[1].steps == 1);
    CHECK(cells[1].retention == 1.0);
    CHECK(cells[2].steps == 2);
    CHECK(cells[2].retention == 0.5);
    CHECK(cells[3].steps == 2);
    CHECK(cells[3].retention == 1.0);
}

TEST_CASE("a diverging cell fails alone and keeps its row") {
    RunConfig cfg = micro_config();
    cfg.sweep.steps_list = {2};
    cfg.sweep.retention_list = {0.5, 1.0};
    // One step at this rate pushes every weight to ~1e200, so the next
    // forward overflows a matmul product past the double range. The
    // retention-1.0 cell prunes nothing: its distillation gap is exactly
    // zero, every gradient is exactly zero, and AdamW never moves a weight,
    // so the same rate leaves it healthy.
    cfg.stage2.lr = 1e200;
    auto cells = run_sweep(cfg);
    REQUIRE(cells.size() == 2);
    const auto& burst = cells[0];
    CHECK(burst.retention == 0.5);
    CHECK(burst.failed);
    CHECK(!burst.error.empty());
    CHECK(std::isnan(burst.metrics.energy_distance));
    CHECK(std::isnan(burst.metrics.dynamic_degree));
    CHECK(burst.speedup > 0.0);
    const auto& intact = cells[1];
    CHECK(intact.retention == 1.0);
    CHECK(!intact.failed);
    CHECK(intact.error.empty());
    CHECK(std::isfinite(intact.metrics.energy_distance));
    CHECK(std::isfinite(intact.metrics.dynamic_degree));
}

TEST_CASE("reruns are byte-identical") {
    RunConfig cfg = micro_config();
    auto first = run_sweep(cfg);
    auto second = run_sweep(cfg);
    const std::string pa = tmp_path("sweep_a.csv");
    const std::string pb = tmp_path("sweep_b.csv");
    write_sweep_csv(pa, first);
    write_sweep_csv(pb, second);
    CHECK(slurp(pa) == slurp(pb));
}

TEST_CASE("parallel workers produce the same rows as one") {
    RunConfig cfg = micro_config();
    auto serial = run_sweep(cfg);
    cfg.sweep.jobs = 2;
    auto parallel = run_sweep(cfg);
    REQUIRE(serial.size() == parallel.size());
    for (size_t i = 0; i < serial.size(); ++i) {
        CHECK(serial[i].steps == parallel[i].steps);
        CHECK(serial[i].retention == parallel[i].retention);
        CHECK(serial[i].failed == parallel[i].failed);
        CHECK(serial[i].metrics.energy_distance == parallel[i].metrics.energy_distance);
        CHECK(serial[i].metrics.motion_smoothness == parallel[i].metrics.motion_smoothness);
    }
}

TEST_CASE("the csv carries the documented columns") {
    SweepCellResult cell;
    cell.steps = 4;
    cell.retention = 0.7;
    cell.metrics.energy_distance = 1.5;
    cell.metrics.dynamic_degree = 0.25;
    cell.metrics.motion_smoothness = 0.75;
    cell.metrics.subject_consistency = 0.5;
    cell.speedup = 35.0;
    const std::string path = tmp_path("sweep_fmt.csv");
    write_sweep_csv(path, {cell});
    const std::string text = slurp(path);
    CHECK(text ==
          "steps,retention,energy_distance,dynamic_degree,motion_smoothness,"
          "subject_consistency,speedup\n"
          "4,0.69999999999999996,1.5,0.25,0.75,0.5,35\n");
}

TEST_CASE("the surface file is a parseable matrix with gaps for failures") {
    std::vector<SweepCellResult> cells;
    for (int64_t k : {1, 2}) {
        for (double r : {0.5, 1.0}) {
            SweepCellResult c;
            c.steps = k;
            c.retention = r;
            c.metrics.energy_distance = 1.0 + static_cast<double>(k) * r;
            c.metrics.dynamic_degree = 0.5 * r;
            c.metrics.motion_smoothness = 0.9;
            c.speedup = 1.0;
            cells.push_back(c);
        }
    }
    cells[3].failed = true;  // k=2, r=1.0

    const std::string path = tmp_path("surface.dat");
    write_sweep_surface(path, cells);
    std::ifstream in(path);
    REQUIRE(in.good());
    std::string line;
    int comment_lines = 0;
    std::vector<std::vector<double>> matrix;
    while (std::getline(in, line)) {
        if (!line.empty() && line[0] == '#') {
            ++comment_lines;
            continue;
        }
        // stream extraction rejects "nan", so go through strtod
        std::istringstream row(line);
        std::vector<double> vals;
        std::string tok;
        while (row >> tok) vals.push_back(std::strtod(tok.c_str(), nullptr));
        matrix.push_back(vals);
    }
    CHECK(comment_lines == 3);
    REQUIRE(matrix.size() == 2);     // one row per step count
    REQUIRE(matrix[0].size() == 2);  // one column per retention
    REQUIRE(matrix[1].size() == 2);
    for (double v : matrix[0]) {
        CHECK(v >= 0.0);
        CHECK(v <= 1.0);
    }
    CHECK(std::isnan(matrix[1][1]));  // the failed cell
    CHECK(std::isfinite(matrix[1][0]));
}

}  // TEST_SUITE
