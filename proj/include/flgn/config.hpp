#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "flgn/data.hpp"
#include "flgn/model.hpp"
#include "flgn/stage2.hpp"
#include "flgn/stage3.hpp"

namespace flgn {

struct TrainBaseConfig {
    int64_t iterations = 1500;
    int64_t batch_size = 16;
    double lr = 1e-3;
    double uncond_drop = 0.1;  // classifier-free label dropout
};

struct Stage1Settings {
    int64_t n_samples = 64;  // score draws per block
    double retention = 0.7;  // target parameter-retention ratio
    int64_t n_short = 0;     // 0 = derive from retention, otherwise explicit
};

enum class SamplerKind {
    kFewStep,  // truncation-free re-noising schedule, no guidance
    kEuler,    // classifier-free-guided Euler integration
};

enum class SampleMaskChoice {
    kPruned,  // keep-set complement recorded in the checkpoint metadata
    kNone,    // run every block
};

struct SampleConfig {
    SamplerKind sampler = SamplerKind::kFewStep;
    int64_t steps = 4;
    double cfg_scale = 2.0;  // Euler sampler only
    int64_t n_samples = 64;
    SampleMaskChoice mask = SampleMaskChoice::kPruned;
};

struct EvalConfig {
    int64_t n_ref = 64;  // held-out reference videos regenerated from [data]
};

struct SweepConfig {
    std::vector<int64_t> steps_list{1, 2, 4};
    std::vector<double> retention_list{0.5, 0.7, 1.0};
    int64_t jobs = 1;
};

// The whole run, one INI-style document. Unknown sections or keys are
// rejected; serialize() emits a canonical form that reparses to an equal
// config (doubles printed with %.17g round-trip exactly).
struct RunConfig {
    // [run]
    std::string out_dir = "runs/out";
    uint64_t seed = 1234;
    // [data]
    DataConfig data;
    int64_t n_train = 256;
    // [model]
    int64_t n_blocks = 12;
    int64_t hidden_dim = 64;
    int64_t time_embed_dim = 32;
    // [train_base] [stage1] [stage2] [guidance]+[stage3] [sample] [eval] [sweep]
    TrainBaseConfig train_base;
    Stage1Settings stage1;
    Stage2Config stage2;  // keep_set and seed are plumbed at runtime
    Stage3Config stage3;  // includes GuidanceParams; seed plumbed at runtime
    SampleConfig sample;
    EvalConfig eval;
    SweepConfig sweep;

    DiTConfig dit_config() const;
};

RunConfig parse_run_config_text(const std::string& text, const std::string& source);
RunConfig parse_run_config(const std::string& path);

std::string serialize(const RunConfig& cfg);
// FNV-1a of the canonical serialization, 16 lowercase hex digits.
std::string config_fingerprint(const RunConfig& cfg);

void validate(const RunConfig& cfg);

// Keep-set size whose actual retention ratio (counting the always-active
// projections and embeddings) is closest to the requested one; ties resolve
// to the smaller model.
int64_t n_short_for_retention(const DiTConfig& cfg, double retention);
// Stage-1 settings resolved against a concrete model: explicit n_short wins.
int64_t resolve_n_short(const Stage1Settings& s, const DiTConfig& cfg);

}  // namespace flgn
