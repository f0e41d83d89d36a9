#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "flgn/checkpoint.hpp"
#include "flgn/config.hpp"
#include "flgn/metrics.hpp"
#include "flgn/stage1.hpp"
#include "flgn/stage2.hpp"
#include "flgn/stage3.hpp"

namespace flgn {

// Per-stage seeds are derived from the run seed by tag so changing one
// stage's stream never perturbs another's.
uint64_t derive_seed(uint64_t run_seed, std::string_view tag);

std::vector<VideoSample> train_dataset(const RunConfig& cfg);
// Disjoint stream from the training set; used as the evaluation reference.
std::vector<VideoSample> heldout_dataset(const RunConfig& cfg);

struct BaseTraceRow {
    int64_t iteration;
    double fm_loss;
};

struct BaseResult {
    ModelParams params;
    std::vector<BaseTraceRow> trace;
};

// Stage 0: fit the unpruned velocity field with flow matching and
// classifier-free label dropout.
BaseResult train_base(const RunConfig& cfg, const std::vector<VideoSample>& dataset);
void write_base_trace(const std::string& path, const std::vector<BaseTraceRow>& trace);

// Checkpoint metadata. The model shape rides along so a loaded file can be
// validated against the run config before any tensor is touched.
struct CkptMeta {
    std::string stage;  // "base" | "stage2" | "generator" | "fake"
    std::string config_hash;
    int64_t iteration = 0;
    uint64_t seed = 0;
    std::vector<int64_t> keep_set;  // empty when not applicable
    DiTConfig model;
};

void save_model_checkpoint(const std::string& path, const ModelParams& p, const CkptMeta& meta);

struct LoadedModel {
    ModelParams params;
    CkptMeta meta;
};

LoadedModel load_model_checkpoint(const std::string& path);
// Stage-order guard: throws PreconditionError naming the expected artifact.
void require_stage(const LoadedModel& m, const std::string& expected_stage,
                   const std::string& needed_by);
// DiTConfig mismatch between a checkpoint and the run config is an error.
void require_model_shape(const LoadedModel& m, const DiTConfig& expected);

// Video containers: tensors "x0/<i>", labels in a sidecar CSV "index,label".
void save_videos(const std::string& path, const std::vector<Tensor>& videos,
                 const std::string& metadata_json);
std::vector<Tensor> load_videos(const std::string& path);
void write_labels_csv(const std::string& path, const std::vector<int64_t>& labels);

ImportanceReport run_stage1(const RunConfig& cfg, const ModelParams& base,
                            const std::vector<VideoSample>& dataset);

Stage2Result run_stage2(const RunConfig& cfg, const std::vector<VideoSample>& dataset,
                        const ModelParams& init, const std::vector<int64_t>& keep_set);

// base may be null when the teacher comes from the Stage-II checkpoint; it
// is required for the unpruned-teacher ablation.
struct DistillRun {
    DistillState state;
    Stage3Result result;
};

DistillRun run_distill(const RunConfig& cfg, const ModelParams& stage2_params,
                       const ModelParams* base, const std::vector<int64_t>& keep_set);

struct SampleSet {
    std::vector<Tensor> videos;
    std::vector<int64_t> labels;  // cycles through the classes
};

SampleSet sample_videos(const ModelParams& p, const SkipMask& mask, SamplerKind sampler,
                        int64_t steps, double cfg_scale, int64_t n, int64_t n_classes,
                        uint64_t seed);

// Energy distance etc. of a generated set against held-out data regenerated
// from the config.
MetricReport evaluate_against_heldout(const RunConfig& cfg, const std::vector<Tensor>& generated);

void ensure_dir(const std::string& path);
void write_text_file(const std::string& path, const std::string& content);

struct GradSuiteReport {
    struct Entry {
        std::string name;
        double max_rel_error;
        bool pass;
    };
    std::vector<Entry> entries;
    bool all_pass = true;
};

// Finite-difference validation of every trainable loss on a two-block
// hidden-8 model: flow matching (unpruned and pruned), the Stage-II total at
// alpha in {0, 0.5, 1}, and the generator surrogate with its stop-gradient
// target frozen at the evaluation point. Passes at max rel error < 1e-5.
GradSuiteReport run_gradcheck_suite(uint64_t seed);

}  // namespace flgn
