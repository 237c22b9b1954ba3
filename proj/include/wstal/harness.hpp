#pragma once

#include "wstal/io.hpp"
#include "wstal/metrics.hpp"
#include "wstal/proposals.hpp"
#include "wstal/synth.hpp"
#include "wstal/trainer.hpp"

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace wstal {

// ---------------------------------------------------------------------------
// Run accounting

struct DatasetPlanInput {
    std::string dataset;
    std::int64_t seeds = 0;
    std::int64_t subjects = 0;
    std::int64_t models = 0;
};

struct PlanRow {
    DatasetPlanInput input;
    std::int64_t runs = 0;
};

struct BenchmarkPlan {
    std::vector<PlanRow> rows;
    std::int64_t total = 0;
};

/// runs = seeds x subjects x models per dataset, plus the grand total.
BenchmarkPlan plan_runs(const std::vector<DatasetPlanInput> &inputs);

/// The seven-dataset protocol: 3 seeds, 10 models, and the per-dataset LOSO subject counts.
std::vector<DatasetPlanInput> reference_plan_inputs();

std::string format_plan(const BenchmarkPlan &plan);

// ---------------------------------------------------------------------------
// Splits and models

struct LosoSplit {
    std::vector<std::string> train;
    std::string test;
};

/// One split per distinct subject, in sorted subject order.
std::vector<LosoSplit> loso_splits(std::vector<std::string> subjects);

/// Toy-model variants. The id is "<pooling>" or "<pooling>-rskp":
///   max       global max pooling (DCASE-style slice aggregation)
///   linsoft   linear-softmax pooling (CDur)
///   attention attention pooling (ATP)
///   *-rskp    the same, with score propagation over the frame CAS at inference (RSKP)
struct ModelSpec {
    std::string id;
    Pooling pooling = Pooling::Attention;
    Refinement refinement = Refinement::None;
};

ModelSpec parse_model_id(const std::string &id);
std::vector<std::string> registered_models();

// ---------------------------------------------------------------------------
// Configuration

/// Plain gradient descent on the toy model needs a far larger step than the encoder
/// schedule's 1e-4; the decay schedule and weight decay are kept.
inline TrainConfig desk_train_config() {
    TrainConfig cfg;
    cfg.learning_rate = 5.0;
    cfg.epochs = 150;
    return cfg;
}

struct HarnessConfig {
    std::vector<std::uint64_t> seeds{2022, 2024, 2026};
    std::vector<double> thresholds = kDefaultTiouThresholds;
    ProposalConfig proposals;
    SynthConfig synth;
    TrainConfig train = desk_train_config();
    double clip_sec = 10.0;     ///< training clip length W
    double thresh = 0.5;        ///< CAS threshold
    double smooth_sec = 1.0;    ///< CAS moving-average width, 0 = off
    double rskp_alpha = 0.5;
    int rskp_steps = 20;
    int rskp_radius = 2;
    NmsConfig nms;
    WardDenominator ward_denominator = WardDenominator::SequenceDuration;
    int workers = 1;
};

SynthConfig synth_config_from_json(const Json &j, SynthConfig base = {});
Json synth_config_to_json(const SynthConfig &cfg);

/// Defaults above, overridden by any keys present in the JSON document.
HarnessConfig harness_config_from_json(const Json &j);
Json harness_config_to_json(const HarnessConfig &cfg);

struct RunConfig {
    std::string dataset_id = "synthetic";
    std::uint64_t seed = 2022;
    std::string held_out_subject; ///< empty: train and test on every subject
    std::string model_id = "attention";
    InferMode mode = InferMode::Full;
    std::optional<double> window_sec;

    void validate() const;
    std::string name() const;
};

// ---------------------------------------------------------------------------
// Pipeline

Json eval_report_to_json(const EvalReport &r);

/// Fits the run's model on its training subjects (every subject when none is held out).
ToyModel train_run_model(const RunConfig &run, const SynthDataset &data, const HarnessConfig &cfg);

/// Inference settings for one stream of the given frame rate.
InferConfig infer_config_for(const RunConfig &run, const HarnessConfig &cfg, double fps);

struct RunOutput {
    EvalReport report;
    std::filesystem::path report_path;
};

/// train -> infer -> post-process -> evaluate on one split of the dataset in `data_dir`.
/// Writes <out_dir>/<run name>/{report.json,predictions.jsonl} and appends a row to
/// <out_dir>/aggregate.csv.
RunOutput run_pipeline(const RunConfig &run, const std::filesystem::path &data_dir,
                       const std::filesystem::path &out_dir, const HarnessConfig &cfg);

/// Same pipeline on an in-memory dataset, without touching the filesystem.
EvalReport run_pipeline(const RunConfig &run, const SynthDataset &data, const HarnessConfig &cfg,
                        SegmentTable *predictions = nullptr);

/// Runs every config, up to cfg.workers at a time. Aggregate appends are serialized.
std::vector<RunOutput> run_all(const std::vector<RunConfig> &runs,
                               const std::filesystem::path &data_dir,
                               const std::filesystem::path &out_dir, const HarnessConfig &cfg);

inline const char *kAggregateHeader = "dataset,model,seed,subject,mode,P,R,F1,UR,OR,DR,IR,FR,MR,mAP";

/// One aggregate CSV row (no newline); P, R, F1 and mAP as percentages.
std::string aggregate_row(const RunConfig &run, const EvalReport &r);

/// Averages aggregate rows per (dataset, model) and mode. When a group has both modes,
/// each cell reads "window|full".
std::string report_table(const std::string &aggregate_csv);

} // namespace wstal
