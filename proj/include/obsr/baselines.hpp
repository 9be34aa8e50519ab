#pragma once

// The task baselines: region MLPs for price regression (STRPP/HPP) and crime
// intensity (CAP), an LSTM travel-time regressor (TTE) and an LSTM +
// attention next-step classifier (HMP).

#include <array>
#include <cstdint>
#include <memory>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "obsr/embed.hpp"
#include "obsr/metrics.hpp"
#include "obsr/nn.hpp"
#include "obsr/regionize.hpp"
#include "obsr/splitter.hpp"

namespace obsr {

enum class Task { strpp, hpp, cap, tte, hmp };
std::string to_string(Task t);
Task parse_task(const std::string& s);
bool is_trajectory_task(Task t) noexcept;

/// Training defaults per task: SmoothL1 for price regression, L1 for CAP and
/// TTE, hybrid loss for HMP; 50 epochs, 10 for HMP.
nn::TrainConfig default_train_config(Task t);

/// Per-feature affine map fitted on training rows only. Constant features
/// get scale 1.
struct Standardizer {
    std::vector<double> mean;
    std::vector<double> scale;

    static Standardizer fit(const std::vector<std::vector<double>>& rows, std::size_t dim);
    void apply(const std::vector<double>& in, double* out) const;
};

nlohmann::ordered_json to_json(const Standardizer& s);
Standardizer standardizer_from_json(const nlohmann::ordered_json& j);

/// Ids whose data fed a train-derived statistic (standardizers, target
/// scaling). Tests assert this never intersects the test side.
struct LeakageAudit {
    std::set<std::string> fit_ids;
};

struct RegionTaskInstance {
    EmbeddingMatrix embeddings;
    RegionDataset targets;
    SplitManifest manifest;
};

/// dim -> 50 -> 100 -> 50 -> 1 with ReLU, dropout after the 100-unit layer,
/// and a linear (regression) or sigmoid (intensity) head.
struct RegionModel {
    RegionModel(std::size_t in_dim, bool sigmoid_head, double dropout_p, std::uint64_t seed);

    std::size_t in_dim;
    bool sigmoid_head;
    double dropout_p;
    Standardizer features;
    double target_mean = 0.0;
    double target_scale = 1.0;
    nn::ParamStore store;
    nn::Dense l1, l2, l3, out;

    /// Predictions in target units for raw embedding rows.
    std::vector<double> predict(const std::vector<std::vector<double>>& rows) const;
    nlohmann::ordered_json describe() const;
};

struct RegionTrainResult {
    MetricReport report;
    std::vector<double> epoch_losses;
    std::vector<CellId> test_cells;
    std::vector<double> test_targets;
    std::vector<double> test_predictions;
    std::size_t missing_embeddings = 0;  ///< manifest cells served the zero vector
    LeakageAudit audit;
    std::shared_ptr<RegionModel> model;
};

/// STRPP/HPP: mean-value targets, SmoothL1 on train-standardized targets.
/// With evaluate = false only the train side is read and no report is made.
RegionTrainResult train_region_regressor(const RegionTaskInstance& inst, const nn::TrainConfig& cfg, bool evaluate = true);
/// CAP: intensity targets in [0, 1], sigmoid head, L1 loss.
RegionTrainResult train_intensity_model(const RegionTaskInstance& inst, const nn::TrainConfig& cfg, bool evaluate = true);

/// Re-evaluate a trained region model on the test side of an instance.
RegionTrainResult evaluate_region_model(std::shared_ptr<RegionModel> model, const RegionTaskInstance& inst);
/// Rebuild an untrained model from describe(); load a checkpoint into its store.
std::shared_ptr<RegionModel> region_model_from_description(const nlohmann::ordered_json& d);

enum class SequenceTask { tte, hmp };
std::string to_string(SequenceTask t);

struct SequenceTaskInstance {
    SequenceTask task = SequenceTask::tte;
    std::vector<SegmentedTrajectory> trajectories;  ///< sorted by id
    std::vector<double> durations;                  ///< aligned with trajectories; TTE targets in seconds
    EmbeddingMatrix embeddings;
    SplitManifest manifest;
};

struct SequenceModelOptions {
    std::size_t hidden = 128;
    std::size_t layers = 2;
    std::size_t heads = 4;
    bool causal = true;
    std::vector<int> ks = {1, 3, 5, 7, 10};
};

nlohmann::ordered_json to_json(const SequenceModelOptions& o);
SequenceModelOptions sequence_options_from_json(const nlohmann::ordered_json& j);

/// Embedding lookup shared by both sequence models: train-standardized
/// vectors, zero model input for cells without an embedding.
struct SequenceEncoder {
    const EmbeddingMatrix* embeddings = nullptr;
    Standardizer features;

    /// Returns false (and writes zeros) when the cell has no embedding.
    bool encode(CellId c, double* out) const;
    std::size_t dim() const { return features.mean.size(); }
};

/// Stacked LSTM over the X cells, final state through a ReLU-headed scalar.
/// The head predicts duration / duration_scale.
struct TteModel {
    TteModel(std::size_t in_dim, const SequenceModelOptions& opt, std::uint64_t seed);

    SequenceModelOptions options;
    double duration_scale = 1.0;
    Standardizer features;
    nn::ParamStore store;
    nn::LstmStack lstm;
    nn::Dense head;

    nlohmann::ordered_json describe() const;
};

/// Stacked LSTM, causal multi-head self-attention, 6-way direction classifier
/// at every step.
struct HmpModel {
    HmpModel(std::size_t in_dim, const SequenceModelOptions& opt, std::uint64_t seed);

    SequenceModelOptions options;
    Standardizer features;
    nn::ParamStore store;
    nn::LstmStack lstm;
    nn::MultiHeadAttention attention;
    nn::Dense head;

    nlohmann::ordered_json describe() const;
};

struct RolloutResult {
    std::string id;
    std::vector<CellId> predicted;
    std::vector<CellId> gold;
};

struct SequenceTrainResult {
    MetricReport report;                ///< TTE regression report, or HMP at the first k
    std::vector<MetricReport> horizon;  ///< HMP per k
    std::vector<double> epoch_losses;
    std::vector<double> test_targets;      ///< TTE seconds
    std::vector<double> test_predictions;  ///< TTE seconds
    std::vector<RolloutResult> rollouts;   ///< HMP
    std::size_t missing_embeddings = 0;    ///< lookups served the zero input
    LeakageAudit audit;
    std::shared_ptr<TteModel> tte;
    std::shared_ptr<HmpModel> hmp;
};

SequenceTrainResult train_tte(const SequenceTaskInstance& inst, const nn::TrainConfig& cfg,
                              const SequenceModelOptions& opt = {}, bool evaluate = true);
SequenceTrainResult train_hmp(const SequenceTaskInstance& inst, const nn::TrainConfig& cfg,
                              const SequenceModelOptions& opt = {}, bool evaluate = true);

SequenceTrainResult evaluate_tte(std::shared_ptr<TteModel> model, const SequenceTaskInstance& inst);
SequenceTrainResult evaluate_hmp(std::shared_ptr<HmpModel> model, const SequenceTaskInstance& inst);
std::shared_ptr<TteModel> tte_model_from_description(const nlohmann::ordered_json& d);
std::shared_ptr<HmpModel> hmp_model_from_description(const nlohmann::ordered_json& d);

/// Greedy rollout: consume x, then feed back |y| predicted cells. Every step
/// moves to a grid neighbor. `missing` counts zero-input lookups.
std::vector<CellId> hmp_rollout(const HmpModel& model, const EmbeddingMatrix& embeddings,
                                const std::vector<CellId>& x, std::size_t steps, std::size_t* missing = nullptr);

/// Per-class geo cost ln(1 + haversine(neighbor_c(from), gold)) in meters.
std::array<double, 6> geo_costs(CellId from, CellId gold);

}  // namespace obsr
