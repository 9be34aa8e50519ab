#pragma once

// Config-driven pipeline behind the `obsr` CLI. Every stage reads its inputs
// from and writes its outputs to the run directory, so stages can be run one
// at a time or chained by run_pipeline().

#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "obsr/baselines.hpp"
#include "obsr/embed.hpp"
#include "obsr/ingest.hpp"
#include "obsr/regionize.hpp"
#include "obsr/splitter.hpp"
#include "obsr/synthdata.hpp"
#include "obsr/trajprep.hpp"

namespace obsr {

/// Process exit codes; each stage maps its failures to one of these.
enum class Stage { config = 1, ingest = 2, prepare = 3, train = 4, evaluate = 5 };
std::string to_string(Stage s);

class StageError : public std::runtime_error {
public:
    StageError(Stage stage, const std::string& what) : std::runtime_error(what), stage_(stage) {}
    Stage stage() const noexcept { return stage_; }
    int exit_code() const noexcept { return static_cast<int>(stage_); }

private:
    Stage stage_;
};

struct EmbedderConfig {
    EmbedderKind kind = EmbedderKind::cce;
    int k = 2;
    CceMode mode = CceMode::concat;
    std::string features_path;             ///< "lat,lon,feature" CSV for ce/cce
    std::vector<std::string> tag_filter;   ///< inline "key=value" list
    std::string tag_filter_path;           ///< or a filter file
    std::vector<std::string> synthetic_keys;  ///< generate feature records instead of reading them
    std::size_t synthetic_records = 5000;
    std::string external_path;             ///< external: embedding CSV
    std::string synthetic_external;        ///< external: "coordinates" or "mixed_coordinates"
    int synthetic_dim = 5;
};

struct PipelineConfig {
    Task task = Task::hpp;
    std::uint64_t seed = 0;
    std::string dataset_name = "dataset";
    std::optional<RawDatasetDescriptor> dataset;
    std::optional<SynthSpec> synthetic;
    std::vector<int> resolutions{9};
    SplitConfig split;
    std::string split_manifest_path;  ///< predefined id manifest instead of splitting
    EmbedderConfig embedder;
    nn::TrainConfig train;
    SequenceModelOptions model;
    NormalizationScope normalization = NormalizationScope::whole_dataset;
    GapOptions gap;
    double target_fraction = 0.15;
    int runs = 1;
    std::string output_dir = "obsr-out";

    void validate() const;
};

/// Unknown keys are rejected by name. Seeds of the split, training and
/// synthetic data all come from "seed" unless set explicitly.
PipelineConfig pipeline_config_from_json(const nlohmann::json& j);
PipelineConfig load_pipeline_config(const std::string& path);
nlohmann::ordered_json to_json(const PipelineConfig& c);

struct CliOverrides {
    std::optional<std::uint64_t> seed;
    std::optional<int> runs;
    std::optional<std::string> output_dir;
};

/// Apply command-line overrides, then OBSR_OUTPUT_DIR when no --out was given.
void apply_overrides(PipelineConfig& c, const CliOverrides& o);

/// Seed of run i: the config seed for run 0, derived otherwise.
std::uint64_t run_seed(const PipelineConfig& c, int run);

// Stages. Each throws StageError carrying its exit code.
void stage_ingest(const PipelineConfig& c);
void stage_regionize(const PipelineConfig& c);  ///< region tasks
void stage_hexify(const PipelineConfig& c);     ///< trajectory tasks
void stage_split(const PipelineConfig& c);
void stage_embed(const PipelineConfig& c);
void stage_train(const PipelineConfig& c);
void stage_evaluate(const PipelineConfig& c);
/// Writes report.md and returns its text.
std::string stage_report(const PipelineConfig& c);

/// Writes run_manifest.json (config, artifact hashes, losses, metrics) and
/// returns it. Wall times go to timing.json so reruns compare byte-equal.
nlohmann::ordered_json write_run_manifest(const PipelineConfig& c);

struct RunOutcome {
    nlohmann::ordered_json manifest;
    std::optional<bool> matches_previous;  ///< set when a previous manifest existed
    double seconds = 0.0;
};

/// All stages in order.
RunOutcome run_pipeline(const PipelineConfig& c);

/// Lowercase hex SHA-256 of a file or a string.
std::string sha256_file(const std::string& path);
std::string sha256_hex(const std::string& data);

}  // namespace obsr
