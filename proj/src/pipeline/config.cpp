#include <algorithm>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <set>

#include "obsr/pipeline.hpp"

namespace obsr {

namespace fs = std::filesystem;

std::string to_string(Stage s) {
    switch (s) {
        case Stage::config: return "config";
        case Stage::ingest: return "ingest";
        case Stage::prepare: return "prepare";
        case Stage::train: return "train";
        case Stage::evaluate: return "evaluate";
    }
    return "?";
}

namespace {

[[noreturn]] void config_error(const std::string& what) { fail(Errc::InvalidConfig, what); }

void allow_keys(const nlohmann::json& j, const std::string& where, std::initializer_list<const char*> keys) {
    if (!j.is_object()) config_error(where + " must be an object");
    const std::set<std::string> known(keys.begin(), keys.end());
    for (const auto& [k, v] : j.items()) {
        if (!known.count(k)) {
            std::string list;
            for (const auto& name : known) list += (list.empty() ? "" : ", ") + name;
            config_error("unknown key '" + k + "' in " + where + " (expected one of: " + list + ")");
        }
    }
}

bool point_kind(SynthKind k) { return k == SynthKind::linear_price_field || k == SynthKind::clustered_intensity; }

RawDatasetDescriptor parse_dataset(const nlohmann::json& j) {
    allow_keys(j, "dataset", {"format", "path", "columns", "bbox", "sample_interval_s"});
    RawDatasetDescriptor d;
    d.format = parse_dataset_format(j.at("format").get<std::string>());
    d.path = j.at("path").get<std::string>();
    if (j.contains("columns")) d.columns = j["columns"].get<std::map<std::string, std::string>>();
    if (j.contains("bbox")) {
        const auto b = j["bbox"].get<std::vector<double>>();
        if (b.size() != 4) config_error("dataset.bbox must be [min_lat, min_lon, max_lat, max_lon]");
        d.bbox = BoundingBox{b[0], b[1], b[2], b[3]};
    }
    d.sample_interval_s = j.value("sample_interval_s", d.sample_interval_s);
    return d;
}

EmbedderConfig parse_embedder(const nlohmann::json& j) {
    allow_keys(j, "embedder",
               {"kind", "k", "mode", "features", "tag_filter", "synthetic_keys", "synthetic_records", "path", "synthetic", "dim"});
    EmbedderConfig e;
    e.kind = parse_embedder_kind(j.at("kind").get<std::string>());
    e.k = j.value("k", e.k);
    if (j.contains("mode")) e.mode = parse_cce_mode(j["mode"].get<std::string>());
    e.features_path = j.value("features", std::string());
    if (j.contains("tag_filter")) {
        if (j["tag_filter"].is_string()) e.tag_filter_path = j["tag_filter"].get<std::string>();
        else e.tag_filter = tag_filter_from_json(j["tag_filter"]);
    }
    if (j.contains("synthetic_keys")) e.synthetic_keys = j["synthetic_keys"].get<std::vector<std::string>>();
    e.synthetic_records = j.value("synthetic_records", e.synthetic_records);
    e.external_path = j.value("path", std::string());
    e.synthetic_external = j.value("synthetic", std::string());
    e.synthetic_dim = j.value("dim", e.synthetic_dim);
    return e;
}

std::string resolve(const std::string& p, const fs::path& base) {
    if (p.empty() || fs::path(p).is_absolute()) return p;
    return (base / p).lexically_normal().string();
}

}  // namespace

void PipelineConfig::validate() const {
    if (dataset.has_value() == synthetic.has_value()) config_error("exactly one of 'dataset' and 'synthetic' is required");
    if (resolutions.empty()) config_error("resolutions must be non-empty");
    if (std::set<int>(resolutions.begin(), resolutions.end()).size() != resolutions.size()) config_error("duplicate resolution");
    if (is_trajectory_task(task)) {
        if (resolutions.size() != 1) config_error(to_string(task) + " is evaluated at a single resolution");
        check_resolution(resolutions[0]);
        if (dataset && dataset->format == DatasetFormat::point_csv) config_error(to_string(task) + " needs a trajectory dataset");
        if (synthetic && point_kind(synthetic->kind)) config_error(to_string(task) + " needs a walk synthetic kind");
    } else {
        for (int r : resolutions) {
            if (r < kMinRegionResolution || r > kMaxRegionResolution) {
                config_error("region resolution " + std::to_string(r) + " outside [" + std::to_string(kMinRegionResolution) + ", " +
                             std::to_string(kMaxRegionResolution) + "]");
            }
        }
        if (dataset && dataset->format != DatasetFormat::point_csv) config_error(to_string(task) + " needs a point_csv dataset");
        if (synthetic && !point_kind(synthetic->kind)) config_error(to_string(task) + " needs a point synthetic kind");
        if (task != Task::cap && dataset && !dataset->columns.count("target")) {
            config_error(to_string(task) + " needs a 'target' column binding");
        }
    }
    split.validate();
    train.validate();
    if (runs < 1) config_error("runs must be >= 1");
    if (!(target_fraction > 0.0 && target_fraction < 1.0)) config_error("target_fraction must be in (0, 1)");
    if (output_dir.empty()) config_error("output_dir must be set");
    switch (embedder.kind) {
        case EmbedderKind::ce:
        case EmbedderKind::cce:
            if (embedder.features_path.empty() == embedder.synthetic_keys.empty()) {
                config_error("embedder needs exactly one of 'features' and 'synthetic_keys'");
            }
            if (embedder.k < 0) config_error("embedder.k must be >= 0");
            break;
        case EmbedderKind::external:
            if (embedder.external_path.empty() == embedder.synthetic_external.empty()) {
                config_error("external embedder needs exactly one of 'path' and 'synthetic'");
            }
            if (!embedder.synthetic_external.empty()) {
                if (embedder.synthetic_external != "coordinates" && embedder.synthetic_external != "mixed_coordinates") {
                    config_error("embedder.synthetic must be 'coordinates' or 'mixed_coordinates'");
                }
                if (!synthetic) config_error("synthetic embeddings need a synthetic dataset");
                if (embedder.synthetic_dim < 2) config_error("embedder.dim must be >= 2");
            }
            break;
    }
    if (!embedder.synthetic_keys.empty() && !synthetic) config_error("synthetic_keys need a synthetic dataset");
}

PipelineConfig pipeline_config_from_json(const nlohmann::json& j) {
    PipelineConfig c;
    try {
        allow_keys(j, "config",
                   {"task", "seed", "dataset_name", "dataset", "synthetic", "resolutions", "split", "embedder", "train", "model",
                    "normalization", "gap", "target_fraction", "runs", "output_dir"});
        c.task = parse_task(j.at("task").get<std::string>());
        c.seed = j.value("seed", c.seed);
        c.dataset_name = j.value("dataset_name", c.dataset_name);
        if (j.contains("dataset")) c.dataset = parse_dataset(j["dataset"]);
        if (j.contains("synthetic")) {
            if (j["synthetic"].contains("seed")) config_error("synthetic.seed is not allowed; set the top-level seed");
            auto s = j["synthetic"];
            s["seed"] = c.seed;
            c.synthetic = synth_spec_from_json(s);
        }
        if (j.contains("resolutions")) c.resolutions = j["resolutions"].get<std::vector<int>>();
        if (j.contains("split")) {
            const auto& s = j["split"];
            allow_keys(s, "split", {"n_bins", "test_fraction", "strat_source", "manifest"});
            c.split.n_bins = s.value("n_bins", c.split.n_bins);
            c.split.test_fraction = s.value("test_fraction", c.split.test_fraction);
            if (s.contains("strat_source")) c.split.strat_source = parse_strat_source(s["strat_source"].get<std::string>());
            c.split_manifest_path = s.value("manifest", std::string());
        }
        if (!j.contains("split") || !j["split"].contains("strat_source")) {
            c.split.strat_source = c.task == Task::tte ? StratSource::duration
                                   : c.task == Task::hmp ? StratSource::length
                                                         : StratSource::target;
        }
        c.split.seed = c.seed;
        c.split.resolution = c.resolutions.empty() ? 9 : c.resolutions.front();
        if (!j.contains("embedder")) config_error("missing key 'embedder'");
        c.embedder = parse_embedder(j["embedder"]);
        c.train = default_train_config(c.task);
        if (j.contains("train")) {
            if (j["train"].contains("seed")) config_error("train.seed is not allowed; set the top-level seed");
            c.train = nn::train_config_from_json(nlohmann::ordered_json(j["train"]), c.train);
        }
        c.train.seed = c.seed;
        if (j.contains("model")) {
            allow_keys(j["model"], "model", {"hidden", "layers", "heads", "causal", "ks"});
            c.model = sequence_options_from_json(nlohmann::ordered_json(j["model"]));
        }
        if (j.contains("normalization")) {
            const auto n = j["normalization"].get<std::string>();
            if (n == "whole_dataset") c.normalization = NormalizationScope::whole_dataset;
            else if (n == "train_only") c.normalization = NormalizationScope::train_only;
            else config_error("normalization must be 'whole_dataset' or 'train_only'");
        }
        if (j.contains("gap")) {
            allow_keys(j["gap"], "gap", {"max_gap", "split_on_large_gap"});
            c.gap.max_gap = j["gap"].value("max_gap", c.gap.max_gap);
            c.gap.split_on_large_gap = j["gap"].value("split_on_large_gap", c.gap.split_on_large_gap);
        }
        c.target_fraction = j.value("target_fraction", c.target_fraction);
        c.runs = j.value("runs", c.runs);
        c.output_dir = j.value("output_dir", c.output_dir);
    } catch (const nlohmann::json::exception& e) {
        config_error(std::string("config: ") + e.what());
    }
    c.validate();
    return c;
}

PipelineConfig load_pipeline_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) fail(Errc::FileNotFound, "config " + path);
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(in);
    } catch (const nlohmann::json::exception& e) {
        config_error(path + ": " + e.what());
    }
    PipelineConfig c = pipeline_config_from_json(j);
    // input paths are relative to the config file
    const fs::path base = fs::absolute(path).parent_path();
    if (c.dataset) c.dataset->path = resolve(c.dataset->path, base);
    c.split_manifest_path = resolve(c.split_manifest_path, base);
    c.embedder.features_path = resolve(c.embedder.features_path, base);
    c.embedder.tag_filter_path = resolve(c.embedder.tag_filter_path, base);
    c.embedder.external_path = resolve(c.embedder.external_path, base);
    return c;
}

nlohmann::ordered_json to_json(const PipelineConfig& c) {
    nlohmann::ordered_json j;
    j["task"] = to_string(c.task);
    j["seed"] = c.seed;
    j["dataset_name"] = c.dataset_name;
    if (c.dataset) {
        const auto& d = *c.dataset;
        nlohmann::ordered_json dj{{"format", to_string(d.format)}, {"path", d.path}, {"columns", d.columns}};
        if (d.bbox) dj["bbox"] = {d.bbox->min_lat, d.bbox->min_lon, d.bbox->max_lat, d.bbox->max_lon};
        dj["sample_interval_s"] = d.sample_interval_s;
        j["dataset"] = dj;
    }
    if (c.synthetic) j["synthetic"] = to_json(*c.synthetic);
    j["resolutions"] = c.resolutions;
    j["split"] = {{"n_bins", c.split.n_bins}, {"test_fraction", c.split.test_fraction},
                  {"strat_source", to_string(c.split.strat_source)}, {"manifest", c.split_manifest_path}};
    const auto& e = c.embedder;
    nlohmann::ordered_json ej{{"kind", to_string(e.kind)}};
    if (e.kind != EmbedderKind::external) {
        ej["k"] = e.k;
        ej["mode"] = to_string(e.mode);
        ej["features"] = e.features_path;
        ej["tag_filter"] = e.tag_filter_path.empty() ? nlohmann::ordered_json(e.tag_filter) : nlohmann::ordered_json(e.tag_filter_path);
        ej["synthetic_keys"] = e.synthetic_keys;
        ej["synthetic_records"] = e.synthetic_records;
    } else {
        ej["path"] = e.external_path;
        ej["synthetic"] = e.synthetic_external;
        ej["dim"] = e.synthetic_dim;
    }
    j["embedder"] = ej;
    j["train"] = nn::to_json(c.train);
    j["model"] = to_json(c.model);
    j["normalization"] = c.normalization == NormalizationScope::whole_dataset ? "whole_dataset" : "train_only";
    j["gap"] = {{"max_gap", c.gap.max_gap}, {"split_on_large_gap", c.gap.split_on_large_gap}};
    j["target_fraction"] = c.target_fraction;
    j["runs"] = c.runs;
    return j;
}

void apply_overrides(PipelineConfig& c, const CliOverrides& o) {
    if (o.seed) {
        c.seed = *o.seed;
        c.split.seed = c.seed;
        c.train.seed = c.seed;
        if (c.synthetic) c.synthetic->seed = c.seed;
    }
    if (o.runs) c.runs = *o.runs;
    if (o.output_dir) {
        c.output_dir = *o.output_dir;
    } else if (const char* env = std::getenv("OBSR_OUTPUT_DIR"); env && *env) {
        c.output_dir = env;
    }
    c.validate();
}

std::uint64_t run_seed(const PipelineConfig& c, int run) {
    return run == 0 ? c.seed : derive_seed(c.seed, static_cast<std::uint64_t>(run));
}

}  // namespace obsr
