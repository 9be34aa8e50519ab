#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <unistd.h>

#include "obsr/pipeline.hpp"

using namespace obsr;
namespace fs = std::filesystem;
using json = nlohmann::json;

namespace {

struct TempDir {
    fs::path path;
    explicit TempDir(const std::string& tag)
        : path(fs::temp_directory_path() / ("obsr_pipeline_" + tag + "_" + std::to_string(::getpid()))) {
        fs::remove_all(path);
        fs::create_directories(path);
    }
    ~TempDir() { fs::remove_all(path); }
};

json region_json(const std::string& task) {
    json j = {{"task", task},
              {"seed", 3},
              {"resolutions", {8, 9}},
              {"embedder", {{"kind", "cce"}, {"k", 1}, {"synthetic_keys", {"amenity=cafe", "leisure=park"}}, {"synthetic_records", 1500}}},
              {"train", {{"epochs", 3}}}};
    if (task == "cap") {
        j["synthetic"] = {{"kind", "clustered_intensity"}, {"n", 1500}};
    } else {
        j["synthetic"] = {{"kind", "linear_price_field"}, {"n", 1500}, {"intercept", 3.0}, {"noise_sigma", 0.05}};
    }
    return j;
}

json walk_json(const std::string& task) {
    return {{"task", task},
            {"seed", 3},
            {"resolutions", {9}},
            {"synthetic", {{"kind", task == "hmp" ? "constant_direction_walks" : "random_walks"}, {"n", 40}, {"walk_length", 10}, {"walk_length_max", 16}}},
            {"embedder", {{"kind", "external"}, {"synthetic", "coordinates"}, {"dim", 3}}},
            {"train", {{"epochs", 2}}},
            {"model", {{"hidden", 8}, {"layers", 1}, {"heads", 2}, {"ks", {1, 3}}}}};
}

PipelineConfig config_in(const json& j, const TempDir& dir, const std::string& name = "out") {
    PipelineConfig c = pipeline_config_from_json(j);
    c.output_dir = (dir.path / name).string();
    return c;
}

Errc config_error_of(const json& j) {
    try {
        pipeline_config_from_json(j);
    } catch (const Error& e) {
        return e.code();
    }
    return Errc::IOError;
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

}  // namespace

TEST_CASE("config parsing and defaults") {
    const auto c = pipeline_config_from_json(region_json("hpp"));
    CHECK(c.task == Task::hpp);
    CHECK(c.seed == 3);
    CHECK(c.split.seed == 3);
    CHECK(c.train.seed == 3);
    CHECK(c.synthetic->seed == 3);
    CHECK(c.train.epochs == 3);
    CHECK(c.train.loss == nn::LossKind::smooth_l1);
    CHECK(c.split.strat_source == StratSource::target);
    CHECK(c.resolutions == std::vector<int>{8, 9});

    CHECK(pipeline_config_from_json(walk_json("tte")).split.strat_source == StratSource::duration);
    CHECK(pipeline_config_from_json(walk_json("hmp")).split.strat_source == StratSource::length);
    CHECK(pipeline_config_from_json(walk_json("hmp")).model.ks == std::vector<int>{1, 3});
}

TEST_CASE("config errors name the problem") {
    json unknown = region_json("hpp");
    unknown["resolution"] = 9;
    try {
        pipeline_config_from_json(unknown);
        FAIL("expected InvalidConfig");
    } catch (const Error& e) {
        CHECK(e.code() == Errc::InvalidConfig);
        CHECK(std::string(e.what()).find("'resolution'") != std::string::npos);
    }

    json both = region_json("hpp");
    both["dataset"] = {{"format", "point_csv"}, {"path", "x.csv"}, {"columns", {{"target", "price"}}}};
    CHECK(config_error_of(both) == Errc::InvalidConfig);

    json two_res = walk_json("tte");
    two_res["resolutions"] = {8, 9};
    CHECK(config_error_of(two_res) == Errc::InvalidConfig);

    json fine = region_json("cap");
    fine["resolutions"] = {12};
    CHECK(config_error_of(fine) == Errc::InvalidConfig);

    json seeded = region_json("hpp");
    seeded["synthetic"]["seed"] = 5;
    CHECK(config_error_of(seeded) == Errc::InvalidConfig);

    json train_seed = region_json("hpp");
    train_seed["train"]["seed"] = 5;
    CHECK(config_error_of(train_seed) == Errc::InvalidConfig);

    json wrong_kind = walk_json("hmp");
    wrong_kind["synthetic"]["kind"] = "linear_price_field";
    CHECK(config_error_of(wrong_kind) == Errc::InvalidConfig);

    json no_target = region_json("hpp");
    no_target.erase("synthetic");
    no_target["dataset"] = {{"format", "point_csv"}, {"path", "x.csv"}};
    no_target["embedder"] = {{"kind", "external"}, {"path", "e.csv"}};
    CHECK(config_error_of(no_target) == Errc::InvalidConfig);

    json bad_runs = region_json("hpp");
    bad_runs["runs"] = 0;
    CHECK(config_error_of(bad_runs) == Errc::InvalidConfig);
}

TEST_CASE("config files resolve paths against their directory") {
    TempDir dir("paths");
    fs::create_directories(dir.path / "cfg");
    json j = region_json("hpp");
    j["embedder"] = {{"kind", "ce"}, {"features", "data/features.csv"}, {"tag_filter", "../filter.json"}};
    std::ofstream(dir.path / "cfg" / "c.json") << j.dump();
    const auto c = load_pipeline_config((dir.path / "cfg" / "c.json").string());
    CHECK(fs::path(c.embedder.features_path) == dir.path / "cfg" / "data" / "features.csv");
    CHECK(fs::path(c.embedder.tag_filter_path) == dir.path / "filter.json");
    CHECK_THROWS_AS(load_pipeline_config((dir.path / "missing.json").string()), Error);
}

TEST_CASE("overrides and run seeds") {
    PipelineConfig c = pipeline_config_from_json(region_json("hpp"));
    ::setenv("OBSR_OUTPUT_DIR", "/tmp/from-env", 1);
    apply_overrides(c, {});
    CHECK(c.output_dir == "/tmp/from-env");
    apply_overrides(c, {std::uint64_t{9}, 2, std::string("/tmp/from-flag")});
    ::unsetenv("OBSR_OUTPUT_DIR");
    CHECK(c.output_dir == "/tmp/from-flag");
    CHECK(c.seed == 9);
    CHECK(c.split.seed == 9);
    CHECK(c.train.seed == 9);
    CHECK(c.synthetic->seed == 9);
    CHECK(c.runs == 2);
    CHECK(run_seed(c, 0) == 9);
    CHECK(run_seed(c, 1) != run_seed(c, 2));
    CHECK_THROWS_AS(apply_overrides(c, {std::nullopt, 0, std::nullopt}), Error);
}

TEST_CASE("sha256") {
    CHECK(sha256_hex("abc") == "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
    CHECK(sha256_hex("") == "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855");
    TempDir dir("sha");
    std::ofstream(dir.path / "f.txt", std::ios::binary) << "abc";
    CHECK(sha256_file((dir.path / "f.txt").string()) == sha256_hex("abc"));
}

TEST_CASE("region pipeline runs end to end and reruns identically") {
    TempDir dir("region");
    const auto c = config_in(region_json("hpp"), dir);
    const auto first = run_pipeline(c);
    CHECK_FALSE(first.matches_previous.has_value());
    for (const char* f : {"report.md", "run_manifest.json", "timing.json", "data/points.csv", "data/features.csv", "res8/region.csv",
                          "res8/choropleth.geojson", "res8/histogram.csv", "res8/split.json", "res8/embeddings.csv", "res8/model_run0.json",
                          "res8/metrics.json", "res8/predictions_run0.csv", "res9/report.md"}) {
        CHECK_MESSAGE(fs::exists(fs::path(c.output_dir) / f), f);
    }
    const std::string manifest = slurp(fs::path(c.output_dir) / "run_manifest.json");
    const std::string metrics = slurp(fs::path(c.output_dir) / "res9" / "metrics.json");
    const auto second = run_pipeline(c);
    REQUIRE(second.matches_previous.has_value());
    CHECK(*second.matches_previous);
    CHECK(slurp(fs::path(c.output_dir) / "run_manifest.json") == manifest);
    CHECK(slurp(fs::path(c.output_dir) / "res9" / "metrics.json") == metrics);

    // every listed artifact hash matches the file on disk
    const auto m = json::parse(manifest);
    CHECK(m["artifacts"].size() > 20);
    for (const auto& a : m["artifacts"]) {
        CHECK(sha256_file((fs::path(c.output_dir) / a["path"].get<std::string>()).string()) == a["sha256"]);
        CHECK(a["path"] != "timing.json");
    }

    const std::string report = slurp(fs::path(c.output_dir) / "report.md");
    CHECK(report.find("| Metric | Res 8 | Res 9 |") != std::string::npos);
    CHECK(report.find("| MSE ×10^9 |") != std::string::npos);

    // a different seed changes the outcome
    PipelineConfig other = c;
    apply_overrides(other, {std::uint64_t{4}, std::nullopt, std::string((dir.path / "other").string())});
    run_pipeline(other);
    CHECK(slurp(fs::path(other.output_dir) / "res9" / "split.json") != slurp(fs::path(c.output_dir) / "res9" / "split.json"));
}

TEST_CASE("training never sees test targets") {
    TempDir dir("leak");
    const auto c = config_in(region_json("strpp"), dir);
    stage_ingest(c);
    stage_regionize(c);
    stage_split(c);
    stage_embed(c);
    stage_train(c);
    const fs::path model = fs::path(c.output_dir) / "res9" / "model_run0.json";
    const std::string before = sha256_file(model.string());

    const fs::path targets = fs::path(c.output_dir) / "res9" / "targets.csv";
    RegionDataset ds = read_region_dataset(targets.string());
    const auto manifest = read_manifest((fs::path(c.output_dir) / "res9" / "split.json").string());
    for (const auto& id : manifest.test) ds.rows.at(CellId::from_string(id)).target = 1e6;
    write_region_dataset(ds, targets.string());
    stage_train(c);
    CHECK(sha256_file(model.string()) == before);

    const auto log = json::parse(slurp(fs::path(c.output_dir) / "res9" / "train_run0.json"));
    CHECK(log["log"]["train_items"] == manifest.train.size());
}

TEST_CASE("stage errors carry their exit codes") {
    TempDir dir("errors");
    const auto c = config_in(region_json("hpp"), dir);
    try {
        stage_train(c);
        FAIL("expected StageError");
    } catch (const StageError& e) {
        CHECK(e.stage() == Stage::train);
        CHECK(e.exit_code() == 4);
    }
    try {
        stage_regionize(c);
        FAIL("expected StageError");
    } catch (const StageError& e) {
        CHECK(e.exit_code() == 3);
    }
    try {
        stage_evaluate(c);
        FAIL("expected StageError");
    } catch (const StageError& e) {
        CHECK(e.exit_code() == 5);
    }
    try {
        stage_hexify(c);
        FAIL("expected StageError");
    } catch (const StageError& e) {
        CHECK(e.exit_code() == 1);
    }

    json missing = region_json("hpp");
    missing.erase("synthetic");
    missing["dataset"] = {{"format", "point_csv"}, {"path", (dir.path / "nope.csv").string()}, {"columns", {{"target", "price"}}}};
    missing["embedder"] = {{"kind", "external"}, {"path", (dir.path / "e.csv").string()}};
    const auto d = config_in(missing, dir, "missing");
    try {
        stage_ingest(d);
        FAIL("expected StageError");
    } catch (const StageError& e) {
        CHECK(e.exit_code() == 2);
        CHECK(std::string(e.what()).find("nope.csv") != std::string::npos);
    }
}

TEST_CASE("CAP pipeline with train-only normalization and several runs") {
    TempDir dir("cap");
    json j = region_json("cap");
    j["normalization"] = "train_only";
    j["runs"] = 2;
    const auto c = config_in(j, dir);
    run_pipeline(c);
    const RegionDataset t = read_region_dataset((fs::path(c.output_dir) / "res9" / "targets.csv").string());
    REQUIRE(t.normalization.has_value());
    CHECK(t.normalization->scope == NormalizationScope::train_only);
    const auto m = json::parse(slurp(fs::path(c.output_dir) / "res9" / "metrics.json"));
    CHECK(m["runs"].size() == 2);
    CHECK(fs::exists(fs::path(c.output_dir) / "res8" / "model_run1.json"));
    const std::string report = slurp(fs::path(c.output_dir) / "report.md");
    CHECK(report.find("±") != std::string::npos);
    CHECK(report.find("| R2 |") != std::string::npos);
}

TEST_CASE("trajectory pipelines") {
    TempDir dir("walks");
    for (const char* task : {"tte", "hmp"}) {
        const auto c = config_in(walk_json(task), dir, task);
        run_pipeline(c);
        const fs::path out(c.output_dir);
        CHECK(fs::exists(out / "data" / "trajectories.jsonl"));
        CHECK(fs::exists(out / "res9" / "trajectories.jsonl"));
        CHECK(fs::exists(out / "res9" / "duration_histogram.csv"));
        CHECK(fs::exists(out / "res9" / "prepare.json"));
        const std::string report = slurp(out / "report.md");
        if (std::string(task) == "hmp") {
            CHECK(report.find("| k | H Dist | DTW Dist | Acc |") != std::string::npos);
            CHECK(report.find("\n| 3 |") != std::string::npos);
        } else {
            CHECK(report.find("| MAPE |") != std::string::npos);
        }
        CHECK(run_pipeline(c).matches_previous.value_or(false));
    }
}
