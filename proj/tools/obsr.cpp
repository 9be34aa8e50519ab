// obsr: config-driven benchmark pipeline.
//
//   obsr run --config configs/smoke/hpp.json --out runs/hpp
//   obsr selftest
//
// Exit codes: 1 config, 2 ingest, 3 prepare, 4 train, 5 evaluate (selftest
// failures also exit 5).

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "obsr/exec.hpp"
#include "obsr/pipeline.hpp"
#include "obsr/selftest/acceptance.hpp"

namespace {

using obsr::PipelineConfig;
using obsr::Stage;
using obsr::StageError;

struct GlobalFlags {
    std::string config;
    std::optional<std::uint64_t> seed;
    std::optional<int> threads;
    std::optional<int> runs;
    std::optional<std::string> out;
};

PipelineConfig load(const GlobalFlags& g) {
    if (g.config.empty()) throw StageError(Stage::config, "--config is required");
    try {
        PipelineConfig c = obsr::load_pipeline_config(g.config);
        obsr::apply_overrides(c, {g.seed, g.runs, g.out});
        return c;
    } catch (const StageError&) {
        throw;
    } catch (const std::exception& e) {
        throw StageError(Stage::config, e.what());
    }
}

void apply_threads(const GlobalFlags& g) {
    if (g.threads) {
        obsr::set_threads(*g.threads);
    } else if (const char* env = std::getenv("OBSR_THREADS"); env && *env) {
        obsr::set_threads(std::atoi(env));
    }
}

int selftest(const GlobalFlags& g, const std::vector<int>& only, const std::string& configs) {
    obsr::acceptance::Options opt;
    opt.only = only;
    opt.configs_dir = configs;
    opt.scratch_dir = g.out ? *g.out : (std::filesystem::temp_directory_path() / "obsr-selftest").string();
    int failed = 0;
    obsr::acceptance::run(opt, [&](const obsr::acceptance::CriterionResult& r) {
        std::printf("%s\n", obsr::acceptance::format(r).c_str());
        std::fflush(stdout);
        failed += !r.passed;
    });
    if (!g.out) std::filesystem::remove_all(opt.scratch_dir);
    if (failed) std::fprintf(stderr, "%d criteria failed\n", failed);
    return failed ? static_cast<int>(Stage::evaluate) : 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Hexagonal-grid geospatial benchmark pipeline"};
    app.require_subcommand(1);
    app.fallthrough();

    GlobalFlags g;
    app.add_option("--config", g.config, "Pipeline config (JSON)");
    app.add_option("--seed", g.seed, "Override the config seed");
    app.add_option("--threads", g.threads, "Worker threads (default: all cores, or OBSR_THREADS)")->check(CLI::NonNegativeNumber);
    app.add_option("--runs", g.runs, "Training runs per resolution")->check(CLI::PositiveNumber);
    app.add_option("--out", g.out, "Output directory (overrides the config and OBSR_OUTPUT_DIR)");

    struct StageCmd {
        const char* name;
        const char* help;
        void (*fn)(const PipelineConfig&);
    };
    const StageCmd stages[] = {
        {"ingest", "Load raw data and feature records into the run directory", obsr::stage_ingest},
        {"regionize", "Aggregate points per cell at every resolution", obsr::stage_regionize},
        {"hexify", "Map trajectories to contiguous cell sequences", obsr::stage_hexify},
        {"split", "Spatially stratified train/test split", obsr::stage_split},
        {"embed", "Compute region embeddings", obsr::stage_embed},
        {"train", "Train the task baseline on the train side", obsr::stage_train},
        {"eval", "Evaluate saved checkpoints on the test side", obsr::stage_evaluate},
    };
    const StageCmd* chosen = nullptr;
    for (const auto& s : stages) {
        app.add_subcommand(s.name, s.help)->callback([&chosen, &s] { chosen = &s; });
    }
    bool do_run = false, do_report = false, do_selftest = false;
    app.add_subcommand("run", "All stages, then the report and run manifest")->callback([&] { do_run = true; });
    app.add_subcommand("report", "Write report.md from the evaluated metrics")->callback([&] { do_report = true; });
    auto* st = app.add_subcommand("selftest", "Run the acceptance suite");
    std::vector<int> only;
    std::string configs = obsr::acceptance::default_configs_dir();
    st->add_option("--only", only, "Criterion numbers to run");
    st->add_option("--configs", configs, "Directory holding smoke/*.json");
    st->callback([&] { do_selftest = true; });

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? 0 : static_cast<int>(Stage::config);
    }

    try {
        apply_threads(g);
        if (do_selftest) return selftest(g, only, configs);
        const PipelineConfig c = load(g);
        if (chosen) {
            chosen->fn(c);
        } else if (do_report) {
            std::cout << obsr::stage_report(c);
        } else if (do_run) {
            const auto outcome = obsr::run_pipeline(c);
            std::cout << std::ifstream(std::filesystem::path(c.output_dir) / "report.md").rdbuf();
            std::fprintf(stderr, "run finished in %.1f s; artifacts in %s\n", outcome.seconds, c.output_dir.c_str());
            if (outcome.matches_previous) {
                std::fprintf(stderr, "%s\n", *outcome.matches_previous ? "run manifest matches the previous run"
                                                                       : "run manifest differs from the previous run");
            }
        }
    } catch (const StageError& e) {
        std::fprintf(stderr, "obsr: %s stage failed: %s\n", obsr::to_string(e.stage()).c_str(), e.what());
        return e.exit_code();
    } catch (const std::exception& e) {
        std::fprintf(stderr, "obsr: %s\n", e.what());
        return static_cast<int>(Stage::config);
    }
    return 0;
}
