#include <algorithm>
#include <chrono>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <set>
#include <sstream>

#include "obsr/artifacts.hpp"
#include "obsr/pipeline.hpp"

namespace obsr {

namespace fs = std::filesystem;
using ojson = nlohmann::ordered_json;

namespace {

constexpr int kHistogramBins = 20;

// ------------------------------------------------------------------ layout

fs::path out_root(const PipelineConfig& c) { return fs::path(c.output_dir); }
fs::path data_dir(const PipelineConfig& c) { return out_root(c) / "data"; }
fs::path res_dir(const PipelineConfig& c, int r) { return out_root(c) / ("res" + std::to_string(r)); }
fs::path points_path(const PipelineConfig& c) { return data_dir(c) / "points.csv"; }
fs::path trajectories_path(const PipelineConfig& c) { return data_dir(c) / "trajectories.jsonl"; }
fs::path features_path(const PipelineConfig& c) { return data_dir(c) / "features.csv"; }
fs::path tag_filter_path(const PipelineConfig& c) { return data_dir(c) / "tag_filter.json"; }
fs::path region_path(const PipelineConfig& c, int r) { return res_dir(c, r) / "region.csv"; }
fs::path targets_path(const PipelineConfig& c, int r) { return res_dir(c, r) / "targets.csv"; }
fs::path prepared_path(const PipelineConfig& c, int r) { return res_dir(c, r) / "trajectories.jsonl"; }
fs::path split_path(const PipelineConfig& c, int r) { return res_dir(c, r) / "split.json"; }
fs::path embeddings_path(const PipelineConfig& c, int r) { return res_dir(c, r) / "embeddings.csv"; }
fs::path model_path(const PipelineConfig& c, int r, int run) { return res_dir(c, r) / ("model_run" + std::to_string(run) + ".json"); }
fs::path train_log_path(const PipelineConfig& c, int r, int run) {
    return res_dir(c, r) / ("train_run" + std::to_string(run) + ".json");
}
fs::path metrics_path(const PipelineConfig& c, int r) { return res_dir(c, r) / "metrics.json"; }
fs::path timing_path(const PipelineConfig& c) { return out_root(c) / "timing.json"; }
fs::path manifest_path(const PipelineConfig& c) { return out_root(c) / "run_manifest.json"; }

void write_json(const fs::path& p, const ojson& j) {
    std::ofstream out(p, std::ios::binary);
    if (!out) fail(Errc::IOError, "cannot write " + p.string());
    out << j.dump(2) << '\n';
    if (!out) fail(Errc::IOError, "write failed: " + p.string());
}

ojson read_json(const fs::path& p) {
    std::ifstream in(p);
    if (!in) fail(Errc::FileNotFound, p.string() + " (run the earlier stages first)");
    try {
        return ojson::parse(in);
    } catch (const nlohmann::json::exception& e) {
        fail(Errc::IOError, p.string() + ": " + e.what());
    }
}

// Run body, translating any failure into a StageError and recording wall time.
template <typename F>
void staged(const PipelineConfig& c, Stage stage, const std::string& name, F&& body) {
    const auto t0 = std::chrono::steady_clock::now();
    try {
        fs::create_directories(out_root(c));
        body();
    } catch (const StageError&) {
        throw;
    } catch (const std::exception& e) {
        throw StageError(stage, name + ": " + e.what());
    }
    const double dt = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    ojson timing = ojson::object();
    if (fs::exists(timing_path(c))) {
        try {
            timing = read_json(timing_path(c));
        } catch (const Error&) {
            timing = ojson::object();
        }
    }
    timing[name] = dt;
    write_json(timing_path(c), timing);
}

// ------------------------------------------------------------------ raw trajectories

void write_raw_trajectories(const std::vector<Trajectory>& trajs, const fs::path& p) {
    std::ofstream out(p, std::ios::binary);
    if (!out) fail(Errc::IOError, "cannot write " + p.string());
    for (const auto& t : trajs) {
        ojson j;
        j["id"] = t.id;
        ojson samples = ojson::array();
        for (const auto& s : t.samples) samples.push_back({s.point.lat(), s.point.lon(), s.time});
        j["samples"] = std::move(samples);
        j["meta"] = t.meta;
        out << j.dump() << '\n';
    }
}

std::vector<Trajectory> read_raw_trajectories(const fs::path& p) {
    std::ifstream in(p);
    if (!in) fail(Errc::FileNotFound, p.string() + " (run the ingest stage first)");
    std::vector<Trajectory> out;
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        try {
            const auto j = nlohmann::json::parse(line);
            Trajectory t;
            t.id = j.at("id").get<std::string>();
            for (const auto& s : j.at("samples")) {
                t.samples.push_back({GeoPoint(s.at(0).get<double>(), s.at(1).get<double>()), s.at(2).get<std::int64_t>()});
            }
            t.meta = j.at("meta").get<std::map<std::string, std::string>>();
            out.push_back(std::move(t));
        } catch (const nlohmann::json::exception& e) {
            fail(Errc::IOError, p.string() + ": " + e.what());
        }
    }
    return out;
}

RawDatasetDescriptor normalized_points_descriptor(const PipelineConfig& c) {
    RawDatasetDescriptor d;
    d.format = DatasetFormat::point_csv;
    d.path = points_path(c).string();
    d.columns = {{"id", "id"}, {"lat", "lat"}, {"lon", "lon"}, {"timestamp", "timestamp"}};
    if (c.task != Task::cap) d.columns["target"] = "target";
    return d;
}

std::vector<PointRecord> read_points(const PipelineConfig& c) {
    if (!fs::exists(points_path(c))) fail(Errc::FileNotFound, points_path(c).string() + " (run the ingest stage first)");
    return load_points(normalized_points_descriptor(c)).items;
}

// ------------------------------------------------------------------ instances

std::vector<std::string> load_filter(const PipelineConfig& c) {
    const auto j = read_json(tag_filter_path(c));
    return j.get<std::vector<std::string>>();
}

std::vector<CellId> sorted_cells(const std::set<CellId>& s) { return {s.begin(), s.end()}; }

SplitManifest manifest_from_ids(const PipelineConfig& c, int r, const std::vector<std::string>& ids) {
    struct Item {
        std::string id;
    };
    std::vector<Item> items;
    for (const auto& id : ids) items.push_back({id});
    const auto split = apply_id_manifest(items, load_id_manifest(c.split_manifest_path));
    SplitManifest m;
    for (const auto& i : split.train) m.train.push_back(i.id);
    for (const auto& i : split.test) m.test.push_back(i.id);
    std::sort(m.train.begin(), m.train.end());
    std::sort(m.test.begin(), m.test.end());
    m.config = c.split;
    m.config.resolution = r;
    if (split.excluded) m.warnings.push_back(std::to_string(split.excluded) + " ids not listed in the manifest were excluded");
    return m;
}

RegionTaskInstance region_instance(const PipelineConfig& c, int r) {
    RegionTaskInstance inst;
    inst.targets = read_region_dataset(targets_path(c, r).string());
    inst.manifest = read_manifest(split_path(c, r).string());
    inst.embeddings = read_embeddings(embeddings_path(c, r).string());
    return inst;
}

// Train-side view: test targets and test ids are not visible to training.
RegionTaskInstance region_train_view(RegionTaskInstance inst) {
    const std::set<std::string> train(inst.manifest.train.begin(), inst.manifest.train.end());
    for (auto it = inst.targets.rows.begin(); it != inst.targets.rows.end();) {
        it = train.count(it->first.to_string()) ? std::next(it) : inst.targets.rows.erase(it);
    }
    inst.manifest.test.clear();
    return inst;
}

SequenceTaskInstance sequence_instance(const PipelineConfig& c, int r) {
    SequenceTaskInstance inst;
    inst.task = c.task == Task::tte ? SequenceTask::tte : SequenceTask::hmp;
    for (const auto& h : read_prepared_jsonl(prepared_path(c, r).string())) {
        inst.trajectories.push_back(segment_xy(h, c.target_fraction));
        inst.durations.push_back(h.duration_s);
    }
    inst.manifest = read_manifest(split_path(c, r).string());
    inst.embeddings = read_embeddings(embeddings_path(c, r).string());
    return inst;
}

SequenceTaskInstance sequence_train_view(SequenceTaskInstance inst) {
    const std::set<std::string> train(inst.manifest.train.begin(), inst.manifest.train.end());
    SequenceTaskInstance out;
    out.task = inst.task;
    out.embeddings = std::move(inst.embeddings);
    out.manifest = inst.manifest;
    out.manifest.test.clear();
    for (std::size_t i = 0; i < inst.trajectories.size(); ++i) {
        if (!train.count(inst.trajectories[i].id)) continue;
        out.trajectories.push_back(std::move(inst.trajectories[i]));
        out.durations.push_back(inst.durations[i]);
    }
    return out;
}

ojson checkpoint_config(const PipelineConfig& c, const ojson& description, std::uint64_t seed, int r, int run) {
    nn::TrainConfig t = c.train;
    t.seed = seed;
    return ojson{{"task", to_string(c.task)}, {"resolution", r}, {"run", run}, {"model", description}, {"train", nn::to_json(t)}};
}

ojson checkpoint_header(const fs::path& p) {
    const ojson j = read_json(p);
    try {
        return j.at("config");
    } catch (const nlohmann::json::exception& e) {
        fail(Errc::InvalidConfig, p.string() + ": " + e.what());
    }
}

std::string fmt(double v) {
    std::ostringstream s;
    s << std::setprecision(17) << v;
    return s.str();
}

std::string join_cells(const std::vector<CellId>& cells) {
    std::string out;
    for (CellId c : cells) out += (out.empty() ? "" : " ") + c.to_string();
    return out;
}

std::vector<RowSpec> table_rows(Task t) {
    switch (t) {
        case Task::strpp: return {{"MSE", 2}, {"RMSE", 0}, {"MAE", 0}, {"MAPE", 0}, {"sMAPE", 0}};
        case Task::hpp: return {{"MSE", 9}, {"RMSE", 4}, {"MAE", 4}, {"MAPE", 0}, {"sMAPE", 0}};
        case Task::cap: return {{"MSE", -3}, {"RMSE", -2}, {"MAE", -3}, {"R2", 0}};
        case Task::tte: return {{"MSE", 5}, {"RMSE", 3}, {"MAE", 2}, {"MAPE", 0}};
        case Task::hmp: return {};
    }
    return {};
}

std::string task_title(Task t) {
    switch (t) {
        case Task::strpp: return "STRPP";
        case Task::hpp: return "HPP";
        case Task::cap: return "CAP";
        case Task::tte: return "TTE";
        case Task::hmp: return "HMP";
    }
    return "?";
}

std::string embedder_label(const EmbedderConfig& e) {
    switch (e.kind) {
        case EmbedderKind::ce: return "CE";
        case EmbedderKind::cce: return "CCE";
        case EmbedderKind::external: return "external";
    }
    return "?";
}

}  // namespace

// ------------------------------------------------------------------ stages

void stage_ingest(const PipelineConfig& c) {
    staged(c, Stage::ingest, "ingest", [&] {
        fs::create_directories(data_dir(c));
        ojson summary;
        if (!is_trajectory_task(c.task)) {
            LoadResult<PointRecord> loaded;
            if (c.synthetic) {
                const fs::path raw = data_dir(c) / "synthetic_points.csv";
                write_points_csv(generate_points(*c.synthetic), raw.string());
                RawDatasetDescriptor d = normalized_points_descriptor(c);
                d.path = raw.string();
                loaded = load_points(d);
            } else {
                loaded = load_points(*c.dataset);
            }
            if (c.task != Task::cap) {
                for (const auto& p : loaded.items) {
                    if (!p.target) fail(Errc::MissingTarget, "point " + p.id + " has no target");
                }
            }
            write_points_csv(loaded.items, points_path(c).string());
            summary = {{"kind", "points"}, {"input_rows", loaded.input_rows}, {"dropped", loaded.drop_count}, {"items", loaded.items.size()}};
        } else {
            LoadResult<Trajectory> loaded;
            if (c.synthetic) {
                const auto trajs = generate_trajectories(*c.synthetic);
                const fs::path raw = data_dir(c) / "synthetic_plt";
                fs::remove_all(raw);
                write_plt_dir(trajs, raw.string());
                RawDatasetDescriptor d;
                d.format = DatasetFormat::geolife_plt_dir;
                d.path = raw.string();
                const double pad = c.synthetic->half_extent_deg + 1.0;
                d.bbox = BoundingBox{c.synthetic->center.lat() - pad, c.synthetic->center.lon() - pad, c.synthetic->center.lat() + pad,
                                     c.synthetic->center.lon() + pad};
                loaded = load_trajectories(d);
            } else {
                loaded = load_trajectories(*c.dataset);
            }
            write_raw_trajectories(loaded.items, trajectories_path(c));
            summary = {{"kind", "trajectories"}, {"input_rows", loaded.input_rows}, {"dropped", loaded.drop_count},
                       {"items", loaded.items.size()}};
        }
        if (c.embedder.kind != EmbedderKind::external) {
            std::vector<FeatureRecord> records;
            std::vector<std::string> filter;
            if (!c.embedder.synthetic_keys.empty()) {
                SynthSpec spec = *c.synthetic;
                spec.n = c.embedder.synthetic_records;
                records = generate_feature_records(spec, c.embedder.synthetic_keys);
                filter = c.embedder.synthetic_keys;
            } else {
                records = load_feature_records(c.embedder.features_path);
            }
            if (!c.embedder.tag_filter_path.empty()) filter = load_tag_filter(c.embedder.tag_filter_path);
            else if (!c.embedder.tag_filter.empty()) filter = c.embedder.tag_filter;
            if (filter.empty()) fail(Errc::EmptyFilter, "count embedders need a tag filter");
            std::sort(filter.begin(), filter.end());
            filter.erase(std::unique(filter.begin(), filter.end()), filter.end());
            write_feature_records(records, features_path(c).string());
            write_json(tag_filter_path(c), ojson(filter));
            summary["feature_records"] = records.size();
        }
        write_json(data_dir(c) / "ingest.json", summary);
    });
}

void stage_regionize(const PipelineConfig& c) {
    if (is_trajectory_task(c.task)) throw StageError(Stage::config, "regionize applies to region tasks; use hexify");
    staged(c, Stage::prepare, "regionize", [&] {
        const auto points = read_points(c);
        const TargetKind kind = c.task == Task::cap ? TargetKind::intensity : TargetKind::mean_value;
        for (int r : c.resolutions) {
            fs::create_directories(res_dir(c, r));
            const RegionDataset ds = aggregate(points, r, kind);
            write_region_dataset(ds, region_path(c, r).string());
            emit_choropleth(ds, (res_dir(c, r) / "choropleth.geojson").string());
            emit_histogram(ds, kHistogramBins, (res_dir(c, r) / "histogram.csv").string());
        }
    });
}

void stage_hexify(const PipelineConfig& c) {
    if (!is_trajectory_task(c.task)) throw StageError(Stage::config, "hexify applies to trajectory tasks; use regionize");
    staged(c, Stage::prepare, "hexify", [&] {
        const auto raw = read_raw_trajectories(trajectories_path(c));
        const int r = c.resolutions.front();
        fs::create_directories(res_dir(c, r));
        PrepareCounts counts;
        const auto prepared = prepare_trajectories(raw, r, c.gap, counts);
        if (prepared.empty()) fail(Errc::TooFewTrajectories, "no trajectory survived preparation");
        write_prepared_jsonl(prepared, prepared_path(c, r).string());
        std::vector<double> durations;
        for (const auto& h : prepared) durations.push_back(h.duration_s);
        emit_histogram(durations, kHistogramBins, (res_dir(c, r) / "duration_histogram.csv").string());
        write_json(res_dir(c, r) / "prepare.json",
                   ojson{{"input", counts.input}, {"dropped_short", counts.dropped_short}, {"split", counts.split},
                         {"dropped_pieces", counts.dropped_pieces}, {"output", prepared.size()}});
    });
}

void stage_split(const PipelineConfig& c) {
    staged(c, Stage::prepare, "split", [&] {
        for (int r : c.resolutions) {
            SplitConfig sc = c.split;
            sc.resolution = r;
            SplitManifest m;
            if (is_trajectory_task(c.task)) {
                const auto prepared = read_prepared_jsonl(prepared_path(c, r).string());
                if (c.split_manifest_path.empty()) {
                    m = split_trajectories(prepared, sc);
                } else {
                    std::vector<std::string> ids;
                    for (const auto& h : prepared) ids.push_back(h.id);
                    m = manifest_from_ids(c, r, ids);
                }
            } else {
                RegionDataset ds = read_region_dataset(region_path(c, r).string());
                if (c.split_manifest_path.empty()) {
                    m = split_points(ds, sc);
                } else {
                    std::vector<std::string> ids;
                    for (const auto& [cell, row] : ds.rows) ids.push_back(cell.to_string());
                    m = manifest_from_ids(c, r, ids);
                }
                if (c.task == Task::cap && c.normalization == NormalizationScope::train_only) {
                    std::vector<CellId> train;
                    for (const auto& id : m.train) train.push_back(CellId::from_string(id));
                    ds = renormalize_train_only(ds, train);
                }
                write_region_dataset(ds, targets_path(c, r).string());
            }
            write_manifest(m, split_path(c, r).string());
        }
    });
}

void stage_embed(const PipelineConfig& c) {
    staged(c, Stage::prepare, "embed", [&] {
        std::vector<FeatureRecord> records;
        std::vector<std::string> filter;
        if (c.embedder.kind != EmbedderKind::external) {
            records = load_feature_records(features_path(c).string());
            filter = load_filter(c);
        }
        for (int r : c.resolutions) {
            std::set<CellId> cell_set;
            if (is_trajectory_task(c.task)) {
                for (const auto& h : read_prepared_jsonl(prepared_path(c, r).string())) cell_set.insert(h.cells.begin(), h.cells.end());
            } else {
                for (const auto& [cell, row] : read_region_dataset(region_path(c, r).string()).rows) cell_set.insert(cell);
            }
            const auto cells = sorted_cells(cell_set);
            EmbeddingMatrix m;
            switch (c.embedder.kind) {
                case EmbedderKind::ce:
                    m = count_embed(ingest_feature_counts(records, r, filter), cells);
                    break;
                case EmbedderKind::cce:
                    m = contextual_count_embed(ingest_feature_counts(records, r, filter), cells, c.embedder.k, c.embedder.mode);
                    break;
                case EmbedderKind::external:
                    if (!c.embedder.external_path.empty()) {
                        m = read_embeddings(c.embedder.external_path);
                    } else if (c.embedder.synthetic_external == "coordinates") {
                        m = coordinate_embeddings(*c.synthetic, cells, c.embedder.synthetic_dim);
                    } else {
                        m = mixed_coordinate_embeddings(*c.synthetic, cells, c.embedder.synthetic_dim);
                    }
                    break;
            }
            write_embeddings(m, embeddings_path(c, r).string());
        }
    });
}

void stage_train(const PipelineConfig& c) {
    staged(c, Stage::train, "train", [&] {
        for (int r : c.resolutions) {
            for (int run = 0; run < c.runs; ++run) {
                nn::TrainConfig cfg = c.train;
                cfg.seed = run_seed(c, run);
                ojson log;
                if (is_trajectory_task(c.task)) {
                    const auto view = sequence_train_view(sequence_instance(c, r));
                    const auto res = c.task == Task::tte ? train_tte(view, cfg, c.model, false) : train_hmp(view, cfg, c.model, false);
                    const ojson desc = c.task == Task::tte ? res.tte->describe() : res.hmp->describe();
                    const nn::ParamStore& store = c.task == Task::tte ? res.tte->store : res.hmp->store;
                    nn::save_checkpoint(store, checkpoint_config(c, desc, cfg.seed, r, run), model_path(c, r, run).string());
                    log = {{"epoch_losses", res.epoch_losses}, {"missing_embeddings", res.missing_embeddings},
                           {"train_items", view.trajectories.size()}};
                } else {
                    const auto view = region_train_view(region_instance(c, r));
                    const auto res = c.task == Task::cap ? train_intensity_model(view, cfg, false) : train_region_regressor(view, cfg, false);
                    nn::save_checkpoint(res.model->store, checkpoint_config(c, res.model->describe(), cfg.seed, r, run),
                                        model_path(c, r, run).string());
                    log = {{"epoch_losses", res.epoch_losses}, {"missing_embeddings", res.missing_embeddings},
                           {"train_items", view.manifest.train.size()}};
                }
                write_json(train_log_path(c, r, run), ojson{{"resolution", r}, {"run", run}, {"seed", cfg.seed}, {"log", log}});
            }
        }
    });
}

void stage_evaluate(const PipelineConfig& c) {
    staged(c, Stage::evaluate, "evaluate", [&] {
        for (int r : c.resolutions) {
            std::vector<MetricReport> per_run;
            std::vector<std::vector<MetricReport>> horizons;
            for (int run = 0; run < c.runs; ++run) {
                const fs::path ckpt = model_path(c, r, run);
                const ojson header = checkpoint_header(ckpt);
                const ojson& desc = header.at("model");
                std::ofstream pred(res_dir(c, r) / ("predictions_run" + std::to_string(run) + ".csv"), std::ios::binary);
                if (!pred) fail(Errc::IOError, "cannot write predictions");
                if (c.task == Task::tte) {
                    const auto inst = sequence_instance(c, r);
                    auto model = tte_model_from_description(desc);
                    nn::load_checkpoint(model->store, ckpt.string());
                    const auto res = evaluate_tte(model, inst);
                    per_run.push_back(res.report);
                    pred << "index,target,prediction\n";
                    for (std::size_t i = 0; i < res.test_targets.size(); ++i) {
                        pred << i << ',' << fmt(res.test_targets[i]) << ',' << fmt(res.test_predictions[i]) << '\n';
                    }
                } else if (c.task == Task::hmp) {
                    const auto inst = sequence_instance(c, r);
                    auto model = hmp_model_from_description(desc);
                    nn::load_checkpoint(model->store, ckpt.string());
                    const auto res = evaluate_hmp(model, inst);
                    per_run.push_back(res.report);
                    horizons.push_back(res.horizon);
                    pred << "id,predicted,gold\n";
                    for (const auto& ro : res.rollouts) pred << ro.id << ',' << join_cells(ro.predicted) << ',' << join_cells(ro.gold) << '\n';
                } else {
                    const auto inst = region_instance(c, r);
                    auto model = region_model_from_description(desc);
                    nn::load_checkpoint(model->store, ckpt.string());
                    const auto res = evaluate_region_model(model, inst);
                    per_run.push_back(res.report);
                    pred << "cell,target,prediction\n";
                    for (std::size_t i = 0; i < res.test_cells.size(); ++i) {
                        pred << res.test_cells[i].to_string() << ',' << fmt(res.test_targets[i]) << ',' << fmt(res.test_predictions[i]) << '\n';
                    }
                }
            }
            ojson m;
            m["task"] = to_string(c.task);
            m["resolution"] = r;
            m["runs"] = ojson::array();
            for (const auto& rep : per_run) m["runs"].push_back(to_json(rep));
            m["aggregate"] = to_json(aggregate_runs(per_run));
            if (!horizons.empty()) {
                ojson hz = ojson::array();
                for (std::size_t k = 0; k < horizons.front().size(); ++k) {
                    std::vector<MetricReport> at_k;
                    for (const auto& h : horizons) at_k.push_back(h[k]);
                    hz.push_back(to_json(aggregate_runs(at_k)));
                }
                m["horizon"] = hz;
            }
            write_json(metrics_path(c, r), m);
        }
    });
}

std::string stage_report(const PipelineConfig& c) {
    std::string text;
    staged(c, Stage::evaluate, "report", [&] {
        const std::string title = task_title(c.task) + " (" + c.dataset_name + ", " + embedder_label(c.embedder) + ")";
        if (c.task == Task::hmp) {
            const int r = c.resolutions.front();
            const ojson m = read_json(metrics_path(c, r));
            std::vector<MetricReport> reps;
            for (const auto& h : m.at("horizon")) reps.push_back(metric_report_from_json(h));
            text = markdown_horizon_table(title + ", res " + std::to_string(r), reps);
        } else {
            std::vector<std::pair<std::string, MetricReport>> cols;
            for (int r : c.resolutions) {
                const ojson m = read_json(metrics_path(c, r));
                cols.emplace_back("Res " + std::to_string(r), metric_report_from_json(m.at("aggregate")));
                std::ofstream one(res_dir(c, r) / "report.md", std::ios::binary);
                if (!one) fail(Errc::IOError, "cannot write report.md");
                one << markdown_table(title, table_rows(c.task), {cols.back()});
            }
            text = markdown_table(title, table_rows(c.task), cols);
        }
        if (c.runs > 1) text += "\nValues are mean ± std over " + std::to_string(c.runs) + " runs.\n";
        std::ofstream out(out_root(c) / "report.md", std::ios::binary);
        if (!out) fail(Errc::IOError, "cannot write report.md");
        out << text;
    });
    return text;
}

ojson write_run_manifest(const PipelineConfig& c) {
    ojson m;
    m["format"] = "obsr-run-manifest";
    m["version"] = 1;
    m["config"] = to_json(c);
    ojson inputs = ojson::object();
    auto add_input = [&](const std::string& role, const std::string& p) {
        if (!p.empty() && fs::is_regular_file(p)) inputs[role] = {{"path", p}, {"sha256", sha256_file(p)}};
    };
    if (c.dataset) add_input("dataset", c.dataset->path);
    add_input("features", c.embedder.features_path);
    add_input("tag_filter", c.embedder.tag_filter_path);
    add_input("external_embeddings", c.embedder.external_path);
    add_input("split_manifest", c.split_manifest_path);
    m["inputs"] = inputs;

    std::vector<fs::path> files;
    for (const auto& e : fs::recursive_directory_iterator(out_root(c))) {
        if (!e.is_regular_file()) continue;
        const auto rel = fs::relative(e.path(), out_root(c));
        if (rel == "run_manifest.json" || rel == "timing.json") continue;
        files.push_back(rel);
    }
    std::sort(files.begin(), files.end());
    ojson artifacts = ojson::array();
    for (const auto& rel : files) {
        const fs::path full = out_root(c) / rel;
        artifacts.push_back({{"path", rel.generic_string()}, {"bytes", fs::file_size(full)}, {"sha256", sha256_file(full.string())}});
    }
    m["artifacts"] = artifacts;

    ojson per_res = ojson::array();
    for (int r : c.resolutions) {
        ojson e{{"resolution", r}};
        if (fs::exists(split_path(c, r))) e["split_sha256"] = sha256_file(split_path(c, r).string());
        ojson losses = ojson::array();
        for (int run = 0; run < c.runs; ++run) {
            if (fs::exists(train_log_path(c, r, run))) losses.push_back(read_json(train_log_path(c, r, run)).at("log").at("epoch_losses"));
        }
        e["epoch_losses"] = losses;
        if (fs::exists(metrics_path(c, r))) e["metrics"] = read_json(metrics_path(c, r)).at("aggregate");
        per_res.push_back(e);
    }
    m["results"] = per_res;
    write_json(manifest_path(c), m);
    return m;
}

RunOutcome run_pipeline(const PipelineConfig& c) {
    const auto t0 = std::chrono::steady_clock::now();
    std::optional<ojson> previous;
    if (fs::exists(manifest_path(c))) {
        try {
            previous = read_json(manifest_path(c));
        } catch (const Error&) {
            previous.reset();
        }
    }
    fs::create_directories(out_root(c));
    fs::remove(timing_path(c));
    stage_ingest(c);
    if (is_trajectory_task(c.task)) stage_hexify(c);
    else stage_regionize(c);
    stage_split(c);
    stage_embed(c);
    stage_train(c);
    stage_evaluate(c);
    stage_report(c);
    RunOutcome out;
    try {
        out.manifest = write_run_manifest(c);
    } catch (const std::exception& e) {
        throw StageError(Stage::evaluate, std::string("manifest: ") + e.what());
    }
    if (previous) out.matches_previous = *previous == out.manifest;
    out.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return out;
}

}  // namespace obsr
