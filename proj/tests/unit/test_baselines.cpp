#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <functional>
#include <set>
#include <unistd.h>

#include "obsr/baselines.hpp"
#include "obsr/synthdata.hpp"
#include "obsr/trajprep.hpp"

using namespace obsr;
namespace fs = std::filesystem;

namespace {

std::vector<CellId> study_cells(int radius) {
    std::vector<CellId> cells;
    for (CellId c : disk(cell_of(kSynthCenter, 9), radius)) cells.push_back(c);
    std::sort(cells.begin(), cells.end());
    return cells;
}

RegionTaskInstance region_instance(const std::function<double(const std::vector<double>&)>& target, TargetKind kind,
                                   std::uint64_t seed = 3) {
    SynthSpec spec;
    spec.seed = seed;
    const auto cells = study_cells(5);
    RegionTaskInstance inst;
    inst.embeddings = mixed_coordinate_embeddings(spec, cells, 4);
    inst.targets.resolution = 9;
    inst.targets.target_kind = kind;
    for (CellId c : cells) inst.targets.rows[c] = {target(inst.embeddings.vectors.at(c)), 1};
    SplitConfig sc;
    sc.seed = seed;
    inst.manifest = split_points(inst.targets, sc);
    return inst;
}

double sigmoid(double z) { return 1.0 / (1.0 + std::exp(-z)); }

nn::TrainConfig quick(Task t, int epochs) {
    auto cfg = default_train_config(t);
    cfg.epochs = epochs;
    cfg.seed = 9;
    return cfg;
}

SequenceTaskInstance walk_instance(SequenceTask task, std::size_t n, std::uint64_t seed = 4) {
    SynthSpec spec;
    spec.seed = seed;
    spec.n = n;
    spec.kind = task == SequenceTask::tte ? SynthKind::random_walks : SynthKind::constant_direction_walks;
    spec.walk_length = 8;
    spec.walk_length_max = 14;
    PrepareCounts counts;
    const auto prepared = prepare_trajectories(generate_trajectories(spec), 9, GapOptions{}, counts);
    SequenceTaskInstance inst;
    inst.task = task;
    std::set<CellId> cells;
    for (const auto& h : prepared) {
        inst.trajectories.push_back(segment_xy(h));
        inst.durations.push_back(h.duration_s);
        cells.insert(h.cells.begin(), h.cells.end());
    }
    const std::vector<CellId> cv(cells.begin(), cells.end());
    inst.embeddings = coordinate_embeddings(spec, cv, 3);
    SplitConfig sc;
    sc.seed = seed;
    sc.strat_source = task == SequenceTask::tte ? StratSource::duration : StratSource::length;
    inst.manifest = split_trajectories(prepared, sc);
    return inst;
}

SequenceModelOptions small_model() {
    SequenceModelOptions o;
    o.hidden = 12;
    o.layers = 2;
    o.heads = 2;
    return o;
}

Errc code_of(const std::function<void()>& f) {
    try {
        f();
    } catch (const Error& e) {
        return e.code();
    }
    FAIL("expected an error");
    return Errc::InvalidConfig;
}

struct TempFile {
    fs::path path = fs::temp_directory_path() / ("obsr_baselines_" + std::to_string(::getpid()) + ".json");
    ~TempFile() { fs::remove(path); }
};

}  // namespace

TEST_CASE("task names and defaults") {
    for (Task t : {Task::strpp, Task::hpp, Task::cap, Task::tte, Task::hmp}) CHECK(parse_task(to_string(t)) == t);
    CHECK_THROWS_AS(parse_task("taxi"), Error);
    CHECK(is_trajectory_task(Task::tte));
    CHECK_FALSE(is_trajectory_task(Task::cap));
    CHECK(default_train_config(Task::hpp).loss == nn::LossKind::smooth_l1);
    CHECK(default_train_config(Task::cap).loss == nn::LossKind::l1);
    CHECK(default_train_config(Task::tte).loss == nn::LossKind::l1);
    CHECK(default_train_config(Task::hmp).loss == nn::LossKind::hybrid_hmp);
    CHECK(default_train_config(Task::hmp).epochs == 10);
    CHECK(default_train_config(Task::strpp).epochs == 50);
    CHECK(default_train_config(Task::strpp).batch_size == 32);
    CHECK(default_train_config(Task::strpp).lr == 0.001);
}

TEST_CASE("standardizer uses population statistics and guards constant features") {
    const auto s = Standardizer::fit({{1, 5}, {3, 5}}, 2);
    CHECK(s.mean == std::vector<double>{2, 5});
    CHECK(s.scale == std::vector<double>{1, 1});
    const auto t = Standardizer::fit({{0}, {4}}, 1);
    CHECK(t.scale[0] == 2.0);
    double out = 0.0;
    t.apply({6}, &out);
    CHECK(out == 2.0);
    CHECK_THROWS_AS(t.apply({1, 2}, &out), Error);
    CHECK(to_json(standardizer_from_json(to_json(s))) == to_json(s));
}

TEST_CASE("region regressor: report layout and learnable linear target") {
    auto inst = region_instance([](const std::vector<double>& e) { return 2.0 + e[0] - 0.5 * e[1]; }, TargetKind::mean_value);
    const auto r = train_region_regressor(inst, quick(Task::hpp, 50));
    std::vector<std::string> names;
    for (const auto& [k, v] : r.report.entries) names.push_back(k);
    CHECK(names == std::vector<std::string>{"MSE", "RMSE", "MAE", "MAPE", "sMAPE"});
    CHECK(r.epoch_losses.size() == 50);
    CHECK(r.epoch_losses.back() < r.epoch_losses.front());
    CHECK(r.test_cells.size() == inst.manifest.test.size());
    CHECK(*r.report.get("RMSE") < 0.2);
    CHECK(r.missing_embeddings == 0);
}

TEST_CASE("region regressor: constant targets") {
    auto inst = region_instance([](const std::vector<double>&) { return 4.25; }, TargetKind::mean_value);
    const auto r = train_region_regressor(inst, quick(Task::hpp, 50));
    CHECK(*r.report.get("MAE") < 1e-3);
}

TEST_CASE("leakage audit covers exactly the train side") {
    auto inst = region_instance([](const std::vector<double>& e) { return e[0]; }, TargetKind::mean_value);
    const auto r = train_region_regressor(inst, quick(Task::hpp, 2));
    const std::set<std::string> train(inst.manifest.train.begin(), inst.manifest.train.end());
    CHECK(r.audit.fit_ids == train);
    for (const auto& id : inst.manifest.test) CHECK_FALSE(r.audit.fit_ids.count(id));

    // test-side embeddings cannot move the fitted standardizer
    auto shifted = inst;
    for (const auto& id : inst.manifest.test) {
        for (double& v : shifted.embeddings.vectors.at(CellId::from_string(id))) v += 100.0;
    }
    const auto r2 = train_region_regressor(shifted, quick(Task::hpp, 2));
    CHECK(r2.model->features.mean == r.model->features.mean);
    CHECK(r2.model->features.scale == r.model->features.scale);
    CHECK(r2.epoch_losses == r.epoch_losses);
}

TEST_CASE("missing embeddings get the zero vector and are counted") {
    auto inst = region_instance([](const std::vector<double>& e) { return e[0]; }, TargetKind::mean_value);
    inst.embeddings.vectors.erase(CellId::from_string(inst.manifest.test.front()));
    const auto r = train_region_regressor(inst, quick(Task::hpp, 1));
    CHECK(r.missing_embeddings == 1);
}

TEST_CASE("region training is deterministic and re-evaluation is exact") {
    auto inst = region_instance([](const std::vector<double>& e) { return e[0] + e[2]; }, TargetKind::mean_value);
    const auto a = train_region_regressor(inst, quick(Task::hpp, 5));
    const auto b = train_region_regressor(inst, quick(Task::hpp, 5));
    CHECK(a.epoch_losses == b.epoch_losses);
    CHECK(a.test_predictions == b.test_predictions);
    const auto again = evaluate_region_model(a.model, inst);
    CHECK(again.test_predictions == a.test_predictions);
    CHECK(to_json(again.report) == to_json(a.report));
}

TEST_CASE("region checkpoint reload reproduces predictions") {
    auto inst = region_instance([](const std::vector<double>& e) { return sigmoid(e[0]); }, TargetKind::intensity);
    const auto a = train_intensity_model(inst, quick(Task::cap, 3));
    TempFile f;
    nn::save_checkpoint(a.model->store, a.model->describe(), f.path.string());
    auto m = region_model_from_description(a.model->describe());
    const auto cfg = nn::load_checkpoint(m->store, f.path.string());
    CHECK(cfg == a.model->describe());
    const auto b = evaluate_region_model(m, inst);
    CHECK(b.test_predictions == a.test_predictions);
}

TEST_CASE("region errors") {
    auto inst = region_instance([](const std::vector<double>& e) { return e[0]; }, TargetKind::mean_value);
    CHECK(code_of([&] { train_intensity_model(inst, quick(Task::cap, 1)); }) == Errc::InvalidConfig);
    auto empty = inst;
    empty.manifest.train.clear();
    CHECK(code_of([&] { train_region_regressor(empty, quick(Task::hpp, 1)); }) == Errc::EmptyTrainSet);
    auto narrow = inst;
    narrow.embeddings.vectors.begin()->second.pop_back();
    CHECK(code_of([&] { train_region_regressor(narrow, quick(Task::hpp, 1)); }) == Errc::DimensionMismatch);
    const auto trained = train_region_regressor(inst, quick(Task::hpp, 1));
    auto wider = inst;
    wider.embeddings.dim = 5;
    CHECK(code_of([&] { evaluate_region_model(trained.model, wider); }) == Errc::DimensionMismatch);

    auto cap = region_instance([](const std::vector<double>& e) { return e[0]; }, TargetKind::intensity);
    CHECK(code_of([&] { train_intensity_model(cap, quick(Task::cap, 1)); }) == Errc::TargetOutOfRange);
}

TEST_CASE("intensity model: sigmoid-linear targets are recovered, outputs stay in (0, 1)") {
    auto inst = region_instance([](const std::vector<double>& e) { return sigmoid(2.0 * e[0] - 1.5 * e[1] + 0.3); },
                                TargetKind::intensity);
    const auto r = train_intensity_model(inst, quick(Task::cap, 50));
    for (double p : r.test_predictions) {
        CHECK(p > 0.0);
        CHECK(p < 1.0);
    }
    std::vector<std::string> names;
    for (const auto& [k, v] : r.report.entries) names.push_back(k);
    CHECK(names == std::vector<std::string>{"MSE", "RMSE", "MAE", "R2"});
    CHECK(r.report.task == "cap");
    CHECK(*r.report.get("R2") > 0.8);
}

TEST_CASE("geo costs are zero for the gold neighbor and grow with distance") {
    const CellId c = cell_of(kSynthCenter, 9);
    for (int d = 0; d < 6; ++d) {
        const CellId gold = neighbor_in_direction(c, DirectionLabel(d));
        const auto cost = geo_costs(c, gold);
        CHECK(cost[static_cast<std::size_t>(d)] == 0.0);
        const int opposite = DirectionLabel(d).opposite().value();
        for (int k = 0; k < 6; ++k) {
            if (k != d) CHECK(cost[static_cast<std::size_t>(k)] > 0.0);
            if (k != opposite) CHECK(cost[static_cast<std::size_t>(k)] < cost[static_cast<std::size_t>(opposite)]);
        }
    }
}

TEST_CASE("sequence options round-trip and validate") {
    SequenceModelOptions o = small_model();
    o.ks = {1, 2};
    CHECK(to_json(sequence_options_from_json(to_json(o))) == to_json(o));
    auto j = to_json(o);
    j["hidden"] = 0;
    CHECK_THROWS_AS(sequence_options_from_json(j), Error);
    j = to_json(o);
    j["ks"] = nlohmann::ordered_json::array();
    CHECK_THROWS_AS(sequence_options_from_json(j), Error);
}

TEST_CASE("TTE: a single trajectory is overfit, predictions are non-negative scalars") {
    auto inst = walk_instance(SequenceTask::tte, 10);
    inst.manifest.train = {inst.trajectories[0].id};
    inst.manifest.test = {inst.trajectories[1].id, inst.trajectories[2].id};
    const auto r = train_tte(inst, quick(Task::tte, 40), small_model());
    REQUIRE(r.epoch_losses.size() == 40);
    CHECK(r.epoch_losses.back() < r.epoch_losses.front());
    CHECK(r.test_predictions.size() == 2);
    for (double p : r.test_predictions) {
        CHECK(std::isfinite(p));
        CHECK(p >= 0.0);
    }
    CHECK(r.tte->duration_scale == inst.durations[0]);
    CHECK(r.audit.fit_ids == std::set<std::string>{inst.trajectories[0].id});

    auto own = inst;
    own.manifest.test = own.manifest.train;
    own.manifest.train.clear();
    const auto fit = evaluate_tte(r.tte, own);
    CHECK(std::abs(fit.test_predictions[0] - inst.durations[0]) < 0.01 * inst.durations[0]);
}

TEST_CASE("TTE: report layout, determinism, re-evaluation and reload") {
    auto inst = walk_instance(SequenceTask::tte, 40);
    const auto a = train_tte(inst, quick(Task::tte, 3), small_model());
    const auto b = train_tte(inst, quick(Task::tte, 3), small_model());
    CHECK(a.epoch_losses == b.epoch_losses);
    CHECK(a.test_predictions == b.test_predictions);
    std::vector<std::string> names;
    for (const auto& [k, v] : a.report.entries) names.push_back(k);
    CHECK(names == std::vector<std::string>{"MSE", "RMSE", "MAE", "MAPE", "sMAPE"});
    CHECK(a.report.task == "tte");
    for (const auto& id : inst.manifest.test) CHECK_FALSE(a.audit.fit_ids.count(id));

    CHECK(evaluate_tte(a.tte, inst).test_predictions == a.test_predictions);
    TempFile f;
    nn::save_checkpoint(a.tte->store, a.tte->describe(), f.path.string());
    auto m = tte_model_from_description(a.tte->describe());
    nn::load_checkpoint(m->store, f.path.string());
    CHECK(evaluate_tte(m, inst).test_predictions == a.test_predictions);
}

TEST_CASE("TTE errors") {
    auto inst = walk_instance(SequenceTask::tte, 10);
    auto bad = inst;
    bad.durations[3] = 0.0;
    CHECK(code_of([&] { train_tte(bad, quick(Task::tte, 1), small_model()); }) == Errc::NonPositiveDuration);
    bad = inst;
    bad.trajectories[2].x.clear();
    CHECK(code_of([&] { train_tte(bad, quick(Task::tte, 1), small_model()); }) == Errc::EmptySequence);
    bad = inst;
    bad.task = SequenceTask::hmp;
    CHECK(code_of([&] { train_tte(bad, quick(Task::tte, 1), small_model()); }) == Errc::InvalidConfig);
    bad = inst;
    bad.manifest.train.clear();
    CHECK(code_of([&] { train_tte(bad, quick(Task::tte, 1), small_model()); }) == Errc::EmptyTrainSet);
}

TEST_CASE("HMP: rollouts are contiguous and k=1 metrics agree") {
    auto inst = walk_instance(SequenceTask::hmp, 30);
    auto opt = small_model();
    opt.ks = {1, 3};
    const auto r = train_hmp(inst, quick(Task::hmp, 2), opt);
    REQUIRE(r.horizon.size() == 2);
    CHECK(r.horizon[0].k == 1);
    CHECK(r.horizon[1].k == 3);
    CHECK(r.report.get("H Dist") == r.horizon[0].get("H Dist"));
    CHECK(*r.horizon[0].get("H Dist") == doctest::Approx(*r.horizon[0].get("DTW Dist")).epsilon(1e-12));
    CHECK(r.rollouts.size() == inst.manifest.test.size());
    for (const auto& ro : r.rollouts) {
        CHECK(ro.predicted.size() == ro.gold.size());
        const auto& t = *std::find_if(inst.trajectories.begin(), inst.trajectories.end(),
                                      [&](const SegmentedTrajectory& s) { return s.id == ro.id; });
        std::vector<CellId> path{t.x.back()};
        path.insert(path.end(), ro.predicted.begin(), ro.predicted.end());
        CHECK(is_contiguous(path));
    }
    for (const auto& id : inst.manifest.test) CHECK_FALSE(r.audit.fit_ids.count(id));

    const auto again = evaluate_hmp(r.hmp, inst);
    CHECK(to_json(again.report) == to_json(r.report));
    TempFile f;
    nn::save_checkpoint(r.hmp->store, r.hmp->describe(), f.path.string());
    auto m = hmp_model_from_description(r.hmp->describe());
    nn::load_checkpoint(m->store, f.path.string());
    const auto reloaded = evaluate_hmp(m, inst);
    for (std::size_t i = 0; i < r.rollouts.size(); ++i) CHECK(reloaded.rollouts[i].predicted == r.rollouts[i].predicted);
}

TEST_CASE("HMP: loss endpoints and determinism") {
    auto inst = walk_instance(SequenceTask::hmp, 12);
    auto ce = quick(Task::hmp, 1);
    ce.loss = nn::LossKind::cross_entropy;
    auto w0 = quick(Task::hmp, 1);
    w0.geo_weight = 0.0;
    const auto a = train_hmp(inst, ce, small_model());
    const auto b = train_hmp(inst, w0, small_model());
    CHECK(a.epoch_losses == b.epoch_losses);  // w = 0 is plain cross-entropy

    auto w1 = quick(Task::hmp, 1);
    w1.geo_weight = 1.0;
    const auto c = train_hmp(inst, w1, small_model());
    CHECK(c.epoch_losses != a.epoch_losses);
    CHECK(train_hmp(inst, w1, small_model()).epoch_losses == c.epoch_losses);

    auto l1 = quick(Task::hmp, 1);
    l1.loss = nn::LossKind::l1;
    CHECK(code_of([&] { train_hmp(inst, l1, small_model()); }) == Errc::InvalidConfig);
}

TEST_CASE("HMP rollout on an untrained model still moves between neighbors") {
    const HmpModel model(3, small_model(), 1);
    EmbeddingMatrix empty;
    empty.dim = 3;
    const CellId start = cell_of(kSynthCenter, 9);
    std::size_t missing = 0;
    const auto out = hmp_rollout(model, empty, {start}, 6, &missing);
    REQUIRE(out.size() == 6);
    std::vector<CellId> path{start};
    path.insert(path.end(), out.begin(), out.end());
    CHECK(is_contiguous(path));
    CHECK(missing == 6);  // start plus five fed-back cells
    CHECK_THROWS_AS(hmp_rollout(model, empty, {}, 3), Error);
}
