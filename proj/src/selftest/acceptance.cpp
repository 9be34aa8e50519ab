#include "obsr/selftest/acceptance.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

#include "obsr/baselines.hpp"
#include "obsr/embed.hpp"
#include "obsr/exec.hpp"
#include "obsr/metrics.hpp"
#include "obsr/nn.hpp"
#include "obsr/pipeline.hpp"
#include "obsr/regionize.hpp"
#include "obsr/selftest/oracles.hpp"
#include "obsr/splitter.hpp"
#include "obsr/synthdata.hpp"
#include "obsr/trajprep.hpp"

#ifndef OBSR_CONFIGS_DIR
#define OBSR_CONFIGS_DIR "configs"
#endif

namespace obsr::acceptance {

namespace fs = std::filesystem;

namespace {

// Counts checks and keeps the first failure for the report line.
class Checker {
public:
    bool expect(bool ok, const std::string& what) {
        ++checks_;
        if (!ok) {
            if (failed_ == 0) first_ = what;
            ++failed_;
        }
        return ok;
    }
    bool ok() const { return failed_ == 0; }
    std::string detail(const std::string& summary) const {
        if (ok()) return summary;
        return std::to_string(failed_) + "/" + std::to_string(checks_) + " checks failed, first: " + first_;
    }

private:
    std::size_t checks_ = 0;
    std::size_t failed_ = 0;
    std::string first_;
};

std::string fmt(const char* f, double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, f, v);
    return buf;
}

double stddev(const std::vector<double>& v) {
    double m = 0.0;
    for (double x : v) m += x;
    m /= static_cast<double>(v.size());
    double s = 0.0;
    for (double x : v) s += (x - m) * (x - m);
    return std::sqrt(s / static_cast<double>(v.size()));
}

std::vector<double> targets_of(const RegionDataset& ds) {
    std::vector<double> out;
    for (const auto& [c, row] : ds.rows) out.push_back(row.target);
    return out;
}

// ------------------------------------------------------------------ 1

CriterionResult split_correctness() {
    Checker ck;
    CounterRng rng(derive_seed(1, "acceptance-split"));
    std::size_t buckets = 0;
    double worst = 0.0;
    for (int d = 0; d < 50; ++d) {
        SynthSpec spec;
        spec.n = 100 + rng.below(4901);
        spec.seed = static_cast<std::uint64_t>(d);
        spec.noise_sigma = 0.1;
        const auto pts = generate_points(spec);
        SplitConfig cfg;
        cfg.seed = static_cast<std::uint64_t>(d);
        cfg.strat_source = d % 2 ? StratSource::point_count : StratSource::target;
        const auto m = split_points(pts, cfg);
        const std::set<std::string> train(m.train.begin(), m.train.end());
        const std::set<std::string> test(m.test.begin(), m.test.end());
        const std::string tag = "dataset " + std::to_string(d);
        for (const auto& c : m.test) ck.expect(!train.count(c), tag + ": cell " + c + " on both sides");
        const auto parts = assign_points(pts, m);
        ck.expect(parts.excluded == 0 && parts.train.size() + parts.test.size() == pts.size(), tag + ": points lost");
        for (const auto& p : parts.train) ck.expect(train.count(cell_of(p.point, cfg.resolution).to_string()) == 1, tag + ": train point off its cell");
        for (const auto& p : parts.test) ck.expect(test.count(cell_of(p.point, cfg.resolution).to_string()) == 1, tag + ": test point off its cell");
        for (const auto& b : m.bucket_report) {
            if (b.size < 20) continue;
            ++buckets;
            const double dev = std::abs(b.achieved_fraction - cfg.test_fraction);
            worst = std::max(worst, dev);
            ck.expect(dev <= 0.05, tag + ": bucket " + std::to_string(b.bucket) + " test fraction " + fmt("%.3f", b.achieved_fraction));
        }
    }
    return {1, "split correctness", ck.ok(), ck.detail(std::to_string(buckets) + " buckets >= 20 cells, worst deviation " + fmt("%.4f", worst)), 0.0};
}

// ------------------------------------------------------------------ 2

CriterionResult split_determinism() {
    Checker ck;
    SynthSpec spec;
    spec.n = 4000;
    spec.seed = 2;
    spec.noise_sigma = 0.1;
    const auto pts = generate_points(spec);
    SynthSpec walks;
    walks.kind = SynthKind::random_walks;
    walks.n = 300;
    walks.seed = 2;
    walks.walk_length_max = 40;
    PrepareCounts counts;
    const auto trajs = prepare_trajectories(generate_trajectories(walks), 9, GapOptions{}, counts);
    SplitConfig pc;
    pc.seed = 7;
    SplitConfig tc = pc;
    tc.strat_source = StratSource::duration;

    const int restore = max_threads();
    std::string ref_points, ref_trajs;
    for (int threads : {1, 4, 8}) {
        set_threads(threads);
        for (int rep = 0; rep < 3; ++rep) {
            const std::string p = manifest_text(split_points(pts, pc));
            const std::string t = manifest_text(split_trajectories(trajs, tc));
            if (ref_points.empty()) {
                ref_points = p;
                ref_trajs = t;
            }
            const std::string tag = std::to_string(threads) + " threads, run " + std::to_string(rep);
            ck.expect(p == ref_points, tag + ": point manifest differs");
            ck.expect(t == ref_trajs, tag + ": trajectory manifest differs");
        }
    }
    set_threads(restore);
    return {2, "split determinism", ck.ok(),
            ck.detail("9 point and 9 trajectory manifests identical (sha256 " + sha256_hex(ref_points).substr(0, 12) + ", " +
                      sha256_hex(ref_trajs).substr(0, 12) + ")"),
            0.0};
}

// ------------------------------------------------------------------ 3

CriterionResult grid_contract() {
    Checker ck;
    CounterRng rng(derive_seed(3, "acceptance-grid"));
    for (int pair = 0; pair < 200; ++pair) {
        const CellId a = cell_of(oracle::random_point(kSynthCenter, 1.0, rng), 9);
        const auto bfs = oracle::bfs_distances(a, 10);
        std::vector<std::pair<CellId, int>> reach(bfs.begin(), bfs.end());
        std::sort(reach.begin(), reach.end());
        const auto [b, d] = reach[rng.below(reach.size())];
        const std::string tag = "pair " + a.to_string() + "->" + b.to_string();
        ck.expect(grid_distance(a, b) == d, tag + ": distance");
        std::set<CellId> want_ring, want_disk;
        for (const auto& [c, k] : bfs) {
            if (k == d) want_ring.insert(c);
            if (k <= d) want_disk.insert(c);
        }
        const auto r = ring(a, d);
        const auto dk = disk(a, d);
        ck.expect(std::set<CellId>(r.begin(), r.end()) == want_ring && r.size() == want_ring.size(), tag + ": ring");
        ck.expect(std::set<CellId>(dk.begin(), dk.end()) == want_disk && dk.size() == want_disk.size(), tag + ": disk");
        const auto path = grid_path(a, b);
        ck.expect(path.size() == static_cast<std::size_t>(d) + 1 && path.front() == a && path.back() == b, tag + ": path endpoints");
        ck.expect(is_contiguous(path), tag + ": path contiguity");
    }
    return {3, "grid contract", ck.ok(), ck.detail("200 pairs agree with BFS"), 0.0};
}

// ------------------------------------------------------------------ 4

CriterionResult trajectory_preparation() {
    Checker ck;
    SynthSpec gappy;
    gappy.kind = SynthKind::gappy_walks;
    gappy.gap_rate = 0.3;
    gappy.n = 100;
    gappy.seed = 4;
    gappy.walk_length = 10;
    gappy.walk_length_max = 40;
    PrepareCounts counts;
    const auto hexed = hexify_all(generate_trajectories(gappy), 9, counts);
    ck.expect(hexed.size() == 100, "gappy walks lost during hexify");
    std::size_t bridged = 0;
    for (const auto& h : hexed) {
        std::size_t expected = h.cells.size();
        for (std::size_t i = 1; i < h.cells.size(); ++i) {
            const auto bfs = oracle::bfs_distances(h.cells[i - 1], 10);
            const auto it = bfs.find(h.cells[i]);
            if (!ck.expect(it != bfs.end(), h.id + ": gap beyond the oracle depth")) continue;
            expected += static_cast<std::size_t>(it->second - 1);
            bridged += static_cast<std::size_t>(it->second - 1);
        }
        const auto out = interpolate_gaps(h);
        if (!ck.expect(out.size() == 1, h.id + ": unexpected split")) continue;
        ck.expect(is_contiguous(out[0].cells), h.id + ": not contiguous");
        ck.expect(out[0].cells.size() == expected, h.id + ": length accounting");
        ck.expect(interpolate_gaps(out[0]) == out, h.id + ": not idempotent");
    }
    SynthSpec rw;
    rw.kind = SynthKind::random_walks;
    rw.n = 500;
    rw.seed = 4;
    rw.walk_length = 10;
    rw.walk_length_max = 40;
    for (const auto& t : generate_trajectories(rw)) {
        std::vector<CellId> cells;
        for (const auto& s : t.samples) cells.push_back(cell_of(s.point, 9));
        if (!ck.expect(is_contiguous(cells), t.id + ": walk not contiguous")) continue;
        ck.expect(decode_directions(cells.front(), encode_directions(cells)) == cells, t.id + ": round trip");
    }
    return {4, "trajectory preparation", ck.ok(), ck.detail("100 gappy walks, " + std::to_string(bridged) + " bridged cells; 500 round trips"),
            0.0};
}

// ------------------------------------------------------------------ 5

CriterionResult metric_oracles() {
    Checker ck;
    CounterRng rng(derive_seed(5, "acceptance-metrics"));
    auto walk = [&](std::size_t n) {
        std::vector<CellId> cells{cell_of(oracle::random_point(kSynthCenter, 0.05, rng), 9)};
        while (cells.size() < n) cells.push_back(neighbor_in_direction(cells.back(), DirectionLabel(static_cast<int>(rng.below(6)))));
        return cells;
    };
    int pairs = 0;
    for (std::size_t n = 1; n <= 6; ++n) {
        for (std::size_t m = 1; m <= 6; ++m) {
            for (int rep = 0; rep < 5; ++rep) {
                const auto a = walk(n);
                const auto b = walk(m);
                std::vector<std::vector<double>> cost(n, std::vector<double>(m));
                for (std::size_t i = 0; i < n; ++i)
                    for (std::size_t j = 0; j < m; ++j) cost[i][j] = haversine(centroid(a[i]), centroid(b[j]));
                const double want = oracle::recursive_dtw(cost);
                const double got = dtw_haversine(a, b, 10);
                ck.expect(std::abs(got - want) <= 1e-9 * std::max(1.0, want), "DTW mismatch at lengths " + std::to_string(n) + "x" + std::to_string(m));
                ck.expect(dtw_haversine(a, b, 1) == avg_haversine(a, b, 1), "k=1 DTW differs from avg-haversine");
                ++pairs;
            }
        }
    }
    const double h = haversine(GeoPoint(0, 0), GeoPoint(0, 1));
    ck.expect(std::abs(h - 111195.0) / 111195.0 < 1e-3, "haversine(0,0 -> 0,1) = " + fmt("%.1f", h));
    for (int i = 0; i < 200; ++i) {
        const GeoPoint a = oracle::random_point(kSynthCenter, 2.0, rng);
        const GeoPoint b = oracle::random_point(kSynthCenter, 2.0, rng);
        const double want = oracle::cosine_law_distance_m(a, b);
        ck.expect(std::abs(haversine(a, b) - want) <= 1e-6 * want, "haversine disagrees with the law of cosines");
    }

    const auto r1 = regression_metrics(std::vector<double>{100}, std::vector<double>{50});
    ck.expect(*r1.get("MSE") == 2500.0 && *r1.get("RMSE") == 50.0 && *r1.get("MAE") == 50.0, "MSE/RMSE/MAE fixture");
    ck.expect(std::abs(*r1.get("MAPE") - 50.0) < 1e-9, "MAPE fixture");
    ck.expect(std::abs(*r1.get("sMAPE") - 200.0 / 3.0) < 1e-9, "sMAPE fixture");
    const auto r2f = regression_metrics(std::vector<double>{0, 10}, std::vector<double>{0, 20});
    ck.expect(r2f.get("MAPE") && std::abs(*r2f.get("MAPE") - 100.0) < 1e-9, "MAPE zero exclusion");
    ck.expect(std::abs(*r2f.get("sMAPE") - 100.0 / 3.0) < 1e-9, "sMAPE 0/0 term");
    ck.expect(std::abs(r2(std::vector<double>{0, 1}, std::vector<double>{1, 0}) + 3.0) < 1e-9, "negative R2 fixture");
    ck.expect(std::abs(r2(std::vector<double>{1, 2, 3, 4}, std::vector<double>{1, 2, 3, 4}) - 1.0) < 1e-9, "perfect R2 fixture");
    return {5, "metric oracles", ck.ok(), ck.detail(std::to_string(pairs) + " DTW pairs exact; haversine " + fmt("%.2f m", h)), 0.0};
}

// ------------------------------------------------------------------ 6

nn::Tensor2 random_tensor(std::size_t r, std::size_t c, CounterRng& rng, double scale = 1.0) {
    nn::Tensor2 t(r, c);
    for (double& x : t.data()) x = rng.uniform(-scale, scale);
    return t;
}

// Values bounded away from zero, so ReLU and L1 kinks are never straddled.
nn::Tensor2 off_zero_tensor(std::size_t r, std::size_t c, CounterRng& rng) {
    nn::Tensor2 t(r, c);
    for (double& x : t.data()) x = (rng.uniform() < 0.5 ? -1.0 : 1.0) * rng.uniform(0.1, 1.0);
    return t;
}

nn::Param& as_param(nn::ParamStore& store, const std::string& name, const nn::Tensor2& x) {
    nn::Param& p = store.add(name, x.rows(), x.cols());
    p.value = x;
    return p;
}

void add_grad(nn::Param& p, const nn::Tensor2& g) {
    for (std::size_t i = 0; i < g.size(); ++i) p.grad.data()[i] += g.data()[i];
    p.has_grad = true;
}

double project(const nn::Tensor2& y, const nn::Tensor2& w, nn::Tensor2* dy) {
    double s = 0.0;
    for (std::size_t i = 0; i < y.size(); ++i) s += y.data()[i] * w.data()[i];
    if (dy) *dy = w;
    return s;
}

CriterionResult gradient_fidelity() {
    using namespace nn;
    constexpr double kTol = 1e-4;
    Checker ck;
    CounterRng rng(derive_seed(6, "acceptance-grad"));
    double worst = 0.0;
    auto check = [&](const std::string& what, ParamStore& store, const std::function<double(bool)>& loss) {
        const auto rep = grad_check(store, loss, kTol);
        worst = std::max(worst, rep.worst);
        ck.expect(rep.passed, what + " rel error " + fmt("%.2e", rep.worst));
    };
    for (int trial = 0; trial < 3; ++trial) {
        const std::size_t b = 2 + rng.below(3);
        {
            ParamStore store;
            Dense layer(store, "d", 3 + rng.below(3), 2 + rng.below(3), rng);
            Param& x = as_param(store, "x", random_tensor(b, layer.in(), rng));
            const Tensor2 w = random_tensor(b, layer.out(), rng);
            check("dense", store, [&](bool grad) {
                Tensor2 dy;
                const double l = project(layer.forward(x.value), w, &dy);
                if (grad) add_grad(x, layer.backward(x.value, dy));
                return l;
            });
        }
        {
            ParamStore store;
            Param& x = as_param(store, "x", off_zero_tensor(b, 4, rng));
            const Tensor2 w = random_tensor(b, 4, rng);
            check("relu", store, [&](bool grad) {
                Tensor2 dy;
                const double l = project(relu(x.value), w, &dy);
                if (grad) add_grad(x, relu_backward(x.value, dy));
                return l;
            });
        }
        {
            ParamStore store;
            Param& x = as_param(store, "x", random_tensor(b, 4, rng, 3.0));
            const Tensor2 w = random_tensor(b, 4, rng);
            check("sigmoid", store, [&](bool grad) {
                Tensor2 dy;
                const Tensor2 y = sigmoid(x.value);
                const double l = project(y, w, &dy);
                if (grad) add_grad(x, sigmoid_backward(y, dy));
                return l;
            });
        }
        {
            ParamStore store;
            LstmLayer layer(store, "lstm", 3, 4, rng);
            Param& x = as_param(store, "x", random_tensor(b, 3, rng));
            const Tensor2 w = random_tensor(b, 4, rng);
            check("lstm step", store, [&](bool grad) {
                LstmLayer::Cache cache;
                const Tensor2 h = layer.forward(x.value, 1, cache);
                Tensor2 dh;
                const double l = project(h, w, &dh);
                if (grad) add_grad(x, layer.backward(cache, dh));
                return l;
            });
        }
        {
            ParamStore store;
            LstmStack stack(store, "lstm", 3, 4, 2, rng);
            Param& x = as_param(store, "x", random_tensor(3 * b, 3, rng));
            const Tensor2 w = random_tensor(3 * b, 4, rng);
            check("lstm sequence", store, [&](bool grad) {
                LstmStack::Cache cache;
                const Tensor2 h = stack.forward(x.value, 3, cache);
                Tensor2 dh;
                const double l = project(h, w, &dh);
                if (grad) add_grad(x, stack.backward(cache, dh));
                return l;
            });
        }
        for (bool causal : {true, false}) {
            ParamStore store;
            MultiHeadAttention mha(store, "mha", 4, 2, causal, rng);
            Param& q = as_param(store, "q", random_tensor(3 * b, 4, rng));
            Param& k = as_param(store, "k", random_tensor(3 * b, 4, rng));
            Param& v = as_param(store, "v", random_tensor(3 * b, 4, rng));
            const Tensor2 w = random_tensor(3 * b, 4, rng);
            check(causal ? "causal attention" : "attention", store, [&](bool grad) {
                MultiHeadAttention::Cache cache;
                Tensor2 dy;
                const double l = project(mha.forward(q.value, k.value, v.value, 3, cache), w, &dy);
                if (grad) {
                    const auto g = mha.backward(cache, dy);
                    add_grad(q, g.dq);
                    add_grad(k, g.dk);
                    add_grad(v, g.dv);
                }
                return l;
            });
        }
        {
            ParamStore store;
            const Tensor2 target = random_tensor(b, 3, rng, 2.0);
            Tensor2 start = target;
            const Tensor2 off = off_zero_tensor(b, 3, rng);
            for (std::size_t i = 0; i < start.size(); ++i) start.data()[i] += 2.0 * off.data()[i];
            Param& p = as_param(store, "pred", start);
            check("smooth l1", store, [&](bool grad) {
                const auto out = smooth_l1(p.value, target);
                if (grad) add_grad(p, out.grad);
                return out.value;
            });
        }
        {
            ParamStore store;
            const Tensor2 target = random_tensor(b, 3, rng);
            Tensor2 start = target;
            const Tensor2 off = off_zero_tensor(b, 3, rng);
            for (std::size_t i = 0; i < start.size(); ++i) start.data()[i] += off.data()[i];
            Param& p = as_param(store, "pred", start);
            check("l1", store, [&](bool grad) {
                const auto out = l1(p.value, target);
                if (grad) add_grad(p, out.grad);
                return out.value;
            });
        }
        std::vector<int> cls;
        for (std::size_t i = 0; i < b; ++i) cls.push_back(static_cast<int>(rng.below(6)));
        {
            ParamStore store;
            Param& z = as_param(store, "logits", random_tensor(b, 6, rng, 2.0));
            check("cross entropy", store, [&](bool grad) {
                const auto out = cross_entropy(z.value, cls);
                if (grad) add_grad(z, out.grad);
                return out.value;
            });
        }
        {
            ParamStore store;
            Param& z = as_param(store, "logits", random_tensor(b, 6, rng, 2.0));
            const Tensor2 cost = random_tensor(b, 6, rng, 3.0);
            check("hybrid loss", store, [&](bool grad) {
                const auto out = hybrid_loss(z.value, cls, cost, 0.7);
                if (grad) add_grad(z, out.grad);
                return out.value;
            });
        }
    }
    return {6, "gradient fidelity", ck.ok(), ck.detail("36 checks, worst rel error " + fmt("%.2e", worst)), 0.0};
}

// ------------------------------------------------------------------ 7

CriterionResult adam_algebra() {
    using namespace nn;
    Checker ck;
    CounterRng rng(derive_seed(7, "acceptance-adam"));
    double worst = 0.0;
    for (int i = 0; i < 1000; ++i) {
        ParamStore store;
        Param& w = store.add("w", 1, 1);
        const double start = rng.uniform(-1, 1);
        const double mag = std::pow(10.0, rng.uniform(-3.0, 2.0));
        const double g = rng.uniform() < 0.5 ? -mag : mag;
        w.value(0, 0) = start;
        w.grad(0, 0) = g;
        w.has_grad = true;
        AdamConfig cfg;
        cfg.lr = i % 2 ? 0.001 : 0.1;
        adam_step(store, cfg);
        const double dev = std::abs((w.value(0, 0) - start) + cfg.lr * (g > 0 ? 1.0 : -1.0));
        worst = std::max(worst, dev);
        ck.expect(dev <= 1e-6, "first step off by " + fmt("%.2e", dev) + " at g=" + fmt("%.3g", g));
    }
    ParamStore store;
    Param& q = store.add("q", 1, 1);
    AdamConfig fast;
    fast.lr = 0.1;
    for (int i = 0; i < 200; ++i) {
        q.grad(0, 0) = 2.0 * (q.value(0, 0) - 3.0);
        q.has_grad = true;
        adam_step(store, fast);
    }
    const double gap = std::abs(q.value(0, 0) - 3.0);
    ck.expect(gap < 0.05, "quadratic |w-3| = " + fmt("%.4f", gap));
    return {7, "adam first step", ck.ok(), ck.detail("worst first-step deviation " + fmt("%.2e", worst) + ", quadratic |w-3| " + fmt("%.4f", gap)),
            0.0};
}

// ------------------------------------------------------------------ 8

constexpr std::uint64_t kLearnSeed = 1;

CriterionResult regression_recoverability() {
    Checker ck;
    SynthSpec spec;
    spec.kind = SynthKind::linear_price_field;
    spec.noise_sigma = 0.01;
    spec.seed = kLearnSeed;
    std::set<CellId> cell_set;
    CounterRng pick(derive_seed(kLearnSeed, "acceptance-cells"));
    while (cell_set.size() < 100) cell_set.insert(cell_of(oracle::random_point(spec.center, spec.half_extent_deg, pick), 9));
    const std::vector<CellId> cells(cell_set.begin(), cell_set.end());

    RegionTaskInstance inst;
    inst.embeddings = mixed_coordinate_embeddings(spec, cells, 5);
    inst.targets.resolution = 9;
    inst.targets.target_kind = TargetKind::mean_value;
    CounterRng noise(derive_seed(kLearnSeed, "acceptance-noise"));
    for (CellId c : cells) inst.targets.rows[c] = {linear_field_value(spec, centroid(c)) + spec.noise_sigma * noise.normal(), 1};
    SplitConfig sc;
    sc.seed = kLearnSeed;
    inst.manifest = split_points(inst.targets, sc);

    nn::TrainConfig cfg = default_train_config(Task::hpp);
    cfg.seed = kLearnSeed;
    ck.expect(cfg.epochs == 50 && cfg.batch_size == 32 && cfg.lr == 0.001 && cfg.loss == nn::LossKind::smooth_l1, "training setup");
    const auto res = train_region_regressor(inst, cfg);
    const double rmse = *res.report.get("RMSE");
    ck.expect(rmse < 0.03, "test RMSE " + fmt("%.4f", rmse));
    return {8, "regression recoverability", ck.ok(), ck.detail("test RMSE " + fmt("%.4f", rmse) + " on " + std::to_string(res.test_cells.size()) + " test cells"),
            0.0};
}

// ------------------------------------------------------------------ 9

CriterionResult cap_head() {
    Checker ck;
    nn::TrainConfig cfg = default_train_config(Task::cap);
    cfg.seed = kLearnSeed;
    SplitConfig sc;
    sc.seed = kLearnSeed;

    SynthSpec spec;
    spec.seed = kLearnSeed;
    std::set<CellId> cell_set;
    CounterRng pick(derive_seed(kLearnSeed, "acceptance-cap-cells"));
    while (cell_set.size() < 500) cell_set.insert(cell_of(oracle::random_point(spec.center, spec.half_extent_deg, pick), 9));
    const std::vector<CellId> cells(cell_set.begin(), cell_set.end());
    RegionTaskInstance lin;
    lin.embeddings = coordinate_embeddings(spec, cells, 5);
    lin.targets.resolution = 9;
    lin.targets.target_kind = TargetKind::intensity;
    for (CellId c : cells) {
        const auto& e = *lin.embeddings.find(c);
        lin.targets.rows[c] = {nn::sigmoid(2.0 * e[0] - 1.5 * e[1] + 0.3), 1};
    }
    lin.manifest = split_points(lin.targets, sc);
    const auto a = train_intensity_model(lin, cfg);
    const double r2v = *a.report.get("R2");
    ck.expect(r2v > 0.8, "sigmoid-linear R2 " + fmt("%.3f", r2v));

    SynthSpec crime;
    crime.kind = SynthKind::clustered_intensity;
    crime.n = 20000;
    crime.seed = kLearnSeed;
    RegionTaskInstance skew;
    skew.targets = aggregate_intensity(generate_points(crime), 9);
    const auto skew_cells = skew.targets.cells();
    skew.embeddings = coordinate_embeddings(crime, skew_cells, 5);
    skew.manifest = split_points(skew.targets, sc);
    const auto b = train_intensity_model(skew, cfg);
    const double sd_pred = stddev(b.test_predictions);
    const double sd_target = stddev(b.test_targets);
    ck.expect(sd_pred < sd_target, "prediction sd " + fmt("%.4f", sd_pred) + " not below target sd " + fmt("%.4f", sd_target));

    for (const auto* res : {&a, &b}) {
        for (double p : res->test_predictions) ck.expect(p > 0.0 && p < 1.0, "output " + fmt("%.17g", p) + " outside (0,1)");
    }
    return {9, "CAP head bound", ck.ok(),
            ck.detail("R2 " + fmt("%.3f", r2v) + "; skewed sd pred " + fmt("%.4f", sd_pred) + " < target " + fmt("%.4f", sd_target)), 0.0};
}

// ------------------------------------------------------------------ 10, 11

SequenceTaskInstance walk_instance(SynthKind kind, std::size_t n, int len_min, int len_max, StratSource strat) {
    SynthSpec s;
    s.kind = kind;
    s.n = n;
    s.seed = kLearnSeed;
    s.walk_length = len_min;
    s.walk_length_max = len_max;
    PrepareCounts counts;
    const auto prepared = prepare_trajectories(generate_trajectories(s), 9, GapOptions{}, counts);
    SplitConfig sc;
    sc.seed = kLearnSeed;
    sc.strat_source = strat;
    SequenceTaskInstance inst;
    inst.task = strat == StratSource::duration ? SequenceTask::tte : SequenceTask::hmp;
    inst.manifest = split_trajectories(prepared, sc);
    std::set<CellId> cells;
    for (const auto& h : prepared) {
        inst.trajectories.push_back(segment_xy(h));
        inst.durations.push_back(h.duration_s);
        cells.insert(h.cells.begin(), h.cells.end());
    }
    inst.embeddings = coordinate_embeddings(s, std::vector<CellId>(cells.begin(), cells.end()), 5);
    return inst;
}

CriterionResult hmp_learnability() {
    Checker ck;
    const auto inst = walk_instance(SynthKind::constant_direction_walks, 200, 12, 30, StratSource::length);
    nn::TrainConfig cfg = default_train_config(Task::hmp);
    cfg.seed = kLearnSeed;
    const SequenceModelOptions opt;
    ck.expect(cfg.epochs == 10 && cfg.loss == nn::LossKind::hybrid_hmp && cfg.geo_weight == 0.7, "training setup");
    ck.expect(opt.hidden == 128 && opt.layers == 2 && opt.causal, "model setup");
    const auto res = train_hmp(inst, cfg, opt);
    double acc = -1.0;
    for (const auto& r : res.horizon) {
        if (r.k && *r.k == 1) acc = *r.get("Acc");
    }
    ck.expect(acc >= 95.0, "accuracy@1 " + fmt("%.2f", acc) + "%");
    return {10, "HMP learnability", ck.ok(), ck.detail("accuracy@1 " + fmt("%.2f", acc) + "% on " + std::to_string(res.rollouts.size()) + " test walks"), 0.0};
}

CriterionResult tte_learnability() {
    Checker ck;
    const auto inst = walk_instance(SynthKind::random_walks, 300, 10, 40, StratSource::duration);
    for (std::size_t i = 0; i < inst.trajectories.size(); ++i) {
        const auto& t = inst.trajectories[i];
        const double cells = static_cast<double>(t.x.size() + t.y.size());
        ck.expect(inst.durations[i] == 30.0 * (cells - 1.0), t.id + ": duration is not 30 s per step");
    }
    nn::TrainConfig cfg = default_train_config(Task::tte);
    cfg.seed = kLearnSeed;
    ck.expect(cfg.epochs == 50, "training setup");
    const auto res = train_tte(inst, cfg);
    const double mape = *res.report.get("MAPE");
    ck.expect(mape < 10.0, "test MAPE " + fmt("%.2f", mape) + "%");
    return {11, "TTE learnability", ck.ok(), ck.detail("test MAPE " + fmt("%.2f", mape) + "% on " + std::to_string(res.test_targets.size()) + " trajectories"), 0.0};
}

// ------------------------------------------------------------------ 12

CriterionResult embedder_algebra() {
    Checker ck;
    SynthSpec spec;
    spec.n = 3000;
    spec.seed = 12;
    const std::vector<std::string> keys{"amenity=bar", "amenity=cafe", "leisure=park", "shop=bakery"};
    const auto recs = generate_feature_records(spec, keys);
    const std::vector<std::string> filter{"amenity=cafe", "leisure=park", "shop=bakery"};
    const auto table = ingest_feature_counts(recs, 9, filter);
    for (std::size_t f = 0; f < table.vocabulary.size(); ++f) {
        std::int64_t total = 0, expected = 0;
        for (const auto& [c, v] : table.counts) total += v[f];
        for (const auto& [p, k] : recs) expected += k == table.vocabulary[f];
        ck.expect(total == expected, "count conservation for " + table.vocabulary[f]);
    }
    const CellId center = cell_of(spec.center, 9);
    const auto cells = disk(center, 4);
    const auto ce = count_embed(table, cells);
    const auto cce0 = contextual_count_embed(table, cells, 0, CceMode::concat);
    ck.expect(cce0.dim == ce.dim && cce0.vectors == ce.vectors, "CCE k=0 differs from CE");

    FeatureCountTable uniform{9, {"a", "b", "c"}, {}};
    for (CellId c : disk(center, 6)) uniform.counts[c] = {3, 0, 7};
    const auto inner = disk(center, 3);
    for (int k = 1; k <= 3; ++k) {
        const auto m = contextual_count_embed(uniform, inner, k, CceMode::concat);
        std::vector<double> want;
        for (int i = 0; i <= k; ++i) want.insert(want.end(), {3, 0, 7});
        bool tiled = m.dim == 3 * (k + 1);
        for (const auto& [c, v] : m.vectors) tiled = tiled && v == want;
        ck.expect(tiled, "uniform field not tiled at k=" + std::to_string(k));
    }
    return {12, "embedder algebra", ck.ok(), ck.detail(std::to_string(recs.size()) + " records conserved; k=0 equals CE; tiling at k=1..3"), 0.0};
}

// ------------------------------------------------------------------ 13

CriterionResult multi_resolution() {
    Checker ck;
    SynthSpec price;
    price.n = 5000;
    price.seed = 13;
    price.noise_sigma = 0.05;
    const auto ppts = generate_points(price);
    const double w1 = oracle::histogram_w1(targets_of(aggregate_mean(ppts, 8)), targets_of(aggregate_mean(ppts, 10)), 20);
    ck.expect(w1 < 0.1, "mean-value W1 " + fmt("%.4f", w1));

    SynthSpec crime;
    crime.kind = SynthKind::clustered_intensity;
    crime.n = 5000;
    crime.seed = 13;
    const auto cpts = generate_points(crime);
    double med[3];
    for (int r = 8; r <= 10; ++r) med[r - 8] = oracle::median(targets_of(aggregate_intensity(cpts, r)));
    ck.expect(med[0] > med[1] && med[1] > med[2], "intensity medians " + fmt("%.4f", med[0]) + ", " + fmt("%.4f", med[1]) + ", " + fmt("%.4f", med[2]));
    return {13, "multi-resolution fidelity", ck.ok(),
            ck.detail("W1 " + fmt("%.4f", w1) + "; intensity medians " + fmt("%.4f", med[0]) + " > " + fmt("%.4f", med[1]) + " > " + fmt("%.4f", med[2])),
            0.0};
}

// ------------------------------------------------------------------ 14

bool contains(const std::string& text, const std::string& piece) { return text.find(piece) != std::string::npos; }

CriterionResult end_to_end(const Options& opt) {
    Checker ck;
    const fs::path dir = fs::path(opt.configs_dir.empty() ? default_configs_dir() : opt.configs_dir) / "smoke";
    const fs::path scratch = opt.scratch_dir.empty() ? fs::temp_directory_path() / "obsr-acceptance" : fs::path(opt.scratch_dir);
    std::vector<fs::path> configs;
    if (fs::is_directory(dir)) {
        for (const auto& e : fs::directory_iterator(dir)) {
            if (e.path().extension() == ".json") configs.push_back(e.path());
        }
    }
    std::sort(configs.begin(), configs.end());
    std::set<Task> tasks;
    for (const auto& path : configs) {
        const std::string name = path.stem().string();
        try {
            PipelineConfig c = load_pipeline_config(path.string());
            tasks.insert(c.task);
            c.output_dir = (scratch / name).string();
            fs::remove_all(c.output_dir);
            if (is_trajectory_task(c.task)) {
                ck.expect(c.resolutions == std::vector<int>{9}, name + ": resolution");
                if (c.task == Task::hmp) ck.expect(c.model.ks == std::vector<int>{1, 3, 5, 7, 10}, name + ": horizons");
            } else {
                ck.expect(c.resolutions == std::vector<int>{8, 9, 10}, name + ": resolutions");
            }
            run_pipeline(c);
            const auto again = run_pipeline(c);
            ck.expect(again.matches_previous.value_or(false), name + ": rerun manifest differs");

            std::ifstream in(fs::path(c.output_dir) / "report.md");
            std::stringstream ss;
            ss << in.rdbuf();
            const std::string report = ss.str();
            if (c.task == Task::hmp) {
                ck.expect(contains(report, "| k | H Dist | DTW Dist | Acc |"), name + ": report header");
                for (int k : c.model.ks) ck.expect(contains(report, "\n| " + std::to_string(k) + " | "), name + ": report row k=" + std::to_string(k));
            } else {
                const std::string header = c.task == Task::tte ? "| Metric | Res 9 |" : "| Metric | Res 8 | Res 9 | Res 10 |";
                ck.expect(contains(report, header), name + ": report header");
                const std::vector<std::string> rows = c.task == Task::cap   ? std::vector<std::string>{"MSE", "RMSE", "MAE", "R2"}
                                                      : c.task == Task::tte ? std::vector<std::string>{"MSE", "RMSE", "MAE", "MAPE"}
                                                                            : std::vector<std::string>{"MSE", "RMSE", "MAE", "MAPE", "sMAPE"};
                for (const auto& r : rows) ck.expect(contains(report, "\n| " + r + " "), name + ": report row " + r);
            }
            ck.expect(!contains(report, "nan") && !contains(report, "inf"), name + ": non-finite value in report");
        } catch (const std::exception& e) {
            ck.expect(false, name + ": " + e.what());
        }
    }
    for (Task t : {Task::strpp, Task::hpp, Task::cap, Task::tte, Task::hmp}) ck.expect(tasks.count(t) == 1, "no smoke config for " + to_string(t));
    return {14, "end-to-end smoke", ck.ok(), ck.detail(std::to_string(configs.size()) + " configs ran twice with identical manifests"), 0.0};
}

struct Entry {
    int id;
    double limit_s;  ///< 0 = no runtime bound
    std::function<CriterionResult(const Options&)> fn;
};

}  // namespace

std::string default_configs_dir() { return OBSR_CONFIGS_DIR; }

std::vector<CriterionResult> run(const Options& opt, const std::function<void(const CriterionResult&)>& on_result) {
    const std::vector<Entry> entries{
        {1, 30, [](const Options&) { return split_correctness(); }},
        {2, 0, [](const Options&) { return split_determinism(); }},
        {3, 10, [](const Options&) { return grid_contract(); }},
        {4, 0, [](const Options&) { return trajectory_preparation(); }},
        {5, 0, [](const Options&) { return metric_oracles(); }},
        {6, 60, [](const Options&) { return gradient_fidelity(); }},
        {7, 0, [](const Options&) { return adam_algebra(); }},
        {8, 60, [](const Options&) { return regression_recoverability(); }},
        {9, 0, [](const Options&) { return cap_head(); }},
        {10, 180, [](const Options&) { return hmp_learnability(); }},
        {11, 120, [](const Options&) { return tte_learnability(); }},
        {12, 0, [](const Options&) { return embedder_algebra(); }},
        {13, 0, [](const Options&) { return multi_resolution(); }},
        {14, 600, [](const Options& o) { return end_to_end(o); }},
    };
    std::vector<CriterionResult> out;
    for (const auto& e : entries) {
        if (!opt.only.empty() && std::find(opt.only.begin(), opt.only.end(), e.id) == opt.only.end()) continue;
        const auto t0 = std::chrono::steady_clock::now();
        CriterionResult r;
        try {
            r = e.fn(opt);
        } catch (const std::exception& ex) {
            r = {e.id, "criterion " + std::to_string(e.id), false, std::string("exception: ") + ex.what(), 0.0};
        }
        r.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        if (e.limit_s > 0 && r.seconds >= e.limit_s) {
            r.passed = false;
            r.detail += "; runtime " + fmt("%.1f", r.seconds) + " s exceeds " + fmt("%.0f", e.limit_s) + " s";
        }
        if (on_result) on_result(r);
        out.push_back(std::move(r));
    }
    return out;
}

std::string format(const CriterionResult& r) {
    char head[64];
    std::snprintf(head, sizeof head, "%s [%2d] ", r.passed ? "PASS" : "FAIL", r.id);
    return head + r.title + " (" + fmt("%.1f", r.seconds) + " s): " + r.detail;
}

}  // namespace obsr::acceptance
