// Parallel vs serial timings for the OpenMP kernels. Each benchmark takes the
// execution mode as its first argument (0 serial, 1 parallel).
//
//   ./build/bench/bench_kernels --benchmark_filter=matmul

#include <benchmark/benchmark.h>

#include <algorithm>
#include <string>
#include <vector>

#include "obsr/embed.hpp"
#include "obsr/exec.hpp"
#include "obsr/metrics.hpp"
#include "obsr/nn.hpp"
#include "obsr/random.hpp"
#include "obsr/regionize.hpp"
#include "obsr/synthdata.hpp"
#include "obsr/trajprep.hpp"

using namespace obsr;

namespace {

Exec mode(const benchmark::State& s) { return s.range(0) ? Exec::parallel : Exec::serial; }

void label(benchmark::State& s) { s.SetLabel(s.range(0) ? "parallel" : "serial"); }

nn::Tensor2 random_tensor(std::size_t rows, std::size_t cols, std::uint64_t seed) {
    CounterRng rng(seed);
    nn::Tensor2 t(rows, cols);
    for (double& v : t.vec()) v = rng.uniform(-1.0, 1.0);
    return t;
}

const std::vector<PointRecord>& price_points() {
    static const auto pts = [] {
        SynthSpec spec;
        spec.n = 200000;
        spec.seed = 7;
        spec.noise_sigma = 0.05;
        return generate_points(spec);
    }();
    return pts;
}

const std::vector<std::string> kKeys{"amenity=cafe", "amenity=school", "leisure=park", "shop=bakery"};

const std::vector<FeatureRecord>& feature_records() {
    static const auto recs = [] {
        SynthSpec spec;
        spec.n = 100000;
        spec.seed = 7;
        return generate_feature_records(spec, kKeys);
    }();
    return recs;
}

const std::vector<Trajectory>& walks() {
    static const auto trajs = [] {
        SynthSpec spec;
        spec.kind = SynthKind::gappy_walks;
        spec.n = 2000;
        spec.seed = 7;
        spec.walk_length = 30;
        spec.walk_length_max = 60;
        return generate_trajectories(spec);
    }();
    return trajs;
}

void BM_matmul(benchmark::State& s) {
    const auto n = static_cast<std::size_t>(s.range(1));
    const auto a = random_tensor(n, n, 1);
    const auto b = random_tensor(n, n, 2);
    nn::Tensor2 out(n, n);
    for (auto _ : s) {
        nn::matmul(a, b, out, false, mode(s));
        benchmark::DoNotOptimize(out.vec().data());
    }
    label(s);
}
BENCHMARK(BM_matmul)->ArgsProduct({{0, 1}, {128, 512}})->Unit(benchmark::kMillisecond)->UseRealTime();

void BM_dense_backward(benchmark::State& s) {
    const auto x = random_tensor(1024, 256, 1);
    const auto w = random_tensor(256, 256, 2);
    const auto dy = random_tensor(1024, 256, 3);
    for (auto _ : s) benchmark::DoNotOptimize(nn::dense_backward(x, w, dy, mode(s)));
    label(s);
}
BENCHMARK(BM_dense_backward)->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond)->UseRealTime();

void BM_attention(benchmark::State& s) {
    constexpr std::size_t kSteps = 32, kBatch = 64, kDim = 64;
    nn::ParamStore store;
    CounterRng rng(5);
    const nn::MultiHeadAttention att(store, "att", kDim, 4, true, rng);
    const auto x = random_tensor(kSteps * kBatch, kDim, 6);
    const auto dy = random_tensor(kSteps * kBatch, kDim, 7);
    for (auto _ : s) {
        nn::MultiHeadAttention::Cache cache;
        benchmark::DoNotOptimize(att.forward(x, x, x, kSteps, cache, mode(s)));
        benchmark::DoNotOptimize(att.backward(cache, dy, mode(s)));
    }
    label(s);
}
BENCHMARK(BM_attention)->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond)->UseRealTime();

void BM_regionize(benchmark::State& s) {
    const auto& pts = price_points();
    for (auto _ : s) benchmark::DoNotOptimize(aggregate_mean(pts, 10, mode(s)));
    s.SetItemsProcessed(static_cast<std::int64_t>(s.iterations() * pts.size()));
    label(s);
}
BENCHMARK(BM_regionize)->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond)->UseRealTime();

void BM_feature_counts(benchmark::State& s) {
    const auto& recs = feature_records();
    for (auto _ : s) benchmark::DoNotOptimize(ingest_feature_counts(recs, 9, kKeys, mode(s)));
    s.SetItemsProcessed(static_cast<std::int64_t>(s.iterations() * recs.size()));
    label(s);
}
BENCHMARK(BM_feature_counts)->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond)->UseRealTime();

void BM_contextual_embed(benchmark::State& s) {
    const auto table = ingest_feature_counts(feature_records(), 10, kKeys);
    std::vector<CellId> cells;
    for (const auto& [c, _] : table.counts) cells.push_back(c);
    for (auto _ : s) benchmark::DoNotOptimize(contextual_count_embed(table, cells, 2, CceMode::concat, mode(s)));
    label(s);
}
BENCHMARK(BM_contextual_embed)->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond)->UseRealTime();

void BM_prepare_trajectories(benchmark::State& s) {
    const auto& trajs = walks();
    for (auto _ : s) {
        PrepareCounts counts;
        benchmark::DoNotOptimize(prepare_trajectories(trajs, 9, {}, counts, mode(s)));
    }
    label(s);
}
BENCHMARK(BM_prepare_trajectories)->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond)->UseRealTime();

void BM_evaluate_at_k(benchmark::State& s) {
    PrepareCounts counts;
    const auto hex = prepare_trajectories(walks(), 9, {}, counts);
    std::vector<SequencePair> pairs;
    for (std::size_t i = 0; i + 1 < hex.size(); ++i) {
        const std::size_t n = std::min<std::size_t>({10, hex[i].cells.size(), hex[i + 1].cells.size()});
        pairs.push_back({{hex[i].cells.begin(), hex[i].cells.begin() + n}, {hex[i + 1].cells.begin(), hex[i + 1].cells.begin() + n}});
    }
    for (auto _ : s) benchmark::DoNotOptimize(evaluate_at_k(pairs, kDefaultHorizons, mode(s)));
    label(s);
}
BENCHMARK(BM_evaluate_at_k)->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond)->UseRealTime();

}  // namespace

BENCHMARK_MAIN();
