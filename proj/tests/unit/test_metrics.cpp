#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numbers>

#include "obsr/metrics.hpp"
#include "obsr/selftest/oracles.hpp"
#include "obsr/synthdata.hpp"
#include "obsr/trajprep.hpp"

using namespace obsr;

namespace {

const CellId kA = CellId::from_string("8928308280fffff");

std::vector<CellId> random_walk(CounterRng& rng, std::size_t n) {
    std::vector<CellId> cells{kA};
    for (int i = 0; i < 20; ++i) cells[0] = neighbor_in_direction(cells[0], DirectionLabel(static_cast<int>(rng.below(6))));
    while (cells.size() < n) cells.push_back(neighbor_in_direction(cells.back(), DirectionLabel(static_cast<int>(rng.below(6)))));
    return cells;
}

}  // namespace

TEST_CASE("regression metric fixtures") {
    const std::vector<double> y{100}, yhat{50};
    const auto r = regression_metrics(y, yhat);
    CHECK(*r.get("MSE") == 2500.0);
    CHECK(*r.get("RMSE") == 50.0);
    CHECK(*r.get("MAE") == 50.0);
    CHECK(*r.get("MAPE") == 50.0);
    CHECK(std::abs(*r.get("sMAPE") - 200.0 / 3.0) < 1e-9);

    const auto same = regression_metrics(y, y);
    for (const auto& [name, v] : same.entries) CHECK(v == 0.0);

    const std::vector<double> y2{0, 10}, yhat2{0, 20};
    const auto z = regression_metrics(y2, yhat2);
    CHECK(std::abs(*z.get("MAPE") - 100.0) < 1e-9);
    CHECK(std::abs(*z.get("sMAPE") - 100.0 / 3.0) < 1e-9);
    CHECK(z.counts.at("mape_excluded") == 1);

    const std::vector<double> zeros{0, 0}, some{1, 0};
    const auto allzero = regression_metrics(zeros, some);
    CHECK_FALSE(allzero.get("MAPE"));
    CHECK(allzero.counts.at("mape_excluded") == 2);
    CHECK(allzero.get("sMAPE"));

    try {
        regression_metrics(y, y2);
        FAIL("expected LengthMismatch");
    } catch (const Error& e) {
        CHECK(e.code() == Errc::LengthMismatch);
    }
}

TEST_CASE("metric inequalities on random data") {
    CounterRng rng(1);
    for (int t = 0; t < 200; ++t) {
        std::vector<double> y, yhat;
        for (int i = 0; i < 20; ++i) {
            y.push_back(rng.uniform(-5, 5));
            yhat.push_back(rng.uniform(-5, 5));
        }
        const auto r = regression_metrics(y, yhat);
        CHECK(*r.get("RMSE") >= *r.get("MAE"));
        CHECK(*r.get("sMAPE") >= 0.0);
        CHECK(*r.get("sMAPE") <= 200.0);
        CHECK(*r.get("MAPE") >= 0.0);
    }
    const std::vector<double> y{1, 2, 3}, yhat{2, 3, 4};
    const auto r = regression_metrics(y, yhat);
    CHECK(*r.get("RMSE") == *r.get("MAE"));
}

TEST_CASE("R²") {
    const std::vector<double> y{1, 2, 3, 4};
    CHECK(r2(y, y) == 1.0);
    const std::vector<double> mean(4, 2.5);
    CHECK(r2(y, mean) == 0.0);
    CHECK(r2(std::vector<double>{0, 1}, std::vector<double>{1, 0}) == -3.0);
    try {
        r2(std::vector<double>{2, 2}, std::vector<double>{1, 3});
        FAIL("expected ZeroVariance");
    } catch (const Error& e) {
        CHECK(e.code() == Errc::ZeroVariance);
    }
}

TEST_CASE("haversine") {
    const GeoPoint o(0, 0);
    CHECK(haversine(o, o) == 0.0);
    const double expected = std::numbers::pi * kEarthRadiusM / 180.0;
    CHECK(std::abs(haversine(o, GeoPoint(0, 1)) - 111195.0) / 111195.0 < 1e-3);
    CHECK(std::abs(haversine(o, GeoPoint(0, 1)) - expected) < 1e-6);
    CounterRng rng(2);
    for (int i = 0; i < 1000; ++i) {
        const GeoPoint a = oracle::random_point(GeoPoint(37.7, -122.4), 0.5, rng);
        const GeoPoint b = oracle::random_point(GeoPoint(37.7, -122.4), 0.5, rng);
        const GeoPoint c = oracle::random_point(GeoPoint(37.7, -122.4), 0.5, rng);
        CHECK(haversine(a, c) <= haversine(a, b) + haversine(b, c) + 1e-6);
        CHECK(haversine(a, b) == doctest::Approx(haversine(b, a)).epsilon(1e-12));
        CHECK(haversine(a, b) == doctest::Approx(oracle::cosine_law_distance_m(a, b)).epsilon(1e-6));
    }
}

TEST_CASE("sequence metrics") {
    CounterRng rng(3);
    const auto gold = random_walk(rng, 3);
    const auto pred = random_walk(rng, 3);
    CHECK(avg_haversine(gold, gold, 3) == 0.0);
    CHECK(avg_haversine(pred, gold, 1) == haversine(centroid(pred[0]), centroid(gold[0])));
    double s = 0.0;
    for (int i = 0; i < 3; ++i) s += haversine(centroid(pred[i]), centroid(gold[i]));
    CHECK(avg_haversine(pred, gold, 3) == doctest::Approx(s / 3).epsilon(1e-15));
    CHECK(avg_haversine(pred, gold, 10) == avg_haversine(pred, gold, 3));

    CHECK(sequence_accuracy(gold, gold, 5) == 100.0);
    std::vector<CellId> two_of_three = gold;
    two_of_three[2] = neighbor_in_direction(gold[2], DirectionLabel(0)) == gold[1] ? neighbor_in_direction(gold[2], DirectionLabel(1))
                                                                                   : neighbor_in_direction(gold[2], DirectionLabel(0));
    CHECK(std::abs(sequence_accuracy(two_of_three, gold, 3) - 200.0 / 3.0) < 1e-9);
    const auto far = decode_directions(ring(kA, 5).front(), std::vector<DirectionLabel>(2, DirectionLabel(0)));
    CHECK(sequence_accuracy(far, gold, 3) == 0.0);

    const std::vector<CellId> empty;
    try {
        dtw_haversine(empty, gold, 3);
        FAIL("expected EmptySequence");
    } catch (const Error& e) {
        CHECK(e.code() == Errc::EmptySequence);
    }
}

TEST_CASE("DTW matches exhaustive recursion") {
    CounterRng rng(4);
    int checked = 0;
    for (std::size_t n = 1; n <= 6; ++n) {
        for (std::size_t m = 1; m <= 6; ++m) {
            for (int rep = 0; rep < 3; ++rep) {
                const auto a = random_walk(rng, n);
                const auto b = random_walk(rng, m);
                std::vector<std::vector<double>> cost(n, std::vector<double>(m));
                for (std::size_t i = 0; i < n; ++i) {
                    for (std::size_t j = 0; j < m; ++j) cost[i][j] = haversine(centroid(a[i]), centroid(b[j]));
                }
                const double want = oracle::recursive_dtw(cost);
                const double got = dtw_haversine(a, b, 10);
                CHECK(std::abs(got - want) <= 1e-9 * std::max(1.0, want));
                CHECK(dtw_haversine(b, a, 10) == doctest::Approx(got).epsilon(1e-12));
                if (n == 1 && m == 1) CHECK(got == avg_haversine(a, b, 1));
                CHECK(dtw_haversine(a, b, 1) == avg_haversine(a, b, 1));
                ++checked;
            }
        }
    }
    CHECK(checked == 108);
    const auto a = random_walk(rng, 8);
    CHECK(dtw_haversine(a, a, 8) == 0.0);
}

TEST_CASE("evaluate_at_k") {
    CounterRng rng(5);
    std::vector<SequencePair> pairs;
    for (int i = 0; i < 40; ++i) pairs.push_back({random_walk(rng, 12), random_walk(rng, 12)});

    const std::vector<SequencePair> one{pairs[0]};
    const auto single = evaluate_at_k(one, {1});
    REQUIRE(single.size() == 1);
    CHECK(*single[0].k == 1);
    CHECK(*single[0].get("H Dist") == avg_haversine(pairs[0].pred, pairs[0].gold, 1));
    CHECK(*single[0].get("H Dist") == *single[0].get("DTW Dist"));
    CHECK(*single[0].get("Acc") == sequence_accuracy(pairs[0].pred, pairs[0].gold, 1));

    const auto reports = evaluate_at_k(pairs);
    REQUIRE(reports.size() == 5);
    CHECK(*reports[0].k == 1);
    CHECK(*reports[4].k == 10);
    CHECK(*reports[0].get("H Dist") == *reports[0].get("DTW Dist"));

    auto shuffled = pairs;
    std::reverse(shuffled.begin(), shuffled.end());
    const auto again = evaluate_at_k(shuffled, kDefaultHorizons, Exec::serial);
    for (std::size_t i = 0; i < reports.size(); ++i) CHECK(again[i].entries == reports[i].entries);

    auto truncated = pairs;
    for (auto& p : truncated) {
        for (std::size_t j = 5; j < p.gold.size(); ++j) p.gold[j] = ring(p.gold[j], 2).front();
    }
    const auto t = evaluate_at_k(truncated, {1, 3, 5});
    for (std::size_t i = 0; i < 3; ++i) CHECK(t[i].entries == reports[i].entries);
}

TEST_CASE("run aggregation and markdown tables") {
    std::vector<MetricReport> runs(3);
    const double mse[] = {1e5, 2e5, 3e5};
    for (int i = 0; i < 3; ++i) {
        runs[i].task = "tte";
        runs[i].n_samples = 10;
        runs[i].set("MSE", mse[i]);
        runs[i].set("MAPE", 10.0);
    }
    const auto agg = aggregate_runs(runs);
    CHECK(agg.runs == 3);
    CHECK(*agg.get("MSE") == 2e5);
    CHECK(agg.stddev.at("MSE") == doctest::Approx(1e5));
    CHECK(agg.stddev.at("MAPE") == 0.0);

    const auto md = markdown_table("TTE", {{"MSE", 5}, {"MAPE", 0}, {"RMSE", 3}}, {{"CE", agg}, {"CCE", runs[0]}});
    CHECK(md.find("| MSE ×10^5 | 2.000 ± 1.000 | 1.000 |") != std::string::npos);
    CHECK(md.find("| RMSE ×10^3 | – | – |") != std::string::npos);

    const auto back = metric_report_from_json(nlohmann::ordered_json::parse(to_json(agg).dump()));
    CHECK(back.entries == agg.entries);
    CHECK(back.stddev == agg.stddev);

    CounterRng rng(6);
    const std::vector<SequencePair> pairs{{random_walk(rng, 10), random_walk(rng, 10)}};
    const auto hz = markdown_horizon_table("HMP", evaluate_at_k(pairs));
    CHECK(std::count(hz.begin(), hz.end(), '\n') == 4 + 5);
}
