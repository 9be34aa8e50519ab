#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <unistd.h>

#include "obsr/regionize.hpp"
#include "obsr/selftest/oracles.hpp"
#include "obsr/synthdata.hpp"

using namespace obsr;

namespace {

PointRecord at(const std::string& id, const GeoPoint& p, std::optional<double> target = std::nullopt) {
    return PointRecord{id, p, std::nullopt, target, {}};
}

const CellId kA = CellId::from_string("8928308280fffff");

std::vector<PointRecord> counted(const std::vector<std::pair<CellId, int>>& spec) {
    std::vector<PointRecord> pts;
    for (const auto& [c, k] : spec) {
        for (int i = 0; i < k; ++i) pts.push_back(at(c.to_string() + "_" + std::to_string(i), centroid(c)));
    }
    return pts;
}

std::vector<double> targets(const RegionDataset& ds) {
    std::vector<double> v;
    for (const auto& [c, row] : ds.rows) v.push_back(row.target);
    return v;
}

}  // namespace

TEST_CASE("mean aggregation") {
    const GeoPoint p = centroid(kA);
    const std::vector<PointRecord> two{at("a", p, 100.0), at("b", p, 300.0)};
    const auto ds = aggregate_mean(two, 9);
    REQUIRE(ds.rows.size() == 1);
    CHECK(ds.rows.at(kA).target == 200.0);
    CHECK(ds.rows.at(kA).support == 2);
    CHECK(ds.target_kind == TargetKind::mean_value);
    CHECK_FALSE(ds.normalization);

    const std::vector<PointRecord> one{at("a", p, 42.5)};
    CHECK(aggregate_mean(one, 9).rows.at(kA).target == 42.5);
}

TEST_CASE("intensity aggregation normalizes by the maximum count") {
    const auto nbrs = neighbors_by_direction(kA);
    const auto pts = counted({{kA, 4}, {nbrs[0], 2}, {nbrs[1], 1}});
    const auto ds = aggregate_intensity(pts, 9);
    CHECK(ds.rows.at(kA).target == 1.0);
    CHECK(ds.rows.at(nbrs[0]).target == 0.5);
    CHECK(ds.rows.at(nbrs[1]).target == 0.25);
    REQUIRE(ds.normalization);
    CHECK(ds.normalization->max_count == 4);
    CHECK(ds.normalization->scope == NormalizationScope::whole_dataset);

    const auto single = aggregate_intensity(counted({{kA, 3}}), 9);
    CHECK(single.rows.at(kA).target == 1.0);
}

TEST_CASE("aggregation errors") {
    const std::vector<PointRecord> none;
    const std::vector<PointRecord> untargeted{at("a", centroid(kA))};
    try {
        aggregate_mean(untargeted, 9);
        FAIL("expected MissingTarget");
    } catch (const Error& e) {
        CHECK(e.code() == Errc::MissingTarget);
    }
    try {
        aggregate_intensity(none, 9);
        FAIL("expected EmptyInput");
    } catch (const Error& e) {
        CHECK(e.code() == Errc::EmptyInput);
    }
    try {
        aggregate_intensity(untargeted, 5);
        FAIL("expected InvalidResolution");
    } catch (const Error& e) {
        CHECK(e.code() == Errc::InvalidResolution);
    }
    CHECK_THROWS_AS(aggregate_intensity(untargeted, 12), Error);
    CHECK_THROWS_AS(multi_resolution(untargeted, {}, TargetKind::intensity), Error);
}

TEST_CASE("conservation, bounds and argmax on synthetic fields") {
    SynthSpec price;
    price.n = 3000;
    price.seed = 5;
    price.noise_sigma = 0.2;
    const auto price_pts = generate_points(price);
    SynthSpec crime = price;
    crime.kind = SynthKind::clustered_intensity;
    const auto crime_pts = generate_points(crime);

    const auto means = multi_resolution(price_pts, {8, 9, 10}, TargetKind::mean_value);
    const auto intens = multi_resolution(crime_pts, {8, 9, 10}, TargetKind::intensity);
    CHECK(means.size() == 3);
    for (int r : {8, 9, 10}) {
        CHECK(means.at(r).total_support() == static_cast<std::int64_t>(price_pts.size()));
        CHECK(intens.at(r).total_support() == static_cast<std::int64_t>(crime_pts.size()));
        for (const auto& [c, row] : intens.at(r).rows) {
            CHECK(c.resolution() == r);
            CHECK(row.target > 0.0);
            CHECK(row.target <= 1.0);
            CHECK((row.target == 1.0) == (row.support == intens.at(r).normalization->max_count));
        }
    }
    // per-cell mean lies within the min/max of the cell's own targets
    std::map<CellId, std::pair<double, double>> range;
    for (const auto& p : price_pts) {
        const CellId c = cell_of(p.point, 9);
        auto [it, fresh] = range.try_emplace(c, *p.target, *p.target);
        it->second.first = std::min(it->second.first, *p.target);
        it->second.second = std::max(it->second.second, *p.target);
    }
    for (const auto& [c, row] : means.at(9).rows) {
        CHECK(row.target >= range.at(c).first);
        CHECK(row.target <= range.at(c).second);
    }
    CHECK(multi_resolution(price_pts, {9}, TargetKind::mean_value).at(9).rows == aggregate_mean(price_pts, 9).rows);
}

TEST_CASE("parallel and serial aggregation agree bit for bit") {
    SynthSpec spec;
    spec.n = 20000;
    spec.seed = 9;
    spec.noise_sigma = 0.3;
    const auto pts = generate_points(spec);
    for (int r : {8, 10}) {
        CHECK(aggregate_mean(pts, r, Exec::parallel).rows == aggregate_mean(pts, r, Exec::serial).rows);
        CHECK(aggregate_intensity(pts, r, Exec::parallel).rows == aggregate_intensity(pts, r, Exec::serial).rows);
    }
}

TEST_CASE("resolution changes the intensity distribution but not the mean-value distribution") {
    SynthSpec crime;
    crime.kind = SynthKind::clustered_intensity;
    crime.n = 5000;
    crime.seed = 13;
    const auto cpts = generate_points(crime);
    const double m8 = oracle::median(targets(aggregate_intensity(cpts, 8)));
    const double m9 = oracle::median(targets(aggregate_intensity(cpts, 9)));
    const double m10 = oracle::median(targets(aggregate_intensity(cpts, 10)));
    CHECK(m8 > m9);
    CHECK(m9 > m10);

    SynthSpec price;
    price.n = 5000;
    price.seed = 13;
    price.noise_sigma = 0.05;
    const auto ppts = generate_points(price);
    const auto t8 = targets(aggregate_mean(ppts, 8));
    const auto t10 = targets(aggregate_mean(ppts, 10));
    CHECK(oracle::histogram_w1(t8, t10, 20) < 0.1);
}

TEST_CASE("rollup follows the logical hierarchy") {
    SynthSpec crime;
    crime.kind = SynthKind::clustered_intensity;
    crime.n = 4000;
    crime.seed = 21;
    const auto pts = generate_points(crime);
    const auto fine = aggregate_intensity(pts, 9);
    const auto coarse = rollup(fine, 8);
    CHECK(coarse.total_support() == fine.total_support());
    for (const auto& [c8, row] : coarse.rows) {
        std::int64_t sum = 0;
        for (CellId child : children(c8, 9)) {
            if (auto it = fine.rows.find(child); it != fine.rows.end()) sum += it->second.support;
        }
        CHECK(row.support == sum);
    }
    double max_target = 0.0;
    for (const auto& [c, row] : coarse.rows) max_target = std::max(max_target, row.target);
    CHECK(max_target == 1.0);

    SynthSpec price;
    price.n = 2000;
    price.seed = 3;
    const auto ppts = generate_points(price);
    const auto m9 = aggregate_mean(ppts, 9);
    const auto m8 = rollup(m9, 8);
    for (const auto& [c8, row] : m8.rows) {
        double s = 0.0;
        std::int64_t k = 0;
        for (const auto& p : ppts) {
            if (parent(cell_of(p.point, 9), 8) == c8) {
                s += *p.target;
                ++k;
            }
        }
        CHECK(row.support == k);
        CHECK(row.target == doctest::Approx(s / static_cast<double>(k)).epsilon(1e-12));
    }
    CHECK_THROWS_AS(rollup(m8, 9), Error);
}

TEST_CASE("train-only normalization and zero filling") {
    const auto nbrs = neighbors_by_direction(kA);
    const auto ds = aggregate_intensity(counted({{kA, 4}, {nbrs[0], 2}, {nbrs[1], 1}}), 9);
    const std::vector<CellId> train{nbrs[0], nbrs[1]};
    const auto tr = renormalize_train_only(ds, train);
    CHECK(tr.normalization->max_count == 2);
    CHECK(tr.normalization->scope == NormalizationScope::train_only);
    CHECK(tr.rows.at(nbrs[0]).target == 1.0);
    CHECK(tr.rows.at(nbrs[1]).target == 0.5);
    CHECK(tr.rows.at(kA).target == 1.0);  // clipped

    const std::vector<CellId> area{kA, nbrs[2], nbrs[3]};
    const auto filled = zero_fill(ds, area);
    CHECK(filled.rows.size() == 5);
    CHECK(filled.rows.at(nbrs[2]) == RegionRow{0.0, 0});
    CHECK(filled.rows.at(kA) == ds.rows.at(kA));
    const std::vector<CellId> wrong{parent(kA, 8)};
    CHECK_THROWS_AS(zero_fill(ds, wrong), Error);
}

TEST_CASE("CSV and sidecar round trip") {
    const auto dir = std::filesystem::temp_directory_path() / ("obsr_region_" + std::to_string(::getpid()));
    std::filesystem::create_directories(dir);
    const auto nbrs = neighbors_by_direction(kA);
    const auto ds = aggregate_intensity(counted({{kA, 3}, {nbrs[0], 1}}), 9);
    const std::string path = (dir / "region.csv").string();
    write_region_dataset(ds, path);
    const auto back = read_region_dataset(path);
    CHECK(back.resolution == 9);
    CHECK(back.target_kind == TargetKind::intensity);
    CHECK(back.normalization->max_count == 3);
    CHECK(back.rows.size() == 2);
    // ten significant digits
    CHECK(back.rows.at(nbrs[0]).target == 0.3333333333);
    CHECK(back.rows.at(kA).support == 3);
    std::filesystem::remove_all(dir);
}
