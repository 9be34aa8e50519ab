#include <doctest.h>

#include <algorithm>
#include <map>
#include <set>

#include "obsr/splitter.hpp"
#include "obsr/synthdata.hpp"

using namespace obsr;

namespace {

std::vector<std::string> numbered_ids(std::size_t n) {
    std::vector<std::string> ids;
    for (std::size_t i = 0; i < n; ++i) ids.push_back("id" + std::to_string(1000 + i));
    return ids;
}

std::set<std::string> as_set(const std::vector<std::string>& v) { return {v.begin(), v.end()}; }

HexTrajectory straight(const std::string& id, int length) {
    const CellId start = CellId::from_string("8928308280fffff");
    std::vector<CellId> cells{start};
    for (int i = 1; i < length; ++i) cells.push_back(neighbor_in_direction(cells.back(), DirectionLabel(0)));
    return HexTrajectory{id, 9, cells, {}, 30.0 * (length - 1), {}};
}

}  // namespace

TEST_CASE("bucketize") {
    const std::vector<double> ten{1, 2, 3, 4, 5, 6, 7, 8, 9, 10};
    CHECK(bucketize(ten, 2) == std::vector<int>{0, 0, 0, 0, 0, 1, 1, 1, 1, 1});
    CHECK(bucketize(ten, 1) == std::vector<int>(10, 0));
    // every quantile of [5,5,5,5] is 5, and boundary values go to the lower bucket
    CHECK(bucketize(std::vector<double>{5, 5, 5, 5}, 4) == std::vector<int>(4, 0));
    // bucket membership does not depend on input order
    CHECK(bucketize(std::vector<double>{10, 1, 6, 5}, 2) == std::vector<int>{1, 0, 1, 0});
    std::vector<double> hundred;
    for (int i = 1; i <= 100; ++i) hundred.push_back(i);
    const auto q = bucketize(hundred, 4);
    for (int b = 0; b < 4; ++b) CHECK(std::count(q.begin(), q.end(), b) == 25);
    CHECK_THROWS_AS(bucketize(std::vector<double>{}, 3), Error);
}

TEST_CASE("unstratified proportion and seed sensitivity") {
    const auto ids = numbered_ids(100);
    const std::vector<double> flat(100, 1.0);
    SplitConfig cfg;
    cfg.n_bins = 1;
    cfg.test_fraction = 0.2;
    cfg.seed = 1;
    const auto a = split_ids(ids, flat, cfg);
    CHECK(a.test.size() == 20);
    CHECK(a.train.size() == 80);
    std::vector<std::string> both;
    std::set_intersection(a.train.begin(), a.train.end(), a.test.begin(), a.test.end(), std::back_inserter(both));
    CHECK(both.empty());
    cfg.seed = 2;
    const auto b = split_ids(ids, flat, cfg);
    CHECK(b.test.size() == 20);
    CHECK(a.test != b.test);
}

TEST_CASE("result does not depend on input order") {
    auto ids = numbered_ids(60);
    std::vector<double> vals;
    for (std::size_t i = 0; i < ids.size(); ++i) vals.push_back(static_cast<double>((i * 37) % 11));
    SplitConfig cfg;
    cfg.n_bins = 3;
    const auto a = split_ids(ids, vals, cfg);
    std::reverse(ids.begin(), ids.end());
    std::reverse(vals.begin(), vals.end());
    CHECK(manifest_text(split_ids(ids, vals, cfg)) == manifest_text(a));
}

TEST_CASE("trajectory splits by length and duration") {
    std::vector<HexTrajectory> same;
    for (int i = 0; i < 10; ++i) same.push_back(straight("t" + std::to_string(i), 5));
    SplitConfig cfg;
    cfg.test_fraction = 0.3;
    cfg.strat_source = StratSource::length;
    CHECK(split_trajectories(same, cfg).test.size() == 3);

    std::vector<HexTrajectory> lengths;
    for (int len = 1; len <= 100; ++len) lengths.push_back(straight("L" + std::to_string(len), len + 1));
    cfg.n_bins = 4;
    cfg.test_fraction = 0.2;
    const auto m = split_trajectories(lengths, cfg);
    REQUIRE(m.bucket_report.size() == 4);
    for (const auto& b : m.bucket_report) {
        CHECK(b.size == 25);
        CHECK(b.test >= 4);
        CHECK(b.test <= 6);
    }
    cfg.strat_source = StratSource::duration;
    CHECK(split_trajectories(lengths, cfg).test.size() == 20);

    try {
        split_trajectories(std::vector<HexTrajectory>{straight("x", 3)}, cfg);
        FAIL("expected TooFewTrajectories");
    } catch (const Error& e) {
        CHECK(e.code() == Errc::TooFewTrajectories);
    }
    cfg.strat_source = StratSource::target;
    CHECK_THROWS_AS(split_trajectories(lengths, cfg), Error);
}

TEST_CASE("single-member buckets go to train with a warning") {
    const std::vector<std::string> ids{"a", "b", "c", "d", "e"};
    const std::vector<double> vals{1, 1, 1, 1, 100};
    SplitConfig cfg;
    cfg.n_bins = 5;
    cfg.test_fraction = 0.5;
    const auto m = split_ids(ids, vals, cfg);
    CHECK_FALSE(m.warnings.empty());
    CHECK(std::count(m.train.begin(), m.train.end(), "e") == 1);
    CHECK(m.train.size() + m.test.size() == 5);
    CHECK(m.test.size() == 2);
}

TEST_CASE("point splits keep whole cells on one side and balance every bucket") {
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
        SynthSpec spec;
        spec.n = 1000 + 800 * seed;
        spec.seed = seed;
        spec.noise_sigma = 0.1;
        const auto pts = generate_points(spec);
        SplitConfig cfg;
        cfg.seed = seed;
        cfg.test_fraction = 0.25;
        for (StratSource src : {StratSource::target, StratSource::point_count}) {
            cfg.strat_source = src;
            const auto m = split_points(pts, cfg);
            const auto train = as_set(m.train);
            for (const auto& c : m.test) CHECK(train.count(c) == 0);
            const auto parts = assign_points(pts, m);
            CHECK(parts.excluded == 0);
            CHECK(parts.train.size() + parts.test.size() == pts.size());
            for (const auto& p : parts.test) CHECK(train.count(cell_of(p.point, 9).to_string()) == 0);
            for (const auto& b : m.bucket_report) {
                if (b.size >= 20) CHECK(std::abs(b.achieved_fraction - cfg.test_fraction) <= 0.05);
            }
        }
    }
}

TEST_CASE("split errors") {
    SplitConfig cfg;
    const std::vector<std::string> one{"a"};
    const std::vector<double> v1{1.0};
    try {
        split_ids(one, v1, cfg);
        FAIL("expected TooFewCells");
    } catch (const Error& e) {
        CHECK(e.code() == Errc::TooFewCells);
    }
    cfg.test_fraction = 1.0;
    CHECK_THROWS_AS(cfg.validate(), Error);
    cfg.test_fraction = 0.2;
    cfg.n_bins = 0;
    CHECK_THROWS_AS(cfg.validate(), Error);
    cfg.n_bins = 3;
    const std::vector<std::string> dup{"a", "a"};
    const std::vector<double> v2{1.0, 2.0};
    CHECK_THROWS_AS(split_ids(dup, v2, cfg), Error);
    RegionDataset ds;
    ds.resolution = 8;
    CHECK_THROWS_AS(split_points(ds, cfg), Error);
}

TEST_CASE("segment_xy") {
    auto seg = segment_xy(straight("s", 20));
    CHECK(seg.x.size() == 17);
    CHECK(seg.y.size() == 3);
    seg = segment_xy(straight("s", 2));
    CHECK(seg.x.size() == 1);
    CHECK(seg.y.size() == 1);
    CHECK(segment_xy(straight("s", 100)).y.size() == 15);
    const auto full = straight("s", 37);
    seg = segment_xy(full);
    std::vector<CellId> joined = seg.x;
    joined.insert(joined.end(), seg.y.begin(), seg.y.end());
    CHECK(joined == full.cells);
    CHECK_THROWS_AS(segment_xy(straight("s", 1)), Error);
}

TEST_CASE("manifest JSON is fixed-order and round-trips") {
    SplitConfig cfg;
    cfg.n_bins = 2;
    cfg.seed = 42;
    const auto ids = numbered_ids(30);
    std::vector<double> vals;
    for (std::size_t i = 0; i < ids.size(); ++i) vals.push_back(static_cast<double>(i % 7));
    const auto m = split_ids(ids, vals, cfg);
    const auto j = to_json(m);
    std::vector<std::string> keys;
    for (const auto& [k, v] : j.items()) keys.push_back(k);
    CHECK(keys == std::vector<std::string>{"train", "test", "config", "bucket_report"});
    CHECK(std::is_sorted(m.train.begin(), m.train.end()));
    const auto back = manifest_from_json(nlohmann::json::parse(manifest_text(m)));
    CHECK(manifest_text(back) == manifest_text(m));
    CHECK_THROWS_AS(manifest_from_json(nlohmann::json::parse(R"({"train":["a"],"test":["a"],"config":{"resolution":9,"n_bins":1,"test_fraction":0.2,"seed":0,"strat_source":"target"}})")),
                    Error);
}
