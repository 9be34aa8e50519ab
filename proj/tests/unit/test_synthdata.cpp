#include <doctest.h>

#include <cmath>

#include "obsr/regionize.hpp"
#include "obsr/selftest/oracles.hpp"
#include "obsr/synthdata.hpp"

using namespace obsr;

TEST_CASE("constant-direction walks repeat one label") {
    SynthSpec spec;
    spec.kind = SynthKind::constant_direction_walks;
    spec.n = 50;
    spec.walk_length = 10;
    for (int d = 0; d < 6; ++d) {
        spec.direction = d;
        for (const auto& t : generate_trajectories(spec)) {
            REQUIRE(t.samples.size() == 10);
            for (std::size_t i = 1; i < t.samples.size(); ++i) {
                const CellId a = cell_of(t.samples[i - 1].point, 9);
                const CellId b = cell_of(t.samples[i].point, 9);
                CHECK(direction_between(a, b).value() == d);
            }
        }
    }
}

TEST_CASE("linear field without noise is exactly linear at cell centroids") {
    SynthSpec spec;
    spec.n = 2000;
    spec.seed = 1;
    spec.coef_a = 2.0;
    spec.coef_b = -1.5;
    spec.intercept = 10.0;
    spec.snap_resolution = 9;
    const auto ds = aggregate_mean(generate_points(spec), 9);
    for (const auto& [c, row] : ds.rows) {
        CHECK(std::abs(row.target - linear_field_value(spec, centroid(c))) < 1e-9);
    }
}

TEST_CASE("generators are deterministic and honor the invariants") {
    for (SynthKind kind : {SynthKind::linear_price_field, SynthKind::clustered_intensity}) {
        SynthSpec spec;
        spec.kind = kind;
        spec.n = 500;
        spec.seed = 77;
        spec.noise_sigma = 0.1;
        const auto a = generate_points(spec);
        const auto b = generate_points(spec);
        REQUIRE(a.size() == 500);
        for (std::size_t i = 0; i < a.size(); ++i) {
            CHECK(a[i].id == b[i].id);
            CHECK(a[i].point == b[i].point);
            CHECK(a[i].target == b[i].target);
            CHECK(std::abs(a[i].point.lat() - spec.center.lat()) <= spec.half_extent_deg);
        }
        spec.seed = 78;
        CHECK_FALSE(generate_points(spec)[0].point == a[0].point);
    }
    for (SynthKind kind : {SynthKind::random_walks, SynthKind::gappy_walks}) {
        SynthSpec spec;
        spec.kind = kind;
        spec.n = 200;
        spec.walk_length = 15;
        spec.walk_length_max = 40;
        const auto a = generate_trajectories(spec);
        const auto b = generate_trajectories(spec);
        std::size_t sizes = 0;
        for (std::size_t i = 0; i < a.size(); ++i) {
            REQUIRE(a[i].samples.size() == b[i].samples.size());
            CHECK(a[i].samples.size() >= 2);
            sizes += a[i].samples.size();
            for (std::size_t s = 1; s < a[i].samples.size(); ++s) {
                CHECK(a[i].samples[s].point == b[i].samples[s].point);
                CHECK(a[i].samples[s].time > a[i].samples[s - 1].time);
                const CellId p = cell_of(a[i].samples[s - 1].point, 9);
                const CellId q = cell_of(a[i].samples[s].point, 9);
                CHECK(p != q);
                if (kind == SynthKind::random_walks) {
                    CHECK(are_neighbors(p, q));
                    CHECK(a[i].samples[s].time - a[i].samples[s - 1].time == 30);
                }
            }
        }
        if (kind == SynthKind::gappy_walks) CHECK(sizes < 200 * 28 * 0.8);
    }
}

TEST_CASE("spec validation and JSON round trip") {
    SynthSpec spec;
    spec.n = 0;
    CHECK_THROWS_AS(generate_points(spec), Error);
    spec.n = 10;
    spec.center = GeoPoint(39.9042, 116.4074);  // Beijing sits in a pentagon base cell
    try {
        generate_points(spec);
        FAIL("expected InvalidSpec");
    } catch (const Error& e) {
        CHECK(e.code() == Errc::InvalidSpec);
    }
    spec.center = kSynthCenter;
    CHECK_THROWS_AS(generate_trajectories(spec), Error);
    spec.kind = SynthKind::gappy_walks;
    spec.gap_rate = 0.25;
    spec.seed = 1234567890123ULL;
    const auto back = synth_spec_from_json(nlohmann::json::parse(to_json(spec).dump()));
    CHECK(to_json(back) == to_json(spec));
    CHECK_THROWS_AS(synth_spec_from_json(nlohmann::json{{"kind", "nope"}}), Error);
}

TEST_CASE("feature records") {
    SynthSpec spec;
    spec.n = 1001;
    const auto recs = generate_feature_records(spec, {"amenity=cafe", "shop=bakery"});
    CHECK(recs.size() == 1001);
    std::size_t cafes = 0;
    for (const auto& [p, k] : recs) cafes += k == "amenity=cafe";
    CHECK(cafes == 501);
}

TEST_CASE("coordinate embeddings") {
    SynthSpec spec;
    spec.seed = 5;
    std::vector<CellId> cells;
    for (CellId c : disk(cell_of(spec.center, 9), 2)) cells.push_back(c);
    const auto plain = coordinate_embeddings(spec, cells, 5);
    const auto mixed = mixed_coordinate_embeddings(spec, cells, 5);
    CHECK(plain.dim == 5);
    CHECK(plain.vectors.size() == cells.size());
    CHECK(coordinate_embeddings(spec, cells, 5).vectors == plain.vectors);

    // least squares on (x, y) recovers every mixed dimension exactly
    std::vector<std::vector<double>> xy;
    for (CellId c : cells) {
        const auto [x, y] = scaled_offsets(spec, centroid(c));
        const auto& v = plain.vectors.at(c);
        CHECK(v[0] == x);
        CHECK(v[1] == y);
        for (int i = 2; i < 5; ++i) CHECK(std::abs(v[i]) <= 1.0);
        CHECK(mixed.vectors.at(c)[0] == x);
        xy.push_back({x, y});
    }
    for (int j = 2; j < 5; ++j) {
        std::vector<double> col;
        for (CellId c : cells) col.push_back(mixed.vectors.at(c)[j]);
        const auto beta = oracle::least_squares(xy, col);
        CHECK(std::abs(beta[2]) < 1e-9);
        for (std::size_t i = 0; i < cells.size(); ++i) {
            CHECK(std::abs(beta[0] * xy[i][0] + beta[1] * xy[i][1] + beta[2] - col[i]) < 1e-9);
        }
    }
    CHECK_THROWS_AS(coordinate_embeddings(spec, cells, 1), Error);
}
