#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <unistd.h>

#include "obsr/embed.hpp"
#include "obsr/selftest/oracles.hpp"
#include "obsr/synthdata.hpp"

using namespace obsr;

namespace {

const CellId kA = CellId::from_string("8928308280fffff");

FeatureCountTable table_of(std::vector<std::string> vocab, std::map<CellId, std::vector<std::int64_t>> counts) {
    return FeatureCountTable{9, std::move(vocab), std::move(counts)};
}

std::filesystem::path temp_path(const std::string& name) {
    return std::filesystem::temp_directory_path() / ("obsr_embed_" + std::to_string(::getpid()) + "_" + name);
}

}  // namespace

TEST_CASE("feature counting") {
    const GeoPoint p = centroid(kA);
    const std::vector<FeatureRecord> recs{{p, "amenity=cafe"}, {p, "amenity=cafe"}, {p, "amenity=cafe"}, {p, "shop=bakery"}};
    const std::vector<std::string> filter{"amenity=cafe"};
    const auto t = ingest_feature_counts(recs, 9, filter);
    CHECK(t.vocabulary == filter);
    CHECK(t.counts.at(kA) == std::vector<std::int64_t>{3});

    const std::vector<std::string> none;
    try {
        ingest_feature_counts(recs, 9, none);
        FAIL("expected EmptyFilter");
    } catch (const Error& e) {
        CHECK(e.code() == Errc::EmptyFilter);
    }
}

TEST_CASE("count conservation and order independence") {
    SynthSpec spec;
    spec.n = 3000;
    const std::vector<std::string> keys{"shop=bakery", "amenity=cafe", "leisure=park", "amenity=bar"};
    auto recs = generate_feature_records(spec, keys);
    const std::vector<std::string> filter{"leisure=park", "amenity=cafe", "shop=bakery", "amenity=cafe"};
    const auto t = ingest_feature_counts(recs, 9, filter);
    CHECK(t.vocabulary == std::vector<std::string>{"amenity=cafe", "leisure=park", "shop=bakery"});
    for (std::size_t f = 0; f < t.vocabulary.size(); ++f) {
        std::int64_t total = 0;
        for (const auto& [c, v] : t.counts) total += v[f];
        std::int64_t expected = 0;
        for (const auto& [p, k] : recs) expected += k == t.vocabulary[f];
        CHECK(total == expected);
    }
    std::reverse(recs.begin(), recs.end());
    CHECK(ingest_feature_counts(recs, 9, filter, Exec::serial).counts == t.counts);
}

TEST_CASE("count embedder") {
    const CellId b = neighbor_in_direction(kA, DirectionLabel(0));
    const auto t = table_of({"a", "b"}, {{kA, {2, 5}}});
    const std::vector<CellId> cells{kA, b};
    const auto m = count_embed(t, cells);
    CHECK(m.dim == 2);
    CHECK(m.provenance == EmbedderKind::ce);
    CHECK(*m.find(kA) == std::vector<double>{2, 5});
    CHECK(*m.find(b) == std::vector<double>{0, 0});
    CHECK(m.find(neighbor_in_direction(kA, DirectionLabel(3))) == nullptr);
}

TEST_CASE("CCE with k = 0 is CE; uniform fields tile") {
    SynthSpec spec;
    spec.n = 2000;
    const auto t = ingest_feature_counts(generate_feature_records(spec, {"x=1", "y=2"}), 9, std::vector<std::string>{"x=1", "y=2"});
    const auto cells = disk(kA, 3);
    const auto ce = count_embed(t, cells);
    const auto cce0 = contextual_count_embed(t, cells, 0, CceMode::concat);
    CHECK(cce0.vectors == ce.vectors);
    CHECK(cce0.dim == ce.dim);

    std::map<CellId, std::vector<std::int64_t>> uniform;
    for (CellId c : disk(kA, 4)) uniform[c] = {1, 4, 2};
    const auto u = table_of({"a", "b", "c"}, uniform);
    const auto inner = disk(kA, 2);
    const auto m = contextual_count_embed(u, inner, 2, CceMode::concat);
    CHECK(m.dim == 9);
    for (const auto& [c, v] : m.vectors) CHECK(v == std::vector<double>{1, 4, 2, 1, 4, 2, 1, 4, 2});
}

TEST_CASE("CCE ring means against direct averaging") {
    CounterRng rng(3);
    std::map<CellId, std::vector<std::int64_t>> counts;
    for (CellId c : disk(kA, 2)) counts[c] = {static_cast<std::int64_t>(rng.below(10)), static_cast<std::int64_t>(rng.below(3))};
    REQUIRE(counts.size() == 19);
    const auto t = table_of({"a", "b"}, counts);
    const std::vector<CellId> one{kA};
    const auto concat = contextual_count_embed(t, one, 2, CceMode::concat);
    const auto squashed = contextual_count_embed(t, one, 2, CceMode::squashed);

    const auto dist = oracle::bfs_distances(kA, 2);
    std::vector<double> expect(6, 0.0);
    std::vector<double> members(3, 0.0);
    for (const auto& [c, d] : dist) members[d] += 1.0;
    for (const auto& [c, d] : dist) {
        for (int f = 0; f < 2; ++f) expect[d * 2 + f] += static_cast<double>(counts.at(c)[f]) / members[d];
    }
    const auto& got = *concat.find(kA);
    for (std::size_t i = 0; i < 6; ++i) CHECK(got[i] == doctest::Approx(expect[i]).epsilon(1e-12));
    const auto& sq = *squashed.find(kA);
    CHECK(squashed.dim == 2);
    for (int f = 0; f < 2; ++f) {
        CHECK(sq[f] == doctest::Approx(expect[f] + expect[2 + f] / 2 + expect[4 + f] / 3).epsilon(1e-12));
    }
}

TEST_CASE("CCE linearity, locality and zero input") {
    CounterRng rng(5);
    std::map<CellId, std::vector<std::int64_t>> counts;
    for (CellId c : disk(kA, 4)) counts[c] = {static_cast<std::int64_t>(rng.below(7))};
    const auto t = table_of({"a"}, counts);
    auto scaled = t;
    for (auto& [c, v] : scaled.counts) v[0] *= 3;
    const auto cells = disk(kA, 1);
    const auto base = contextual_count_embed(t, cells, 2);
    const auto tripled = contextual_count_embed(scaled, cells, 2);
    for (const auto& [c, v] : base.vectors) {
        for (std::size_t i = 0; i < v.size(); ++i) CHECK(tripled.vectors.at(c)[i] == doctest::Approx(3 * v[i]));
    }

    auto moved = t;
    moved.counts[ring(kA, 3).front()] = {1000};
    const std::vector<CellId> center{kA};
    CHECK(contextual_count_embed(moved, center, 2).vectors == contextual_count_embed(t, center, 2).vectors);

    const auto empty = table_of({"a", "b"}, {});
    const auto z = contextual_count_embed(empty, cells, 2);
    CHECK(z.dim == 6);
    for (const auto& [c, v] : z.vectors) CHECK(v == std::vector<double>(6, 0.0));
    CHECK(contextual_count_embed(t, cells, 2, CceMode::concat, Exec::serial).vectors == base.vectors);
}

TEST_CASE("CCE refuses pentagon rings") {
    const CellId pentagon = CellId::from_string("8009fffffffffff");
    FeatureCountTable t{0, {"a"}, {}};
    const std::vector<CellId> cells{pentagon};
    try {
        contextual_count_embed(t, cells, 1);
        FAIL("expected PentagonEncountered");
    } catch (const Error& e) {
        CHECK(e.code() == Errc::PentagonEncountered);
    }
}

TEST_CASE("embedding CSV and tag filter files") {
    const auto t = table_of({"a", "b"}, {{kA, {1, 2}}});
    auto m = contextual_count_embed(t, disk(kA, 1), 1);
    const auto path = temp_path("emb.csv");
    write_embeddings(m, path.string());
    std::ifstream head(path);
    std::string header;
    std::getline(head, header);
    CHECK(header == "cell,f_0,f_1,f_2,f_3");
    const auto back = read_embeddings(path.string());
    CHECK(back.vectors == m.vectors);
    CHECK(back.provenance == EmbedderKind::cce);
    CHECK(back.params == m.params);
    std::filesystem::remove(path);
    std::filesystem::remove(std::filesystem::path(path).replace_extension(".json"));

    CHECK(tag_filter_from_json(nlohmann::json::parse(R"(["amenity=cafe", "shop=bakery"])")).size() == 2);
    const auto obj = tag_filter_from_json(nlohmann::json::parse(R"({"amenity": ["cafe", "bar"], "shop": ["bakery"]})"));
    CHECK(obj == std::vector<std::string>{"amenity=cafe", "amenity=bar", "shop=bakery"});
    CHECK_THROWS_AS(tag_filter_from_json(nlohmann::json::array()), Error);

    const std::vector<FeatureRecord> recs{{GeoPoint(37.1, -122.2), "amenity=cafe"}, {GeoPoint(37.2, -122.3), "shop=bakery"}};
    const auto fpath = temp_path("feat.csv");
    write_feature_records(recs, fpath.string());
    const auto rback = load_feature_records(fpath.string());
    REQUIRE(rback.size() == 2);
    CHECK(rback[1].first == recs[1].first);
    CHECK(rback[1].second == "shop=bakery");
    std::filesystem::remove(fpath);
}
