#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <unistd.h>

#include <json.hpp>

#include "obsr/artifacts.hpp"
#include "obsr/random.hpp"
#include "obsr/synthdata.hpp"

using namespace obsr;
namespace fs = std::filesystem;

namespace {

const CellId kA = CellId::from_string("8928308280fffff");

struct TempDir {
    fs::path path = fs::temp_directory_path() / ("obsr_artifacts_" + std::to_string(::getpid()));
    TempDir() { fs::create_directories(path); }
    ~TempDir() { fs::remove_all(path); }
    std::string file(const std::string& name) const { return (path / name).string(); }
};

nlohmann::json read(const std::string& p) {
    std::ifstream in(p);
    return nlohmann::json::parse(in);
}

RegionDataset dataset_of(std::map<CellId, double> targets) {
    RegionDataset ds;
    ds.resolution = 9;
    for (const auto& [c, t] : targets) ds.rows[c] = {t, 3};
    return ds;
}

std::vector<std::pair<double, double>> ring_of(const nlohmann::json& feature) {
    std::vector<std::pair<double, double>> out;
    for (const auto& p : feature["geometry"]["coordinates"][0]) out.emplace_back(p[0].get<double>(), p[1].get<double>());
    return out;
}

std::vector<double> targets_of(const RegionDataset& ds) {
    std::vector<double> out;
    for (const auto& [c, row] : ds.rows) out.push_back(row.target);
    return out;
}

}  // namespace

TEST_CASE("single-cell choropleth") {
    TempDir dir;
    const double value = 0.1 + 0.2;
    emit_choropleth(dataset_of({{kA, value}}), dir.file("one.geojson"));
    const auto fc = read(dir.file("one.geojson"));
    CHECK(fc["type"] == "FeatureCollection");
    REQUIRE(fc["features"].size() == 1);
    const auto& f = fc["features"][0];
    CHECK(f["geometry"]["type"] == "Polygon");
    CHECK(f["properties"]["cell"] == kA.to_string());
    CHECK(f["properties"]["target"].get<double>() == value);
    CHECK(f["properties"]["support"] == 3);
    const auto ring = ring_of(f);
    CHECK(ring.size() == 7);
    CHECK(ring.front() == ring.back());
    // [lon, lat] order
    const GeoPoint c = centroid(kA);
    CHECK(std::abs(ring[0].first - c.lon()) < 0.01);
    CHECK(std::abs(ring[0].second - c.lat()) < 0.01);
}

TEST_CASE("adjacent polygons share an edge") {
    TempDir dir;
    std::map<CellId, double> t{{kA, 1.0}};
    for (CellId n : neighbors_by_direction(kA)) t[n] = 2.0;
    emit_choropleth(dataset_of(t), dir.file("disk.geojson"));
    const auto fc = read(dir.file("disk.geojson"));
    REQUIRE(fc["features"].size() == 7);
    std::map<std::string, std::vector<std::pair<double, double>>> rings;
    for (const auto& f : fc["features"]) rings[f["properties"]["cell"].get<std::string>()] = ring_of(f);
    const auto& center = rings.at(kA.to_string());
    for (CellId n : neighbors_by_direction(kA)) {
        const auto& other = rings.at(n.to_string());
        int shared = 0;
        for (std::size_t i = 0; i + 1 < center.size(); ++i) {
            for (std::size_t j = 0; j + 1 < other.size(); ++j) {
                if (std::abs(center[i].first - other[j].first) < 1e-9 && std::abs(center[i].second - other[j].second) < 1e-9) ++shared;
            }
        }
        CHECK(shared == 2);
    }
}

TEST_CASE("choropleth of an empty dataset") {
    TempDir dir;
    try {
        emit_choropleth(RegionDataset{}, dir.file("none.geojson"));
        FAIL("expected EmptyInput");
    } catch (const Error& e) {
        CHECK(e.code() == Errc::EmptyInput);
    }
}

TEST_CASE("histogram bins") {
    std::vector<double> uniform;
    for (int i = 0; i < 100; ++i) uniform.push_back(i);
    const auto h = histogram(uniform, 4);
    REQUIRE(h.size() == 4);
    for (const auto& b : h) CHECK(std::abs(static_cast<long>(b.count) - 25) <= 1);
    CHECK(h.front().left == 0.0);
    CHECK(h.back().right == 99.0);

    CounterRng rng(3);
    std::vector<double> noisy;
    for (int i = 0; i < 1001; ++i) noisy.push_back(rng.normal());
    std::size_t total = 0;
    for (const auto& b : histogram(noisy, 13)) total += b.count;
    CHECK(total == noisy.size());

    const std::vector<double> same(5, 2.5);
    const auto one = histogram(same, 10);
    REQUIRE(one.size() == 1);
    CHECK(one[0].count == 5);

    CHECK_THROWS_AS(histogram(std::vector<double>{}, 4), Error);
}

TEST_CASE("histogram CSV") {
    TempDir dir;
    emit_histogram(dataset_of({{kA, 1.0}, {neighbor_in_direction(kA, DirectionLabel(0)), 3.0}}), 2, dir.file("h.csv"));
    std::ifstream in(dir.file("h.csv"));
    std::string line;
    std::getline(in, line);
    CHECK(line == "bin_left,bin_right,count");
    std::getline(in, line);
    CHECK(line == "1,2,1");
    std::getline(in, line);
    CHECK(line == "2,3,1");
}

TEST_CASE("intensity histograms shift toward zero at finer resolution") {
    SynthSpec spec;
    spec.kind = SynthKind::clustered_intensity;
    spec.n = 5000;
    spec.seed = 21;
    const auto pts = generate_points(spec);
    auto low_share = [&](int r) {
        const auto h = histogram(targets_of(aggregate_intensity(pts, r)), 10);
        std::size_t total = 0;
        for (const auto& b : h) total += b.count;
        return static_cast<double>(h[0].count) / static_cast<double>(total);
    };
    CHECK(low_share(10) > low_share(8));
}
