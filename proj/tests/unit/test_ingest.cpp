#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <unistd.h>

#include "obsr/ingest.hpp"

using namespace obsr;
namespace fs = std::filesystem;

namespace {

struct TempDir {
    fs::path path;
    TempDir() {
        path = fs::temp_directory_path() / ("obsr_ingest_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
        fs::create_directories(path);
    }
    ~TempDir() { fs::remove_all(path); }
    fs::path write(const std::string& name, const std::string& content) const {
        const fs::path p = path / name;
        fs::create_directories(p.parent_path());
        std::ofstream(p) << content;
        return p;
    }
    static inline int counter = 0;
};

RawDatasetDescriptor point_desc(const fs::path& p) {
    RawDatasetDescriptor d;
    d.format = DatasetFormat::point_csv;
    d.path = p.string();
    d.columns = {{"id", "id"}, {"lat", "lat"}, {"lon", "lon"}};
    return d;
}

}  // namespace

TEST_CASE("point CSV drops malformed rows and counts them") {
    TempDir dir;
    const auto p = dir.write("pts.csv", "id,lat,lon,price\na,47.5,-122.3,100\nb,notanumber,-122.3,200\nc,47.6,-122.2,300\n");
    auto desc = point_desc(p);
    desc.columns["target"] = "price";
    const auto res = load_points(desc);
    CHECK(res.items.size() == 2);
    CHECK(res.drop_count == 1);
    CHECK(res.input_rows == res.items.size() + res.drop_count);
    CHECK(res.items[0].id == "a");
    CHECK(res.items[1].target.value() == 300.0);
}

TEST_CASE("point CSV validates coordinates and keeps extra columns as features") {
    TempDir dir;
    const auto p = dir.write("pts.csv", "id,lat,lon,kind,rooms\nz,91,10,house,3\ny,45,10,flat,2\n");
    const auto res = load_points(point_desc(p));
    REQUIRE(res.items.size() == 1);
    CHECK(res.drop_count == 1);
    CHECK(std::get<std::string>(res.items[0].features.at("kind")) == "flat");
    CHECK(std::get<double>(res.items[0].features.at("rooms")) == 2.0);
}

TEST_CASE("point CSV errors") {
    TempDir dir;
    CHECK_THROWS_AS(load_points(point_desc(dir.path / "missing.csv")), Error);
    const auto bad_header = dir.write("h.csv", "id,latitude,lon\na,1,2\n");
    try {
        load_points(point_desc(bad_header));
        FAIL("expected HeaderMismatch");
    } catch (const Error& e) {
        CHECK(e.code() == Errc::HeaderMismatch);
    }
    const auto empty = dir.write("e.csv", "id,lat,lon\na,x,y\n");
    try {
        load_points(point_desc(empty));
        FAIL("expected EmptyDataset");
    } catch (const Error& e) {
        CHECK(e.code() == Errc::EmptyDataset);
    }
    const auto dup = dir.write("d.csv", "id,lat,lon\na,1,2\na,1,3\n");
    CHECK_THROWS_AS(load_points(point_desc(dup)), Error);
}

TEST_CASE("output is ordered by id regardless of file order") {
    TempDir dir;
    const auto p1 = dir.write("a.csv", "id,lat,lon\nb,1,2\na,1,3\nc,2,2\n");
    const auto p2 = dir.write("b.csv", "id,lat,lon\nc,2,2\na,1,3\nb,1,2\n");
    const auto r1 = load_points(point_desc(p1));
    const auto r2 = load_points(point_desc(p2));
    REQUIRE(r1.items.size() == 3);
    for (std::size_t i = 0; i < 3; ++i) {
        CHECK(r1.items[i].id == r2.items[i].id);
        CHECK(r1.items[i].point == r2.items[i].point);
    }
}

TEST_CASE("timestamps") {
    CHECK(parse_timestamp("0") == 0);
    CHECK(parse_timestamp("1372636858") == 1372636858);
    CHECK(parse_timestamp("1970-01-02 00:00:10") == 86410);
    CHECK(parse_timestamp("2008-10-23T02:53:04Z") == 1224730384);
    CHECK_FALSE(parse_timestamp("2008-13-23 02:53:04"));
    CHECK_FALSE(parse_timestamp("yesterday"));
}

TEST_CASE("Porto polyline ordering and cadence") {
    const auto pts = parse_polyline("[[-8.61,41.14],[-8.62,41.15]]");
    REQUIRE(pts.size() == 2);
    CHECK(pts[0].lat() == 41.14);
    CHECK(pts[0].lon() == -8.61);
    CHECK(parse_polyline("[]").empty());
    CHECK_THROWS_AS(parse_polyline("[[1,2],[3]]"), Error);
    CHECK_THROWS_AS(parse_polyline("[[1,2"), Error);

    TempDir dir;
    const auto p = dir.write("porto.csv",
                             "TRIP_ID,CALL_TYPE,TAXI_ID,TIMESTAMP,POLYLINE\n"
                             "\"t1\",\"A\",\"20000589\",0,\"[[-8.61,41.14],[-8.62,41.15]]\"\n"
                             "\"t2\",\"B\",\"20000596\",100,\"[]\"\n"
                             "\"t3\",\"B\",\"20000596\",100,\"[[-8.61,41.14]]\"\n"
                             "\"t4\",\"C\",\"20000596\",100,\"[[-8.61,41.14],[oops]]\"\n");
    RawDatasetDescriptor d;
    d.format = DatasetFormat::porto_polyline_csv;
    d.path = p.string();
    const auto res = load_trajectories(d);
    REQUIRE(res.items.size() == 1);
    CHECK(res.drop_count == 3);
    const auto& t = res.items[0];
    CHECK(t.id == "t1");
    CHECK(t.samples[0].time == 0);
    CHECK(t.samples[1].time == 15);
    CHECK(t.samples[1].point.lat() == 41.15);
    CHECK(t.meta.at("call_type") == "A");
}

TEST_CASE("Geolife PLT: headers skipped, box filter applied") {
    TempDir dir;
    std::string plt = "Geolife trajectory\nWGS 84\nAltitude is in Feet\nReserved 3\n0,2,255,My Track,0,0,2,8421376\n0\n";
    for (int i = 0; i < 5; ++i) {
        plt += "39.9" + std::to_string(i) + ",116.3,0,492,39745.1," + "2008-10-23,02:53:0" + std::to_string(i) + "\n";
    }
    plt += "31.2,121.4,0,492,39745.1,2008-10-23,02:54:00\n";  // Shanghai
    plt += "22.5,114.1,0,492,39745.1,2008-10-23,02:55:00\n";  // Shenzhen
    dir.write("Data/000/Trajectory/20081023025304.plt", plt);
    dir.write("Data/000/labels.txt", "Start Time\tEnd Time\tTransportation Mode\n2008/10/23 02:00:00\t2008/10/23 03:00:00\twalk\n");
    dir.write("Data/001/Trajectory/bad.plt", "only\ntwo lines\n");

    RawDatasetDescriptor d;
    d.format = DatasetFormat::geolife_plt_dir;
    d.path = (dir.path / "Data").string();
    const auto res = load_geolife(d);
    REQUIRE(res.items.size() == 1);
    CHECK(res.drop_count == 1);
    const auto& t = res.items[0];
    CHECK(t.id == "000/20081023025304");
    CHECK(t.samples.size() == 5);
    CHECK(t.samples.front().point.lat() == doctest::Approx(39.90));
    CHECK(t.samples.back().time - t.samples.front().time == 4);
    CHECK(t.meta.at("mode") == "walk");
}

TEST_CASE("Geolife default box encloses Beijing only") {
    CHECK(kBeijingBox.contains(GeoPoint(39.9042, 116.4074)));   // Tiananmen
    CHECK(kBeijingBox.contains(GeoPoint(40.0799, 116.6031)));   // Capital airport
    CHECK_FALSE(kBeijingBox.contains(GeoPoint(39.0842, 117.2009)));  // Tianjin
    CHECK_FALSE(kBeijingBox.contains(GeoPoint(31.2304, 121.4737)));  // Shanghai
}

TEST_CASE("writers round-trip through the readers") {
    TempDir dir;
    std::vector<Trajectory> trajs;
    trajs.push_back({"x1", {{GeoPoint(41.1, -8.6), 1000}, {GeoPoint(41.2, -8.7), 1015}, {GeoPoint(41.3, -8.8), 1030}}, {}});
    write_porto_csv(trajs, (dir.path / "p.csv").string());
    RawDatasetDescriptor d;
    d.format = DatasetFormat::porto_polyline_csv;
    d.path = (dir.path / "p.csv").string();
    const auto back = load_porto_trips(d);
    REQUIRE(back.items.size() == 1);
    CHECK(back.items[0].samples.size() == 3);
    CHECK(back.items[0].samples[2].point == trajs[0].samples[2].point);
    CHECK(back.items[0].samples[2].time == 1030);

    write_plt_dir(trajs, (dir.path / "plt").string());
    RawDatasetDescriptor g;
    g.format = DatasetFormat::geolife_plt_dir;
    g.path = (dir.path / "plt").string();
    g.bbox = BoundingBox{40, -9, 42, -8};
    const auto back2 = load_geolife(g);
    REQUIRE(back2.items.size() == 1);
    CHECK(back2.items[0].id == "x1");
    CHECK(back2.items[0].samples[1].time == 1015);

    trajs[0].samples[2].time = 1031;
    CHECK_THROWS_AS(write_porto_csv(trajs, (dir.path / "q.csv").string()), Error);

    std::vector<PointRecord> pts{{"p1", GeoPoint(1.5, 2.5), 7, 3.25, {}}, {"p2", GeoPoint(-1.0, 0.125), std::nullopt, 1.0, {}}};
    write_points_csv(pts, (dir.path / "pts.csv").string());
    auto pd = point_desc(dir.path / "pts.csv");
    pd.columns["target"] = "target";
    const auto pback = load_points(pd);
    REQUIRE(pback.items.size() == 2);
    CHECK(pback.items[0].target.value() == 3.25);
    CHECK(pback.items[1].point == pts[1].point);
}

TEST_CASE("id manifests partition items") {
    struct Item {
        std::string id;
    };
    const std::vector<Item> items{{"a"}, {"b"}, {"c"}};
    const auto split = apply_id_manifest(items, IdManifest{{"a"}, {"c"}});
    CHECK(split.train.size() == 1);
    CHECK(split.train[0].id == "a");
    CHECK(split.test.size() == 1);
    CHECK(split.test[0].id == "c");
    CHECK(split.excluded == 1);

    try {
        apply_id_manifest(items, IdManifest{{"a", "z"}, {"c"}});
        FAIL("expected UnknownIds");
    } catch (const Error& e) {
        CHECK(e.code() == Errc::UnknownIds);
    }
    CHECK_NOTHROW(apply_id_manifest(items, IdManifest{{"a", "z"}, {"c"}}, ManifestMode::lenient));
    try {
        apply_id_manifest(items, IdManifest{{"a", "b"}, {"b"}});
        FAIL("expected OverlappingSplit");
    } catch (const Error& e) {
        CHECK(e.code() == Errc::OverlappingSplit);
    }
    CHECK_THROWS_AS(apply_id_manifest(items, IdManifest{{"a"}, {}}), Error);

    TempDir dir;
    const auto p = dir.write("m.json", R"({"train": ["a", "b"], "test": ["c"], "meta": {"dataset": "x"}})");
    const auto m = load_id_manifest(p.string());
    CHECK(m.train.size() == 2);
    CHECK(m.test == std::vector<std::string>{"c"});
}
