#include <doctest.h>

#include <filesystem>
#include <unistd.h>

#include "obsr/selftest/oracles.hpp"
#include "obsr/synthdata.hpp"
#include "obsr/trajprep.hpp"

using namespace obsr;

namespace {

const CellId kA = CellId::from_string("8928308280fffff");

HexTrajectory hex(const std::string& id, std::vector<CellId> cells, std::vector<double> times = {}) {
    HexTrajectory h{id, cells.front().resolution(), std::move(cells), std::move(times), 0.0, {}};
    if (!h.times.empty()) h.duration_s = h.times.back() - h.times.front();
    return h;
}

std::vector<Trajectory> walks(SynthKind kind, std::size_t n, std::uint64_t seed) {
    SynthSpec spec;
    spec.kind = kind;
    spec.n = n;
    spec.seed = seed;
    spec.walk_length = 10;
    spec.walk_length_max = 40;
    return generate_trajectories(spec);
}

}  // namespace

TEST_CASE("hexify collapses runs and keeps the first timestamp") {
    const CellId b = neighbor_in_direction(kA, DirectionLabel(0));
    const Trajectory t{"t", {{centroid(kA), 0}, {centroid(kA), 15}, {centroid(b), 30}}, {{"mode", "walk"}}};
    const auto h = hexify(t, 9);
    CHECK(h.cells == std::vector<CellId>{kA, b});
    CHECK(h.times == std::vector<double>{0, 30});
    CHECK(h.duration_s == 30.0);
    CHECK(h.meta.at("mode") == "walk");

    const Trajectory stay{"s", {{centroid(kA), 0}, {centroid(kA), 15}}, {}};
    try {
        hexify(stay, 9);
        FAIL("expected TooShort");
    } catch (const Error& e) {
        CHECK(e.code() == Errc::TooShort);
    }
    PrepareCounts counts;
    const std::vector<Trajectory> both{t, stay};
    CHECK(hexify_all(both, 9, counts).size() == 1);
    CHECK(counts.input == 2);
    CHECK(counts.dropped_short == 1);
}

TEST_CASE("duration is the raw span regardless of collapsing") {
    const auto trajs = walks(SynthKind::gappy_walks, 100, 4);
    PrepareCounts counts;
    for (const auto& h : hexify_all(trajs, 8, counts)) {
        const auto it = std::find_if(trajs.begin(), trajs.end(), [&](const Trajectory& t) { return t.id == h.id; });
        CHECK(h.duration_s == static_cast<double>(it->samples.back().time - it->samples.front().time));
    }
}

TEST_CASE("single gap interpolation") {
    const CellId c = neighbor_in_direction(neighbor_in_direction(kA, DirectionLabel(1)), DirectionLabel(1));
    REQUIRE(grid_distance(kA, c) == 2);
    const auto out = interpolate_gaps(hex("g", {kA, c}, {100, 160}));
    REQUIRE(out.size() == 1);
    REQUIRE(out[0].cells.size() == 3);
    CHECK(out[0].cells[1] == grid_path(kA, c)[1]);
    CHECK(out[0].times == std::vector<double>{100, 130, 160});
    CHECK(out[0].duration_s == 60.0);
    CHECK(out[0].id == "g");

    const auto line = decode_directions(kA, std::vector<DirectionLabel>(5, DirectionLabel(2)));
    const auto same = interpolate_gaps(hex("c", line));
    REQUIRE(same.size() == 1);
    CHECK(same[0] == hex("c", line));
}

TEST_CASE("gappy walks become contiguous with exact length accounting") {
    const auto trajs = walks(SynthKind::gappy_walks, 100, 8);
    PrepareCounts counts;
    const auto hexed = hexify_all(trajs, 9, counts);
    for (const auto& h : hexed) {
        std::size_t expected = h.cells.size();
        for (std::size_t i = 1; i < h.cells.size(); ++i) {
            const auto bfs = oracle::bfs_distances(h.cells[i - 1], 10);
            expected += static_cast<std::size_t>(bfs.at(h.cells[i]) - 1);
        }
        const auto out = interpolate_gaps(h);
        REQUIRE(out.size() == 1);
        CHECK(out[0].cells.size() == expected);
        CHECK(is_contiguous(out[0].cells));
        CHECK(std::is_sorted(out[0].times.begin(), out[0].times.end()));
        CHECK(interpolate_gaps(out[0]) == out);
    }
}

TEST_CASE("over-long gaps split the trajectory") {
    const CellId a2 = neighbor_in_direction(kA, DirectionLabel(0));
    CellId far = kA;
    for (int i = 0; i < 30; ++i) far = neighbor_in_direction(far, DirectionLabel(2));
    const CellId far2 = neighbor_in_direction(far, DirectionLabel(2));
    const CellId lonely = neighbor_in_direction(far2, DirectionLabel(2));
    CellId farther = lonely;
    for (int i = 0; i < 30; ++i) farther = neighbor_in_direction(farther, DirectionLabel(3));

    const auto h = hex("trip", {kA, a2, far, far2, farther}, {0, 10, 20, 30, 40});
    const auto out = interpolate_gaps(h);
    REQUIRE(out.size() == 2);
    CHECK(out[0].id == "trip#0");
    CHECK(out[0].cells == std::vector<CellId>{kA, a2});
    CHECK(out[1].id == "trip#1");
    CHECK(out[1].cells == std::vector<CellId>{far, far2});
    CHECK(out[1].duration_s == 10.0);

    PrepareCounts counts;
    const std::vector<HexTrajectory> one{h};
    CHECK(interpolate_all(one, GapOptions{}, counts).size() == 2);
    CHECK(counts.split == 1);
    CHECK(counts.dropped_pieces == 1);

    try {
        interpolate_gaps(h, GapOptions{25, false});
        FAIL("expected GapTooLarge");
    } catch (const Error& e) {
        CHECK(e.code() == Errc::GapTooLarge);
    }
    CHECK(interpolate_gaps(h, GapOptions{40, true}).size() == 1);
}

TEST_CASE("direction encoding") {
    const auto line = decode_directions(kA, std::vector<DirectionLabel>(3, DirectionLabel(4)));
    const auto labels = encode_directions(line);
    CHECK(labels == std::vector<DirectionLabel>(3, DirectionLabel(4)));
    CHECK(encode_directions(std::vector<CellId>{kA}).empty());
    CHECK(decode_directions(kA, {}) == std::vector<CellId>{kA});
    for (int d = 0; d < 6; ++d) {
        const std::vector<DirectionLabel> back{DirectionLabel(d), DirectionLabel(d).opposite()};
        CHECK(decode_directions(kA, back)[2] == kA);
    }
    const std::vector<CellId> gap{kA, ring(kA, 2).front()};
    try {
        encode_directions(gap);
        FAIL("expected NotContiguous");
    } catch (const Error& e) {
        CHECK(e.code() == Errc::NotContiguous);
    }
}

TEST_CASE("encode and decode round-trip on random walks") {
    const auto trajs = walks(SynthKind::random_walks, 500, 15);
    for (const auto& t : trajs) {
        std::vector<CellId> cells;
        for (const auto& s : t.samples) cells.push_back(cell_of(s.point, 9));
        CHECK(decode_directions(cells.front(), encode_directions(cells)) == cells);
    }
}

TEST_CASE("seven-class variant keeps stays") {
    const CellId b = neighbor_in_direction(kA, DirectionLabel(5));
    const std::vector<CellId> cells{kA, kA, b, b, kA};
    const auto labels = encode_with_stay(cells);
    CHECK(labels == std::vector<int>{kStayLabel, 5, kStayLabel, 2});
    CHECK(decode_with_stay(kA, labels) == cells);
}

TEST_CASE("parallel and serial preparation agree; JSONL round trip") {
    const auto trajs = walks(SynthKind::gappy_walks, 300, 99);
    PrepareCounts c1, c2;
    const auto par = prepare_trajectories(trajs, 9, GapOptions{}, c1, Exec::parallel);
    const auto ser = prepare_trajectories(trajs, 9, GapOptions{}, c2, Exec::serial);
    CHECK(par == ser);
    CHECK(c1.input == 300);
    CHECK(std::is_sorted(par.begin(), par.end(), [](const auto& a, const auto& b) { return a.id < b.id; }));

    const auto path = std::filesystem::temp_directory_path() / ("obsr_prep_" + std::to_string(::getpid()) + ".jsonl");
    write_prepared_jsonl(par, path.string());
    CHECK(read_prepared_jsonl(path.string()) == par);
    std::filesystem::remove(path);
}
