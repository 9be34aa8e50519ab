#include "obsr/hexgrid.hpp"

#include <cmath>
#include <cstdio>

#include "obsr/error.hpp"

extern "C" {
#include <h3api.h>
}

namespace obsr {
namespace {

// Unit steps in local IJ coordinates, indexed by direction label.
// ijk -> ij is (i - k, j - k): I=(1,0,0), IJ=(1,1,0), J=(0,1,0), JK=(0,1,1),
// K=(0,0,1), IK=(1,0,1).
constexpr std::array<std::array<int, 2>, DirectionLabel::kCount> kUnitIj = {{
    {1, 0},
    {1, 1},
    {0, 1},
    {-1, 0},
    {-1, -1},
    {0, -1},
}};

std::string describe(H3Error err) { return describeH3Error(err); }

void check_same_resolution(CellId a, CellId b) {
    if (a.resolution() != b.resolution()) {
        fail(Errc::ResolutionMismatch,
             a.to_string() + " (res " + std::to_string(a.resolution()) + ") vs " + b.to_string() +
                 " (res " + std::to_string(b.resolution()) + ")");
    }
}

CoordIJ local_ij(CellId origin, CellId c) {
    CoordIJ ij{};
    if (const H3Error err = cellToLocalIj(origin.index(), c.index(), 0, &ij); err != E_SUCCESS) {
        fail(Errc::PentagonNeighborhood,
             "local frame of " + origin.to_string() + " cannot address " + c.to_string() + ": " + describe(err));
    }
    return ij;
}

std::vector<CellId> wrap(const std::vector<H3Index>& raw) {
    std::vector<CellId> out;
    out.reserve(raw.size());
    for (H3Index h : raw) {
        if (h != 0) out.push_back(CellId::from_index(h));
    }
    return out;
}

}  // namespace

GeoPoint::GeoPoint(double lat, double lon) : lat_(lat), lon_(lon) {
    if (!valid(lat, lon)) {
        fail(Errc::InvalidCoordinate, "(" + std::to_string(lat) + ", " + std::to_string(lon) + ")");
    }
}

bool GeoPoint::valid(double lat, double lon) noexcept {
    return std::isfinite(lat) && std::isfinite(lon) && lat >= -90.0 && lat <= 90.0 && lon >= -180.0 &&
           lon <= 180.0;
}

CellId CellId::from_index(std::uint64_t index) {
    if (!isValidCell(index)) {
        char buf[32];
        std::snprintf(buf, sizeof buf, "%llx", static_cast<unsigned long long>(index));
        fail(Errc::InvalidCell, buf);
    }
    return CellId(index);
}

CellId CellId::from_string(std::string_view hex) {
    if (hex.empty() || hex.size() > 16) fail(Errc::InvalidCell, std::string(hex));
    H3Index index = 0;
    const std::string buf(hex);
    if (stringToH3(buf.c_str(), &index) != E_SUCCESS) fail(Errc::InvalidCell, buf);
    return from_index(index);
}

int CellId::resolution() const noexcept { return getResolution(index_); }

std::string CellId::to_string() const {
    char buf[17];
    h3ToString(index_, buf, sizeof buf);
    return buf;
}

DirectionLabel::DirectionLabel(int value) : value_(value) {
    if (value < 0 || value >= kCount) fail(Errc::InvalidConfig, "direction label " + std::to_string(value));
}

void check_resolution(int r) {
    if (r < kMinResolution || r > kMaxResolution) fail(Errc::InvalidResolution, std::to_string(r));
}

CellId cell_of(const GeoPoint& p, int r) {
    check_resolution(r);
    const LatLng ll{degsToRads(p.lat()), degsToRads(p.lon())};
    H3Index out = 0;
    if (const H3Error err = latLngToCell(&ll, r, &out); err != E_SUCCESS) {
        fail(Errc::InvalidCoordinate, describe(err));
    }
    return CellId::from_index(out);
}

GeoPoint centroid(CellId c) {
    LatLng ll{};
    if (cellToLatLng(c.index(), &ll) != E_SUCCESS) fail(Errc::InvalidCell, c.to_string());
    return GeoPoint(radsToDegs(ll.lat), radsToDegs(ll.lng));
}

std::vector<GeoPoint> boundary(CellId c) {
    CellBoundary b{};
    if (cellToBoundary(c.index(), &b) != E_SUCCESS) fail(Errc::InvalidCell, c.to_string());
    std::vector<GeoPoint> out;
    out.reserve(static_cast<std::size_t>(b.numVerts));
    for (int i = 0; i < b.numVerts; ++i) {
        out.emplace_back(radsToDegs(b.verts[i].lat), radsToDegs(b.verts[i].lng));
    }
    return out;
}

CellId parent(CellId c, int parent_resolution) {
    check_resolution(parent_resolution);
    H3Index out = 0;
    if (cellToParent(c.index(), parent_resolution, &out) != E_SUCCESS) {
        fail(Errc::InvalidResolution,
             "parent res " + std::to_string(parent_resolution) + " of " + c.to_string());
    }
    return CellId::from_index(out);
}

std::vector<CellId> children(CellId c, int child_resolution) {
    check_resolution(child_resolution);
    std::int64_t n = 0;
    if (cellToChildrenSize(c.index(), child_resolution, &n) != E_SUCCESS) {
        fail(Errc::InvalidResolution, "child res " + std::to_string(child_resolution) + " of " + c.to_string());
    }
    std::vector<H3Index> raw(static_cast<std::size_t>(n));
    cellToChildren(c.index(), child_resolution, raw.data());
    return wrap(raw);
}

bool is_pentagon(CellId c) noexcept { return isPentagon(c.index()) != 0; }

std::vector<CellId> ring(CellId c, int k) {
    if (k < 0) fail(Errc::InvalidConfig, "ring radius " + std::to_string(k));
    if (k == 0) return {c};
    std::int64_t n = 0;
    maxGridRingSize(k, &n);
    std::vector<H3Index> raw(static_cast<std::size_t>(n), 0);
    if (const H3Error err = gridRingUnsafe(c.index(), k, raw.data()); err != E_SUCCESS) {
        fail(Errc::PentagonEncountered, "ring(" + c.to_string() + ", " + std::to_string(k) + "): " + describe(err));
    }
    return wrap(raw);
}

std::vector<CellId> disk(CellId c, int k) {
    if (k < 0) fail(Errc::InvalidConfig, "disk radius " + std::to_string(k));
    std::int64_t n = 0;
    maxGridDiskSize(k, &n);
    std::vector<H3Index> raw(static_cast<std::size_t>(n), 0);
    if (const H3Error err = gridDisk(c.index(), k, raw.data()); err != E_SUCCESS) {
        fail(Errc::InvalidCell, "disk(" + c.to_string() + "): " + describe(err));
    }
    return wrap(raw);
}

int grid_distance(CellId a, CellId b) {
    check_same_resolution(a, b);
    std::int64_t d = 0;
    if (const H3Error err = gridDistance(a.index(), b.index(), &d); err != E_SUCCESS) {
        fail(Errc::DistanceUndefined, a.to_string() + " -> " + b.to_string() + ": " + describe(err));
    }
    return static_cast<int>(d);
}

std::vector<CellId> grid_path(CellId a, CellId b) {
    check_same_resolution(a, b);
    std::int64_t n = 0;
    if (const H3Error err = gridPathCellsSize(a.index(), b.index(), &n); err != E_SUCCESS) {
        fail(Errc::PathUndefined, a.to_string() + " -> " + b.to_string() + ": " + describe(err));
    }
    std::vector<H3Index> raw(static_cast<std::size_t>(n), 0);
    if (const H3Error err = gridPathCells(a.index(), b.index(), raw.data()); err != E_SUCCESS) {
        fail(Errc::PathUndefined, a.to_string() + " -> " + b.to_string() + ": " + describe(err));
    }
    return wrap(raw);
}

bool are_neighbors(CellId a, CellId b) {
    check_same_resolution(a, b);
    int out = 0;
    if (areNeighborCells(a.index(), b.index(), &out) != E_SUCCESS) return false;
    return out != 0;
}

DirectionLabel direction_between(CellId a, CellId b) {
    check_same_resolution(a, b);
    if (is_pentagon(a)) fail(Errc::PentagonNeighborhood, a.to_string() + " is a pentagon");
    if (!are_neighbors(a, b)) fail(Errc::NotAdjacent, a.to_string() + " and " + b.to_string());
    const CoordIJ origin = local_ij(a, a);
    const CoordIJ target = local_ij(a, b);
    const int di = target.i - origin.i;
    const int dj = target.j - origin.j;
    for (int d = 0; d < DirectionLabel::kCount; ++d) {
        if (kUnitIj[d][0] == di && kUnitIj[d][1] == dj) return DirectionLabel(d);
    }
    fail(Errc::PentagonNeighborhood, "distorted neighbor offset between " + a.to_string() + " and " + b.to_string());
}

CellId neighbor_in_direction(CellId c, DirectionLabel d) {
    if (is_pentagon(c)) fail(Errc::PentagonNeighborhood, c.to_string() + " is a pentagon");
    const CoordIJ origin = local_ij(c, c);
    const CoordIJ step{origin.i + kUnitIj[d.value()][0], origin.j + kUnitIj[d.value()][1]};
    H3Index out = 0;
    if (const H3Error err = localIjToCell(c.index(), &step, 0, &out); err != E_SUCCESS) {
        fail(Errc::PentagonNeighborhood,
             "slot " + std::to_string(d.value()) + " of " + c.to_string() + ": " + describe(err));
    }
    return CellId::from_index(out);
}

std::array<CellId, DirectionLabel::kCount> neighbors_by_direction(CellId c) {
    return {neighbor_in_direction(c, DirectionLabel(0)), neighbor_in_direction(c, DirectionLabel(1)),
            neighbor_in_direction(c, DirectionLabel(2)), neighbor_in_direction(c, DirectionLabel(3)),
            neighbor_in_direction(c, DirectionLabel(4)), neighbor_in_direction(c, DirectionLabel(5))};
}

}  // namespace obsr
