#pragma once

// Hierarchical hexagonal grid (H3 indexing standard). All functions are pure
// and thread-safe; failures are reported as obsr::Error.

#include <array>
#include <compare>
#include <cstdint>
#include <functional>
#include <string>
#include <string_view>
#include <vector>

namespace obsr {

inline constexpr int kMinResolution = 0;
inline constexpr int kMaxResolution = 15;

/// WGS84 coordinate in degrees; validated on construction.
class GeoPoint {
public:
    GeoPoint(double lat, double lon);

    double lat() const noexcept { return lat_; }
    double lon() const noexcept { return lon_; }

    /// Non-throwing validity predicate used by the parsers.
    static bool valid(double lat, double lon) noexcept;

    friend bool operator==(const GeoPoint&, const GeoPoint&) = default;

private:
    double lat_;
    double lon_;
};

/// 64-bit grid cell index. Always holds a valid cell.
class CellId {
public:
    /// Checked construction from a raw index.
    static CellId from_index(std::uint64_t index);
    /// Parse the 15-character lowercase hex form (e.g. "8928308280fffff").
    static CellId from_string(std::string_view hex);

    std::uint64_t index() const noexcept { return index_; }
    int resolution() const noexcept;
    std::string to_string() const;

    friend auto operator<=>(const CellId&, const CellId&) = default;

private:
    explicit CellId(std::uint64_t index) noexcept : index_(index) {}
    std::uint64_t index_;
};

/// One of the six neighbor slots of a hexagon. Label order follows the
/// grid's unit-ring traversal: I, IJ, J, JK, K, IK axes of the cell's local
/// IJ frame, i.e. counter-clockwise starting from the I axis.
class DirectionLabel {
public:
    static constexpr int kCount = 6;

    explicit DirectionLabel(int value);

    int value() const noexcept { return value_; }
    DirectionLabel opposite() const noexcept { return DirectionLabel((value_ + 3) % kCount); }

    friend auto operator<=>(const DirectionLabel&, const DirectionLabel&) = default;

private:
    int value_;
};

void check_resolution(int r);

CellId cell_of(const GeoPoint& p, int r);
GeoPoint centroid(CellId c);
/// Boundary vertices in counter-clockwise order (not closed).
std::vector<GeoPoint> boundary(CellId c);
CellId parent(CellId c, int parent_resolution);
std::vector<CellId> children(CellId c, int child_resolution);
bool is_pentagon(CellId c) noexcept;

/// Hollow ring at exact grid distance k. Throws PentagonEncountered when the
/// ring touches pentagon distortion; callers may fall back to disk differences.
std::vector<CellId> ring(CellId c, int k);
/// Filled disk of all cells within grid distance k, origin first.
std::vector<CellId> disk(CellId c, int k);
/// Neighbor-step distance between two cells of the same resolution.
int grid_distance(CellId a, CellId b);
/// Shortest contiguous path from a to b inclusive.
std::vector<CellId> grid_path(CellId a, CellId b);
bool are_neighbors(CellId a, CellId b);

DirectionLabel direction_between(CellId a, CellId b);
CellId neighbor_in_direction(CellId c, DirectionLabel d);
/// All six neighbors ordered by label. Throws PentagonNeighborhood.
std::array<CellId, DirectionLabel::kCount> neighbors_by_direction(CellId c);

}  // namespace obsr

template <>
struct std::hash<obsr::CellId> {
    std::size_t operator()(const obsr::CellId& c) const noexcept {
        return std::hash<std::uint64_t>{}(c.index());
    }
};
