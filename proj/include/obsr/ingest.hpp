#pragma once

// Parsers for the benchmark's raw input formats: generic point CSV, Porto
// taxi polyline CSV, Geolife PLT directories, and ID-list split manifests.

#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <unordered_map>
#include <variant>
#include <vector>

#include "obsr/error.hpp"
#include "obsr/hexgrid.hpp"

namespace obsr {

using FeatureValue = std::variant<std::string, double>;

struct PointRecord {
    std::string id;
    GeoPoint point;
    std::optional<std::int64_t> timestamp;  ///< UTC seconds
    std::optional<double> target;
    std::map<std::string, FeatureValue> features;
};

struct Sample {
    GeoPoint point;
    std::int64_t time;  ///< UTC seconds
};

struct Trajectory {
    std::string id;
    std::vector<Sample> samples;
    std::map<std::string, std::string> meta;
};

struct BoundingBox {
    double min_lat, min_lon, max_lat, max_lon;

    bool contains(const GeoPoint& p) const noexcept {
        return p.lat() >= min_lat && p.lat() <= max_lat && p.lon() >= min_lon && p.lon() <= max_lon;
    }
};

/// Default Geolife filter: the Beijing municipal area. A configurable
/// approximation, not a claim about any particular published filter.
inline constexpr BoundingBox kBeijingBox{39.4, 115.4, 41.1, 117.6};

enum class DatasetFormat { point_csv, porto_polyline_csv, geolife_plt_dir };

DatasetFormat parse_dataset_format(const std::string& name);
std::string to_string(DatasetFormat f);

/// Column roles: point_csv needs "id", "lat", "lon" and may bind "target" and
/// "timestamp"; porto_polyline_csv uses "id" (TRIP_ID), "start" (TIMESTAMP)
/// and "polyline" (POLYLINE) with those defaults.
struct RawDatasetDescriptor {
    DatasetFormat format = DatasetFormat::point_csv;
    std::string path;
    std::map<std::string, std::string> columns;
    std::optional<BoundingBox> bbox;  ///< points outside are dropped
    std::int64_t sample_interval_s = 15;  ///< Porto cadence
};

template <typename T>
struct LoadResult {
    std::vector<T> items;  ///< sorted by id
    std::size_t input_rows = 0;
    std::size_t drop_count = 0;
};

LoadResult<PointRecord> load_points(const RawDatasetDescriptor& desc);
LoadResult<Trajectory> load_porto_trips(const RawDatasetDescriptor& desc);
LoadResult<Trajectory> load_geolife(const RawDatasetDescriptor& desc);
/// Dispatches on desc.format for trajectory formats.
LoadResult<Trajectory> load_trajectories(const RawDatasetDescriptor& desc);

/// Parse a Porto POLYLINE value ("[[lon, lat], ...]") into points, lat first.
std::vector<GeoPoint> parse_polyline(const std::string& text);

/// Parse "yyyy-MM-dd HH:mm:ss" (or 'T' separated, optional trailing 'Z') or
/// integer epoch seconds.
std::optional<std::int64_t> parse_timestamp(const std::string& text);

struct IdManifest {
    std::vector<std::string> train;
    std::vector<std::string> test;
};

IdManifest load_id_manifest(const std::string& path);

enum class ManifestMode { strict, lenient };

template <typename T>
struct IdSplit {
    std::vector<T> train;
    std::vector<T> test;
    std::size_t excluded = 0;
};

/// Partition id-bearing items by manifest membership.
template <typename T>
IdSplit<T> apply_id_manifest(const std::vector<T>& items, const IdManifest& manifest,
                             ManifestMode mode = ManifestMode::strict) {
    const std::set<std::string> train(manifest.train.begin(), manifest.train.end());
    const std::set<std::string> test(manifest.test.begin(), manifest.test.end());
    for (const auto& id : train) {
        if (test.count(id)) fail(Errc::OverlappingSplit, "id '" + id + "' listed in both train and test");
    }
    std::set<std::string> known;
    for (const auto& item : items) known.insert(item.id);
    std::vector<std::string> unknown;
    for (const auto* side : {&train, &test}) {
        for (const auto& id : *side) {
            if (!known.count(id)) unknown.push_back(id);
        }
    }
    if (mode == ManifestMode::strict && !unknown.empty()) {
        fail(Errc::UnknownIds, std::to_string(unknown.size()) + " unknown ids, first '" + unknown.front() + "'");
    }
    IdSplit<T> out;
    for (const auto& item : items) {
        if (train.count(item.id)) {
            out.train.push_back(item);
        } else if (test.count(item.id)) {
            out.test.push_back(item);
        } else {
            ++out.excluded;
        }
    }
    if (out.train.empty() || out.test.empty()) {
        fail(Errc::EmptySplit, "train=" + std::to_string(out.train.size()) + " test=" + std::to_string(out.test.size()));
    }
    return out;
}

/// Write points back out as a point CSV readable by load_points with the
/// default bindings (id, lat, lon, timestamp, target).
void write_points_csv(const std::vector<PointRecord>& points, const std::string& path);
/// Write trajectories as Porto-style CSV; samples must follow a fixed cadence.
void write_porto_csv(const std::vector<Trajectory>& trajs, const std::string& path, std::int64_t interval_s = 15);
/// Write trajectories as a Geolife-style directory of PLT files.
void write_plt_dir(const std::vector<Trajectory>& trajs, const std::string& dir);

}  // namespace obsr
