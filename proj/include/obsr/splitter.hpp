#pragma once

// Spatially disjoint, quantile-stratified train/test splits and X/Y
// segmentation of prepared trajectories.

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "obsr/ingest.hpp"
#include "obsr/regionize.hpp"
#include "obsr/trajprep.hpp"

namespace obsr {

enum class StratSource { target, point_count, duration, length };

std::string to_string(StratSource s);
StratSource parse_strat_source(const std::string& s);

struct SplitConfig {
    int resolution = 9;
    int n_bins = 7;
    double test_fraction = 0.2;
    std::uint64_t seed = 0;
    StratSource strat_source = StratSource::target;

    void validate() const;
};

struct BucketReport {
    int bucket = 0;
    std::size_t size = 0;
    std::size_t test = 0;
    double achieved_fraction = 0.0;
    bool degenerate = false;  ///< single member, kept in train
};

struct SplitManifest {
    std::vector<std::string> train;  ///< sorted
    std::vector<std::string> test;   ///< sorted
    SplitConfig config;
    std::vector<BucketReport> bucket_report;
    std::vector<std::string> warnings;
};

/// Quantile buckets: boundary i (1..n-1) is the ceil(i*N/n)-th smallest value;
/// a value's bucket is the number of boundaries strictly below it, so values
/// equal to a boundary fall into the lower bucket.
std::vector<int> bucketize(std::span<const double> values, int n);

/// Stratified assignment of arbitrary ids by a per-id statistic.
SplitManifest split_ids(std::span<const std::string> ids, std::span<const double> strat_values, const SplitConfig& cfg);

/// Split the cells of a region dataset (target or support as the statistic).
SplitManifest split_points(const RegionDataset& ds, const SplitConfig& cfg);
/// Regionize the points at cfg.resolution, then split their cells.
SplitManifest split_points(std::span<const PointRecord> points, const SplitConfig& cfg);
/// Stratify by duration_s or by cell count.
SplitManifest split_trajectories(std::span<const HexTrajectory> trajs, const SplitConfig& cfg);

/// Partition points by the side of the cell they fall into.
IdSplit<PointRecord> assign_points(std::span<const PointRecord> points, const SplitManifest& manifest);

struct SegmentedTrajectory {
    std::string id;
    std::vector<CellId> x;
    std::vector<CellId> y;
    double target_fraction = 0.15;
};

/// |Y| = max(1, floor(fraction * |t|)); X is the rest.
SegmentedTrajectory segment_xy(const HexTrajectory& t, double target_fraction = 0.15);

nlohmann::ordered_json to_json(const SplitManifest& m);
SplitManifest manifest_from_json(const nlohmann::json& j);
std::string manifest_text(const SplitManifest& m);
void write_manifest(const SplitManifest& m, const std::string& path);
SplitManifest read_manifest(const std::string& path);
IdManifest to_id_manifest(const SplitManifest& m);

}  // namespace obsr
