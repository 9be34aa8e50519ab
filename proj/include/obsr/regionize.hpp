#pragma once

// Per-cell aggregation of point records into region-task targets.

#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "obsr/error.hpp"
#include "obsr/exec.hpp"
#include "obsr/hexgrid.hpp"
#include "obsr/ingest.hpp"

namespace obsr {

enum class TargetKind { mean_value, intensity };

std::string to_string(TargetKind k);
TargetKind parse_target_kind(const std::string& s);

enum class NormalizationScope { whole_dataset, train_only };

struct Normalization {
    std::int64_t max_count = 0;
    NormalizationScope scope = NormalizationScope::whole_dataset;
};

struct RegionRow {
    double target = 0.0;
    std::int64_t support = 0;  ///< points in the cell; 0 only for zero-filled rows

    bool operator==(const RegionRow&) const = default;
};

struct RegionDataset {
    int resolution = 0;
    TargetKind target_kind = TargetKind::mean_value;
    std::map<CellId, RegionRow> rows;
    std::optional<Normalization> normalization;

    std::vector<CellId> cells() const;
    std::int64_t total_support() const;
};

/// Region resolutions accepted by the aggregators.
inline constexpr int kMinRegionResolution = 6;
inline constexpr int kMaxRegionResolution = 11;

RegionDataset aggregate_mean(std::span<const PointRecord> points, int r, Exec exec = Exec::parallel);
RegionDataset aggregate_intensity(std::span<const PointRecord> points, int r, Exec exec = Exec::parallel);
RegionDataset aggregate(std::span<const PointRecord> points, int r, TargetKind kind, Exec exec = Exec::parallel);

std::map<int, RegionDataset> multi_resolution(std::span<const PointRecord> points, const std::vector<int>& resolutions,
                                              TargetKind kind, Exec exec = Exec::parallel);

/// Recompute intensity targets against the maximum count among train cells
/// only; targets of test cells above that maximum are clipped to 1.
RegionDataset renormalize_train_only(const RegionDataset& ds, std::span<const CellId> train_cells);

/// Add rows with target 0 and support 0 for study-area cells without data.
RegionDataset zero_fill(const RegionDataset& ds, std::span<const CellId> study_area);

/// Aggregate a dataset to a coarser resolution through the cell hierarchy:
/// supports add up, means are support-weighted, intensities are renormalized.
RegionDataset rollup(const RegionDataset& ds, int coarse_resolution);

/// CSV (cell,target,support) plus a JSON sidecar next to it (".json").
void write_region_dataset(const RegionDataset& ds, const std::string& csv_path);
RegionDataset read_region_dataset(const std::string& csv_path);
std::string region_sidecar_path(const std::string& csv_path);

}  // namespace obsr
