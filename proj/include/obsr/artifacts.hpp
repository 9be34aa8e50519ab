#pragma once

// File artifacts for external viewers: GeoJSON choropleths and histogram CSVs.

#include <span>
#include <string>
#include <vector>

#include "obsr/regionize.hpp"

namespace obsr {

/// One Polygon feature per cell with properties {cell, target, support}.
/// Rings are closed, counter-clockwise, [lon, lat].
void emit_choropleth(const RegionDataset& ds, const std::string& path);

struct HistogramBin {
    double left = 0.0;
    double right = 0.0;
    std::size_t count = 0;
};

/// Equal-width bins over [min, max]; the last bin is closed. A constant
/// sample puts everything in one bin of width 0.
std::vector<HistogramBin> histogram(std::span<const double> values, int bins);

/// CSV "bin_left,bin_right,count".
void emit_histogram(std::span<const double> values, int bins, const std::string& path);
void emit_histogram(const RegionDataset& ds, int bins, const std::string& path);

}  // namespace obsr
