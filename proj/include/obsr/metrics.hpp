#pragma once

// Evaluation suite: regression metrics, R², haversine-based sequence metrics
// and @k horizon evaluation, plus markdown table emission.

#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "obsr/error.hpp"
#include "obsr/exec.hpp"
#include "obsr/hexgrid.hpp"

namespace obsr {

/// Mean Earth radius in meters.
inline constexpr double kEarthRadiusM = 6371008.8;

struct MetricReport {
    std::string task;
    std::vector<std::pair<std::string, double>> entries;  ///< in table order
    std::map<std::string, double> stddev;                 ///< across runs, when aggregated
    std::map<std::string, std::int64_t> counts;           ///< e.g. mape_excluded
    std::optional<int> k;
    std::size_t n_samples = 0;
    std::size_t runs = 1;

    std::optional<double> get(const std::string& name) const;
    void set(const std::string& name, double value);
    void erase(const std::string& name);
};

/// MSE, RMSE, MAE, MAPE (zero targets excluded and counted; absent when every
/// target is zero) and sMAPE (0/0 terms count as 0).
MetricReport regression_metrics(std::span<const double> y, std::span<const double> yhat);
double r2(std::span<const double> y, std::span<const double> yhat);

double haversine(const GeoPoint& a, const GeoPoint& b);
double avg_haversine(std::span<const CellId> pred, std::span<const CellId> gold, int k);
/// Unnormalized DTW over the first min(k, |seq|) cells of each sequence.
double dtw_haversine(std::span<const CellId> pred, std::span<const CellId> gold, int k);
double sequence_accuracy(std::span<const CellId> pred, std::span<const CellId> gold, int k);

struct SequencePair {
    std::vector<CellId> pred;
    std::vector<CellId> gold;
};

inline const std::vector<int> kDefaultHorizons{1, 3, 5, 7, 10};

/// Per k, means over pairs of avg_haversine, dtw_haversine and
/// sequence_accuracy. Per-pair values are summed in sorted order, so the
/// result does not depend on pair order or thread count.
std::vector<MetricReport> evaluate_at_k(std::span<const SequencePair> pairs, const std::vector<int>& ks = kDefaultHorizons,
                                        Exec exec = Exec::parallel);

/// Mean and standard deviation of each entry across runs of the same layout.
MetricReport aggregate_runs(std::span<const MetricReport> runs);

nlohmann::ordered_json to_json(const MetricReport& r);
MetricReport metric_report_from_json(const nlohmann::ordered_json& j);

/// Divide a metric row by 10^exponent and label it "name ×10^exponent".
struct RowSpec {
    std::string metric;
    int scale_exponent = 0;
};

/// Metric rows × named columns (embedders or resolutions).
std::string markdown_table(const std::string& title, const std::vector<RowSpec>& rows,
                           const std::vector<std::pair<std::string, MetricReport>>& columns);
/// One row per horizon k with the three trajectory metrics.
std::string markdown_horizon_table(const std::string& title, std::span<const MetricReport> reports);

}  // namespace obsr
