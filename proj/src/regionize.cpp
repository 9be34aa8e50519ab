#include "obsr/regionize.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <json.hpp>

namespace obsr {

std::string to_string(TargetKind k) { return k == TargetKind::mean_value ? "mean_value" : "intensity"; }

TargetKind parse_target_kind(const std::string& s) {
    if (s == "mean_value") return TargetKind::mean_value;
    if (s == "intensity") return TargetKind::intensity;
    fail(Errc::InvalidConfig, "unknown target kind '" + s + "'");
}

std::vector<CellId> RegionDataset::cells() const {
    std::vector<CellId> out;
    out.reserve(rows.size());
    for (const auto& [c, row] : rows) out.push_back(c);
    return out;
}

std::int64_t RegionDataset::total_support() const {
    std::int64_t s = 0;
    for (const auto& [c, row] : rows) s += row.support;
    return s;
}

namespace {

void check_region_resolution(int r) {
    if (r < kMinRegionResolution || r > kMaxRegionResolution) {
        fail(Errc::InvalidResolution, "region resolution " + std::to_string(r) + " outside [6, 11]");
    }
}

std::vector<CellId> assign_cells(std::span<const PointRecord> points, int r, Exec exec) {
    std::vector<std::uint64_t> index(points.size());
    const auto n = static_cast<std::ptrdiff_t>(points.size());
    if (exec == Exec::parallel) {
#pragma omp parallel for schedule(static)
        for (std::ptrdiff_t i = 0; i < n; ++i) index[i] = cell_of(points[i].point, r).index();
    } else {
        for (std::ptrdiff_t i = 0; i < n; ++i) index[i] = cell_of(points[i].point, r).index();
    }
    std::vector<CellId> cells;
    cells.reserve(index.size());
    for (std::uint64_t h : index) cells.push_back(CellId::from_index(h));
    return cells;
}

void normalize_by_max(RegionDataset& ds) {
    std::int64_t max_count = 0;
    for (const auto& [c, row] : ds.rows) max_count = std::max(max_count, row.support);
    for (auto& [c, row] : ds.rows) row.target = static_cast<double>(row.support) / static_cast<double>(max_count);
    ds.normalization = Normalization{max_count, NormalizationScope::whole_dataset};
}

}  // namespace

RegionDataset aggregate_mean(std::span<const PointRecord> points, int r, Exec exec) {
    check_region_resolution(r);
    if (points.empty()) fail(Errc::EmptyInput, "no points to aggregate");
    for (const auto& p : points) {
        if (!p.target || !std::isfinite(*p.target)) fail(Errc::MissingTarget, "point '" + p.id + "' has no finite target");
    }
    const auto cells = assign_cells(points, r, exec);
    // summed in input order so any thread count gives the same bits
    std::map<CellId, std::pair<double, std::int64_t>> acc;
    for (std::size_t i = 0; i < points.size(); ++i) {
        auto& [sum, count] = acc[cells[i]];
        sum += *points[i].target;
        ++count;
    }
    RegionDataset ds;
    ds.resolution = r;
    ds.target_kind = TargetKind::mean_value;
    for (const auto& [c, sc] : acc) {
        double mean = sc.first / static_cast<double>(sc.second);
        ds.rows.emplace(c, RegionRow{mean, sc.second});
    }
    return ds;
}

RegionDataset aggregate_intensity(std::span<const PointRecord> points, int r, Exec exec) {
    check_region_resolution(r);
    if (points.empty()) fail(Errc::EmptyInput, "no points to aggregate");
    const auto cells = assign_cells(points, r, exec);
    RegionDataset ds;
    ds.resolution = r;
    ds.target_kind = TargetKind::intensity;
    for (CellId c : cells) ++ds.rows[c].support;
    normalize_by_max(ds);
    return ds;
}

RegionDataset aggregate(std::span<const PointRecord> points, int r, TargetKind kind, Exec exec) {
    return kind == TargetKind::mean_value ? aggregate_mean(points, r, exec) : aggregate_intensity(points, r, exec);
}

std::map<int, RegionDataset> multi_resolution(std::span<const PointRecord> points, const std::vector<int>& resolutions,
                                              TargetKind kind, Exec exec) {
    if (resolutions.empty()) fail(Errc::InvalidConfig, "no resolutions given");
    std::map<int, RegionDataset> out;
    for (int r : resolutions) out.emplace(r, aggregate(points, r, kind, exec));
    return out;
}

RegionDataset renormalize_train_only(const RegionDataset& ds, std::span<const CellId> train_cells) {
    if (ds.target_kind != TargetKind::intensity) fail(Errc::InvalidConfig, "train-only normalization applies to intensity targets");
    std::int64_t max_count = 0;
    for (CellId c : train_cells) {
        auto it = ds.rows.find(c);
        if (it != ds.rows.end()) max_count = std::max(max_count, it->second.support);
    }
    if (max_count == 0) fail(Errc::EmptyTrainSet, "no train cell carries data");
    RegionDataset out = ds;
    for (auto& [c, row] : out.rows) {
        row.target = std::min(1.0, static_cast<double>(row.support) / static_cast<double>(max_count));
    }
    out.normalization = Normalization{max_count, NormalizationScope::train_only};
    return out;
}

RegionDataset zero_fill(const RegionDataset& ds, std::span<const CellId> study_area) {
    RegionDataset out = ds;
    for (CellId c : study_area) {
        if (c.resolution() != ds.resolution) fail(Errc::ResolutionMismatch, "study-area cell " + c.to_string());
        out.rows.try_emplace(c, RegionRow{0.0, 0});
    }
    return out;
}

RegionDataset rollup(const RegionDataset& ds, int coarse_resolution) {
    check_region_resolution(coarse_resolution);
    if (coarse_resolution > ds.resolution) fail(Errc::InvalidResolution, "rollup target is finer than the dataset");
    RegionDataset out;
    out.resolution = coarse_resolution;
    out.target_kind = ds.target_kind;
    std::map<CellId, double> weighted;
    for (const auto& [c, row] : ds.rows) {
        const CellId p = parent(c, coarse_resolution);
        out.rows[p].support += row.support;
        weighted[p] += row.target * static_cast<double>(row.support);
    }
    if (ds.target_kind == TargetKind::intensity) {
        normalize_by_max(out);
    } else {
        for (auto& [c, row] : out.rows) row.target = row.support > 0 ? weighted[c] / static_cast<double>(row.support) : 0.0;
    }
    return out;
}

std::string region_sidecar_path(const std::string& csv_path) {
    return std::filesystem::path(csv_path).replace_extension(".json").string();
}

void write_region_dataset(const RegionDataset& ds, const std::string& csv_path) {
    std::ofstream csv(csv_path);
    if (!csv) fail(Errc::IOError, "cannot write " + csv_path);
    csv << "cell,target,support\n";
    char buf[64];
    for (const auto& [c, row] : ds.rows) {
        std::snprintf(buf, sizeof buf, "%.10g", row.target);
        csv << c.to_string() << ',' << buf << ',' << row.support << '\n';
    }
    nlohmann::ordered_json meta;
    meta["resolution"] = ds.resolution;
    meta["target_kind"] = to_string(ds.target_kind);
    if (ds.normalization) {
        meta["normalization"] = {{"max_count", ds.normalization->max_count},
                                 {"scope", ds.normalization->scope == NormalizationScope::whole_dataset ? "whole_dataset" : "train_only"}};
    } else {
        meta["normalization"] = nullptr;
    }
    std::ofstream side(region_sidecar_path(csv_path));
    if (!side) fail(Errc::IOError, "cannot write sidecar for " + csv_path);
    side << meta.dump(2) << '\n';
}

RegionDataset read_region_dataset(const std::string& csv_path) {
    std::ifstream csv(csv_path);
    if (!csv) fail(Errc::FileNotFound, csv_path);
    std::ifstream side(region_sidecar_path(csv_path));
    if (!side) fail(Errc::FileNotFound, region_sidecar_path(csv_path));
    RegionDataset ds;
    try {
        const auto meta = nlohmann::json::parse(side);
        ds.resolution = meta.at("resolution").get<int>();
        ds.target_kind = parse_target_kind(meta.at("target_kind").get<std::string>());
        if (!meta.at("normalization").is_null()) {
            const auto& n = meta["normalization"];
            ds.normalization = Normalization{n.at("max_count").get<std::int64_t>(),
                                             n.at("scope") == "train_only" ? NormalizationScope::train_only
                                                                           : NormalizationScope::whole_dataset};
        }
    } catch (const nlohmann::json::exception& e) {
        fail(Errc::IOError, "bad region sidecar: " + std::string(e.what()));
    }
    std::string line;
    std::getline(csv, line);
    if (line != "cell,target,support") fail(Errc::HeaderMismatch, csv_path);
    while (std::getline(csv, line)) {
        if (line.empty()) continue;
        std::istringstream ss(line);
        std::string cell, target, support;
        std::getline(ss, cell, ',');
        std::getline(ss, target, ',');
        std::getline(ss, support);
        const CellId c = CellId::from_string(cell);
        if (c.resolution() != ds.resolution) fail(Errc::ResolutionMismatch, cell);
        ds.rows[c] = RegionRow{std::stod(target), std::stoll(support)};
    }
    return ds;
}

}  // namespace obsr
