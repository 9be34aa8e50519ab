#include "obsr/artifacts.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>

#include <json.hpp>

#include "obsr/error.hpp"

namespace obsr {

void emit_choropleth(const RegionDataset& ds, const std::string& path) {
    if (ds.rows.empty()) fail(Errc::EmptyInput, "choropleth of an empty dataset");
    nlohmann::ordered_json fc;
    fc["type"] = "FeatureCollection";
    fc["features"] = nlohmann::ordered_json::array();
    for (const auto& [c, row] : ds.rows) {
        nlohmann::ordered_json ring = nlohmann::ordered_json::array();
        const auto verts = boundary(c);
        for (const auto& v : verts) ring.push_back({v.lon(), v.lat()});
        ring.push_back(ring.front());
        nlohmann::ordered_json f;
        f["type"] = "Feature";
        f["properties"] = {{"cell", c.to_string()}, {"target", row.target}, {"support", row.support}};
        f["geometry"] = {{"type", "Polygon"}, {"coordinates", nlohmann::ordered_json::array({ring})}};
        fc["features"].push_back(std::move(f));
    }
    std::ofstream out(path);
    if (!out) fail(Errc::IOError, "cannot write " + path);
    out << fc.dump() << '\n';
    if (!out) fail(Errc::IOError, "write failed: " + path);
}

std::vector<HistogramBin> histogram(std::span<const double> values, int bins) {
    if (values.empty()) fail(Errc::EmptyInput, "histogram of no values");
    if (bins < 1) fail(Errc::InvalidConfig, "histogram needs at least one bin");
    const auto [lo_it, hi_it] = std::minmax_element(values.begin(), values.end());
    const double lo = *lo_it, hi = *hi_it;
    if (!(std::isfinite(lo) && std::isfinite(hi))) fail(Errc::NonFinite, "histogram of non-finite values");
    if (hi == lo) return {{lo, hi, values.size()}};
    const double width = (hi - lo) / bins;
    std::vector<HistogramBin> out(static_cast<std::size_t>(bins));
    for (int i = 0; i < bins; ++i) {
        out[static_cast<std::size_t>(i)].left = lo + i * width;
        out[static_cast<std::size_t>(i)].right = i + 1 == bins ? hi : lo + (i + 1) * width;
    }
    for (double v : values) {
        auto b = static_cast<std::size_t>((v - lo) / width);
        out[std::min(b, out.size() - 1)].count++;
    }
    return out;
}

void emit_histogram(std::span<const double> values, int bins, const std::string& path) {
    const auto h = histogram(values, bins);
    std::ofstream out(path);
    if (!out) fail(Errc::IOError, "cannot write " + path);
    out << "bin_left,bin_right,count\n" << std::setprecision(17);
    for (const auto& b : h) out << b.left << ',' << b.right << ',' << b.count << '\n';
}

void emit_histogram(const RegionDataset& ds, int bins, const std::string& path) {
    std::vector<double> v;
    v.reserve(ds.rows.size());
    for (const auto& [c, row] : ds.rows) v.push_back(row.target);
    emit_histogram(v, bins, path);
}

}  // namespace obsr
