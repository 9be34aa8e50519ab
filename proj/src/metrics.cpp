#include "obsr/metrics.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <numbers>
#include <sstream>

#include "obsr/parallel.hpp"

namespace obsr {

std::optional<double> MetricReport::get(const std::string& name) const {
    for (const auto& [n, v] : entries) {
        if (n == name) return v;
    }
    return std::nullopt;
}

void MetricReport::set(const std::string& name, double value) {
    for (auto& [n, v] : entries) {
        if (n == name) {
            v = value;
            return;
        }
    }
    entries.emplace_back(name, value);
}

void MetricReport::erase(const std::string& name) {
    std::erase_if(entries, [&](const auto& e) { return e.first == name; });
}

namespace {

void check_pair(std::span<const double> y, std::span<const double> yhat) {
    if (y.size() != yhat.size()) {
        fail(Errc::LengthMismatch, "y has " + std::to_string(y.size()) + " values, yhat " + std::to_string(yhat.size()));
    }
    if (y.empty()) fail(Errc::EmptyInput, "no samples");
    for (std::size_t i = 0; i < y.size(); ++i) {
        if (!std::isfinite(y[i]) || !std::isfinite(yhat[i])) fail(Errc::NonFinite, "non-finite value at " + std::to_string(i));
    }
}

int horizon(std::size_t a, std::size_t b, int k) {
    if (a == 0 || b == 0) fail(Errc::EmptySequence, "empty cell sequence");
    if (k < 1) fail(Errc::InvalidConfig, "k must be >= 1");
    return static_cast<int>(std::min({static_cast<std::size_t>(k), a, b}));
}

double sorted_mean(std::vector<double> v) {
    std::sort(v.begin(), v.end());
    double s = 0.0;
    for (double x : v) s += x;
    return s / static_cast<double>(v.size());
}

std::string fixed(double v, int digits) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.*f", digits, v);
    return buf;
}

}  // namespace

MetricReport regression_metrics(std::span<const double> y, std::span<const double> yhat) {
    check_pair(y, yhat);
    const auto n = static_cast<double>(y.size());
    double se = 0.0, ae = 0.0, ape = 0.0, sape = 0.0;
    std::int64_t nonzero = 0;
    for (std::size_t i = 0; i < y.size(); ++i) {
        const double e = yhat[i] - y[i];
        se += e * e;
        ae += std::abs(e);
        if (y[i] != 0.0) {
            ape += std::abs(e) / std::abs(y[i]);
            ++nonzero;
        }
        const double denom = (std::abs(y[i]) + std::abs(yhat[i])) / 2.0;
        if (denom > 0.0) sape += std::abs(e) / denom;
    }
    MetricReport r;
    r.n_samples = y.size();
    r.set("MSE", se / n);
    r.set("RMSE", std::sqrt(se / n));
    r.set("MAE", ae / n);
    if (nonzero > 0) r.set("MAPE", 100.0 * ape / static_cast<double>(nonzero));
    r.set("sMAPE", 100.0 * sape / n);
    r.counts["mape_excluded"] = static_cast<std::int64_t>(y.size()) - nonzero;
    return r;
}

double r2(std::span<const double> y, std::span<const double> yhat) {
    check_pair(y, yhat);
    if (y.size() < 2) fail(Errc::ZeroVariance, "R² needs at least 2 samples");
    double mean = 0.0;
    for (double v : y) mean += v;
    mean /= static_cast<double>(y.size());
    double ss_res = 0.0, ss_tot = 0.0;
    for (std::size_t i = 0; i < y.size(); ++i) {
        ss_res += (y[i] - yhat[i]) * (y[i] - yhat[i]);
        ss_tot += (y[i] - mean) * (y[i] - mean);
    }
    if (ss_tot == 0.0) fail(Errc::ZeroVariance, "targets have zero variance");
    return 1.0 - ss_res / ss_tot;
}

double haversine(const GeoPoint& a, const GeoPoint& b) {
    constexpr double rad = std::numbers::pi / 180.0;
    const double dphi = (b.lat() - a.lat()) * rad;
    const double dlam = (b.lon() - a.lon()) * rad;
    const double h = std::sin(dphi / 2) * std::sin(dphi / 2) +
                     std::cos(a.lat() * rad) * std::cos(b.lat() * rad) * std::sin(dlam / 2) * std::sin(dlam / 2);
    return 2.0 * kEarthRadiusM * std::asin(std::min(1.0, std::sqrt(h)));
}

double avg_haversine(std::span<const CellId> pred, std::span<const CellId> gold, int k) {
    const int n = horizon(pred.size(), gold.size(), k);
    double s = 0.0;
    for (int i = 0; i < n; ++i) s += haversine(centroid(pred[i]), centroid(gold[i]));
    return s / n;
}

double dtw_haversine(std::span<const CellId> pred, std::span<const CellId> gold, int k) {
    horizon(pred.size(), gold.size(), k);
    const std::size_t n = std::min(pred.size(), static_cast<std::size_t>(k));
    const std::size_t m = std::min(gold.size(), static_cast<std::size_t>(k));
    std::vector<GeoPoint> a, b;
    for (std::size_t i = 0; i < n; ++i) a.push_back(centroid(pred[i]));
    for (std::size_t j = 0; j < m; ++j) b.push_back(centroid(gold[j]));
    std::vector<double> prev(m), cur(m);
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < m; ++j) {
            const double d = haversine(a[i], b[j]);
            if (i == 0 && j == 0) {
                cur[j] = d;
            } else if (i == 0) {
                cur[j] = d + cur[j - 1];
            } else if (j == 0) {
                cur[j] = d + prev[j];
            } else {
                cur[j] = d + std::min({prev[j], cur[j - 1], prev[j - 1]});
            }
        }
        std::swap(prev, cur);
    }
    return prev[m - 1];
}

double sequence_accuracy(std::span<const CellId> pred, std::span<const CellId> gold, int k) {
    const int n = horizon(pred.size(), gold.size(), k);
    int hits = 0;
    for (int i = 0; i < n; ++i) hits += pred[i] == gold[i];
    return 100.0 * hits / n;
}

std::vector<MetricReport> evaluate_at_k(std::span<const SequencePair> pairs, const std::vector<int>& ks, Exec exec) {
    if (pairs.empty()) fail(Errc::EmptySequence, "no prediction pairs");
    if (ks.empty()) fail(Errc::InvalidConfig, "no horizons");
    for (int k : ks) {
        if (k < 1) fail(Errc::InvalidConfig, "horizons must be positive");
    }
    std::vector<std::array<double, 3>> values(pairs.size() * ks.size());
    parallel_for(pairs.size(), exec, [&](std::size_t i) {
        for (std::size_t j = 0; j < ks.size(); ++j) {
            values[i * ks.size() + j] = {avg_haversine(pairs[i].pred, pairs[i].gold, ks[j]),
                                         dtw_haversine(pairs[i].pred, pairs[i].gold, ks[j]),
                                         sequence_accuracy(pairs[i].pred, pairs[i].gold, ks[j])};
        }
    });
    std::vector<MetricReport> out;
    for (std::size_t j = 0; j < ks.size(); ++j) {
        MetricReport r;
        r.k = ks[j];
        r.n_samples = pairs.size();
        const char* names[] = {"H Dist", "DTW Dist", "Acc"};
        for (std::size_t m = 0; m < 3; ++m) {
            std::vector<double> col;
            col.reserve(pairs.size());
            for (std::size_t i = 0; i < pairs.size(); ++i) col.push_back(values[i * ks.size() + j][m]);
            r.set(names[m], sorted_mean(std::move(col)));
        }
        out.push_back(std::move(r));
    }
    return out;
}

MetricReport aggregate_runs(std::span<const MetricReport> runs) {
    if (runs.empty()) fail(Errc::EmptyInput, "no runs to aggregate");
    MetricReport out = runs.front();
    out.runs = runs.size();
    out.stddev.clear();
    for (auto& [name, value] : out.entries) {
        std::vector<double> v;
        for (const auto& r : runs) {
            const auto x = r.get(name);
            if (!x) fail(Errc::ShapeMismatch, "metric '" + name + "' missing from a run");
            v.push_back(*x);
        }
        double mean = 0.0;
        for (double x : v) mean += x;
        mean /= static_cast<double>(v.size());
        double var = 0.0;
        for (double x : v) var += (x - mean) * (x - mean);
        value = mean;
        out.stddev[name] = v.size() > 1 ? std::sqrt(var / static_cast<double>(v.size() - 1)) : 0.0;
    }
    return out;
}

nlohmann::ordered_json to_json(const MetricReport& r) {
    nlohmann::ordered_json j;
    j["task"] = r.task;
    if (r.k) j["k"] = *r.k;
    j["n_samples"] = r.n_samples;
    j["runs"] = r.runs;
    auto& e = j["entries"] = nlohmann::ordered_json::object();
    for (const auto& [name, v] : r.entries) e[name] = v;
    if (!r.stddev.empty()) j["stddev"] = r.stddev;
    if (!r.counts.empty()) j["counts"] = r.counts;
    j["earth_radius_m"] = kEarthRadiusM;
    return j;
}

MetricReport metric_report_from_json(const nlohmann::ordered_json& j) {
    MetricReport r;
    try {
        r.task = j.at("task").get<std::string>();
        if (j.contains("k")) r.k = j["k"].get<int>();
        r.n_samples = j.at("n_samples").get<std::size_t>();
        r.runs = j.value("runs", std::size_t{1});
        for (const auto& [name, v] : j.at("entries").items()) r.entries.emplace_back(name, v.get<double>());
        if (j.contains("stddev")) r.stddev = j["stddev"].get<std::map<std::string, double>>();
        if (j.contains("counts")) r.counts = j["counts"].get<std::map<std::string, std::int64_t>>();
    } catch (const nlohmann::json::exception& e) {
        fail(Errc::IOError, std::string("bad metric report: ") + e.what());
    }
    return r;
}

namespace {

std::string cell_text(const MetricReport& r, const std::string& metric, int exponent) {
    const auto v = r.get(metric);
    if (!v) return "–";
    const double scale = std::pow(10.0, exponent);
    std::string s = fixed(*v / scale, 3);
    if (r.runs > 1) {
        const auto it = r.stddev.find(metric);
        if (it != r.stddev.end()) s += " ± " + fixed(it->second / scale, 3);
    }
    return s;
}

}  // namespace

std::string markdown_table(const std::string& title, const std::vector<RowSpec>& rows,
                           const std::vector<std::pair<std::string, MetricReport>>& columns) {
    std::ostringstream out;
    out << "### " << title << "\n\n| Metric |";
    for (const auto& [name, r] : columns) out << ' ' << name << " |";
    out << "\n|---|";
    for (std::size_t i = 0; i < columns.size(); ++i) out << "---:|";
    out << '\n';
    for (const auto& row : rows) {
        out << "| " << row.metric;
        if (row.scale_exponent != 0) out << " ×10^" << row.scale_exponent;
        out << " |";
        for (const auto& [name, r] : columns) out << ' ' << cell_text(r, row.metric, row.scale_exponent) << " |";
        out << '\n';
    }
    return out.str();
}

std::string markdown_horizon_table(const std::string& title, std::span<const MetricReport> reports) {
    std::ostringstream out;
    out << "### " << title << "\n\n| k | H Dist | DTW Dist | Acc |\n|---:|---:|---:|---:|\n";
    for (const auto& r : reports) {
        out << "| " << (r.k ? std::to_string(*r.k) : "–") << " | " << cell_text(r, "H Dist", 0) << " | "
            << cell_text(r, "DTW Dist", 0) << " | " << cell_text(r, "Acc", 0) << " |\n";
    }
    return out.str();
}

}  // namespace obsr
