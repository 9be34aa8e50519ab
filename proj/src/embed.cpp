#include "obsr/embed.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "obsr/parallel.hpp"

namespace obsr {

namespace {

std::string fmt(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

std::string sidecar(const std::string& csv_path) {
    return std::filesystem::path(csv_path).replace_extension(".json").string();
}

}  // namespace

FeatureCountTable ingest_feature_counts(std::span<const FeatureRecord> records, int r, std::span<const std::string> filter,
                                        Exec exec) {
    check_resolution(r);
    if (filter.empty()) fail(Errc::EmptyFilter, "tag filter is empty");
    FeatureCountTable t;
    t.resolution = r;
    t.vocabulary.assign(filter.begin(), filter.end());
    std::sort(t.vocabulary.begin(), t.vocabulary.end());
    t.vocabulary.erase(std::unique(t.vocabulary.begin(), t.vocabulary.end()), t.vocabulary.end());

    std::vector<std::uint64_t> cell(records.size());
    std::vector<std::ptrdiff_t> slot(records.size());
    parallel_for(records.size(), exec, [&](std::size_t i) {
        const auto& key = records[i].second;
        const auto it = std::lower_bound(t.vocabulary.begin(), t.vocabulary.end(), key);
        slot[i] = it != t.vocabulary.end() && *it == key ? it - t.vocabulary.begin() : -1;
        if (slot[i] >= 0) cell[i] = cell_of(records[i].first, r).index();
    }, 256);
    for (std::size_t i = 0; i < records.size(); ++i) {
        if (slot[i] < 0) continue;
        auto [it, fresh] = t.counts.try_emplace(CellId::from_index(cell[i]), t.vocabulary.size(), 0);
        ++it->second[static_cast<std::size_t>(slot[i])];
    }
    return t;
}

std::string to_string(EmbedderKind k) {
    switch (k) {
        case EmbedderKind::ce: return "ce";
        case EmbedderKind::cce: return "cce";
        case EmbedderKind::external: return "external";
    }
    return "unknown";
}

EmbedderKind parse_embedder_kind(const std::string& s) {
    if (s == "ce") return EmbedderKind::ce;
    if (s == "cce") return EmbedderKind::cce;
    if (s == "external") return EmbedderKind::external;
    fail(Errc::InvalidConfig, "unknown embedder '" + s + "'");
}

std::string to_string(CceMode m) { return m == CceMode::concat ? "concat" : "squashed"; }

CceMode parse_cce_mode(const std::string& s) {
    if (s == "concat") return CceMode::concat;
    if (s == "squashed") return CceMode::squashed;
    fail(Errc::InvalidConfig, "unknown CCE mode '" + s + "'");
}

const std::vector<double>* EmbeddingMatrix::find(CellId c) const {
    const auto it = vectors.find(c);
    return it == vectors.end() ? nullptr : &it->second;
}

EmbeddingMatrix count_embed(const FeatureCountTable& table, std::span<const CellId> cells) {
    EmbeddingMatrix m;
    m.dim = static_cast<int>(table.vocabulary.size());
    m.provenance = EmbedderKind::ce;
    m.params = {{"vocabulary_size", table.vocabulary.size()}, {"resolution", table.resolution}};
    for (CellId c : cells) {
        if (c.resolution() != table.resolution) fail(Errc::ResolutionMismatch, "cell " + c.to_string());
        std::vector<double> v(table.vocabulary.size(), 0.0);
        if (const auto it = table.counts.find(c); it != table.counts.end()) {
            std::transform(it->second.begin(), it->second.end(), v.begin(), [](std::int64_t x) { return static_cast<double>(x); });
        }
        m.vectors.emplace(c, std::move(v));
    }
    return m;
}

EmbeddingMatrix contextual_count_embed(const FeatureCountTable& table, std::span<const CellId> cells, int k, CceMode mode,
                                       Exec exec) {
    if (k < 0) fail(Errc::InvalidConfig, "neighborhood size k must be >= 0");
    const std::size_t v = table.vocabulary.size();
    const std::size_t ku = static_cast<std::size_t>(k);
    EmbeddingMatrix m;
    m.dim = static_cast<int>(mode == CceMode::concat ? (ku + 1) * v : v);
    m.provenance = EmbedderKind::cce;
    m.params = {{"vocabulary_size", v}, {"resolution", table.resolution}, {"k", k}, {"mode", to_string(mode)}};

    std::vector<std::vector<double>> out(cells.size());
    parallel_for(cells.size(), exec, [&](std::size_t idx) {
        const CellId c = cells[idx];
        if (c.resolution() != table.resolution) fail(Errc::ResolutionMismatch, "cell " + c.to_string());
        std::vector<double> vec(static_cast<std::size_t>(m.dim), 0.0);
        for (std::size_t i = 0; i <= ku; ++i) {
            const auto members = ring(c, static_cast<int>(i));
            std::vector<double> mean(v, 0.0);
            for (CellId n : members) {
                if (const auto it = table.counts.find(n); it != table.counts.end()) {
                    for (std::size_t f = 0; f < v; ++f) mean[f] += static_cast<double>(it->second[f]);
                }
            }
            for (double& x : mean) x /= static_cast<double>(members.size());
            for (std::size_t f = 0; f < v; ++f) {
                if (mode == CceMode::concat) {
                    vec[i * v + f] = mean[f];
                } else {
                    vec[f] += mean[f] / static_cast<double>(i + 1);
                }
            }
        }
        out[idx] = std::move(vec);
    });
    for (std::size_t i = 0; i < cells.size(); ++i) m.vectors.emplace(cells[i], std::move(out[i]));
    return m;
}

void write_embeddings(const EmbeddingMatrix& m, const std::string& csv_path) {
    std::ofstream csv(csv_path, std::ios::binary);
    if (!csv) fail(Errc::IOError, "cannot write " + csv_path);
    csv << "cell";
    for (int i = 0; i < m.dim; ++i) csv << ",f_" << i;
    csv << '\n';
    for (const auto& [c, vec] : m.vectors) {
        csv << c.to_string();
        for (double x : vec) csv << ',' << fmt(x);
        csv << '\n';
    }
    nlohmann::ordered_json meta;
    meta["dim"] = m.dim;
    meta["provenance"] = to_string(m.provenance);
    meta["params"] = m.params;
    std::ofstream side(sidecar(csv_path), std::ios::binary);
    if (!side) fail(Errc::IOError, "cannot write sidecar for " + csv_path);
    side << meta.dump(2) << '\n';
}

EmbeddingMatrix read_embeddings(const std::string& csv_path) {
    std::ifstream csv(csv_path);
    if (!csv) fail(Errc::FileNotFound, csv_path);
    EmbeddingMatrix m;
    std::string line;
    if (!std::getline(csv, line) || line.rfind("cell", 0) != 0) fail(Errc::HeaderMismatch, csv_path);
    m.dim = static_cast<int>(std::count(line.begin(), line.end(), ','));
    for (int i = 0; i < m.dim; ++i) {
        if (line.find(",f_" + std::to_string(i)) == std::string::npos) fail(Errc::HeaderMismatch, csv_path);
    }
    std::size_t row = 1;
    while (std::getline(csv, line)) {
        ++row;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        std::istringstream ss(line);
        std::string field;
        std::getline(ss, field, ',');
        const CellId c = CellId::from_string(field);
        std::vector<double> vec;
        while (std::getline(ss, field, ',')) {
            try {
                vec.push_back(std::stod(field));
            } catch (const std::exception&) {
                fail(Errc::IOError, csv_path + ": bad number on row " + std::to_string(row));
            }
        }
        if (static_cast<int>(vec.size()) != m.dim) fail(Errc::DimensionMismatch, csv_path + ": row " + std::to_string(row));
        for (double x : vec) {
            if (!std::isfinite(x)) fail(Errc::NonFinite, csv_path + ": row " + std::to_string(row));
        }
        m.vectors.emplace(c, std::move(vec));
    }
    if (std::ifstream side(sidecar(csv_path)); side) {
        try {
            const auto meta = nlohmann::ordered_json::parse(side);
            m.provenance = parse_embedder_kind(meta.at("provenance").get<std::string>());
            m.params = meta.value("params", nlohmann::ordered_json::object());
        } catch (const nlohmann::json::exception& e) {
            fail(Errc::IOError, "bad embedding sidecar: " + std::string(e.what()));
        }
    }
    return m;
}

std::vector<std::string> tag_filter_from_json(const nlohmann::json& j) {
    std::vector<std::string> out;
    if (j.is_array()) {
        for (const auto& v : j) out.push_back(v.get<std::string>());
    } else if (j.is_object()) {
        for (const auto& [key, values] : j.items()) {
            for (const auto& v : values) out.push_back(key + "=" + v.get<std::string>());
        }
    } else {
        fail(Errc::InvalidConfig, "tag filter must be a list or an object");
    }
    if (out.empty()) fail(Errc::EmptyFilter, "tag filter is empty");
    return out;
}

std::vector<std::string> load_tag_filter(const std::string& path) {
    std::ifstream in(path);
    if (!in) fail(Errc::FileNotFound, path);
    try {
        return tag_filter_from_json(nlohmann::json::parse(in));
    } catch (const nlohmann::json::exception& e) {
        fail(Errc::InvalidConfig, path + ": " + e.what());
    }
}

std::vector<FeatureRecord> load_feature_records(const std::string& path) {
    std::ifstream in(path);
    if (!in) fail(Errc::FileNotFound, path);
    std::string line;
    if (!std::getline(in, line) || line.rfind("lat,lon,feature", 0) != 0) fail(Errc::HeaderMismatch, path);
    std::vector<FeatureRecord> out;
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        const auto a = line.find(',');
        const auto b = line.find(',', a + 1);
        if (a == std::string::npos || b == std::string::npos) continue;
        try {
            const double lat = std::stod(line.substr(0, a));
            const double lon = std::stod(line.substr(a + 1, b - a - 1));
            if (GeoPoint::valid(lat, lon)) out.emplace_back(GeoPoint(lat, lon), line.substr(b + 1));
        } catch (const std::exception&) {
        }
    }
    return out;
}

void write_feature_records(std::span<const FeatureRecord> records, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) fail(Errc::IOError, "cannot write " + path);
    out << "lat,lon,feature\n";
    for (const auto& [p, key] : records) out << fmt(p.lat()) << ',' << fmt(p.lon()) << ',' << key << '\n';
}

}  // namespace obsr
