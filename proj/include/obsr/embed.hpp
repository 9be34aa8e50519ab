#pragma once

// Count-based region embedders (CE, CCE) and the embedding matrix format
// shared with externally trained embedders.

#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "obsr/error.hpp"
#include "obsr/exec.hpp"
#include "obsr/hexgrid.hpp"

namespace obsr {

struct FeatureCountTable {
    int resolution = 0;
    std::vector<std::string> vocabulary;  ///< sorted, deduplicated
    std::map<CellId, std::vector<std::int64_t>> counts;
};

using FeatureRecord = std::pair<GeoPoint, std::string>;

/// Count "key=value" records per cell, keeping only keys in the filter.
FeatureCountTable ingest_feature_counts(std::span<const FeatureRecord> records, int r, std::span<const std::string> filter,
                                        Exec exec = Exec::parallel);

enum class EmbedderKind { ce, cce, external };
enum class CceMode { concat, squashed };

std::string to_string(EmbedderKind k);
EmbedderKind parse_embedder_kind(const std::string& s);
std::string to_string(CceMode m);
CceMode parse_cce_mode(const std::string& s);

struct EmbeddingMatrix {
    int dim = 0;
    std::map<CellId, std::vector<double>> vectors;
    EmbedderKind provenance = EmbedderKind::external;
    nlohmann::ordered_json params = nlohmann::ordered_json::object();

    /// Vector for c, or nullptr when the cell has no embedding.
    const std::vector<double>* find(CellId c) const;
};

EmbeddingMatrix count_embed(const FeatureCountTable& table, std::span<const CellId> cells);

/// Per-ring means m_0..m_k over ring(cell, i); concat stacks them, squashed
/// sums m_i / (i + 1).
EmbeddingMatrix contextual_count_embed(const FeatureCountTable& table, std::span<const CellId> cells, int k = 2,
                                       CceMode mode = CceMode::concat, Exec exec = Exec::parallel);

/// CSV "cell,f_0,...,f_{dim-1}" plus a JSON sidecar (".json") with provenance.
void write_embeddings(const EmbeddingMatrix& m, const std::string& csv_path);
/// Reads the CSV and, when present, its sidecar; otherwise provenance is external.
EmbeddingMatrix read_embeddings(const std::string& csv_path);

/// Tag filter file: a JSON list of "key=value" strings, or an object mapping
/// each key to a list of values.
std::vector<std::string> load_tag_filter(const std::string& path);
std::vector<std::string> tag_filter_from_json(const nlohmann::json& j);

/// Read "lat,lon,feature" CSV records (header required).
std::vector<FeatureRecord> load_feature_records(const std::string& path);
void write_feature_records(std::span<const FeatureRecord> records, const std::string& path);

}  // namespace obsr
