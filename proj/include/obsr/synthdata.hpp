#pragma once

// Seeded synthetic datasets with known ground truth, in the same shapes the
// loaders produce.

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "obsr/embed.hpp"
#include "obsr/hexgrid.hpp"
#include "obsr/ingest.hpp"

namespace obsr {

enum class SynthKind { linear_price_field, clustered_intensity, constant_direction_walks, random_walks, gappy_walks };

std::string to_string(SynthKind k);
SynthKind parse_synth_kind(const std::string& s);

/// Pentagon-free default region (San Francisco, base cell 20).
inline const GeoPoint kSynthCenter{37.7749, -122.4194};

struct SynthSpec {
    SynthKind kind = SynthKind::linear_price_field;
    GeoPoint center = kSynthCenter;
    double half_extent_deg = 0.05;
    std::size_t n = 1000;
    std::uint64_t seed = 0;

    // linear_price_field: target = intercept + a*x + b*y + N(0, noise_sigma), where
    // x, y are the point's offsets from center scaled to [-1, 1].
    double coef_a = 1.0;
    double coef_b = 0.5;
    double intercept = 0.0;
    double noise_sigma = 0.0;
    std::optional<int> snap_resolution;  ///< place points at cell centroids of this resolution

    // clustered_intensity
    int cluster_count = 5;
    double cluster_sigma_deg = 0.01;
    double hotspot_fraction = 0.2;  ///< share of points drawn tightly around the cluster centers
    double hotspot_sigma_deg = 0.0002;

    // walks
    int resolution = 9;
    int walk_length = 20;
    int walk_length_max = 0;  ///< > walk_length draws lengths uniformly in [walk_length, walk_length_max]
    int direction = 0;        ///< constant_direction_walks
    double gap_rate = 0.3;    ///< gappy_walks: probability of deleting an interior cell
    std::int64_t step_seconds = 30;

    void validate() const;
};

nlohmann::ordered_json to_json(const SynthSpec& spec);
SynthSpec synth_spec_from_json(const nlohmann::json& j);

/// Point kinds only.
std::vector<PointRecord> generate_points(const SynthSpec& spec);
/// Walk kinds only. Samples sit at cell centroids, one per step_seconds.
std::vector<Trajectory> generate_trajectories(const SynthSpec& spec);

/// The noiseless linear field evaluated at p.
double linear_field_value(const SynthSpec& spec, const GeoPoint& p);
/// Scaled offsets (x, y) of p from the spec center.
std::pair<double, double> scaled_offsets(const SynthSpec& spec, const GeoPoint& p);

/// Per-cell feature records ("key=value") whose density follows a few
/// clusters per key; used to exercise the count embedders.
std::vector<std::pair<GeoPoint, std::string>> generate_feature_records(const SynthSpec& spec,
                                                                      const std::vector<std::string>& keys);

/// Per-cell vectors [x, y, u_1, ..., u_{dim-2}]: the scaled centroid offsets,
/// then nuisance values uniform in [-1, 1] keyed by (seed, cell).
EmbeddingMatrix coordinate_embeddings(const SynthSpec& spec, std::span<const CellId> cells, int dim);

/// Per-cell vectors [x, y, m_1, ..., m_{dim-2}] where each m_j = a_j*x + b_j*y
/// with coefficients uniform in [-1, 1] keyed by the spec seed. Every
/// dimension carries location, so linear_price_field targets are an exact
/// linear function of the vector.
EmbeddingMatrix mixed_coordinate_embeddings(const SynthSpec& spec, std::span<const CellId> cells, int dim);

}  // namespace obsr
