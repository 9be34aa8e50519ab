#include "obsr/synthdata.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>

#include "obsr/random.hpp"

namespace obsr {

namespace {

constexpr std::int64_t kEpochBase = 1'600'000'000;

const std::pair<SynthKind, const char*> kKindNames[] = {
    {SynthKind::linear_price_field, "linear_price_field"},
    {SynthKind::clustered_intensity, "clustered_intensity"},
    {SynthKind::constant_direction_walks, "constant_direction_walks"},
    {SynthKind::random_walks, "random_walks"},
    {SynthKind::gappy_walks, "gappy_walks"},
};

bool is_walk(SynthKind k) {
    return k == SynthKind::constant_direction_walks || k == SynthKind::random_walks || k == SynthKind::gappy_walks;
}

std::string numbered(const char* prefix, std::size_t i) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%s%06zu", prefix, i);
    return buf;
}

GeoPoint uniform_point(const SynthSpec& spec, CounterRng& rng, double shrink = 1.0) {
    const double h = spec.half_extent_deg * shrink;
    return GeoPoint(spec.center.lat() + rng.uniform(-h, h), spec.center.lon() + rng.uniform(-h, h));
}

bool inside(const SynthSpec& spec, double lat, double lon) {
    return std::abs(lat - spec.center.lat()) <= spec.half_extent_deg &&
           std::abs(lon - spec.center.lon()) <= spec.half_extent_deg;
}

std::vector<GeoPoint> cluster_centers(const SynthSpec& spec, std::uint64_t tag) {
    CounterRng rng(derive_seed(spec.seed, tag));
    std::vector<GeoPoint> out;
    for (int k = 0; k < spec.cluster_count; ++k) out.push_back(uniform_point(spec, rng, 0.7));
    return out;
}

GeoPoint around(const SynthSpec& spec, const GeoPoint& c, CounterRng& rng, double sigma) {
    for (;;) {
        const double lat = c.lat() + sigma * rng.normal();
        const double lon = c.lon() + sigma * rng.normal();
        if (inside(spec, lat, lon)) return GeoPoint(lat, lon);
    }
}

std::vector<CellId> walk_cells(const SynthSpec& spec, CounterRng& rng, int length) {
    std::vector<CellId> cells{cell_of(uniform_point(spec, rng, 0.5), spec.resolution)};
    while (static_cast<int>(cells.size()) < length) {
        const CellId cur = cells.back();
        if (spec.kind == SynthKind::constant_direction_walks) {
            cells.push_back(neighbor_in_direction(cur, DirectionLabel(spec.direction)));
            continue;
        }
        const auto nbrs = neighbors_by_direction(cur);
        for (;;) {
            const CellId next = nbrs[rng.below(DirectionLabel::kCount)];
            if (cells.size() < 2 || next != cells[cells.size() - 2]) {
                cells.push_back(next);
                break;
            }
        }
    }
    return cells;
}

Trajectory make_walk(const SynthSpec& spec, std::size_t i) {
    CounterRng rng(derive_seed(spec.seed, static_cast<std::uint64_t>(i)));
    const std::int64_t t0 = kEpochBase + static_cast<std::int64_t>(i) * 600;
    for (;;) {
        int length = spec.walk_length;
        if (spec.walk_length_max > spec.walk_length) {
            length += static_cast<int>(rng.below(static_cast<std::uint64_t>(spec.walk_length_max - spec.walk_length + 1)));
        }
        const auto cells = walk_cells(spec, rng, length);
        Trajectory t{numbered("walk", i), {}, {{"generator", to_string(spec.kind)}}};
        for (std::size_t s = 0; s < cells.size(); ++s) {
            const bool interior = s > 0 && s + 1 < cells.size();
            if (spec.kind == SynthKind::gappy_walks && interior && rng.uniform() < spec.gap_rate) continue;
            const GeoPoint p = centroid(cells[s]);
            if (!t.samples.empty() && cell_of(t.samples.back().point, spec.resolution) == cells[s]) continue;
            t.samples.push_back({p, t0 + spec.step_seconds * static_cast<std::int64_t>(s)});
        }
        if (t.samples.size() >= 2) return t;
    }
}

}  // namespace

std::string to_string(SynthKind k) {
    for (const auto& [kind, name] : kKindNames) {
        if (kind == k) return name;
    }
    return "unknown";
}

SynthKind parse_synth_kind(const std::string& s) {
    for (const auto& [kind, name] : kKindNames) {
        if (s == name) return kind;
    }
    fail(Errc::InvalidSpec, "unknown synthetic kind '" + s + "'");
}

void SynthSpec::validate() const {
    if (n < 1) fail(Errc::InvalidSpec, "n must be >= 1");
    if (!(half_extent_deg > 0.0) || !GeoPoint::valid(center.lat() - half_extent_deg, center.lon() - half_extent_deg) ||
        !GeoPoint::valid(center.lat() + half_extent_deg, center.lon() + half_extent_deg)) {
        fail(Errc::InvalidSpec, "region extent leaves valid coordinates");
    }
    if (is_pentagon(cell_of(center, 0))) fail(Errc::InvalidSpec, "region center lies in a pentagon base cell");
    if (noise_sigma < 0.0) fail(Errc::InvalidSpec, "noise_sigma must be >= 0");
    if (snap_resolution) check_resolution(*snap_resolution);
    if (cluster_count < 1 || !(cluster_sigma_deg > 0.0) || !(hotspot_sigma_deg > 0.0) || hotspot_fraction < 0.0 ||
        hotspot_fraction > 1.0) fail(Errc::InvalidSpec, "bad cluster parameters");
    check_resolution(resolution);
    if (walk_length < 2) fail(Errc::InvalidSpec, "walk_length must be >= 2");
    if (direction < 0 || direction >= DirectionLabel::kCount) fail(Errc::InvalidSpec, "direction must be in [0, 6)");
    if (gap_rate < 0.0 || gap_rate >= 1.0) fail(Errc::InvalidSpec, "gap_rate must be in [0, 1)");
    if (step_seconds <= 0) fail(Errc::InvalidSpec, "step_seconds must be > 0");
}

std::pair<double, double> scaled_offsets(const SynthSpec& spec, const GeoPoint& p) {
    return {(p.lon() - spec.center.lon()) / spec.half_extent_deg, (p.lat() - spec.center.lat()) / spec.half_extent_deg};
}

double linear_field_value(const SynthSpec& spec, const GeoPoint& p) {
    const auto [x, y] = scaled_offsets(spec, p);
    return spec.intercept + spec.coef_a * x + spec.coef_b * y;
}

std::vector<PointRecord> generate_points(const SynthSpec& spec) {
    spec.validate();
    if (is_walk(spec.kind)) fail(Errc::InvalidSpec, to_string(spec.kind) + " generates trajectories, not points");
    const auto centers = cluster_centers(spec, 0xC1u);
    std::vector<double> cum;
    double total = 0.0;
    for (int k = 0; k < spec.cluster_count; ++k) cum.push_back(total += 1.0 / (k + 1));

    std::vector<std::optional<PointRecord>> out(spec.n);
    const auto n = static_cast<std::ptrdiff_t>(spec.n);
#pragma omp parallel for schedule(static)
    for (std::ptrdiff_t i = 0; i < n; ++i) {
        CounterRng rng(derive_seed(spec.seed, static_cast<std::uint64_t>(i)));
        PointRecord rec{numbered("pt", static_cast<std::size_t>(i)), spec.center, std::nullopt, std::nullopt, {}};
        if (spec.kind == SynthKind::linear_price_field) {
            GeoPoint p = uniform_point(spec, rng);
            if (spec.snap_resolution) p = centroid(cell_of(p, *spec.snap_resolution));
            rec.point = p;
            rec.target = linear_field_value(spec, p) + spec.noise_sigma * rng.normal();
        } else {
            const double u = rng.uniform() * total;
            const auto k = static_cast<std::size_t>(std::lower_bound(cum.begin(), cum.end(), u) - cum.begin());
            const double sigma = rng.uniform() < spec.hotspot_fraction ? spec.hotspot_sigma_deg : spec.cluster_sigma_deg;
            rec.point = around(spec, centers[std::min(k, centers.size() - 1)], rng, sigma);
        }
        rec.timestamp = kEpochBase + i;
        out[static_cast<std::size_t>(i)] = std::move(rec);
    }
    std::vector<PointRecord> points;
    points.reserve(out.size());
    for (auto& r : out) points.push_back(std::move(*r));
    return points;
}

std::vector<Trajectory> generate_trajectories(const SynthSpec& spec) {
    spec.validate();
    if (!is_walk(spec.kind)) fail(Errc::InvalidSpec, to_string(spec.kind) + " generates points, not trajectories");
    std::vector<std::optional<Trajectory>> out(spec.n);
    const auto n = static_cast<std::ptrdiff_t>(spec.n);
#pragma omp parallel for schedule(dynamic, 16)
    for (std::ptrdiff_t i = 0; i < n; ++i) out[static_cast<std::size_t>(i)] = make_walk(spec, static_cast<std::size_t>(i));
    std::vector<Trajectory> trajs;
    trajs.reserve(out.size());
    for (auto& t : out) trajs.push_back(std::move(*t));
    return trajs;
}

std::vector<std::pair<GeoPoint, std::string>> generate_feature_records(const SynthSpec& spec,
                                                                      const std::vector<std::string>& keys) {
    spec.validate();
    std::vector<std::pair<GeoPoint, std::string>> out;
    for (std::size_t j = 0; j < keys.size(); ++j) {
        const auto centers = cluster_centers(spec, 0xF00u + j);
        CounterRng rng(derive_seed(derive_seed(spec.seed, "features"), j));
        const std::size_t count = spec.n / keys.size() + (j < spec.n % keys.size() ? 1 : 0);
        for (std::size_t i = 0; i < count; ++i) {
            out.emplace_back(around(spec, centers[rng.below(centers.size())], rng, spec.cluster_sigma_deg), keys[j]);
        }
    }
    return out;
}

nlohmann::ordered_json to_json(const SynthSpec& s) {
    nlohmann::ordered_json j;
    j["kind"] = to_string(s.kind);
    j["center"] = {s.center.lat(), s.center.lon()};
    j["half_extent_deg"] = s.half_extent_deg;
    j["n"] = s.n;
    j["seed"] = s.seed;
    j["coef_a"] = s.coef_a;
    j["coef_b"] = s.coef_b;
    j["intercept"] = s.intercept;
    j["noise_sigma"] = s.noise_sigma;
    j["snap_resolution"] = s.snap_resolution ? nlohmann::ordered_json(*s.snap_resolution) : nlohmann::ordered_json(nullptr);
    j["cluster_count"] = s.cluster_count;
    j["cluster_sigma_deg"] = s.cluster_sigma_deg;
    j["hotspot_fraction"] = s.hotspot_fraction;
    j["hotspot_sigma_deg"] = s.hotspot_sigma_deg;
    j["resolution"] = s.resolution;
    j["walk_length"] = s.walk_length;
    j["walk_length_max"] = s.walk_length_max;
    j["direction"] = s.direction;
    j["gap_rate"] = s.gap_rate;
    j["step_seconds"] = s.step_seconds;
    return j;
}

SynthSpec synth_spec_from_json(const nlohmann::json& j) {
    SynthSpec s;
    try {
        s.kind = parse_synth_kind(j.at("kind").get<std::string>());
        if (j.contains("center")) s.center = GeoPoint(j["center"].at(0).get<double>(), j["center"].at(1).get<double>());
        s.half_extent_deg = j.value("half_extent_deg", s.half_extent_deg);
        s.n = j.value("n", s.n);
        s.seed = j.value("seed", s.seed);
        s.coef_a = j.value("coef_a", s.coef_a);
        s.coef_b = j.value("coef_b", s.coef_b);
        s.intercept = j.value("intercept", s.intercept);
        s.noise_sigma = j.value("noise_sigma", s.noise_sigma);
        if (j.contains("snap_resolution") && !j["snap_resolution"].is_null()) s.snap_resolution = j["snap_resolution"].get<int>();
        s.cluster_count = j.value("cluster_count", s.cluster_count);
        s.cluster_sigma_deg = j.value("cluster_sigma_deg", s.cluster_sigma_deg);
        s.hotspot_fraction = j.value("hotspot_fraction", s.hotspot_fraction);
        s.hotspot_sigma_deg = j.value("hotspot_sigma_deg", s.hotspot_sigma_deg);
        s.resolution = j.value("resolution", s.resolution);
        s.walk_length = j.value("walk_length", s.walk_length);
        s.walk_length_max = j.value("walk_length_max", s.walk_length_max);
        s.direction = j.value("direction", s.direction);
        s.gap_rate = j.value("gap_rate", s.gap_rate);
        s.step_seconds = j.value("step_seconds", s.step_seconds);
    } catch (const nlohmann::json::exception& e) {
        fail(Errc::InvalidSpec, e.what());
    }
    s.validate();
    return s;
}

EmbeddingMatrix coordinate_embeddings(const SynthSpec& spec, std::span<const CellId> cells, int dim) {
    if (dim < 2) fail(Errc::InvalidSpec, "coordinate embeddings need at least 2 dimensions");
    EmbeddingMatrix m;
    m.dim = dim;
    m.provenance = EmbedderKind::external;
    m.params = {{"source", "synthetic_coordinates"}, {"seed", spec.seed}, {"dim", dim}};
    for (CellId c : cells) {
        const auto [x, y] = scaled_offsets(spec, centroid(c));
        std::vector<double> v{x, y};
        CounterRng rng(derive_seed(spec.seed, c.index()));
        for (int i = 2; i < dim; ++i) v.push_back(rng.uniform(-1.0, 1.0));
        m.vectors[c] = std::move(v);
    }
    return m;
}

EmbeddingMatrix mixed_coordinate_embeddings(const SynthSpec& spec, std::span<const CellId> cells, int dim) {
    if (dim < 2) fail(Errc::InvalidSpec, "coordinate embeddings need at least 2 dimensions");
    CounterRng coef(derive_seed(spec.seed, "embedding-mix"));
    std::vector<std::pair<double, double>> mix;
    for (int i = 2; i < dim; ++i) {
        const double a = coef.uniform(-1.0, 1.0);
        mix.emplace_back(a, coef.uniform(-1.0, 1.0));
    }
    EmbeddingMatrix m;
    m.dim = dim;
    m.provenance = EmbedderKind::external;
    m.params = {{"source", "synthetic_mixed_coordinates"}, {"seed", spec.seed}, {"dim", dim}};
    for (CellId c : cells) {
        const auto [x, y] = scaled_offsets(spec, centroid(c));
        std::vector<double> v{x, y};
        for (const auto& [a, b] : mix) v.push_back(a * x + b * y);
        m.vectors[c] = std::move(v);
    }
    return m;
}

}  // namespace obsr
