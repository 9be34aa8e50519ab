#include "obsr/splitter.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <numeric>
#include <set>

#include "obsr/random.hpp"

namespace obsr {

std::string to_string(StratSource s) {
    switch (s) {
        case StratSource::target: return "target";
        case StratSource::point_count: return "point_count";
        case StratSource::duration: return "duration";
        case StratSource::length: return "length";
    }
    return "unknown";
}

StratSource parse_strat_source(const std::string& s) {
    for (StratSource v : {StratSource::target, StratSource::point_count, StratSource::duration, StratSource::length}) {
        if (to_string(v) == s) return v;
    }
    fail(Errc::InvalidConfig, "unknown strat_source '" + s + "'");
}

void SplitConfig::validate() const {
    if (n_bins < 1) fail(Errc::InvalidConfig, "n_bins must be >= 1");
    if (!(test_fraction > 0.0 && test_fraction < 1.0)) fail(Errc::InvalidConfig, "test_fraction must be in (0, 1)");
    check_resolution(resolution);
}

std::vector<int> bucketize(std::span<const double> values, int n) {
    if (values.empty()) fail(Errc::EmptyInput, "no values to bucketize");
    if (n < 1) fail(Errc::InvalidConfig, "n must be >= 1");
    for (double v : values) {
        if (!std::isfinite(v)) fail(Errc::NonFinite, "non-finite value in bucketize");
    }
    std::vector<double> sorted(values.begin(), values.end());
    std::sort(sorted.begin(), sorted.end());
    const std::size_t total = sorted.size();
    std::vector<double> bounds;
    for (int i = 1; i < n; ++i) {
        const std::size_t rank = (static_cast<std::size_t>(i) * total + static_cast<std::size_t>(n) - 1) / static_cast<std::size_t>(n);
        bounds.push_back(sorted[std::max<std::size_t>(rank, 1) - 1]);
    }
    std::vector<int> out;
    out.reserve(values.size());
    for (double v : values) {
        out.push_back(static_cast<int>(std::lower_bound(bounds.begin(), bounds.end(), v) - bounds.begin()));
    }
    return out;
}

SplitManifest split_ids(std::span<const std::string> ids, std::span<const double> strat_values, const SplitConfig& cfg) {
    cfg.validate();
    if (ids.size() != strat_values.size()) fail(Errc::LengthMismatch, "ids and stratification values differ in length");
    if (ids.size() < 2) fail(Errc::TooFewCells, "need at least 2 items to split, got " + std::to_string(ids.size()));

    // work in id order so the result does not depend on input order
    std::vector<std::size_t> order(ids.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return ids[a] < ids[b]; });
    for (std::size_t i = 1; i < order.size(); ++i) {
        if (ids[order[i]] == ids[order[i - 1]]) fail(Errc::DuplicateId, "duplicate id '" + ids[order[i]] + "'");
    }
    std::vector<double> values;
    for (std::size_t i : order) values.push_back(strat_values[i]);
    const auto buckets = bucketize(values, cfg.n_bins);

    std::map<int, std::vector<std::string>> members;
    for (std::size_t k = 0; k < order.size(); ++k) members[buckets[k]].push_back(ids[order[k]]);

    SplitManifest m;
    m.config = cfg;
    struct Quota {
        int bucket;
        std::size_t take;
        double remainder;
    };
    std::vector<Quota> quotas;
    std::size_t eligible = 0;
    for (const auto& [b, list] : members) {
        if (list.size() < 2) {
            m.warnings.push_back("bucket " + std::to_string(b) + " has a single member; assigned to train");
            continue;
        }
        const double exact = cfg.test_fraction * static_cast<double>(list.size());
        quotas.push_back({b, static_cast<std::size_t>(std::floor(exact)), exact - std::floor(exact)});
        eligible += list.size();
    }
    if (eligible < 2) fail(Errc::TooFewCells, "no bucket has two or more members");

    // global total rounded half-to-even, then largest remainders get the extra units
    auto total = static_cast<std::size_t>(std::nearbyint(cfg.test_fraction * static_cast<double>(eligible)));
    if (total == 0) {
        total = 1;
        m.warnings.push_back("test fraction rounds to zero items; one item moved to test");
    } else if (total == eligible) {
        total = eligible - 1;
        m.warnings.push_back("test fraction rounds to every item; one item kept in train");
    }
    std::size_t assigned = 0;
    for (const auto& q : quotas) assigned += q.take;
    std::vector<std::size_t> by_remainder(quotas.size());
    std::iota(by_remainder.begin(), by_remainder.end(), std::size_t{0});
    std::stable_sort(by_remainder.begin(), by_remainder.end(),
                     [&](std::size_t a, std::size_t b) { return quotas[a].remainder > quotas[b].remainder; });
    for (std::size_t k = 0; assigned < total; k = (k + 1) % by_remainder.size()) {
        auto& q = quotas[by_remainder[k]];
        if (q.take < members[q.bucket].size()) {
            ++q.take;
            ++assigned;
        }
    }

    std::map<int, std::size_t> take;
    for (const auto& q : quotas) take[q.bucket] = q.take;
    for (auto& [b, list] : members) {
        BucketReport rep{b, list.size(), 0, 0.0, list.size() < 2};
        if (rep.degenerate) {
            m.train.insert(m.train.end(), list.begin(), list.end());
        } else {
            CounterRng rng(derive_seed(cfg.seed, static_cast<std::uint64_t>(b)));
            shuffle(std::span<std::string>(list), rng);
            rep.test = take.at(b);
            m.test.insert(m.test.end(), list.begin(), list.begin() + static_cast<std::ptrdiff_t>(rep.test));
            m.train.insert(m.train.end(), list.begin() + static_cast<std::ptrdiff_t>(rep.test), list.end());
        }
        rep.achieved_fraction = static_cast<double>(rep.test) / static_cast<double>(rep.size);
        m.bucket_report.push_back(rep);
    }
    std::sort(m.train.begin(), m.train.end());
    std::sort(m.test.begin(), m.test.end());
    return m;
}

SplitManifest split_points(const RegionDataset& ds, const SplitConfig& cfg) {
    if (ds.resolution != cfg.resolution) {
        fail(Errc::ResolutionMismatch, "dataset at resolution " + std::to_string(ds.resolution) + ", split configured for " +
                                           std::to_string(cfg.resolution));
    }
    if (cfg.strat_source != StratSource::target && cfg.strat_source != StratSource::point_count) {
        fail(Errc::InvalidConfig, "region splits stratify by target or point_count");
    }
    if (ds.rows.size() < 2) fail(Errc::TooFewCells, "need at least 2 cells, got " + std::to_string(ds.rows.size()));
    std::vector<std::string> ids;
    std::vector<double> values;
    for (const auto& [c, row] : ds.rows) {
        ids.push_back(c.to_string());
        values.push_back(cfg.strat_source == StratSource::target ? row.target : static_cast<double>(row.support));
    }
    return split_ids(ids, values, cfg);
}

SplitManifest split_points(std::span<const PointRecord> points, const SplitConfig& cfg) {
    const TargetKind kind = cfg.strat_source == StratSource::target ? TargetKind::mean_value : TargetKind::intensity;
    return split_points(aggregate(points, cfg.resolution, kind), cfg);
}

SplitManifest split_trajectories(std::span<const HexTrajectory> trajs, const SplitConfig& cfg) {
    if (cfg.strat_source != StratSource::duration && cfg.strat_source != StratSource::length) {
        fail(Errc::InvalidConfig, "trajectory splits stratify by duration or length");
    }
    if (trajs.size() < 2) fail(Errc::TooFewTrajectories, "need at least 2 trajectories, got " + std::to_string(trajs.size()));
    std::vector<std::string> ids;
    std::vector<double> values;
    for (const auto& t : trajs) {
        ids.push_back(t.id);
        values.push_back(cfg.strat_source == StratSource::duration ? t.duration_s : static_cast<double>(t.cells.size()));
    }
    try {
        return split_ids(ids, values, cfg);
    } catch (const Error& e) {
        if (e.code() == Errc::TooFewCells) fail(Errc::TooFewTrajectories, e.what());
        throw;
    }
}

IdSplit<PointRecord> assign_points(std::span<const PointRecord> points, const SplitManifest& manifest) {
    const std::set<std::string> train(manifest.train.begin(), manifest.train.end());
    const std::set<std::string> test(manifest.test.begin(), manifest.test.end());
    IdSplit<PointRecord> out;
    for (const auto& p : points) {
        const std::string cell = cell_of(p.point, manifest.config.resolution).to_string();
        if (train.count(cell)) {
            out.train.push_back(p);
        } else if (test.count(cell)) {
            out.test.push_back(p);
        } else {
            ++out.excluded;
        }
    }
    return out;
}

SegmentedTrajectory segment_xy(const HexTrajectory& t, double target_fraction) {
    if (t.cells.size() < 2) fail(Errc::TooShort, "trajectory '" + t.id + "' has fewer than 2 cells");
    if (!(target_fraction > 0.0 && target_fraction < 1.0)) fail(Errc::InvalidConfig, "target_fraction must be in (0, 1)");
    const std::size_t n = t.cells.size();
    // the epsilon keeps floor(0.15 * 20) at 3 despite binary rounding
    const auto floor_part = static_cast<std::size_t>(std::floor(target_fraction * static_cast<double>(n) + 1e-9));
    const std::size_t ny = std::clamp<std::size_t>(floor_part, 1, n - 1);
    SegmentedTrajectory s{t.id, {}, {}, target_fraction};
    s.x.assign(t.cells.begin(), t.cells.end() - static_cast<std::ptrdiff_t>(ny));
    s.y.assign(t.cells.end() - static_cast<std::ptrdiff_t>(ny), t.cells.end());
    return s;
}

nlohmann::ordered_json to_json(const SplitManifest& m) {
    nlohmann::ordered_json j;
    j["train"] = m.train;
    j["test"] = m.test;
    j["config"] = {{"resolution", m.config.resolution},
                   {"n_bins", m.config.n_bins},
                   {"test_fraction", m.config.test_fraction},
                   {"seed", m.config.seed},
                   {"strat_source", to_string(m.config.strat_source)}};
    auto& report = j["bucket_report"] = nlohmann::ordered_json::array();
    for (const auto& b : m.bucket_report) {
        report.push_back({{"bucket", b.bucket},
                          {"size", b.size},
                          {"test", b.test},
                          {"achieved_fraction", b.achieved_fraction},
                          {"degenerate", b.degenerate}});
    }
    return j;
}

SplitManifest manifest_from_json(const nlohmann::json& j) {
    SplitManifest m;
    try {
        m.train = j.at("train").get<std::vector<std::string>>();
        m.test = j.at("test").get<std::vector<std::string>>();
        const auto& c = j.at("config");
        m.config.resolution = c.at("resolution").get<int>();
        m.config.n_bins = c.at("n_bins").get<int>();
        m.config.test_fraction = c.at("test_fraction").get<double>();
        m.config.seed = c.at("seed").get<std::uint64_t>();
        m.config.strat_source = parse_strat_source(c.at("strat_source").get<std::string>());
        for (const auto& b : j.value("bucket_report", nlohmann::json::array())) {
            m.bucket_report.push_back({b.at("bucket").get<int>(), b.at("size").get<std::size_t>(), b.at("test").get<std::size_t>(),
                                       b.at("achieved_fraction").get<double>(), b.at("degenerate").get<bool>()});
        }
    } catch (const nlohmann::json::exception& e) {
        fail(Errc::IOError, std::string("bad split manifest: ") + e.what());
    }
    std::vector<std::string> overlap;
    std::set_intersection(m.train.begin(), m.train.end(), m.test.begin(), m.test.end(), std::back_inserter(overlap));
    if (!overlap.empty()) fail(Errc::OverlappingSplit, "id '" + overlap.front() + "' on both sides");
    return m;
}

std::string manifest_text(const SplitManifest& m) { return to_json(m).dump(2) + "\n"; }

void write_manifest(const SplitManifest& m, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) fail(Errc::IOError, "cannot write " + path);
    out << manifest_text(m);
}

SplitManifest read_manifest(const std::string& path) {
    std::ifstream in(path);
    if (!in) fail(Errc::FileNotFound, path);
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(in);
    } catch (const nlohmann::json::exception& e) {
        fail(Errc::IOError, path + ": " + e.what());
    }
    return manifest_from_json(j);
}

IdManifest to_id_manifest(const SplitManifest& m) { return IdManifest{m.train, m.test}; }

}  // namespace obsr
