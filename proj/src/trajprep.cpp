#include "obsr/trajprep.hpp"

#include <algorithm>
#include <fstream>

#include <json.hpp>

#include "obsr/parallel.hpp"

namespace obsr {

HexTrajectory hexify(const Trajectory& t, int r) {
    check_resolution(r);
    if (t.samples.size() < 2) fail(Errc::TooShort, "trajectory '" + t.id + "' has fewer than 2 samples");
    HexTrajectory h{t.id, r, {}, {}, 0.0, t.meta};
    for (const auto& s : t.samples) {
        const CellId c = cell_of(s.point, r);
        if (!h.cells.empty() && h.cells.back() == c) continue;
        h.cells.push_back(c);
        h.times.push_back(static_cast<double>(s.time));
    }
    h.duration_s = static_cast<double>(t.samples.back().time - t.samples.front().time);
    if (h.cells.size() < 2) fail(Errc::TooShort, "trajectory '" + t.id + "' stays in one cell");
    return h;
}

namespace {

template <typename In, typename Fn>
auto map_items(std::span<const In> items, Exec exec, Fn fn) {
    std::vector<decltype(fn(items[0]))> out(items.size());
    parallel_for(items.size(), exec, [&](std::size_t i) { out[i] = fn(items[i]); });
    return out;
}

struct Pieces {
    std::vector<HexTrajectory> kept;
    std::size_t cut = 0;  ///< pieces produced before dropping short ones
};

Pieces interpolate_impl(const HexTrajectory& h, const GapOptions& opts);

}  // namespace

std::vector<HexTrajectory> hexify_all(std::span<const Trajectory> trajs, int r, PrepareCounts& counts, Exec exec) {
    check_resolution(r);
    auto hexed = map_items(trajs, exec, [r](const Trajectory& t) -> std::optional<HexTrajectory> {
        if (t.samples.size() < 2) return std::nullopt;
        const CellId first = cell_of(t.samples.front().point, r);
        const bool moves = std::any_of(t.samples.begin(), t.samples.end(),
                                       [&](const Sample& s) { return cell_of(s.point, r) != first; });
        if (!moves) return std::nullopt;
        return hexify(t, r);
    });
    counts.input += trajs.size();
    std::vector<HexTrajectory> out;
    for (auto& h : hexed) {
        if (h) {
            out.push_back(std::move(*h));
        } else {
            ++counts.dropped_short;
        }
    }
    return out;
}

std::vector<HexTrajectory> interpolate_gaps(const HexTrajectory& h, const GapOptions& opts) {
    return interpolate_impl(h, opts).kept;
}

namespace {

Pieces interpolate_impl(const HexTrajectory& h, const GapOptions& opts) {
    const bool timed = !h.times.empty();
    if (timed && h.times.size() != h.cells.size()) fail(Errc::LengthMismatch, "times do not align with cells in '" + h.id + "'");
    std::vector<HexTrajectory> pieces;
    auto start_piece = [&]() {
        pieces.push_back(HexTrajectory{h.id, h.resolution, {}, {}, 0.0, h.meta});
    };
    start_piece();
    for (std::size_t i = 0; i < h.cells.size(); ++i) {
        HexTrajectory& cur = pieces.back();
        if (i > 0 && h.cells[i] != h.cells[i - 1]) {
            const int d = grid_distance(h.cells[i - 1], h.cells[i]);
            if (d > opts.max_gap) {
                if (!opts.split_on_large_gap) {
                    fail(Errc::GapTooLarge, "gap of " + std::to_string(d) + " cells in '" + h.id + "'");
                }
                start_piece();
            } else if (d > 1) {
                const auto path = grid_path(h.cells[i - 1], h.cells[i]);
                for (int j = 1; j < d; ++j) {
                    cur.cells.push_back(path[static_cast<std::size_t>(j)]);
                    if (timed) cur.times.push_back(h.times[i - 1] + (h.times[i] - h.times[i - 1]) * j / d);
                }
            }
        } else if (i > 0) {
            continue;  // leftover duplicate
        }
        HexTrajectory& tail = pieces.back();
        tail.cells.push_back(h.cells[i]);
        if (timed) tail.times.push_back(h.times[i]);
    }
    Pieces out;
    out.cut = pieces.size();
    if (pieces.size() == 1) {
        pieces.front().duration_s = h.duration_s;
        out.kept = std::move(pieces);
        return out;
    }
    for (std::size_t k = 0; k < pieces.size(); ++k) {
        auto& p = pieces[k];
        p.id = h.id + "#" + std::to_string(k);
        if (p.cells.size() < 2) continue;
        p.duration_s = timed ? p.times.back() - p.times.front() : 0.0;
        out.kept.push_back(std::move(p));
    }
    return out;
}

}  // namespace

std::vector<HexTrajectory> interpolate_all(std::span<const HexTrajectory> trajs, const GapOptions& opts,
                                           PrepareCounts& counts, Exec exec) {
    auto pieces = map_items(trajs, exec, [&opts](const HexTrajectory& h) { return interpolate_impl(h, opts); });
    std::vector<HexTrajectory> out;
    for (auto& p : pieces) {
        if (p.cut > 1) {
            ++counts.split;
            counts.dropped_pieces += p.cut - p.kept.size();
        }
        for (auto& h : p.kept) out.push_back(std::move(h));
    }
    return out;
}

std::vector<HexTrajectory> prepare_trajectories(std::span<const Trajectory> trajs, int r, const GapOptions& opts,
                                                PrepareCounts& counts, Exec exec) {
    const auto hexed = hexify_all(trajs, r, counts, exec);
    auto out = interpolate_all(hexed, opts, counts, exec);
    std::sort(out.begin(), out.end(), [](const HexTrajectory& a, const HexTrajectory& b) { return a.id < b.id; });
    return out;
}

bool is_contiguous(std::span<const CellId> cells) {
    for (std::size_t i = 1; i < cells.size(); ++i) {
        if (!are_neighbors(cells[i - 1], cells[i])) return false;
    }
    return true;
}

std::vector<DirectionLabel> encode_directions(std::span<const CellId> cells) {
    std::vector<DirectionLabel> labels;
    if (cells.size() < 2) return labels;
    labels.reserve(cells.size() - 1);
    for (std::size_t i = 1; i < cells.size(); ++i) {
        if (!are_neighbors(cells[i - 1], cells[i])) {
            fail(Errc::NotContiguous, "cells " + cells[i - 1].to_string() + " and " + cells[i].to_string() + " are not adjacent");
        }
        labels.push_back(direction_between(cells[i - 1], cells[i]));
    }
    return labels;
}

std::vector<CellId> decode_directions(CellId start, std::span<const DirectionLabel> labels) {
    std::vector<CellId> cells{start};
    cells.reserve(labels.size() + 1);
    for (DirectionLabel d : labels) cells.push_back(neighbor_in_direction(cells.back(), d));
    return cells;
}

std::vector<int> encode_with_stay(std::span<const CellId> cells) {
    std::vector<int> labels;
    for (std::size_t i = 1; i < cells.size(); ++i) {
        if (cells[i] == cells[i - 1]) {
            labels.push_back(kStayLabel);
            continue;
        }
        if (!are_neighbors(cells[i - 1], cells[i])) fail(Errc::NotContiguous, "step " + std::to_string(i) + " is not adjacent");
        labels.push_back(direction_between(cells[i - 1], cells[i]).value());
    }
    return labels;
}

std::vector<CellId> decode_with_stay(CellId start, std::span<const int> labels) {
    std::vector<CellId> cells{start};
    for (int l : labels) cells.push_back(l == kStayLabel ? cells.back() : neighbor_in_direction(cells.back(), DirectionLabel(l)));
    return cells;
}

void write_prepared_jsonl(std::span<const HexTrajectory> trajs, const std::string& path) {
    std::ofstream out(path);
    if (!out) fail(Errc::IOError, "cannot write " + path);
    for (const auto& h : trajs) {
        nlohmann::ordered_json j;
        j["id"] = h.id;
        j["resolution"] = h.resolution;
        auto& cells = j["cells"] = nlohmann::ordered_json::array();
        for (CellId c : h.cells) cells.push_back(c.to_string());
        j["times"] = h.times;
        j["duration_s"] = h.duration_s;
        auto& labels = j["labels"] = nlohmann::ordered_json::array();
        if (is_contiguous(h.cells)) {
            for (DirectionLabel d : encode_directions(h.cells)) labels.push_back(d.value());
        }
        if (!h.meta.empty()) j["meta"] = h.meta;
        out << j.dump() << '\n';
    }
}

std::vector<HexTrajectory> read_prepared_jsonl(const std::string& path) {
    std::ifstream in(path);
    if (!in) fail(Errc::FileNotFound, path);
    std::vector<HexTrajectory> out;
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        try {
            const auto j = nlohmann::json::parse(line);
            HexTrajectory h;
            h.id = j.at("id").get<std::string>();
            h.resolution = j.at("resolution").get<int>();
            for (const auto& c : j.at("cells")) h.cells.push_back(CellId::from_string(c.get<std::string>()));
            h.times = j.at("times").get<std::vector<double>>();
            h.duration_s = j.at("duration_s").get<double>();
            if (j.contains("meta")) h.meta = j["meta"].get<std::map<std::string, std::string>>();
            out.push_back(std::move(h));
        } catch (const nlohmann::json::exception& e) {
            fail(Errc::IOError, path + ": " + e.what());
        }
    }
    return out;
}

}  // namespace obsr
