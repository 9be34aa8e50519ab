#pragma once

// GPS trajectories to contiguous cell paths, and the relative-direction
// class encoding of those paths.

#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "obsr/error.hpp"
#include "obsr/exec.hpp"
#include "obsr/hexgrid.hpp"
#include "obsr/ingest.hpp"

namespace obsr {

struct HexTrajectory {
    std::string id;
    int resolution = 0;
    std::vector<CellId> cells;
    std::vector<double> times;  ///< UTC seconds aligned with cells, or empty
    double duration_s = 0.0;
    std::map<std::string, std::string> meta;

    bool operator==(const HexTrajectory&) const = default;
};

/// Map samples to cells and collapse runs of the same cell, keeping the first
/// timestamp of each run. Throws TooShort when fewer than 2 cells remain.
HexTrajectory hexify(const Trajectory& t, int r);

struct PrepareCounts {
    std::size_t input = 0;
    std::size_t dropped_short = 0;  ///< collapsed to a single cell
    std::size_t split = 0;          ///< trajectories cut at an over-long gap
    std::size_t dropped_pieces = 0; ///< pieces shorter than 2 cells after a cut
};

/// hexify over a collection; trajectories that collapse are dropped and counted.
std::vector<HexTrajectory> hexify_all(std::span<const Trajectory> trajs, int r, PrepareCounts& counts,
                                      Exec exec = Exec::parallel);

struct GapOptions {
    int max_gap = 25;                ///< largest grid distance bridged by interpolation
    bool split_on_large_gap = true;  ///< otherwise GapTooLarge
};

/// Splice shortest grid paths between non-adjacent consecutive cells, with
/// linearly interpolated times. Normally returns one trajectory; gaps beyond
/// max_gap cut it into pieces "id#0", "id#1", ... (pieces under 2 cells are
/// dropped).
std::vector<HexTrajectory> interpolate_gaps(const HexTrajectory& h, const GapOptions& opts = {});

std::vector<HexTrajectory> interpolate_all(std::span<const HexTrajectory> trajs, const GapOptions& opts,
                                           PrepareCounts& counts, Exec exec = Exec::parallel);

/// Full preparation: hexify, interpolate, order by id.
std::vector<HexTrajectory> prepare_trajectories(std::span<const Trajectory> trajs, int r, const GapOptions& opts,
                                                PrepareCounts& counts, Exec exec = Exec::parallel);

bool is_contiguous(std::span<const CellId> cells);

std::vector<DirectionLabel> encode_directions(std::span<const CellId> cells);
std::vector<CellId> decode_directions(CellId start, std::span<const DirectionLabel> labels);

/// Seven-class variant: label 6 marks a step that stays in the same cell, so
/// uncollapsed paths can be encoded.
inline constexpr int kStayLabel = 6;
std::vector<int> encode_with_stay(std::span<const CellId> cells);
std::vector<CellId> decode_with_stay(CellId start, std::span<const int> labels);

/// JSON Lines, one object per trajectory with its direction labels.
void write_prepared_jsonl(std::span<const HexTrajectory> trajs, const std::string& path);
std::vector<HexTrajectory> read_prepared_jsonl(const std::string& path);

}  // namespace obsr
