#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace obsr {

enum class Errc {
    // hexgrid
    InvalidResolution,
    InvalidCoordinate,
    InvalidCell,
    PentagonEncountered,
    ResolutionMismatch,
    DistanceUndefined,
    PathUndefined,
    NotAdjacent,
    PentagonNeighborhood,
    // ingest
    FileNotFound,
    HeaderMismatch,
    EmptyDataset,
    MalformedPolyline,
    MalformedPlt,
    EmptyAfterFilter,
    UnknownIds,
    EmptySplit,
    OverlappingSplit,
    DuplicateId,
    // regionize / splitter / trajprep
    MissingTarget,
    EmptyInput,
    TooFewCells,
    TooFewTrajectories,
    TooShort,
    GapTooLarge,
    NotContiguous,
    // embed
    EmptyFilter,
    // metrics
    LengthMismatch,
    ZeroVariance,
    EmptySequence,
    NonFinite,
    // nn
    ShapeMismatch,
    ClassOutOfRange,
    DimNotDivisible,
    UninitializedGrads,
    NonDeterministicModel,
    // baselines
    EmptyTrainSet,
    DimensionMismatch,
    TargetOutOfRange,
    NonPositiveDuration,
    // synthdata / cli
    InvalidSpec,
    InvalidConfig,
    IOError,
};

std::string_view to_string(Errc code);

/// Every failure surfaced by the library carries one of the codes above.
class Error : public std::runtime_error {
public:
    Error(Errc code, const std::string& what)
        : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code) {}

    Errc code() const noexcept { return code_; }

private:
    Errc code_;
};

[[noreturn]] inline void fail(Errc code, const std::string& what) { throw Error(code, what); }

}  // namespace obsr
