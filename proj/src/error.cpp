#include "obsr/error.hpp"

namespace obsr {

std::string_view to_string(Errc code) {
    switch (code) {
        case Errc::InvalidResolution: return "InvalidResolution";
        case Errc::InvalidCoordinate: return "InvalidCoordinate";
        case Errc::InvalidCell: return "InvalidCell";
        case Errc::PentagonEncountered: return "PentagonEncountered";
        case Errc::ResolutionMismatch: return "ResolutionMismatch";
        case Errc::DistanceUndefined: return "DistanceUndefined";
        case Errc::PathUndefined: return "PathUndefined";
        case Errc::NotAdjacent: return "NotAdjacent";
        case Errc::PentagonNeighborhood: return "PentagonNeighborhood";
        case Errc::FileNotFound: return "FileNotFound";
        case Errc::HeaderMismatch: return "HeaderMismatch";
        case Errc::EmptyDataset: return "EmptyDataset";
        case Errc::MalformedPolyline: return "MalformedPolyline";
        case Errc::MalformedPlt: return "MalformedPlt";
        case Errc::EmptyAfterFilter: return "EmptyAfterFilter";
        case Errc::UnknownIds: return "UnknownIds";
        case Errc::EmptySplit: return "EmptySplit";
        case Errc::OverlappingSplit: return "OverlappingSplit";
        case Errc::DuplicateId: return "DuplicateId";
        case Errc::MissingTarget: return "MissingTarget";
        case Errc::EmptyInput: return "EmptyInput";
        case Errc::TooFewCells: return "TooFewCells";
        case Errc::TooFewTrajectories: return "TooFewTrajectories";
        case Errc::TooShort: return "TooShort";
        case Errc::GapTooLarge: return "GapTooLarge";
        case Errc::NotContiguous: return "NotContiguous";
        case Errc::EmptyFilter: return "EmptyFilter";
        case Errc::LengthMismatch: return "LengthMismatch";
        case Errc::ZeroVariance: return "ZeroVariance";
        case Errc::EmptySequence: return "EmptySequence";
        case Errc::NonFinite: return "NonFinite";
        case Errc::ShapeMismatch: return "ShapeMismatch";
        case Errc::ClassOutOfRange: return "ClassOutOfRange";
        case Errc::DimNotDivisible: return "DimNotDivisible";
        case Errc::UninitializedGrads: return "UninitializedGrads";
        case Errc::NonDeterministicModel: return "NonDeterministicModel";
        case Errc::EmptyTrainSet: return "EmptyTrainSet";
        case Errc::DimensionMismatch: return "DimensionMismatch";
        case Errc::TargetOutOfRange: return "TargetOutOfRange";
        case Errc::NonPositiveDuration: return "NonPositiveDuration";
        case Errc::InvalidSpec: return "InvalidSpec";
        case Errc::InvalidConfig: return "InvalidConfig";
        case Errc::IOError: return "IOError";
    }
    return "Unknown";
}

}  // namespace obsr
