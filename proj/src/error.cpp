#include "uncal/error.hpp"

namespace uncal {

std::string_view to_string(ErrorKind kind) noexcept {
    switch (kind) {
        case ErrorKind::InvalidArgument: return "InvalidArgument";
        case ErrorKind::MissingReward: return "MissingReward";
        case ErrorKind::InvalidStep: return "InvalidStep";
        case ErrorKind::NumericOverflow: return "NumericOverflow";
        case ErrorKind::UndefinedLogOdds: return "UndefinedLogOdds";
        case ErrorKind::HypothesisViolated: return "HypothesisViolated";
        case ErrorKind::DegenerateRatio: return "DegenerateRatio";
        case ErrorKind::MissingSignal: return "MissingSignal";
        case ErrorKind::EmptyBatch: return "EmptyBatch";
        case ErrorKind::UndefinedCorrelation: return "UndefinedCorrelation";
        case ErrorKind::DegenerateFit: return "DegenerateFit";
        case ErrorKind::NotEmitted: return "NotEmitted";
        case ErrorKind::AlignmentError: return "AlignmentError";
        case ErrorKind::UndefinedMetric: return "UndefinedMetric";
        case ErrorKind::ShapeError: return "ShapeError";
        case ErrorKind::UndefinedSimilarity: return "UndefinedSimilarity";
        case ErrorKind::IoError: return "IoError";
        case ErrorKind::CorruptInput: return "CorruptInput";
        case ErrorKind::ParseError: return "ParseError";
    }
    return "Unknown";
}

}  // namespace uncal
