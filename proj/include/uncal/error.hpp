#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace uncal {

enum class ErrorKind {
    InvalidArgument,
    MissingReward,
    InvalidStep,
    NumericOverflow,
    UndefinedLogOdds,
    HypothesisViolated,
    DegenerateRatio,
    MissingSignal,
    EmptyBatch,
    UndefinedCorrelation,
    DegenerateFit,
    NotEmitted,
    AlignmentError,
    UndefinedMetric,
    ShapeError,
    UndefinedSimilarity,
    IoError,
    CorruptInput,
    ParseError,
};

std::string_view to_string(ErrorKind kind) noexcept;

/// Every failure raised by the library carries one ErrorKind so callers
/// (and the CLI exit-code mapping) can branch on it without parsing text.
class Error : public std::runtime_error {
public:
    Error(ErrorKind kind, const std::string& what)
        : std::runtime_error(std::string(to_string(kind)) + ": " + what), kind_(kind) {}

    [[nodiscard]] ErrorKind kind() const noexcept { return kind_; }

private:
    ErrorKind kind_;
};

}  // namespace uncal
