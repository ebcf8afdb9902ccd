#pragma once

// Answer extraction, correctness matching and the two reward functions:
// the signed verbal-confidence reward and the `<uncertain>` emission reward.

#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "uncal/records.hpp"

namespace uncal::rewards {

inline constexpr std::string_view kUncertainMarker = "<uncertain>";
inline constexpr double kDefaultF1Threshold = 0.3;
inline constexpr double kDefaultRepetitionPenalty = 1.0;

/// Payload of the last line starting with `Answer:` (case-insensitive).
std::optional<std::string> extract_answer_line(std::string_view response_text);

struct ParsedConfidence {
    double value = 0.0;
    bool clamped = false;  ///< raw value was outside [0,1]
};

/// Value of the last parseable `Confidence:` line, clamped to [0,1].
std::optional<ParsedConfidence> extract_confidence(std::string_view response_text);

/// Lowercase, punctuation removed, whitespace collapsed, one leading article dropped.
std::string normalize_answer(std::string_view text);

/// Multiset token-overlap F1 on normalized text.
double token_f1(std::string_view pred, std::string_view gold);

/// Calendar date with optional month/day, as parsed by the date rule.
struct PartialDate {
    int year = 0;
    std::optional<int> month;
    std::optional<int> day;
};

/// Accepts YYYY, YYYY-MM, YYYY-MM-DD, "Month YYYY", "Month D, YYYY", "D Month YYYY".
std::optional<PartialDate> parse_date(std::string_view text);

/// Rules in order: normalized exact match, yes/no, date, token-F1 >= threshold.
MatchResult match_answer(std::string_view pred, std::span<const std::string> golds,
                         double f1_threshold = kDefaultF1Threshold);

/// Answer used for matching: extracted_answer if set, else the answer line.
std::optional<std::string> resolve_answer(const PredictionRecord& record);

/// Matches the resolved answer; a record with no answer is wrong with f1 = 0.
MatchResult match_record(const PredictionRecord& record, double f1_threshold = kDefaultF1Threshold);

/// +p when correct, -p when wrong. MissingSignal without a verbal confidence.
double verbal_reward(const PredictionRecord& record, const MatchResult& match);

/// 5.0 / 3.5 / 0.0 / -2.0 for (correct, silent) / (correct, emit) /
/// (wrong, emit) / (wrong, silent), minus `penalty_per_extra` for each
/// emission beyond the second.
double emission_reward(bool correct, std::size_t emission_count,
                       double penalty_per_extra = kDefaultRepetitionPenalty);
double emission_reward(const PredictionRecord& record, const MatchResult& match,
                       double penalty_per_extra = kDefaultRepetitionPenalty);

/// Non-overlapping occurrences of `<uncertain>`, left to right.
std::vector<EmissionEvent> scan_emissions(std::string_view response_text);

/// Position of the first emission over the response length.
std::optional<double> first_emit_fraction(const PredictionRecord& record);

/// Fills extracted_answer, verbal_confidence (with clamp flag) and emissions
/// from response_text where the record leaves them empty, then sets `match`.
PredictionRecord annotate(PredictionRecord record, double f1_threshold = kDefaultF1Threshold);

}  // namespace uncal::rewards
