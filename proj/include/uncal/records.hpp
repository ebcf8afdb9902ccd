#pragma once

#include <cstddef>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "uncal/json_io.hpp"

namespace uncal {

struct EmissionEvent {
    std::size_t char_position = 0;
    std::optional<std::size_t> token_index;

    friend bool operator==(const EmissionEvent&, const EmissionEvent&) = default;
};

enum class MatchRule { ExactMatch, YesNo, Date, TokenF1 };

struct MatchResult {
    bool correct = false;
    MatchRule rule = MatchRule::TokenF1;
    double f1 = 0.0;

    friend bool operator==(const MatchResult&, const MatchResult&) = default;
};

/// One model response as recorded in a prediction trace.
struct PredictionRecord {
    std::string qid;
    std::string dataset;
    std::string question;
    std::vector<std::string> gold_answers;
    std::string response_text;
    std::optional<std::string> extracted_answer;
    std::optional<double> verbal_confidence;
    std::vector<EmissionEvent> emissions;
    std::size_t response_token_count = 0;
    std::optional<std::vector<double>> token_probs;

    // Trace extensions (all optional on input).
    std::optional<double> p_affirmative;  ///< P(True) affirmative-token probability
    std::optional<MatchResult> match;     ///< written by `uncal match`
    bool confidence_clamped = false;

    friend bool operator==(const PredictionRecord&, const PredictionRecord&) = default;
};

std::string_view to_string(MatchRule rule) noexcept;
MatchRule match_rule_from_string(std::string_view name);

/// Strict conversion; throws ParseError naming the offending field.
PredictionRecord record_from_json(const json& j);
json to_json(const PredictionRecord& record);
json to_json(const MatchResult& match);
MatchResult match_from_json(const json& j);

/// Loads a JSONL trace. Valid lines become records; invalid lines are listed
/// with their line numbers. IoError if unreadable, CorruptInput if more than
/// half the lines are invalid.
LoadResult<PredictionRecord> load_predictions(const std::filesystem::path& path);

void save_predictions(const std::filesystem::path& path, const std::vector<PredictionRecord>& records);

}  // namespace uncal
