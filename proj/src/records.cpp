#include "uncal/records.hpp"

#include <algorithm>
#include <array>
#include <cmath>

#include "uncal/error.hpp"

namespace uncal {

std::string_view to_string(MatchRule rule) noexcept {
    switch (rule) {
        case MatchRule::ExactMatch: return "ExactMatch";
        case MatchRule::YesNo: return "YesNo";
        case MatchRule::Date: return "Date";
        case MatchRule::TokenF1: return "TokenF1";
    }
    return "TokenF1";
}

MatchRule match_rule_from_string(std::string_view name) {
    for (auto rule : {MatchRule::ExactMatch, MatchRule::YesNo, MatchRule::Date, MatchRule::TokenF1}) {
        if (to_string(rule) == name) {
            return rule;
        }
    }
    throw Error(ErrorKind::ParseError, "unknown match rule '" + std::string(name) + "'");
}

namespace {

constexpr std::array kKnownFields{
    "qid",       "dataset",    "question", "gold_answers",          "response_text",
    "extracted_answer", "verbal_confidence", "emissions", "response_token_count", "token_probs",
    "p_affirmative", "match", "confidence_clamped", "schema_version",
};

[[noreturn]] void field_error(const std::string& field, const std::string& why) {
    throw Error(ErrorKind::ParseError, "field '" + field + "': " + why);
}

const json& required(const json& j, const char* field) {
    const auto it = j.find(field);
    if (it == j.end()) {
        field_error(field, "missing");
    }
    return *it;
}

std::string string_field(const json& j, const char* field) {
    const auto& v = required(j, field);
    if (!v.is_string()) {
        field_error(field, "expected string");
    }
    return v.get<std::string>();
}

std::optional<double> optional_number(const json& j, const char* field) {
    const auto it = j.find(field);
    if (it == j.end() || it->is_null()) {
        return std::nullopt;
    }
    if (!it->is_number()) {
        field_error(field, "expected number");
    }
    const double v = it->get<double>();
    if (!std::isfinite(v)) {
        field_error(field, "not finite");
    }
    return v;
}

}  // namespace

json to_json(const MatchResult& match) {
    return {{"correct", match.correct}, {"rule", std::string(to_string(match.rule))}, {"f1", match.f1}};
}

MatchResult match_from_json(const json& j) {
    MatchResult m;
    m.correct = required(j, "correct").get<bool>();
    m.rule = match_rule_from_string(string_field(j, "rule"));
    m.f1 = required(j, "f1").get<double>();
    return m;
}

PredictionRecord record_from_json(const json& j) {
    if (!j.is_object()) {
        throw Error(ErrorKind::ParseError, "record is not a JSON object");
    }
    for (auto it = j.begin(); it != j.end(); ++it) {
        if (std::find(kKnownFields.begin(), kKnownFields.end(), it.key()) == kKnownFields.end()) {
            field_error(it.key(), "unknown field");
        }
    }
    PredictionRecord r;
    r.qid = string_field(j, "qid");
    r.response_text = string_field(j, "response_text");
    if (j.contains("dataset")) {
        r.dataset = string_field(j, "dataset");
    }
    if (j.contains("question")) {
        r.question = string_field(j, "question");
    }

    const auto& golds = required(j, "gold_answers");
    if (!golds.is_array() || golds.empty()) {
        field_error("gold_answers", "expected non-empty array");
    }
    for (const auto& g : golds) {
        if (!g.is_string()) {
            field_error("gold_answers", "expected strings");
        }
        r.gold_answers.push_back(g.get<std::string>());
    }

    if (const auto it = j.find("extracted_answer"); it != j.end() && !it->is_null()) {
        if (!it->is_string()) {
            field_error("extracted_answer", "expected string or null");
        }
        r.extracted_answer = it->get<std::string>();
    }
    r.verbal_confidence = optional_number(j, "verbal_confidence");
    if (r.verbal_confidence && (*r.verbal_confidence < 0.0 || *r.verbal_confidence > 1.0)) {
        field_error("verbal_confidence", "outside [0,1]");
    }
    r.p_affirmative = optional_number(j, "p_affirmative");
    if (r.p_affirmative && (*r.p_affirmative < 0.0 || *r.p_affirmative > 1.0)) {
        field_error("p_affirmative", "outside [0,1]");
    }

    if (const auto it = j.find("emissions"); it != j.end()) {
        if (!it->is_array()) {
            field_error("emissions", "expected array");
        }
        for (const auto& e : *it) {
            EmissionEvent ev;
            const auto& pos = required(e, "char_position");
            if (!pos.is_number_unsigned()) {
                field_error("emissions.char_position", "expected non-negative integer");
            }
            ev.char_position = pos.get<std::size_t>();
            if (ev.char_position >= r.response_text.size()) {
                field_error("emissions.char_position", "outside response_text");
            }
            if (const auto ti = e.find("token_index"); ti != e.end() && !ti->is_null()) {
                if (!ti->is_number_unsigned()) {
                    field_error("emissions.token_index", "expected non-negative integer");
                }
                ev.token_index = ti->get<std::size_t>();
            }
            if (!r.emissions.empty() && r.emissions.back().char_position > ev.char_position) {
                field_error("emissions", "not sorted by position");
            }
            r.emissions.push_back(ev);
        }
    }

    if (const auto it = j.find("response_token_count"); it != j.end()) {
        if (!it->is_number_unsigned()) {
            field_error("response_token_count", "expected non-negative integer");
        }
        r.response_token_count = it->get<std::size_t>();
    }
    if (const auto it = j.find("token_probs"); it != j.end() && !it->is_null()) {
        if (!it->is_array()) {
            field_error("token_probs", "expected array");
        }
        std::vector<double> probs;
        for (const auto& p : *it) {
            if (!p.is_number() || !(p.get<double>() > 0.0 && p.get<double>() <= 1.0)) {
                field_error("token_probs", "values must lie in (0,1]");
            }
            probs.push_back(p.get<double>());
        }
        r.token_probs = std::move(probs);
    }
    if (const auto it = j.find("match"); it != j.end() && !it->is_null()) {
        r.match = match_from_json(*it);
    }
    if (const auto it = j.find("confidence_clamped"); it != j.end()) {
        r.confidence_clamped = it->get<bool>();
    }
    return r;
}

json to_json(const PredictionRecord& r) {
    json emissions = json::array();
    for (const auto& e : r.emissions) {
        json ev{{"char_position", e.char_position}};
        ev["token_index"] = e.token_index ? json(*e.token_index) : json(nullptr);
        emissions.push_back(std::move(ev));
    }
    json j{{"qid", r.qid},
           {"dataset", r.dataset},
           {"question", r.question},
           {"gold_answers", r.gold_answers},
           {"response_text", r.response_text},
           {"emissions", std::move(emissions)},
           {"response_token_count", r.response_token_count}};
    j["extracted_answer"] = r.extracted_answer ? json(*r.extracted_answer) : json(nullptr);
    j["verbal_confidence"] = r.verbal_confidence ? json(*r.verbal_confidence) : json(nullptr);
    j["token_probs"] = r.token_probs ? json(*r.token_probs) : json(nullptr);
    if (r.p_affirmative) {
        j["p_affirmative"] = *r.p_affirmative;
    }
    if (r.match) {
        j["match"] = to_json(*r.match);
    }
    if (r.confidence_clamped) {
        j["confidence_clamped"] = true;
    }
    return j;
}

LoadResult<PredictionRecord> load_predictions(const std::filesystem::path& path) {
    return load_jsonl<PredictionRecord>(path, [](const json& j) { return record_from_json(j); });
}

void save_predictions(const std::filesystem::path& path, const std::vector<PredictionRecord>& records) {
    std::vector<json> lines;
    lines.reserve(records.size());
    for (const auto& r : records) {
        lines.push_back(to_json(r));
    }
    write_jsonl(path, lines);
}

}  // namespace uncal
