#include "uncal/rewards.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <iterator>
#include <map>
#include <regex>
#include <sstream>

#include "uncal/error.hpp"

namespace uncal::rewards {

namespace {

std::string_view trim(std::string_view s) {
    const auto first = s.find_first_not_of(" \t\r\n");
    if (first == std::string_view::npos) {
        return {};
    }
    const auto last = s.find_last_not_of(" \t\r\n");
    return s.substr(first, last - first + 1);
}

std::string lower(std::string_view s) {
    std::string out(s);
    std::transform(out.begin(), out.end(), out.begin(),
                   [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    return out;
}

std::vector<std::string_view> split_lines(std::string_view text) {
    std::vector<std::string_view> lines;
    std::size_t start = 0;
    while (start <= text.size()) {
        const auto end = text.find('\n', start);
        if (end == std::string_view::npos) {
            lines.push_back(text.substr(start));
            break;
        }
        lines.push_back(text.substr(start, end - start));
        start = end + 1;
    }
    return lines;
}

// Payload of the last line starting with `prefix` (lowercase, ends in ':').
std::optional<std::string_view> last_prefixed_line(std::string_view text, std::string_view prefix) {
    std::optional<std::string_view> found;
    for (auto line : split_lines(text)) {
        const auto t = trim(line);
        if (t.size() >= prefix.size() && lower(t.substr(0, prefix.size())) == prefix) {
            found = trim(t.substr(prefix.size()));
        }
    }
    return found;
}

std::vector<std::string> tokens(std::string_view normalized) {
    std::vector<std::string> out;
    std::istringstream in{std::string(normalized)};
    std::string tok;
    while (in >> tok) {
        out.push_back(tok);
    }
    return out;
}

std::optional<std::string> yes_no(std::string_view text) {
    const auto n = normalize_answer(text);
    if (n == "yes" || n == "true" || n == "correct") {
        return "yes";
    }
    if (n == "no" || n == "false" || n == "incorrect") {
        return "no";
    }
    return std::nullopt;
}

std::optional<int> month_number(const std::string& name) {
    static const std::map<std::string, int> months{
        {"january", 1}, {"february", 2}, {"march", 3},     {"april", 4},    {"may", 5},       {"june", 6},
        {"july", 7},    {"august", 8},   {"september", 9}, {"october", 10}, {"november", 11}, {"december", 12},
        {"jan", 1},     {"feb", 2},      {"mar", 3},       {"apr", 4},      {"jun", 6},       {"jul", 7},
        {"aug", 8},     {"sep", 9},      {"sept", 9},      {"oct", 10},     {"nov", 11},      {"dec", 12},
    };
    const auto it = months.find(name);
    return it == months.end() ? std::nullopt : std::optional<int>(it->second);
}

std::optional<PartialDate> make_date(int year, std::optional<int> month, std::optional<int> day) {
    if (month && (*month < 1 || *month > 12)) {
        return std::nullopt;
    }
    if (day && (*day < 1 || *day > 31)) {
        return std::nullopt;
    }
    return PartialDate{year, month, day};
}

bool dates_agree(const PartialDate& x, const PartialDate& y) {
    if (x.year != y.year) {
        return false;
    }
    if (x.month && y.month && *x.month != *y.month) {
        return false;
    }
    if (x.day && y.day && *x.day != *y.day) {
        return false;
    }
    return true;
}

}  // namespace

std::optional<std::string> extract_answer_line(std::string_view response_text) {
    const auto payload = last_prefixed_line(response_text, "answer:");
    return payload ? std::optional<std::string>(std::string(*payload)) : std::nullopt;
}

std::optional<ParsedConfidence> extract_confidence(std::string_view response_text) {
    const auto payload = last_prefixed_line(response_text, "confidence:");
    if (!payload || payload->empty()) {
        return std::nullopt;
    }
    double value = 0.0;
    const auto* begin = payload->data();
    const auto* end = payload->data() + payload->size();
    const auto [ptr, ec] = std::from_chars(begin, end, value);
    if (ec != std::errc() || !std::isfinite(value)) {
        return std::nullopt;
    }
    const auto rest = trim(std::string_view(ptr, static_cast<std::size_t>(end - ptr)));
    if (rest == "%") {
        value /= 100.0;
    } else if (!rest.empty()) {
        return std::nullopt;
    }
    ParsedConfidence parsed{std::clamp(value, 0.0, 1.0), value < 0.0 || value > 1.0};
    return parsed;
}

std::string normalize_answer(std::string_view text) {
    std::string stripped;
    stripped.reserve(text.size());
    for (unsigned char c : text) {
        if (std::ispunct(c)) {
            continue;
        }
        stripped.push_back(std::isspace(c) ? ' ' : static_cast<char>(std::tolower(c)));
    }
    auto toks = tokens(stripped);
    if (!toks.empty() && (toks.front() == "a" || toks.front() == "an" || toks.front() == "the")) {
        toks.erase(toks.begin());
    }
    std::string out;
    for (const auto& t : toks) {
        if (!out.empty()) {
            out.push_back(' ');
        }
        out += t;
    }
    return out;
}

double token_f1(std::string_view pred, std::string_view gold) {
    auto p = tokens(normalize_answer(pred));
    auto g = tokens(normalize_answer(gold));
    if (p.empty() && g.empty()) {
        return 1.0;
    }
    if (p.empty() || g.empty()) {
        return 0.0;
    }
    std::sort(p.begin(), p.end());
    std::sort(g.begin(), g.end());
    std::vector<std::string> common;
    std::set_intersection(p.begin(), p.end(), g.begin(), g.end(), std::back_inserter(common));
    if (common.empty()) {
        return 0.0;
    }
    const double precision = static_cast<double>(common.size()) / static_cast<double>(p.size());
    const double recall = static_cast<double>(common.size()) / static_cast<double>(g.size());
    return 2.0 * precision * recall / (precision + recall);
}

std::optional<PartialDate> parse_date(std::string_view text) {
    std::string s = lower(trim(text));
    while (!s.empty() && (s.back() == '.' || s.back() == ',')) {
        s.pop_back();
    }
    static const std::regex iso(R"(^(\d{4})(?:-(\d{1,2})(?:-(\d{1,2}))?)?$)");
    static const std::regex month_year(R"(^([a-z]+)\.?\s+(\d{4})$)");
    static const std::regex month_day_year(R"(^([a-z]+)\.?\s+(\d{1,2})(?:st|nd|rd|th)?,?\s+(\d{4})$)");
    static const std::regex day_month_year(R"(^(\d{1,2})(?:st|nd|rd|th)?\s+([a-z]+)\.?,?\s+(\d{4})$)");
    std::smatch m;
    if (std::regex_match(s, m, iso)) {
        std::optional<int> month;
        std::optional<int> day;
        if (m[2].matched) {
            month = std::stoi(m[2].str());
        }
        if (m[3].matched) {
            day = std::stoi(m[3].str());
        }
        return make_date(std::stoi(m[1].str()), month, day);
    }
    if (std::regex_match(s, m, month_year)) {
        if (const auto month = month_number(m[1].str())) {
            return make_date(std::stoi(m[2].str()), month, std::nullopt);
        }
        return std::nullopt;
    }
    if (std::regex_match(s, m, month_day_year)) {
        if (const auto month = month_number(m[1].str())) {
            return make_date(std::stoi(m[3].str()), month, std::stoi(m[2].str()));
        }
        return std::nullopt;
    }
    if (std::regex_match(s, m, day_month_year)) {
        if (const auto month = month_number(m[2].str())) {
            return make_date(std::stoi(m[3].str()), month, std::stoi(m[1].str()));
        }
    }
    return std::nullopt;
}

MatchResult match_answer(std::string_view pred, std::span<const std::string> golds, double f1_threshold) {
    if (golds.empty()) {
        throw Error(ErrorKind::InvalidArgument, "match_answer needs at least one gold answer");
    }
    if (!(f1_threshold >= 0.0 && f1_threshold <= 1.0)) {
        throw Error(ErrorKind::InvalidArgument, "f1_threshold outside [0,1]");
    }
    const auto norm_pred = normalize_answer(pred);
    for (const auto& g : golds) {
        if (norm_pred == normalize_answer(g)) {
            return {true, MatchRule::ExactMatch, 1.0};
        }
    }
    if (const auto yn = yes_no(pred)) {
        for (const auto& g : golds) {
            if (yes_no(g) == yn) {
                return {true, MatchRule::YesNo, 1.0};
            }
        }
    }
    if (const auto date = parse_date(pred)) {
        for (const auto& g : golds) {
            const auto gd = parse_date(g);
            if (gd && dates_agree(*date, *gd)) {
                return {true, MatchRule::Date, 1.0};
            }
        }
    }
    double best = 0.0;
    for (const auto& g : golds) {
        best = std::max(best, token_f1(pred, g));
    }
    return {best >= f1_threshold, MatchRule::TokenF1, best};
}

std::optional<std::string> resolve_answer(const PredictionRecord& record) {
    if (record.extracted_answer) {
        return record.extracted_answer;
    }
    return extract_answer_line(record.response_text);
}

MatchResult match_record(const PredictionRecord& record, double f1_threshold) {
    const auto answer = resolve_answer(record);
    if (!answer) {
        return {false, MatchRule::TokenF1, 0.0};
    }
    return match_answer(*answer, record.gold_answers, f1_threshold);
}

double verbal_reward(const PredictionRecord& record, const MatchResult& match) {
    if (!record.verbal_confidence) {
        throw Error(ErrorKind::MissingSignal, "record '" + record.qid + "' has no verbal confidence");
    }
    return match.correct ? *record.verbal_confidence : -*record.verbal_confidence;
}

double emission_reward(bool correct, std::size_t emission_count, double penalty_per_extra) {
    const bool emitted = emission_count > 0;
    double base = 0.0;
    if (correct) {
        base = emitted ? 3.5 : 5.0;
    } else {
        base = emitted ? 0.0 : -2.0;
    }
    const auto extra = emission_count > 2 ? emission_count - 2 : 0;
    return base - penalty_per_extra * static_cast<double>(extra);
}

double emission_reward(const PredictionRecord& record, const MatchResult& match, double penalty_per_extra) {
    return emission_reward(match.correct, record.emissions.size(), penalty_per_extra);
}

std::vector<EmissionEvent> scan_emissions(std::string_view response_text) {
    std::vector<EmissionEvent> events;
    std::size_t pos = response_text.find(kUncertainMarker);
    while (pos != std::string_view::npos) {
        events.push_back({pos, std::nullopt});
        pos = response_text.find(kUncertainMarker, pos + kUncertainMarker.size());
    }
    return events;
}

std::optional<double> first_emit_fraction(const PredictionRecord& record) {
    if (record.emissions.empty() || record.response_text.empty()) {
        return std::nullopt;
    }
    return static_cast<double>(record.emissions.front().char_position) /
           static_cast<double>(record.response_text.size());
}

PredictionRecord annotate(PredictionRecord record, double f1_threshold) {
    if (!record.extracted_answer) {
        record.extracted_answer = extract_answer_line(record.response_text);
    }
    if (!record.verbal_confidence) {
        if (const auto parsed = extract_confidence(record.response_text)) {
            record.verbal_confidence = parsed->value;
            record.confidence_clamped = parsed->clamped;
        }
    }
    if (record.emissions.empty()) {
        record.emissions = scan_emissions(record.response_text);
    }
    record.match = match_record(record, f1_threshold);
    return record;
}

}  // namespace uncal::rewards
