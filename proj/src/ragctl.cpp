#include "uncal/ragctl.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <map>
#include <sstream>

#include "uncal/error.hpp"
#include "uncal/metrics.hpp"
#include "uncal/recal.hpp"
#include "uncal/rewards.hpp"

namespace uncal::ragctl {

namespace {

constexpr std::array<std::string_view, 7> kHedgingLexicon{
    "not sure", "i think", "perhaps", "probably", "i believe", "couldn't find", "don't have",
};

std::optional<double> ratio(std::size_t num, std::size_t den) {
    return den == 0 ? std::nullopt
                    : std::optional<double>(static_cast<double>(num) / static_cast<double>(den));
}

json optional_json(const std::optional<double>& v) { return v ? json(*v) : json(nullptr); }

std::optional<double> optional_unit(const json& j, const char* field) {
    const auto it = j.find(field);
    if (it == j.end() || it->is_null()) {
        return std::nullopt;
    }
    const double v = it->get<double>();
    if (!(v >= 0.0 && v <= 1.0)) {
        throw Error(ErrorKind::ParseError, std::string("field '") + field + "' outside [0,1]");
    }
    return v;
}

double parse_number(std::string_view text, std::string_view spec) {
    try {
        std::size_t used = 0;
        const double v = std::stod(std::string(text), &used);
        if (used != text.size()) {
            throw std::invalid_argument("trailing characters");
        }
        return v;
    } catch (const std::exception&) {
        throw Error(ErrorKind::InvalidArgument, "bad number in policy '" + std::string(spec) + "'");
    }
}

std::size_t whitespace_tokens(std::string_view text) {
    std::istringstream in{std::string(text)};
    std::string tok;
    std::size_t n = 0;
    while (in >> tok) {
        ++n;
    }
    return n;
}

}  // namespace

RagTraceRecord trace_from_json(const json& j) {
    RagTraceRecord r;
    r.qid = j.at("qid").get<std::string>();
    r.dataset = j.value("dataset", std::string());
    r.gold_answers = j.at("gold_answers").get<std::vector<std::string>>();
    if (r.gold_answers.empty()) {
        throw Error(ErrorKind::ParseError, "gold_answers is empty");
    }
    r.noret_answer = j.at("noret_answer").get<std::string>();
    r.ret_answer = j.at("ret_answer").get<std::string>();
    r.noret_confidence = optional_unit(j, "noret_confidence");
    r.noret_emissions = j.value("noret_emissions", std::size_t{0});
    r.noret_probe_score = optional_unit(j, "noret_probe_score");
    if (const auto it = j.find("noret_token_probs"); it != j.end() && !it->is_null()) {
        r.noret_token_probs = it->get<std::vector<double>>();
        for (double p : *r.noret_token_probs) {
            if (!(p > 0.0 && p <= 1.0)) {
                throw Error(ErrorKind::ParseError, "noret_token_probs values must lie in (0,1]");
            }
        }
    }
    if (const auto it = j.find("noret_response"); it != j.end() && !it->is_null()) {
        r.noret_response = it->get<std::string>();
    }
    if (const auto it = j.find("external_trigger"); it != j.end() && !it->is_null()) {
        r.external_trigger = it->get<bool>();
    }
    return r;
}

json to_json(const RagTraceRecord& r) {
    json j{{"qid", r.qid},
           {"dataset", r.dataset},
           {"gold_answers", r.gold_answers},
           {"noret_answer", r.noret_answer},
           {"noret_emissions", r.noret_emissions},
           {"ret_answer", r.ret_answer}};
    j["noret_confidence"] = optional_json(r.noret_confidence);
    j["noret_probe_score"] = optional_json(r.noret_probe_score);
    j["noret_token_probs"] = r.noret_token_probs ? json(*r.noret_token_probs) : json(nullptr);
    if (r.noret_response) {
        j["noret_response"] = *r.noret_response;
    }
    if (r.external_trigger) {
        j["external_trigger"] = *r.external_trigger;
    }
    return j;
}

LoadResult<RagTraceRecord> load_traces(const std::filesystem::path& path) {
    return load_jsonl<RagTraceRecord>(path, [](const json& j) { return trace_from_json(j); });
}

std::size_t count_hedging_cues(std::string_view text) {
    std::string lower(text);
    std::transform(lower.begin(), lower.end(), lower.begin(),
                   [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    std::size_t hits = 0;
    for (const auto cue : kHedgingLexicon) {
        for (auto pos = lower.find(cue); pos != std::string::npos; pos = lower.find(cue, pos + cue.size())) {
            ++hits;
        }
    }
    return hits;
}

std::vector<double> surface_features(const RagTraceRecord& record) {
    if (!record.noret_response) {
        throw Error(ErrorKind::MissingSignal, "record '" + record.qid + "' has no noret_response");
    }
    const auto& text = *record.noret_response;
    return {static_cast<double>(whitespace_tokens(text)), static_cast<double>(recal::reasoning_depth(text)),
            static_cast<double>(count_hedging_cues(text)), record.noret_emissions > 0 ? 1.0 : 0.0};
}

void ControllerPolicy::validate() const {
    auto unit = [](double v) { return v >= 0.0 && v <= 1.0; };
    switch (kind) {
        case PolicyKind::ConfidenceThreshold:
            if (!unit(tau)) {
                throw Error(ErrorKind::InvalidArgument, "tau outside [0,1]");
            }
            break;
        case PolicyKind::EmissionPlusProbe:
            if (!unit(theta)) {
                throw Error(ErrorKind::InvalidArgument, "theta outside [0,1]");
            }
            break;
        case PolicyKind::TokenProbWindow:
            if (!unit(tau_p) || window < 1) {
                throw Error(ErrorKind::InvalidArgument, "tau_p outside [0,1] or window < 1");
            }
            break;
        case PolicyKind::FeatureClassifier:
            if (!classifier) {
                throw Error(ErrorKind::InvalidArgument, "classifier policy without a model");
            }
            break;
        default:
            break;
    }
}

ControllerPolicy ControllerPolicy::parse(std::string_view spec) {
    ControllerPolicy p;
    const auto colon = spec.find(':');
    const auto head = spec.substr(0, colon);
    const auto arg = colon == std::string_view::npos ? std::string_view{} : spec.substr(colon + 1);
    auto need_arg = [&] {
        if (arg.empty()) {
            throw Error(ErrorKind::InvalidArgument, "policy '" + std::string(spec) + "' needs a parameter");
        }
    };
    auto no_arg = [&] {
        if (colon != std::string_view::npos) {
            throw Error(ErrorKind::InvalidArgument, "policy '" + std::string(head) + "' takes no parameter");
        }
    };
    if (head == "always") {
        no_arg();
        p.kind = PolicyKind::Always;
    } else if (head == "never") {
        no_arg();
        p.kind = PolicyKind::Never;
    } else if (head == "external") {
        no_arg();
        p.kind = PolicyKind::External;
    } else if (head == "emit") {
        no_arg();
        p.kind = PolicyKind::EmissionOnly;
    } else if (head == "conf") {
        need_arg();
        p.kind = PolicyKind::ConfidenceThreshold;
        p.tau = parse_number(arg, spec);
    } else if (head == "emit+probe") {
        need_arg();
        p.kind = PolicyKind::EmissionPlusProbe;
        p.theta = parse_number(arg, spec);
    } else if (head == "flare") {
        need_arg();
        p.kind = PolicyKind::TokenProbWindow;
        const auto second = arg.find(':');
        p.tau_p = parse_number(arg.substr(0, second), spec);
        if (second != std::string_view::npos) {
            const double w = parse_number(arg.substr(second + 1), spec);
            if (!(w >= 1.0) || w != std::floor(w)) {
                throw Error(ErrorKind::InvalidArgument, "flare window must be a positive integer");
            }
            p.window = static_cast<std::size_t>(w);
        }
    } else {
        throw Error(ErrorKind::InvalidArgument, "unknown policy '" + std::string(spec) + "'");
    }
    p.validate();
    return p;
}

std::string ControllerPolicy::describe() const {
    char buf[64];
    switch (kind) {
        case PolicyKind::Always: return "always";
        case PolicyKind::Never: return "never";
        case PolicyKind::External: return "external";
        case PolicyKind::EmissionOnly: return "emit";
        case PolicyKind::FeatureClassifier: return "classifier";
        case PolicyKind::ConfidenceThreshold:
            std::snprintf(buf, sizeof buf, "conf:%.17g", tau);
            return buf;
        case PolicyKind::EmissionPlusProbe:
            std::snprintf(buf, sizeof buf, "emit+probe:%.17g", theta);
            return buf;
        case PolicyKind::TokenProbWindow:
            std::snprintf(buf, sizeof buf, "flare:%.17g:%zu", tau_p, window);
            return buf;
    }
    return "unknown";
}

bool decide(const ControllerPolicy& policy, const RagTraceRecord& record) {
    auto missing = [&](const char* what) {
        return Error(ErrorKind::MissingSignal, "record '" + record.qid + "' has no " + what);
    };
    switch (policy.kind) {
        case PolicyKind::Always: return true;
        case PolicyKind::Never: return false;
        case PolicyKind::ConfidenceThreshold:
            if (!record.noret_confidence) {
                throw missing("noret_confidence");
            }
            return *record.noret_confidence < policy.tau;
        case PolicyKind::EmissionOnly: return record.noret_emissions >= 1;
        case PolicyKind::EmissionPlusProbe:
            if (record.noret_emissions == 0) {
                return false;
            }
            if (!record.noret_probe_score) {
                throw missing("noret_probe_score");
            }
            return *record.noret_probe_score >= policy.theta;
        case PolicyKind::TokenProbWindow: {
            if (!record.noret_token_probs) {
                throw missing("noret_token_probs");
            }
            // Any window containing a low-probability token fires, so the
            // window length does not change the decision.
            const auto& probs = *record.noret_token_probs;
            return std::any_of(probs.begin(), probs.end(), [&](double p) { return p < policy.tau_p; });
        }
        case PolicyKind::FeatureClassifier: {
            if (!policy.classifier) {
                throw Error(ErrorKind::InvalidArgument, "classifier policy without a model");
            }
            return policy.classifier->model.predict(surface_features(record)) >= policy.classifier->threshold;
        }
        case PolicyKind::External:
            if (!record.external_trigger) {
                throw missing("external_trigger");
            }
            return *record.external_trigger;
    }
    return false;
}

TriggerReport simulate(const ControllerPolicy& policy, std::span<const RagTraceRecord> records,
                       double f1_threshold) {
    if (records.empty()) {
        throw Error(ErrorKind::EmptyBatch, "no trace records");
    }
    policy.validate();
    TriggerReport r;
    r.n = records.size();
    std::size_t noret_correct = 0;
    std::size_t final_correct = 0;
    std::size_t final_exact = 0;
    std::size_t untouched = 0;
    std::size_t untouched_correct = 0;
    double f1_sum = 0.0;
    for (const auto& rec : records) {
        const bool trigger = decide(policy, rec);
        const auto before = rewards::match_answer(rec.noret_answer, rec.gold_answers, f1_threshold);
        const auto& final_answer = trigger ? rec.ret_answer : rec.noret_answer;
        const auto after = rewards::match_answer(final_answer, rec.gold_answers, f1_threshold);
        double best_f1 = 0.0;
        for (const auto& g : rec.gold_answers) {
            best_f1 = std::max(best_f1, rewards::token_f1(final_answer, g));
        }
        noret_correct += before.correct ? 1 : 0;
        r.noret_wrong += before.correct ? 0 : 1;
        r.triggered += trigger ? 1 : 0;
        r.wrong_within_triggered += (trigger && !before.correct) ? 1 : 0;
        final_correct += after.correct ? 1 : 0;
        final_exact += (after.correct && after.rule != MatchRule::TokenF1) ? 1 : 0;
        f1_sum += best_f1;
        if (!trigger) {
            ++untouched;
            untouched_correct += before.correct ? 1 : 0;
        }
    }
    const double n = static_cast<double>(r.n);
    r.trigger_rate = static_cast<double>(r.triggered) / n;
    r.noret_accuracy = static_cast<double>(noret_correct) / n;
    r.final_accuracy = static_cast<double>(final_correct) / n;
    r.final_em = static_cast<double>(final_exact) / n;
    r.final_f1 = f1_sum / n;
    r.trigger_precision = ratio(r.wrong_within_triggered, r.triggered);
    r.trigger_recall = ratio(r.wrong_within_triggered, r.noret_wrong);
    r.untouched_accuracy = ratio(untouched_correct, untouched);
    r.global_wrong_coverage = ratio(r.wrong_within_triggered, r.noret_wrong);
    return r;
}

std::vector<std::pair<std::string, TriggerReport>> simulate_by_dataset(const ControllerPolicy& policy,
                                                                       std::span<const RagTraceRecord> records,
                                                                       double f1_threshold) {
    std::map<std::string, std::vector<RagTraceRecord>> groups;
    for (const auto& r : records) {
        groups[r.dataset].push_back(r);
    }
    std::vector<std::pair<std::string, TriggerReport>> out;
    for (const auto& [name, group] : groups) {
        out.emplace_back(name, simulate(policy, group, f1_threshold));
    }
    return out;
}

std::vector<int> wrongness_labels(std::span<const RagTraceRecord> records, double f1_threshold) {
    std::vector<int> labels;
    labels.reserve(records.size());
    for (const auto& r : records) {
        labels.push_back(rewards::match_answer(r.noret_answer, r.gold_answers, f1_threshold).correct ? 0 : 1);
    }
    return labels;
}

FeatureClassifier fit_feature_classifier(std::span<const RagTraceRecord> records, std::span<const int> labels,
                                         double l2) {
    Matrix x(records.size(), kSurfaceFeatures);
    for (std::size_t i = 0; i < records.size(); ++i) {
        const auto f = surface_features(records[i]);
        std::copy(f.begin(), f.end(), x.row(i).begin());
    }
    FeatureClassifier c;
    c.model = logistic::fit(x, labels, l2);
    const auto& scale = c.model.standardizer.scale;
    if (std::all_of(scale.begin(), scale.end(), [](double s) { return s == 0.0; })) {
        throw Error(ErrorKind::DegenerateFit, "every surface feature is constant");
    }
    return c;
}

double classifier_auroc(std::span<const RagTraceRecord> records, std::span<const int> labels, double l2) {
    FeatureClassifier c;
    try {
        c = fit_feature_classifier(records, labels, l2);
    } catch (const Error& e) {
        if (e.kind() == ErrorKind::DegenerateFit) {
            throw Error(ErrorKind::UndefinedMetric, e.what());
        }
        throw;
    }
    std::vector<double> scores;
    scores.reserve(records.size());
    for (const auto& r : records) {
        scores.push_back(c.model.predict(surface_features(r)));
    }
    return metrics::auroc(scores, labels);
}

std::vector<TriggerReport> sweep_threshold(const ControllerPolicy& family, std::span<const RagTraceRecord> records,
                                           std::span<const double> grid, double f1_threshold) {
    if (grid.empty()) {
        throw Error(ErrorKind::InvalidArgument, "threshold grid is empty");
    }
    std::vector<TriggerReport> out;
    out.reserve(grid.size());
    for (double v : grid) {
        auto p = family;
        switch (p.kind) {
            case PolicyKind::ConfidenceThreshold: p.tau = v; break;
            case PolicyKind::EmissionPlusProbe: p.theta = v; break;
            case PolicyKind::TokenProbWindow: p.tau_p = v; break;
            case PolicyKind::FeatureClassifier:
                if (p.classifier) {
                    p.classifier->threshold = v;
                }
                break;
            default:
                throw Error(ErrorKind::InvalidArgument, "policy '" + p.describe() + "' has no threshold to sweep");
        }
        out.push_back(simulate(p, records, f1_threshold));
    }
    return out;
}

json to_json(const TriggerReport& r) {
    return {{"n", r.n},
            {"triggered", r.triggered},
            {"noret_wrong", r.noret_wrong},
            {"wrong_within_triggered", r.wrong_within_triggered},
            {"trigger_rate", r.trigger_rate},
            {"noret_accuracy", r.noret_accuracy},
            {"final_accuracy", r.final_accuracy},
            {"final_em", r.final_em},
            {"final_f1", r.final_f1},
            {"trigger_precision", optional_json(r.trigger_precision)},
            {"trigger_recall", optional_json(r.trigger_recall)},
            {"untouched_accuracy", optional_json(r.untouched_accuracy)},
            {"global_wrong_coverage", optional_json(r.global_wrong_coverage)}};
}

std::string dataset_csv(const std::vector<std::pair<std::string, TriggerReport>>& rows) {
    std::string out = "dataset,n,em,f1,t\n";
    char buf[128];
    for (const auto& [name, r] : rows) {
        std::snprintf(buf, sizeof buf, ",%zu,%.17g,%.17g,%.17g\n", r.n, r.final_em, r.final_f1, r.trigger_rate);
        out += name + buf;
    }
    return out;
}

json to_json(const FeatureClassifier& c) {
    auto j = logistic::to_json(c.model);
    j["kind"] = "surface_classifier";
    j["threshold"] = c.threshold;
    return j;
}

FeatureClassifier classifier_from_json(const json& j) {
    FeatureClassifier c;
    c.model = logistic::model_from_json(j);
    c.threshold = j.value("threshold", 0.5);
    if (c.model.weights.size() != kSurfaceFeatures) {
        throw Error(ErrorKind::ParseError, "surface classifier expects 4 weights");
    }
    return c;
}

}  // namespace uncal::ragctl
