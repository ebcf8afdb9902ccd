#include "uncal/recal.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "uncal/error.hpp"
#include "uncal/logistic.hpp"
#include "uncal/rewards.hpp"

namespace uncal::recal {

using logistic::sigmoid;
using logistic::softplus;

namespace {

std::size_t whitespace_tokens(std::string_view text) {
    std::istringstream in{std::string(text)};
    std::string tok;
    std::size_t n = 0;
    while (in >> tok) {
        ++n;
    }
    return n;
}

double bernoulli_nll(double logit, bool correct) { return correct ? softplus(-logit) : softplus(logit); }

void check_fit_inputs(std::span<const Example> examples) {
    if (examples.size() < 2) {
        throw Error(ErrorKind::DegenerateFit, "temperature fit needs at least two examples");
    }
    bool any_correct = false;
    bool any_wrong = false;
    bool any_interior = false;
    for (const auto& e : examples) {
        any_correct = any_correct || e.correct;
        any_wrong = any_wrong || !e.correct;
        const double c = clamp_confidence(e.confidence);
        any_interior = any_interior || (c > kClamp && c < 1.0 - kClamp);
    }
    if (!any_correct || !any_wrong) {
        throw Error(ErrorKind::DegenerateFit, "temperature fit needs both outcome classes");
    }
    if (!any_interior) {
        throw Error(ErrorKind::DegenerateFit, "every confidence sits on the clamp boundary");
    }
}

double inverse_softplus(double y) { return std::log(std::expm1(y)); }

}  // namespace

double clamp_confidence(double c) noexcept { return std::clamp(c, kClamp, 1.0 - kClamp); }

double confidence_logit(double c) noexcept {
    const double x = clamp_confidence(c);
    return std::log(x / (1.0 - x));
}

std::size_t reasoning_depth(std::string_view response_text) {
    std::vector<std::string_view> lines;
    std::size_t start = 0;
    while (start <= response_text.size()) {
        auto end = response_text.find('\n', start);
        if (end == std::string_view::npos) {
            end = response_text.size();
        }
        lines.push_back(response_text.substr(start, end - start));
        start = end + 1;
    }
    std::size_t answer_line = lines.size();
    for (std::size_t i = 0; i < lines.size(); ++i) {
        const auto first = lines[i].find_first_not_of(" \t\r");
        if (first == std::string_view::npos) {
            continue;
        }
        std::string head(lines[i].substr(first, 7));
        std::transform(head.begin(), head.end(), head.begin(),
                       [](unsigned char ch) { return static_cast<char>(std::tolower(ch)); });
        if (head == "answer:") {
            answer_line = i;
        }
    }
    std::size_t depth = 0;
    for (std::size_t i = 0; i < answer_line; ++i) {
        depth += lines[i].find_first_not_of(" \t\r") != std::string_view::npos ? 1 : 0;
    }
    return depth;
}

std::optional<Example> make_example(const PredictionRecord& record, double f1_threshold) {
    const auto annotated = rewards::annotate(record, f1_threshold);
    if (!annotated.verbal_confidence) {
        return std::nullopt;
    }
    Example e;
    e.confidence = *annotated.verbal_confidence;
    e.correct = annotated.match->correct;
    const auto answer = rewards::resolve_answer(annotated);
    const double response_len = annotated.response_token_count > 0
                                    ? static_cast<double>(annotated.response_token_count)
                                    : static_cast<double>(whitespace_tokens(annotated.response_text));
    e.features = {confidence_logit(e.confidence), response_len,
                  answer ? static_cast<double>(whitespace_tokens(*answer)) : 0.0,
                  static_cast<double>(reasoning_depth(annotated.response_text))};
    return e;
}

std::vector<Example> make_examples(std::span<const PredictionRecord> records, double f1_threshold) {
    std::vector<Example> out;
    for (const auto& r : records) {
        if (auto e = make_example(r, f1_threshold)) {
            out.push_back(*e);
        }
    }
    return out;
}

double apply_ts(const TsModel& model, double confidence) {
    return sigmoid(confidence_logit(confidence) / model.temperature);
}

double ts_nll(std::span<const Example> examples, double temperature) {
    double sum = 0.0;
    for (const auto& e : examples) {
        sum += bernoulli_nll(confidence_logit(e.confidence) / temperature, e.correct);
    }
    return sum / static_cast<double>(examples.size());
}

TsModel fit_global_ts(std::span<const Example> examples) {
    check_fit_inputs(examples);
    const double inv_phi = (std::sqrt(5.0) - 1.0) / 2.0;
    auto f = [&](double log_t) { return ts_nll(examples, std::exp(log_t)); };
    double lo = -kLogTemperatureBound;
    double hi = kLogTemperatureBound;
    double x1 = hi - inv_phi * (hi - lo);
    double x2 = lo + inv_phi * (hi - lo);
    double f1 = f(x1);
    double f2 = f(x2);
    while (hi - lo > 1e-6) {
        if (f1 <= f2) {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - inv_phi * (hi - lo);
            f1 = f(x1);
        } else {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + inv_phi * (hi - lo);
            f2 = f(x2);
        }
    }
    double best = 0.5 * (lo + hi);
    // T = 1 is always a candidate, so the fit never does worse than the raw confidences.
    if (f(0.0) < f(best)) {
        best = 0.0;
    }
    return {std::exp(best)};
}

double AtsModel::temperature(const AtsFeatureRow& raw) const {
    double s = bias;
    for (std::size_t k = 0; k < kAtsFeatures; ++k) {
        const double z = feature_scale[k] > 0.0 ? (raw[k] - feature_mean[k]) / feature_scale[k] : 0.0;
        s += weights[k] * z;
    }
    return softplus(s) + kTemperatureFloor;
}

double apply_ats(const AtsModel& model, const Example& example) {
    return sigmoid(confidence_logit(example.confidence) / model.temperature(example.features));
}

double ats_nll(const AtsModel& model, std::span<const Example> examples) {
    double sum = 0.0;
    for (const auto& e : examples) {
        sum += bernoulli_nll(confidence_logit(e.confidence) / model.temperature(e.features), e.correct);
    }
    return sum / static_cast<double>(examples.size());
}

AtsModel fit_ats(std::span<const Example> examples, const AtsOptions& options) {
    check_fit_inputs(examples);
    if (!(options.l2 >= 0.0)) {
        throw Error(ErrorKind::InvalidArgument, "l2 must be non-negative");
    }
    const double n = static_cast<double>(examples.size());

    AtsModel model;
    model.l2 = options.l2;
    for (std::size_t k = 0; k < kAtsFeatures; ++k) {
        double sum = 0.0;
        for (const auto& e : examples) {
            sum += e.features[k];
        }
        const double mean = sum / n;
        double ss = 0.0;
        for (const auto& e : examples) {
            ss += (e.features[k] - mean) * (e.features[k] - mean);
        }
        const double sd = std::sqrt(ss / n);
        model.feature_mean[k] = mean;
        model.feature_scale[k] = sd > 1e-12 ? sd : 0.0;
    }
    std::vector<AtsFeatureRow> z(examples.size());
    std::vector<double> logits(examples.size());
    for (std::size_t i = 0; i < examples.size(); ++i) {
        for (std::size_t k = 0; k < kAtsFeatures; ++k) {
            z[i][k] = model.feature_scale[k] > 0.0
                          ? (examples[i].features[k] - model.feature_mean[k]) / model.feature_scale[k]
                          : 0.0;
        }
        logits[i] = confidence_logit(examples[i].confidence);
    }

    model.bias = inverse_softplus(1.0 - kTemperatureFloor);

    for (std::size_t it = 0; it < options.iterations; ++it) {
        std::array<double, kAtsFeatures> grad_w{};
        double grad_b = 0.0;
        for (std::size_t i = 0; i < examples.size(); ++i) {
            double s = model.bias;
            for (std::size_t k = 0; k < kAtsFeatures; ++k) {
                s += model.weights[k] * z[i][k];
            }
            const double t = softplus(s) + kTemperatureFloor;
            const double residual = sigmoid(logits[i] / t) - (examples[i].correct ? 1.0 : 0.0);
            // d loss / d s through z = logit / T and T = softplus(s) + floor.
            const double g = residual * (-logits[i] / (t * t)) * sigmoid(s);
            for (std::size_t k = 0; k < kAtsFeatures; ++k) {
                grad_w[k] += g * z[i][k];
            }
            grad_b += g;
        }
        for (std::size_t k = 0; k < kAtsFeatures; ++k) {
            model.weights[k] -= options.step * (grad_w[k] / n + 2.0 * options.l2 * model.weights[k]);
        }
        model.bias -= options.step * grad_b / n;
    }
    return model;
}

double ptrue_combine(PredictionRecord& record, double p_affirmative) {
    if (!(p_affirmative >= 0.0 && p_affirmative <= 1.0)) {
        throw Error(ErrorKind::InvalidArgument, "p_affirmative outside [0,1]");
    }
    record.verbal_confidence = p_affirmative;
    record.confidence_clamped = false;
    return p_affirmative;
}

double overconfident_wrong_rate(std::span<const calib::ScoredRecord> records, double threshold) {
    std::size_t with_conf = 0;
    std::size_t hits = 0;
    for (const auto& r : records) {
        if (!r.confidence) {
            continue;
        }
        ++with_conf;
        hits += (!r.correct && *r.confidence > threshold) ? 1 : 0;
    }
    if (with_conf == 0) {
        throw Error(ErrorKind::EmptyBatch, "no records with a confidence");
    }
    return static_cast<double>(hits) / static_cast<double>(with_conf);
}

json to_json(const TsModel& model) {
    return {{"kind", "ts"}, {"temperature", model.temperature}, {"logit_clamp", kClamp}};
}

json to_json(const AtsModel& model) {
    return {{"kind", "ats"},
            {"weights", model.weights},
            {"bias", model.bias},
            {"l2", model.l2},
            {"feature_mean", model.feature_mean},
            {"feature_scale", model.feature_scale},
            {"features", {"confidence_logit", "response_length", "answer_length", "reasoning_depth"}},
            {"temperature_floor", kTemperatureFloor},
            {"logit_clamp", kClamp}};
}

TsModel ts_from_json(const json& j) {
    if (j.at("kind") != "ts") {
        throw Error(ErrorKind::ParseError, "not a ts model");
    }
    TsModel m{j.at("temperature").get<double>()};
    if (!(m.temperature > 0.0)) {
        throw Error(ErrorKind::ParseError, "temperature must be positive");
    }
    return m;
}

AtsModel ats_from_json(const json& j) {
    if (j.at("kind") != "ats") {
        throw Error(ErrorKind::ParseError, "not an ats model");
    }
    AtsModel m;
    m.weights = j.at("weights").get<std::array<double, kAtsFeatures>>();
    m.bias = j.at("bias").get<double>();
    m.l2 = j.at("l2").get<double>();
    m.feature_mean = j.at("feature_mean").get<std::array<double, kAtsFeatures>>();
    m.feature_scale = j.at("feature_scale").get<std::array<double, kAtsFeatures>>();
    return m;
}

}  // namespace uncal::recal
