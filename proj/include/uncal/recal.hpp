#pragma once

// Post-hoc recalibration: global temperature scaling, adaptive (per-example)
// temperature scaling, and P(True) confidence replacement.

#include <array>
#include <cstddef>
#include <span>
#include <vector>

#include "uncal/calib.hpp"
#include "uncal/json_io.hpp"
#include "uncal/records.hpp"

namespace uncal::recal {

/// Confidences are clamped to [kClamp, 1 - kClamp] before the logit.
inline constexpr double kClamp = 1e-4;
inline constexpr double kTemperatureFloor = 0.05;
inline constexpr double kLogTemperatureBound = 5.0;

double clamp_confidence(double c) noexcept;
double confidence_logit(double c) noexcept;

/// Adaptive-temperature features, in order.
inline constexpr std::size_t kAtsFeatures = 4;
using AtsFeatureRow = std::array<double, kAtsFeatures>;  // logit, response len, answer len, depth

struct Example {
    double confidence = 0.0;
    bool correct = false;
    AtsFeatureRow features{};
};

/// Nonempty lines before the last `Answer:` line (all nonempty lines if none).
std::size_t reasoning_depth(std::string_view response_text);

/// Builds the fit example for a record; std::nullopt when it has no confidence.
std::optional<Example> make_example(const PredictionRecord& record, double f1_threshold);
std::vector<Example> make_examples(std::span<const PredictionRecord> records, double f1_threshold);

struct TsModel {
    double temperature = 1.0;
};

/// sigma(logit(c) / T).
double apply_ts(const TsModel& model, double confidence);

/// Mean Bernoulli NLL of the temperature-scaled confidences.
double ts_nll(std::span<const Example> examples, double temperature);

/// Golden-section search on ln T in [-5, 5] (tolerance 1e-6). DegenerateFit
/// with fewer than two examples, a single outcome class, or every confidence
/// sitting on the clamp boundary.
TsModel fit_global_ts(std::span<const Example> examples);

struct AtsOptions {
    double l2 = 0.0;
    double step = 0.1;
    std::size_t iterations = 2000;
};

struct AtsModel {
    std::array<double, kAtsFeatures> weights{};
    double bias = 0.0;
    double l2 = 0.0;
    std::array<double, kAtsFeatures> feature_mean{};
    std::array<double, kAtsFeatures> feature_scale{};  ///< 0 marks a constant feature

    [[nodiscard]] double temperature(const AtsFeatureRow& raw) const;
};

/// T_i = softplus(w . standardize(f_i) + b) + 0.05 fitted by full-batch
/// gradient descent on mean NLL + l2 ||w||^2.
AtsModel fit_ats(std::span<const Example> examples, const AtsOptions& options = {});

double apply_ats(const AtsModel& model, const Example& example);

/// Mean NLL (no penalty) of the ATS-recalibrated confidences.
double ats_nll(const AtsModel& model, std::span<const Example> examples);

/// Replaces the record's verbal confidence with the affirmative-token
/// probability and returns it.
double ptrue_combine(PredictionRecord& record, double p_affirmative);

/// Share of confidence-bearing records that are wrong with confidence above `threshold`.
double overconfident_wrong_rate(std::span<const calib::ScoredRecord> records, double threshold = 0.5);

json to_json(const TsModel& model);
json to_json(const AtsModel& model);
TsModel ts_from_json(const json& j);
AtsModel ats_from_json(const json& j);

}  // namespace uncal::recal
