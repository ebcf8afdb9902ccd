#pragma once

// Adaptive-retrieval controller simulation over paired no-retrieval /
// with-retrieval trace records.

#include <cstddef>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "uncal/json_io.hpp"
#include "uncal/logistic.hpp"
#include "uncal/records.hpp"

namespace uncal::ragctl {

struct RagTraceRecord {
    std::string qid;
    std::string dataset;
    std::vector<std::string> gold_answers;
    std::string noret_answer;
    std::optional<double> noret_confidence;
    std::size_t noret_emissions = 0;
    std::optional<double> noret_probe_score;
    std::optional<std::vector<double>> noret_token_probs;
    std::string ret_answer;
    /// Full no-retrieval response, needed only by the surface-feature classifier.
    std::optional<std::string> noret_response;
    /// Trigger decision recorded by an external controller.
    std::optional<bool> external_trigger;
};

RagTraceRecord trace_from_json(const json& j);
json to_json(const RagTraceRecord& record);
LoadResult<RagTraceRecord> load_traces(const std::filesystem::path& path);

inline constexpr std::size_t kSurfaceFeatures = 4;

/// response length, reasoning-line count, hedging-cue count, emission flag.
std::vector<double> surface_features(const RagTraceRecord& record);

/// Non-overlapping, case-insensitive hits of the hedging lexicon.
std::size_t count_hedging_cues(std::string_view text);

struct FeatureClassifier {
    logistic::LogisticModel model;
    double threshold = 0.5;
};

enum class PolicyKind {
    Always,
    Never,
    ConfidenceThreshold,
    EmissionOnly,
    EmissionPlusProbe,
    TokenProbWindow,
    FeatureClassifier,
    External,
};

struct ControllerPolicy {
    PolicyKind kind = PolicyKind::Never;
    double tau = 0.0;        ///< ConfidenceThreshold: trigger iff confidence < tau
    double theta = 0.0;      ///< EmissionPlusProbe: trigger iff emitted and probe >= theta
    double tau_p = 0.0;      ///< TokenProbWindow: trigger iff some token prob < tau_p
    std::size_t window = 1;  ///< TokenProbWindow window length (kept for interface fidelity)
    std::optional<FeatureClassifier> classifier;

    /// InvalidArgument when a parameter leaves its range.
    void validate() const;

    /// `always`, `never`, `conf:<tau>`, `emit`, `emit+probe:<theta>`,
    /// `flare:<tau_p>[:<window>]`, `external`. Classifier policies are built in code.
    static ControllerPolicy parse(std::string_view spec);
    [[nodiscard]] std::string describe() const;
};

/// Whether the policy retrieves for this record. MissingSignal when the
/// record lacks what the policy reads.
bool decide(const ControllerPolicy& policy, const RagTraceRecord& record);

struct TriggerReport {
    std::size_t n = 0;
    std::size_t triggered = 0;
    std::size_t noret_wrong = 0;
    std::size_t wrong_within_triggered = 0;  ///< triggered and no-retrieval answer wrong
    double trigger_rate = 0.0;
    double noret_accuracy = 0.0;
    double final_accuracy = 0.0;
    double final_em = 0.0;
    double final_f1 = 0.0;
    std::optional<double> trigger_precision;      ///< P(wrong | trigger)
    std::optional<double> trigger_recall;         ///< P(trigger | wrong)
    std::optional<double> untouched_accuracy;     ///< accuracy over non-triggered records
    std::optional<double> global_wrong_coverage;  ///< triggered wrong / all wrong
};

/// Final answer is ret_answer when triggered, noret_answer otherwise.
/// Wrongness always refers to the no-retrieval answer. EmptyBatch on no records.
TriggerReport simulate(const ControllerPolicy& policy, std::span<const RagTraceRecord> records,
                       double f1_threshold = 0.3);

/// Per-dataset reports, sorted by dataset name.
std::vector<std::pair<std::string, TriggerReport>> simulate_by_dataset(const ControllerPolicy& policy,
                                                                       std::span<const RagTraceRecord> records,
                                                                       double f1_threshold = 0.3);

/// 1 when the no-retrieval answer is wrong.
std::vector<int> wrongness_labels(std::span<const RagTraceRecord> records, double f1_threshold = 0.3);

/// Logistic regression on surface features. DegenerateFit with a single
/// class or when every feature is constant.
FeatureClassifier fit_feature_classifier(std::span<const RagTraceRecord> records, std::span<const int> labels,
                                         double l2 = 1e-2);

/// Training-set AUROC of a freshly fit classifier; a degenerate fit surfaces as UndefinedMetric.
double classifier_auroc(std::span<const RagTraceRecord> records, std::span<const int> labels, double l2 = 1e-2);

/// One report per grid value, in grid order. The family policy's kind picks
/// the swept parameter (tau, theta or tau_p).
std::vector<TriggerReport> sweep_threshold(const ControllerPolicy& family, std::span<const RagTraceRecord> records,
                                           std::span<const double> grid, double f1_threshold = 0.3);

json to_json(const TriggerReport& report);
std::string dataset_csv(const std::vector<std::pair<std::string, TriggerReport>>& rows);

json to_json(const FeatureClassifier& classifier);
FeatureClassifier classifier_from_json(const json& j);

}  // namespace uncal::ragctl
