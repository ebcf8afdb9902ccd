#pragma once

// Linear wrongness probe over hidden states pooled around the first
// `<uncertain>` emission, plus the per-layer sweep used to pick a layer.

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "uncal/json_io.hpp"
#include "uncal/logistic.hpp"
#include "uncal/matrix.hpp"
#include "uncal/records.hpp"

namespace uncal::probe {

inline constexpr std::size_t kDefaultWindow = 4;
inline constexpr double kDefaultL2 = 1e-2;
inline constexpr std::size_t kScalarFeatures = 3;

struct ProbeFeatures {
    std::vector<double> span_mean;
    double response_token_count = 0.0;
    double emission_count = 0.0;
    double first_emit_fraction = 0.0;

    /// span_mean followed by the three scalars.
    [[nodiscard]] std::vector<double> flatten() const;
};

/// Mean of token_hidden rows in [first - window, first + span_tokens + window)
/// clipped to the sequence, where `first` is the token index of the first
/// emission. NotEmitted without emissions; AlignmentError when the first
/// emission has no token index or it lies outside the sequence.
ProbeFeatures build_features(const Matrix& token_hidden, const PredictionRecord& record, std::size_t window,
                             std::size_t span_tokens = 1);

/// Features from an already pooled per-example hidden row.
ProbeFeatures features_from_row(std::span<const double> pooled, const PredictionRecord& record);

struct ProbeModel {
    int layer = 0;
    logistic::LogisticModel model;
    double threshold = 0.5;

    /// P(wrong) for one feature vector.
    [[nodiscard]] double score(const ProbeFeatures& features) const;
    [[nodiscard]] std::vector<double> scores(const std::vector<ProbeFeatures>& features) const;
};

Matrix stack(const std::vector<ProbeFeatures>& features);

/// L2-regularized logistic regression (step 0.1, 2000 iterations, zero init).
/// DegenerateFit with fewer than 10 examples or a single class.
ProbeModel fit_probe(const std::vector<ProbeFeatures>& features, std::span<const int> wrong, double l2 = kDefaultL2,
                     int layer = 0);

/// Sets the threshold that maximizes trigger F1 on the dev set.
ProbeModel tune_threshold(ProbeModel model, const std::vector<ProbeFeatures>& dev_features,
                          std::span<const int> dev_labels);

struct ProbeEval {
    double auroc = 0.0;
    double auprc = 0.0;
    double precision = 0.0;
    double recall = 0.0;
    double f1 = 0.0;
    double threshold = 0.0;
    std::size_t n = 0;
};

ProbeEval evaluate(const ProbeModel& model, const std::vector<ProbeFeatures>& features, std::span<const int> labels);

/// True for the ~20% of qids that form the dev split under this seed.
bool in_dev_split(const std::string& qid, std::uint64_t seed);

/// Emitted, matched examples aligned to one layer's rows.
struct LayerData {
    std::vector<ProbeFeatures> features;
    std::vector<int> wrong;
    std::vector<std::string> qids;
};

/// Joins records to hidden rows by qid. Only records with at least one
/// emission take part; AlignmentError when such a record has no hidden row.
LayerData align_layer(const HiddenMatrix& hidden, std::span<const PredictionRecord> records, double f1_threshold);

struct SweepOptions {
    double l2 = kDefaultL2;
    std::uint64_t seed = 0;
    double f1_threshold = 0.3;
};

struct SweepRow {
    int layer = 0;
    ProbeEval dev;
    std::size_t train_n = 0;
};

struct LayerFit {
    ProbeModel model;
    SweepRow row;
};

/// Fits on the train split, tunes the threshold on the dev split and reports dev metrics.
LayerFit fit_layer(const HiddenMatrix& hidden, std::span<const PredictionRecord> records,
                   const SweepOptions& options = {});

/// Fit on the train split and tune/evaluate on the dev split of every layer.
/// Layers run in parallel; rows come back sorted by layer.
std::vector<SweepRow> layer_sweep(const std::vector<HiddenMatrix>& layers, std::span<const PredictionRecord> records,
                                  const SweepOptions& options = {});

json to_json(const ProbeModel& model);
ProbeModel probe_from_json(const json& j);
json to_json(const ProbeEval& eval);
json to_json(const SweepRow& row);

}  // namespace uncal::probe
