#pragma once

// Ranking and thresholded-classification metrics. Positive label = 1.

#include <cstddef>
#include <span>

namespace uncal::metrics {

/// Mann-Whitney U / (n_pos * n_neg) with average ranks for ties.
/// UndefinedMetric unless both classes are present.
double auroc(std::span<const double> scores, std::span<const int> labels);

/// Average precision: sum over distinct score thresholds (descending) of
/// recall increment times precision. Tied scores enter together.
double auprc(std::span<const double> scores, std::span<const int> labels);

struct ThresholdStats {
    double threshold = 0.0;
    std::size_t true_pos = 0;
    std::size_t false_pos = 0;
    std::size_t false_neg = 0;
    double precision = 0.0;  ///< 0 when nothing is predicted positive
    double recall = 0.0;
    double f1 = 0.0;
};

/// Predict positive iff score >= threshold.
ThresholdStats at_threshold(std::span<const double> scores, std::span<const int> labels, double threshold);

/// F1-maximizing threshold over the lowest score and the midpoints between
/// consecutive distinct scores; ties go to the lower threshold. With a single distinct score the
/// threshold is that score (everything positive). UndefinedMetric unless both
/// classes are present.
ThresholdStats best_f1_threshold(std::span<const double> scores, std::span<const int> labels);

}  // namespace uncal::metrics
