#pragma once

// Calibration and behavioural metrics over batches of scored predictions.

#include <cstddef>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "uncal/json_io.hpp"
#include "uncal/records.hpp"

namespace uncal::calib {

/// The fields of a PredictionRecord the metrics consume, after matching.
struct ScoredRecord {
    std::string qid;
    std::string dataset;
    std::optional<double> confidence;  ///< absent when no confidence could be parsed
    bool correct = false;
    double f1 = 0.0;
    bool has_answer_line = false;
    std::size_t emission_count = 0;
};

/// Annotates the record (answer line, confidence, emissions, match) and keeps
/// what the metrics need.
ScoredRecord score(const PredictionRecord& record, double f1_threshold);
std::vector<ScoredRecord> score_all(std::span<const PredictionRecord> records, double f1_threshold);

struct Bin {
    double lo = 0.0;
    double hi = 0.0;
    std::size_t count = 0;
    std::optional<double> mean_conf;
    std::optional<double> accuracy;
};

/// Equal-width bin index: bin b holds b/B <= c < (b+1)/B, with c = 1 in the last bin.
std::size_t bin_index(double confidence, std::size_t num_bins);

/// Reliability-diagram bins over records with a confidence. EmptyBatch if none.
std::vector<Bin> reliability_bins(std::span<const ScoredRecord> records, std::size_t num_bins);

double ece(std::span<const ScoredRecord> records, std::size_t num_bins = 10);
double brier(std::span<const ScoredRecord> records);
double nll(std::span<const ScoredRecord> records, double epsilon = 1e-6);

/// Area under selective accuracy vs coverage. Records are ranked by
/// confidence; a coverage point sits after each group of equal confidence,
/// the curve is integrated by trapezoids between the first and last points
/// and divided by that coverage span (a single point returns its accuracy).
double ausc(std::span<const ScoredRecord> records);

struct ErrorBand {
    std::string label;
    std::size_t count = 0;
    double fraction = 0.0;
};

struct ErrorTaxonomy {
    std::size_t total_wrong = 0;
    std::size_t epistemic = 0;
    std::size_t aleatoric = 0;
    std::size_t strict_epistemic = 0;
    std::vector<ErrorBand> bands;
    std::size_t epistemic_with_emit = 0;
    std::size_t epistemic_without_emit = 0;
    std::size_t near_miss = 0;     ///< wrong with token-F1 >= near_miss_f1
    std::size_t factual_miss = 0;  ///< wrong with token-F1 < near_miss_f1
};

/// Counts wrong answers that carry a confidence. Bands are (0.7,1], (0.5,0.7],
/// (0.3,0.5], (0.1,0.3], [0,0.1]. EmptyBatch on an empty batch.
ErrorTaxonomy error_taxonomy(std::span<const ScoredRecord> records, double epistemic_threshold = 0.5,
                             double strict_threshold = 0.7, double near_miss_f1 = 0.3);

struct Sample {
    double confidence = 0.0;
    bool correct = false;
};

struct ConsistencySummary {
    double greedy_pearson = 0.0;  ///< corr(first-sample confidence, pass rate)
    double mean_pearson = 0.0;    ///< corr(mean confidence, pass rate)
    double mean_within_std = 0.0; ///< population std of confidence within a question, averaged
    std::optional<double> high_pass_rate;  ///< questions with mean conf >= 0.7
    std::optional<double> low_pass_rate;   ///< questions with mean conf < 0.3
    std::optional<double> high_low_gap;
    std::size_t questions = 0;
};

/// Pearson correlation; UndefinedCorrelation for < 2 points or zero variance.
double pearson(std::span<const double> x, std::span<const double> y);

ConsistencySummary consistency_stats(const std::map<std::string, std::vector<Sample>>& groups);

struct BehaviorRow {
    std::string dataset;  ///< "macro" for the average row
    std::size_t n = 0;
    double accuracy = 0.0;
    double answer_line_rate = 0.0;
    double emit_rate = 0.0;
    std::optional<double> wrong_emit_rate;    ///< emitted among wrong
    std::optional<double> correct_emit_rate;  ///< emitted among correct
};

struct BehavioralSummary {
    std::vector<BehaviorRow> per_dataset;  ///< sorted by dataset name
    BehaviorRow macro;                     ///< unweighted mean over datasets
};

BehavioralSummary behavioral_summary(std::span<const ScoredRecord> records);

struct CalibOptions {
    std::size_t num_bins = 10;
    double nll_epsilon = 1e-6;
    double epistemic_threshold = 0.5;
    double strict_threshold = 0.7;
    double near_miss_f1 = 0.3;
};

struct CalibrationReport {
    std::size_t n = 0;
    std::size_t parsed = 0;
    double accuracy = 0.0;
    double mean_confidence = 0.0;
    double overconfidence_gap = 0.0;
    double ece = 0.0;
    double brier = 0.0;
    double nll = 0.0;
    double parse_rate = 0.0;
    double ausc = 0.0;
    std::vector<Bin> bins;
    ErrorTaxonomy taxonomy;
    BehavioralSummary behavior;
};

/// Accuracy and parse rate use every record; confidence metrics use the
/// records with a parsed confidence. EmptyBatch when none parsed.
CalibrationReport calibration_report(std::span<const ScoredRecord> records, const CalibOptions& options = {});

json to_json(const CalibrationReport& report);
json to_json(const ErrorTaxonomy& taxonomy);
json to_json(const BehavioralSummary& summary);
json to_json(const ConsistencySummary& summary);

/// `lo,hi,count,mean_conf,accuracy` rows for plotting.
std::string bins_csv(const std::vector<Bin>& bins);

}  // namespace uncal::calib
