#include "uncal/metrics.hpp"

#include <algorithm>
#include <numeric>
#include <vector>

#include "uncal/error.hpp"

namespace uncal::metrics {

namespace {

void check_inputs(std::span<const double> scores, std::span<const int> labels) {
    if (scores.size() != labels.size()) {
        throw Error(ErrorKind::ShapeError, "score and label counts differ");
    }
    const auto positives = std::count_if(labels.begin(), labels.end(), [](int y) { return y != 0; });
    if (positives == 0 || static_cast<std::size_t>(positives) == labels.size()) {
        throw Error(ErrorKind::UndefinedMetric, "metric needs both classes");
    }
}

std::vector<std::size_t> order_descending(std::span<const double> scores) {
    std::vector<std::size_t> idx(scores.size());
    std::iota(idx.begin(), idx.end(), 0);
    std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });
    return idx;
}

}  // namespace

double auroc(std::span<const double> scores, std::span<const int> labels) {
    check_inputs(scores, labels);
    std::vector<std::size_t> idx(scores.size());
    std::iota(idx.begin(), idx.end(), 0);
    std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });
    double pos_rank_sum = 0.0;
    std::size_t n_pos = 0;
    std::size_t i = 0;
    while (i < idx.size()) {
        std::size_t j = i;
        while (j + 1 < idx.size() && scores[idx[j + 1]] == scores[idx[i]]) {
            ++j;
        }
        // Ranks i+1 .. j+1 share their average.
        const double avg_rank = 0.5 * static_cast<double>(i + 1 + j + 1);
        for (std::size_t k = i; k <= j; ++k) {
            if (labels[idx[k]] != 0) {
                pos_rank_sum += avg_rank;
                ++n_pos;
            }
        }
        i = j + 1;
    }
    const double np = static_cast<double>(n_pos);
    const double nn = static_cast<double>(scores.size() - n_pos);
    return (pos_rank_sum - np * (np + 1.0) / 2.0) / (np * nn);
}

double auprc(std::span<const double> scores, std::span<const int> labels) {
    check_inputs(scores, labels);
    const auto idx = order_descending(scores);
    const double total_pos =
        static_cast<double>(std::count_if(labels.begin(), labels.end(), [](int y) { return y != 0; }));
    std::size_t tp = 0;
    std::size_t seen = 0;
    double prev_recall = 0.0;
    double area = 0.0;
    std::size_t i = 0;
    while (i < idx.size()) {
        std::size_t j = i;
        while (j < idx.size() && scores[idx[j]] == scores[idx[i]]) {
            tp += labels[idx[j]] != 0 ? 1 : 0;
            ++seen;
            ++j;
        }
        const double recall = static_cast<double>(tp) / total_pos;
        const double precision = static_cast<double>(tp) / static_cast<double>(seen);
        area += (recall - prev_recall) * precision;
        prev_recall = recall;
        i = j;
    }
    return area;
}

ThresholdStats at_threshold(std::span<const double> scores, std::span<const int> labels, double threshold) {
    if (scores.size() != labels.size()) {
        throw Error(ErrorKind::ShapeError, "score and label counts differ");
    }
    ThresholdStats s;
    s.threshold = threshold;
    for (std::size_t i = 0; i < scores.size(); ++i) {
        const bool predicted = scores[i] >= threshold;
        const bool actual = labels[i] != 0;
        s.true_pos += predicted && actual ? 1 : 0;
        s.false_pos += predicted && !actual ? 1 : 0;
        s.false_neg += !predicted && actual ? 1 : 0;
    }
    const auto predicted = s.true_pos + s.false_pos;
    const auto actual = s.true_pos + s.false_neg;
    s.precision = predicted == 0 ? 0.0 : static_cast<double>(s.true_pos) / static_cast<double>(predicted);
    s.recall = actual == 0 ? 0.0 : static_cast<double>(s.true_pos) / static_cast<double>(actual);
    s.f1 = (s.precision + s.recall) == 0.0 ? 0.0 : 2.0 * s.precision * s.recall / (s.precision + s.recall);
    return s;
}

ThresholdStats best_f1_threshold(std::span<const double> scores, std::span<const int> labels) {
    check_inputs(scores, labels);
    std::vector<double> distinct(scores.begin(), scores.end());
    std::sort(distinct.begin(), distinct.end());
    distinct.erase(std::unique(distinct.begin(), distinct.end()), distinct.end());
    // The lowest score (everything positive) is a candidate too. Candidates
    // ascend, so a strictly better F1 is required to move to a higher threshold.
    ThresholdStats best = at_threshold(scores, labels, distinct.front());
    for (std::size_t i = 0; i + 1 < distinct.size(); ++i) {
        const double mid = 0.5 * (distinct[i] + distinct[i + 1]);
        const auto s = at_threshold(scores, labels, mid);
        if (s.f1 > best.f1) {
            best = s;
        }
    }
    return best;
}

}  // namespace uncal::metrics
