#pragma once

// Brute-force reference implementations written straight from the
// definitions, using quadratic scans.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <optional>
#include <set>
#include <vector>

namespace uncal::testing::oracle {

struct Scored {
    double conf;
    bool correct;
};

inline double ece(const std::vector<Scored>& xs, std::size_t bins) {
    double total = 0.0;
    for (std::size_t b = 0; b < bins; ++b) {
        const double lo = static_cast<double>(b) / static_cast<double>(bins);
        const double hi = static_cast<double>(b + 1) / static_cast<double>(bins);
        double conf = 0.0;
        double hits = 0.0;
        double count = 0.0;
        for (const auto& x : xs) {
            const bool inside = b + 1 == bins ? x.conf >= lo : (x.conf >= lo && x.conf < hi);
            const bool below_first = b == 0 && x.conf < 0.0;
            if (inside || below_first) {
                conf += x.conf;
                hits += x.correct ? 1.0 : 0.0;
                count += 1.0;
            }
        }
        if (count > 0) {
            total += count / static_cast<double>(xs.size()) * std::abs(hits / count - conf / count);
        }
    }
    return total;
}

inline double brier(const std::vector<Scored>& xs) {
    double s = 0.0;
    for (const auto& x : xs) {
        s += std::pow(x.conf - (x.correct ? 1.0 : 0.0), 2);
    }
    return s / static_cast<double>(xs.size());
}

inline double nll(const std::vector<Scored>& xs, double eps) {
    double s = 0.0;
    for (const auto& x : xs) {
        double p = x.correct ? x.conf : 1.0 - x.conf;
        p = std::min(std::max(p, eps), 1.0 - eps);
        s -= std::log(p);
    }
    return s / static_cast<double>(xs.size());
}

/// One coverage point per distinct confidence t: keep every record with conf >= t.
inline double ausc(const std::vector<Scored>& xs) {
    std::set<double> distinct;
    for (const auto& x : xs) {
        distinct.insert(x.conf);
    }
    std::vector<std::pair<double, double>> curve;
    for (auto it = distinct.rbegin(); it != distinct.rend(); ++it) {
        double kept = 0.0;
        double hits = 0.0;
        for (const auto& x : xs) {
            if (x.conf >= *it) {
                kept += 1.0;
                hits += x.correct ? 1.0 : 0.0;
            }
        }
        curve.emplace_back(kept / static_cast<double>(xs.size()), hits / kept);
    }
    if (curve.size() == 1) {
        return curve[0].second;
    }
    double area = 0.0;
    for (std::size_t i = 1; i < curve.size(); ++i) {
        area += (curve[i].first - curve[i - 1].first) * (curve[i].second + curve[i - 1].second) / 2.0;
    }
    return area / (curve.back().first - curve.front().first);
}

/// Probability that a random positive outranks a random negative, ties half.
inline double auroc(const std::vector<double>& s, const std::vector<int>& y) {
    double wins = 0.0;
    double pairs = 0.0;
    for (std::size_t i = 0; i < s.size(); ++i) {
        for (std::size_t j = 0; j < s.size(); ++j) {
            if (y[i] == 1 && y[j] == 0) {
                pairs += 1.0;
                wins += s[i] > s[j] ? 1.0 : (s[i] == s[j] ? 0.5 : 0.0);
            }
        }
    }
    return wins / pairs;
}

/// Step-wise average precision: recall gained at each distinct threshold
/// times the precision at that threshold.
inline double auprc(const std::vector<double>& s, const std::vector<int>& y) {
    std::set<double> distinct(s.begin(), s.end());
    double positives = 0.0;
    for (int v : y) {
        positives += v;
    }
    double prev_recall = 0.0;
    double area = 0.0;
    for (auto it = distinct.rbegin(); it != distinct.rend(); ++it) {
        double tp = 0.0;
        double predicted = 0.0;
        for (std::size_t i = 0; i < s.size(); ++i) {
            if (s[i] >= *it) {
                predicted += 1.0;
                tp += y[i];
            }
        }
        const double recall = tp / positives;
        area += (recall - prev_recall) * (tp / predicted);
        prev_recall = recall;
    }
    return area;
}

}  // namespace uncal::testing::oracle
