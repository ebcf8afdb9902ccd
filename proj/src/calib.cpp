#include "uncal/calib.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>

#include "uncal/error.hpp"
#include "uncal/rewards.hpp"

namespace uncal::calib {

namespace {

std::vector<const ScoredRecord*> with_confidence(std::span<const ScoredRecord> records) {
    std::vector<const ScoredRecord*> out;
    for (const auto& r : records) {
        if (r.confidence) {
            out.push_back(&r);
        }
    }
    if (out.empty()) {
        throw Error(ErrorKind::EmptyBatch, "no records with a parsed confidence");
    }
    return out;
}

double ratio(std::size_t num, std::size_t den) {
    return static_cast<double>(num) / static_cast<double>(den);
}

std::optional<double> maybe_ratio(std::size_t num, std::size_t den) {
    return den == 0 ? std::nullopt : std::optional<double>(ratio(num, den));
}

json optional_json(const std::optional<double>& v) { return v ? json(*v) : json(nullptr); }

std::string fmt17(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

}  // namespace

ScoredRecord score(const PredictionRecord& record, double f1_threshold) {
    const auto annotated = rewards::annotate(record, f1_threshold);
    ScoredRecord s;
    s.qid = annotated.qid;
    s.dataset = annotated.dataset;
    s.confidence = annotated.verbal_confidence;
    s.correct = annotated.match->correct;
    s.f1 = annotated.match->f1;
    s.has_answer_line = rewards::extract_answer_line(annotated.response_text).has_value();
    s.emission_count = annotated.emissions.size();
    return s;
}

std::vector<ScoredRecord> score_all(std::span<const PredictionRecord> records, double f1_threshold) {
    std::vector<ScoredRecord> out;
    out.reserve(records.size());
    for (const auto& r : records) {
        out.push_back(score(r, f1_threshold));
    }
    return out;
}

std::size_t bin_index(double confidence, std::size_t num_bins) {
    const double b = static_cast<double>(num_bins);
    auto idx = static_cast<std::size_t>(std::clamp(std::floor(confidence * b), 0.0, b - 1.0));
    while (idx > 0 && confidence < static_cast<double>(idx) / b) {
        --idx;
    }
    while (idx + 1 < num_bins && confidence >= static_cast<double>(idx + 1) / b) {
        ++idx;
    }
    return idx;
}

std::vector<Bin> reliability_bins(std::span<const ScoredRecord> records, std::size_t num_bins) {
    if (num_bins == 0) {
        throw Error(ErrorKind::InvalidArgument, "num_bins must be at least 1");
    }
    const auto parsed = with_confidence(records);
    std::vector<double> conf_sum(num_bins, 0.0);
    std::vector<std::size_t> counts(num_bins, 0);
    std::vector<std::size_t> hits(num_bins, 0);
    for (const auto* r : parsed) {
        const auto b = bin_index(*r->confidence, num_bins);
        conf_sum[b] += *r->confidence;
        ++counts[b];
        hits[b] += r->correct ? 1 : 0;
    }
    std::vector<Bin> bins(num_bins);
    for (std::size_t b = 0; b < num_bins; ++b) {
        bins[b].lo = static_cast<double>(b) / static_cast<double>(num_bins);
        bins[b].hi = static_cast<double>(b + 1) / static_cast<double>(num_bins);
        bins[b].count = counts[b];
        if (counts[b] > 0) {
            bins[b].mean_conf = conf_sum[b] / static_cast<double>(counts[b]);
            bins[b].accuracy = ratio(hits[b], counts[b]);
        }
    }
    return bins;
}

double ece(std::span<const ScoredRecord> records, std::size_t num_bins) {
    const auto bins = reliability_bins(records, num_bins);
    std::size_t total = 0;
    for (const auto& b : bins) {
        total += b.count;
    }
    double value = 0.0;
    for (const auto& b : bins) {
        if (b.count > 0) {
            value += ratio(b.count, total) * std::abs(*b.accuracy - *b.mean_conf);
        }
    }
    return value;
}

double brier(std::span<const ScoredRecord> records) {
    const auto parsed = with_confidence(records);
    double sum = 0.0;
    for (const auto* r : parsed) {
        const double diff = *r->confidence - (r->correct ? 1.0 : 0.0);
        sum += diff * diff;
    }
    return sum / static_cast<double>(parsed.size());
}

double nll(std::span<const ScoredRecord> records, double epsilon) {
    if (!(epsilon > 0.0 && epsilon < 0.5)) {
        throw Error(ErrorKind::InvalidArgument, "nll epsilon must lie in (0, 0.5)");
    }
    const auto parsed = with_confidence(records);
    double sum = 0.0;
    for (const auto* r : parsed) {
        const double p = r->correct ? *r->confidence : 1.0 - *r->confidence;
        sum += -std::log(std::clamp(p, epsilon, 1.0 - epsilon));
    }
    return sum / static_cast<double>(parsed.size());
}

double ausc(std::span<const ScoredRecord> records) {
    auto parsed = with_confidence(records);
    std::stable_sort(parsed.begin(), parsed.end(), [](const ScoredRecord* x, const ScoredRecord* y) {
        if (*x->confidence != *y->confidence) {
            return *x->confidence > *y->confidence;
        }
        return x->qid < y->qid;
    });
    const double n = static_cast<double>(parsed.size());
    std::vector<std::pair<double, double>> curve;  // (coverage, selective accuracy)
    std::size_t hits = 0;
    for (std::size_t k = 0; k < parsed.size(); ++k) {
        hits += parsed[k]->correct ? 1 : 0;
        const bool group_end = k + 1 == parsed.size() || *parsed[k + 1]->confidence != *parsed[k]->confidence;
        if (group_end) {
            curve.emplace_back(static_cast<double>(k + 1) / n, ratio(hits, k + 1));
        }
    }
    if (curve.size() == 1) {
        return curve.front().second;
    }
    double area = 0.0;
    for (std::size_t i = 1; i < curve.size(); ++i) {
        area += 0.5 * (curve[i].second + curve[i - 1].second) * (curve[i].first - curve[i - 1].first);
    }
    return area / (curve.back().first - curve.front().first);
}

ErrorTaxonomy error_taxonomy(std::span<const ScoredRecord> records, double epistemic_threshold,
                             double strict_threshold, double near_miss_f1) {
    if (records.empty()) {
        throw Error(ErrorKind::EmptyBatch, "error taxonomy of an empty batch");
    }
    if (!(epistemic_threshold > 0.0 && epistemic_threshold < 1.0 && strict_threshold > 0.0 &&
          strict_threshold < 1.0 && strict_threshold >= epistemic_threshold)) {
        throw Error(ErrorKind::InvalidArgument, "thresholds must lie in (0,1) with strict >= epistemic");
    }
    struct BandDef {
        const char* label;
        double lo;
        double hi;
        bool lo_inclusive;
    };
    static constexpr BandDef kBands[] = {
        {"(0.7,1.0]", 0.7, 1.0, false}, {"(0.5,0.7]", 0.5, 0.7, false}, {"(0.3,0.5]", 0.3, 0.5, false},
        {"(0.1,0.3]", 0.1, 0.3, false}, {"[0.0,0.1]", 0.0, 0.1, true},
    };
    ErrorTaxonomy t;
    std::vector<std::size_t> band_counts(std::size(kBands), 0);
    for (const auto& r : records) {
        if (r.correct || !r.confidence) {
            continue;
        }
        const double c = *r.confidence;
        ++t.total_wrong;
        if (c > epistemic_threshold) {
            ++t.epistemic;
            if (r.emission_count > 0) {
                ++t.epistemic_with_emit;
            } else {
                ++t.epistemic_without_emit;
            }
        } else {
            ++t.aleatoric;
        }
        if (c > strict_threshold) {
            ++t.strict_epistemic;
        }
        if (r.f1 >= near_miss_f1) {
            ++t.near_miss;
        } else {
            ++t.factual_miss;
        }
        for (std::size_t b = 0; b < std::size(kBands); ++b) {
            const auto& band = kBands[b];
            const bool above = band.lo_inclusive ? c >= band.lo : c > band.lo;
            if (above && c <= band.hi) {
                ++band_counts[b];
                break;
            }
        }
    }
    for (std::size_t b = 0; b < std::size(kBands); ++b) {
        t.bands.push_back({kBands[b].label, band_counts[b],
                           t.total_wrong == 0 ? 0.0 : ratio(band_counts[b], t.total_wrong)});
    }
    return t;
}

double pearson(std::span<const double> x, std::span<const double> y) {
    if (x.size() != y.size()) {
        throw Error(ErrorKind::ShapeError, "pearson: length mismatch");
    }
    if (x.size() < 2) {
        throw Error(ErrorKind::UndefinedCorrelation, "need at least two points");
    }
    const double n = static_cast<double>(x.size());
    const double mx = std::accumulate(x.begin(), x.end(), 0.0) / n;
    const double my = std::accumulate(y.begin(), y.end(), 0.0) / n;
    double sxy = 0.0;
    double sxx = 0.0;
    double syy = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        sxy += (x[i] - mx) * (y[i] - my);
        sxx += (x[i] - mx) * (x[i] - mx);
        syy += (y[i] - my) * (y[i] - my);
    }
    if (sxx == 0.0 || syy == 0.0) {
        throw Error(ErrorKind::UndefinedCorrelation, "zero variance");
    }
    return sxy / std::sqrt(sxx * syy);
}

ConsistencySummary consistency_stats(const std::map<std::string, std::vector<Sample>>& groups) {
    std::vector<double> greedy;
    std::vector<double> mean_conf;
    std::vector<double> pass;
    double std_sum = 0.0;
    std::size_t high_n = 0;
    std::size_t low_n = 0;
    double high_pass = 0.0;
    double low_pass = 0.0;
    for (const auto& [qid, samples] : groups) {
        if (samples.empty()) {
            throw Error(ErrorKind::InvalidArgument, "question '" + qid + "' has no samples");
        }
        const double k = static_cast<double>(samples.size());
        double conf_sum = 0.0;
        std::size_t passed = 0;
        for (const auto& s : samples) {
            conf_sum += s.confidence;
            passed += s.correct ? 1 : 0;
        }
        const double m = conf_sum / k;
        double var = 0.0;
        for (const auto& s : samples) {
            var += (s.confidence - m) * (s.confidence - m);
        }
        const double rate = ratio(passed, samples.size());
        greedy.push_back(samples.front().confidence);
        mean_conf.push_back(m);
        pass.push_back(rate);
        std_sum += std::sqrt(var / k);
        if (m >= 0.7) {
            ++high_n;
            high_pass += rate;
        } else if (m < 0.3) {
            ++low_n;
            low_pass += rate;
        }
    }
    ConsistencySummary out;
    out.questions = groups.size();
    out.greedy_pearson = pearson(greedy, pass);
    out.mean_pearson = pearson(mean_conf, pass);
    out.mean_within_std = std_sum / static_cast<double>(groups.size());
    if (high_n > 0) {
        out.high_pass_rate = high_pass / static_cast<double>(high_n);
    }
    if (low_n > 0) {
        out.low_pass_rate = low_pass / static_cast<double>(low_n);
    }
    if (out.high_pass_rate && out.low_pass_rate) {
        out.high_low_gap = *out.high_pass_rate - *out.low_pass_rate;
    }
    return out;
}

namespace {

BehaviorRow behavior_row(const std::string& name, const std::vector<const ScoredRecord*>& rows) {
    BehaviorRow row;
    row.dataset = name;
    row.n = rows.size();
    std::size_t correct = 0;
    std::size_t answered = 0;
    std::size_t emitted = 0;
    std::size_t wrong_emit = 0;
    std::size_t correct_emit = 0;
    for (const auto* r : rows) {
        const bool emit = r->emission_count > 0;
        correct += r->correct ? 1 : 0;
        answered += r->has_answer_line ? 1 : 0;
        emitted += emit ? 1 : 0;
        wrong_emit += (!r->correct && emit) ? 1 : 0;
        correct_emit += (r->correct && emit) ? 1 : 0;
    }
    row.accuracy = ratio(correct, rows.size());
    row.answer_line_rate = ratio(answered, rows.size());
    row.emit_rate = ratio(emitted, rows.size());
    row.wrong_emit_rate = maybe_ratio(wrong_emit, rows.size() - correct);
    row.correct_emit_rate = maybe_ratio(correct_emit, correct);
    return row;
}

}  // namespace

BehavioralSummary behavioral_summary(std::span<const ScoredRecord> records) {
    if (records.empty()) {
        throw Error(ErrorKind::EmptyBatch, "behavioral summary of an empty batch");
    }
    std::map<std::string, std::vector<const ScoredRecord*>> by_dataset;
    for (const auto& r : records) {
        by_dataset[r.dataset].push_back(&r);
    }
    BehavioralSummary out;
    for (const auto& [name, rows] : by_dataset) {
        out.per_dataset.push_back(behavior_row(name, rows));
    }
    const double d = static_cast<double>(out.per_dataset.size());
    out.macro.dataset = "macro";
    double wrong_emit_sum = 0.0;
    double correct_emit_sum = 0.0;
    std::size_t wrong_emit_n = 0;
    std::size_t correct_emit_n = 0;
    for (const auto& row : out.per_dataset) {
        out.macro.n += row.n;
        out.macro.accuracy += row.accuracy / d;
        out.macro.answer_line_rate += row.answer_line_rate / d;
        out.macro.emit_rate += row.emit_rate / d;
        if (row.wrong_emit_rate) {
            wrong_emit_sum += *row.wrong_emit_rate;
            ++wrong_emit_n;
        }
        if (row.correct_emit_rate) {
            correct_emit_sum += *row.correct_emit_rate;
            ++correct_emit_n;
        }
    }
    if (wrong_emit_n > 0) {
        out.macro.wrong_emit_rate = wrong_emit_sum / static_cast<double>(wrong_emit_n);
    }
    if (correct_emit_n > 0) {
        out.macro.correct_emit_rate = correct_emit_sum / static_cast<double>(correct_emit_n);
    }
    return out;
}

CalibrationReport calibration_report(std::span<const ScoredRecord> records, const CalibOptions& options) {
    CalibrationReport report;
    report.n = records.size();
    const auto parsed = with_confidence(records);
    report.parsed = parsed.size();
    std::size_t correct = 0;
    for (const auto& r : records) {
        correct += r.correct ? 1 : 0;
    }
    report.accuracy = ratio(correct, records.size());
    double conf_sum = 0.0;
    for (const auto* r : parsed) {
        conf_sum += *r->confidence;
    }
    report.mean_confidence = conf_sum / static_cast<double>(parsed.size());
    report.overconfidence_gap = report.mean_confidence - report.accuracy;
    report.parse_rate = ratio(parsed.size(), records.size());
    report.bins = reliability_bins(records, options.num_bins);
    report.ece = ece(records, options.num_bins);
    report.brier = brier(records);
    report.nll = nll(records, options.nll_epsilon);
    report.ausc = ausc(records);
    report.taxonomy =
        error_taxonomy(records, options.epistemic_threshold, options.strict_threshold, options.near_miss_f1);
    report.behavior = behavioral_summary(records);
    return report;
}

json to_json(const ErrorTaxonomy& t) {
    json bands = json::array();
    for (const auto& b : t.bands) {
        bands.push_back({{"band", b.label}, {"count", b.count}, {"fraction", b.fraction}});
    }
    return {{"total_wrong", t.total_wrong},
            {"epistemic", t.epistemic},
            {"aleatoric", t.aleatoric},
            {"strict_epistemic", t.strict_epistemic},
            {"epistemic_with_emit", t.epistemic_with_emit},
            {"epistemic_without_emit", t.epistemic_without_emit},
            {"near_miss", t.near_miss},
            {"factual_miss", t.factual_miss},
            {"bands", std::move(bands)}};
}

namespace {

json row_json(const BehaviorRow& row) {
    return {{"dataset", row.dataset},
            {"n", row.n},
            {"accuracy", row.accuracy},
            {"answer_line_rate", row.answer_line_rate},
            {"emit_rate", row.emit_rate},
            {"wrong_emit_rate", optional_json(row.wrong_emit_rate)},
            {"correct_emit_rate", optional_json(row.correct_emit_rate)}};
}

}  // namespace

json to_json(const BehavioralSummary& summary) {
    json rows = json::array();
    for (const auto& row : summary.per_dataset) {
        rows.push_back(row_json(row));
    }
    return {{"per_dataset", std::move(rows)}, {"macro", row_json(summary.macro)}};
}

json to_json(const ConsistencySummary& s) {
    return {{"questions", s.questions},
            {"greedy_pearson", s.greedy_pearson},
            {"mean_pearson", s.mean_pearson},
            {"mean_within_std", s.mean_within_std},
            {"high_pass_rate", optional_json(s.high_pass_rate)},
            {"low_pass_rate", optional_json(s.low_pass_rate)},
            {"high_low_gap", optional_json(s.high_low_gap)}};
}

json to_json(const CalibrationReport& r) {
    json bins = json::array();
    for (const auto& b : r.bins) {
        bins.push_back({{"lo", b.lo},
                        {"hi", b.hi},
                        {"count", b.count},
                        {"mean_conf", optional_json(b.mean_conf)},
                        {"accuracy", optional_json(b.accuracy)}});
    }
    return {{"n", r.n},
            {"parsed", r.parsed},
            {"accuracy", r.accuracy},
            {"mean_confidence", r.mean_confidence},
            {"overconfidence_gap", r.overconfidence_gap},
            {"ece", r.ece},
            {"brier", r.brier},
            {"nll", r.nll},
            {"parse_rate", r.parse_rate},
            {"ausc", r.ausc},
            {"num_bins", r.bins.size()},
            {"bins", std::move(bins)},
            {"error_taxonomy", to_json(r.taxonomy)},
            {"behavior", to_json(r.behavior)}};
}

std::string bins_csv(const std::vector<Bin>& bins) {
    std::string out = "lo,hi,count,mean_conf,accuracy\n";
    for (const auto& b : bins) {
        out += fmt17(b.lo) + "," + fmt17(b.hi) + "," + std::to_string(b.count) + "," +
               (b.mean_conf ? fmt17(*b.mean_conf) : "") + "," + (b.accuracy ? fmt17(*b.accuracy) : "") + "\n";
    }
    return out;
}

}  // namespace uncal::calib
