#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "doctest.h"
#include "synthetic.hpp"
#include "uncal/error.hpp"
#include "uncal/logistic.hpp"
#include "uncal/metrics.hpp"
#include "uncal/probe.hpp"

using namespace uncal;

namespace {

// Pairwise AUROC oracle: P(score_pos > score_neg) + 0.5 P(tie).
double auroc_oracle(const std::vector<double>& s, const std::vector<int>& y) {
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

// Best F1 by trying every candidate threshold (each score and -inf/+inf).
double best_f1_oracle(const std::vector<double>& s, const std::vector<int>& y) {
    std::vector<double> cands(s);
    cands.push_back(-1e300);
    double best = 0.0;
    for (double t : cands) {
        double tp = 0;
        double fp = 0;
        double fn = 0;
        for (std::size_t i = 0; i < s.size(); ++i) {
            const bool pos = s[i] >= t;
            tp += pos && y[i] == 1;
            fp += pos && y[i] == 0;
            fn += !pos && y[i] == 1;
        }
        if (tp > 0) {
            best = std::max(best, 2 * tp / (2 * tp + fp + fn));
        }
    }
    return best;
}

PredictionRecord emitted_record(std::string qid, std::size_t token_index = 0) {
    PredictionRecord r;
    r.qid = std::move(qid);
    r.gold_answers = {"x"};
    r.response_text = std::string(100, 'a');
    r.emissions = {{10, token_index}};
    r.response_token_count = 40;
    return r;
}

struct Blobs {
    std::vector<probe::ProbeFeatures> features;
    std::vector<int> labels;
};

Blobs blobs(std::size_t n, double separation, std::uint64_t seed, bool shuffle_labels = false) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> normal(0.0, 1.0);
    Blobs b;
    for (std::size_t i = 0; i < n; ++i) {
        const int y = static_cast<int>(i % 2);
        probe::ProbeFeatures f;
        for (int d = 0; d < 5; ++d) {
            f.span_mean.push_back(normal(rng) + (d == 0 ? separation * (y ? 1.0 : -1.0) : 0.0));
        }
        f.response_token_count = 50 + normal(rng);
        f.emission_count = 1;
        f.first_emit_fraction = 0.5;
        b.features.push_back(f);
        b.labels.push_back(y);
    }
    if (shuffle_labels) {
        std::shuffle(b.labels.begin(), b.labels.end(), rng);
    }
    return b;
}

template <typename F>
void expect_kind(ErrorKind kind, F&& fn) {
    try {
        fn();
        FAIL("expected " << to_string(kind));
    } catch (const Error& e) {
        CHECK(e.kind() == kind);
    }
}

}  // namespace

TEST_CASE("auroc hand cases") {
    const std::vector<int> y{1, 0, 1, 0};
    CHECK(metrics::auroc(std::vector<double>{0.9, 0.8, 0.4, 0.2}, y) == 0.75);
    CHECK(metrics::auroc(std::vector<double>{0.9, 0.1, 0.8, 0.2}, y) == 1.0);
    CHECK(metrics::auroc(std::vector<double>{0.5, 0.5, 0.5, 0.5}, y) == 0.5);
    expect_kind(ErrorKind::UndefinedMetric,
                [] { metrics::auroc(std::vector<double>{0.1, 0.2}, std::vector<int>{1, 1}); });
}

TEST_CASE("auroc properties against pairwise oracle") {
    std::mt19937_64 rng(12);
    std::uniform_int_distribution<int> grid(0, 9);
    for (int t = 0; t < 100; ++t) {
        std::vector<double> s(30);
        std::vector<int> y(30);
        for (std::size_t i = 0; i < s.size(); ++i) {
            s[i] = grid(rng) / 10.0;
            y[i] = static_cast<int>(i % 3 == 0);
        }
        const double a = metrics::auroc(s, y);
        CHECK(std::abs(a - auroc_oracle(s, y)) <= 1e-12);
        std::vector<double> neg(s.size());
        std::vector<double> cubed(s.size());
        for (std::size_t i = 0; i < s.size(); ++i) {
            neg[i] = -s[i];
            cubed[i] = std::exp(3.0 * s[i]);
        }
        CHECK(std::abs(a + metrics::auroc(neg, y) - 1.0) <= 1e-12);
        CHECK(metrics::auroc(cubed, y) == a);
    }
}

TEST_CASE("auprc hand case") {
    // Ranked 1,0,1,0: precision at each positive = 1, 2/3 -> AP = (1 + 2/3)/2.
    const std::vector<int> y{1, 0, 1, 0};
    CHECK(metrics::auprc(std::vector<double>{0.9, 0.8, 0.4, 0.2}, y) == doctest::Approx(5.0 / 6.0));
    CHECK(metrics::auprc(std::vector<double>{0.5, 0.5, 0.5, 0.5}, y) == 0.5);
}

TEST_CASE("threshold tuning matches exhaustive search") {
    std::mt19937_64 rng(2);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    for (int t = 0; t < 100; ++t) {
        std::vector<double> s(25);
        std::vector<int> y(25);
        for (std::size_t i = 0; i < s.size(); ++i) {
            y[i] = unit(rng) < 0.4;
            s[i] = std::round((unit(rng) + 0.3 * y[i]) * 20) / 20;
        }
        if (std::count(y.begin(), y.end(), 1) == 0 || std::count(y.begin(), y.end(), 0) == 0) {
            continue;
        }
        const auto best = metrics::best_f1_threshold(s, y);
        CHECK(std::abs(best.f1 - best_f1_oracle(s, y)) <= 1e-12);
    }
    const std::vector<double> sep{0.1, 0.2, 0.8, 0.9};
    const std::vector<int> ys{0, 0, 1, 1};
    const auto b = metrics::best_f1_threshold(sep, ys);
    CHECK(b.f1 == 1.0);
    CHECK(b.threshold == doctest::Approx(0.5));
    const auto all = metrics::at_threshold(sep, ys, 0.0);
    CHECK(all.recall == 1.0);
    CHECK(all.precision == 0.5);
}

TEST_CASE("build_features pooling") {
    Matrix hidden(6, 2);
    for (std::size_t r = 0; r < 6; ++r) {
        hidden(r, 0) = static_cast<double>(r);
        hidden(r, 1) = static_cast<double>(10 * r);
    }
    auto rec = emitted_record("a", 2);
    auto f = probe::build_features(hidden, rec, 0, 1);
    CHECK(f.span_mean == std::vector<double>{2.0, 20.0});
    CHECK(f.emission_count == 1.0);
    CHECK(f.first_emit_fraction == 0.1);

    // 2-token span, window 1: rows 1..4.
    f = probe::build_features(hidden, rec, 1, 2);
    CHECK(f.span_mean == std::vector<double>{2.5, 25.0});

    auto start = emitted_record("b", 0);
    f = probe::build_features(hidden, start, 3, 1);
    CHECK(f.span_mean == std::vector<double>{1.5, 15.0});

    auto silent = emitted_record("c");
    silent.emissions.clear();
    expect_kind(ErrorKind::NotEmitted, [&] { probe::build_features(hidden, silent, 1); });
    auto unaligned = emitted_record("d");
    unaligned.emissions[0].token_index.reset();
    expect_kind(ErrorKind::AlignmentError, [&] { probe::build_features(hidden, unaligned, 1); });
    expect_kind(ErrorKind::AlignmentError, [&] { probe::build_features(hidden, emitted_record("e", 9), 1); });
}

TEST_CASE("probe fit on separable and null data") {
    const auto sep = blobs(200, 3.0, 1);
    const auto model = probe::fit_probe(sep.features, sep.labels);
    CHECK(metrics::auroc(model.scores(sep.features), sep.labels) == 1.0);
    for (std::size_t i = 1; i < model.model.loss_trace.size(); ++i) {
        CHECK(model.model.loss_trace[i] <= model.model.loss_trace[i - 1]);
    }

    const auto train = blobs(400, 0.0, 2, true);
    const auto dev = blobs(2000, 0.0, 3, true);
    const auto null_model = probe::fit_probe(train.features, train.labels);
    const double a = metrics::auroc(null_model.scores(dev.features), dev.labels);
    CHECK(a >= 0.4);
    CHECK(a <= 0.6);

    std::vector<int> one_class(sep.labels.size(), 1);
    expect_kind(ErrorKind::DegenerateFit, [&] { probe::fit_probe(sep.features, one_class); });
    const std::vector<probe::ProbeFeatures> few(sep.features.begin(), sep.features.begin() + 9);
    const std::vector<int> few_y(sep.labels.begin(), sep.labels.begin() + 9);
    expect_kind(ErrorKind::DegenerateFit, [&] { probe::fit_probe(few, few_y); });
}

TEST_CASE("duplicated feature column splits its weight") {
    std::mt19937_64 rng(6);
    std::normal_distribution<double> normal(0.0, 1.0);
    Matrix x(300, 2);
    Matrix xd(300, 3);
    std::vector<int> y(300);
    for (std::size_t i = 0; i < 300; ++i) {
        const double a = normal(rng);
        const double b = normal(rng);
        y[i] = static_cast<int>(a + 0.5 * b + normal(rng) > 0);
        x(i, 0) = a;
        x(i, 1) = b;
        xd(i, 0) = a;
        xd(i, 1) = b;
        xd(i, 2) = a;
    }
    const double l2 = 1e-8;
    logistic::GdOptions converged;
    converged.iterations = 20000;
    const auto dup = logistic::fit(xd, y, l2, converged);
    CHECK(dup.weights[0] == dup.weights[2]);
    // With a negligible penalty both fits reach the same decision function.
    const auto single = logistic::fit(x, y, l2, converged);
    const auto pd = dup.predict(xd);
    const auto ps = single.predict(x);
    double worst = 0.0;
    for (std::size_t i = 0; i < pd.size(); ++i) {
        worst = std::max(worst, std::abs(pd[i] - ps[i]));
    }
    CHECK(worst < 1e-6);
}

TEST_CASE("dev split is stable and near 20 percent") {
    std::size_t dev = 0;
    for (int i = 0; i < 5000; ++i) {
        const auto qid = "q" + std::to_string(i);
        CHECK(probe::in_dev_split(qid, 7) == probe::in_dev_split(qid, 7));
        dev += probe::in_dev_split(qid, 7);
    }
    CHECK(dev > 900);
    CHECK(dev < 1100);
}

TEST_CASE("layer sweep with identical layers gives identical rows") {
    std::mt19937_64 rng(4);
    std::normal_distribution<double> normal(0.0, 1.0);
    std::vector<PredictionRecord> records;
    HiddenMatrix h;
    h.values = Matrix(120, 4);
    for (std::size_t i = 0; i < 120; ++i) {
        auto r = emitted_record("q" + std::to_string(i));
        const bool wrong = i % 2 == 0;
        r.response_text = std::string(20, 'a') + "<uncertain>\nAnswer: " + (wrong ? "y" : "x");
        r.emissions.clear();
        records.push_back(r);
        h.row_ids.push_back(r.qid);
        for (std::size_t d = 0; d < 4; ++d) {
            h.values(i, d) = normal(rng) + (d == 0 && wrong ? 1.5 : 0.0);
        }
    }
    std::vector<HiddenMatrix> layers;
    for (int l = 0; l < 3; ++l) {
        auto copy = h;
        copy.layer = 2 - l;
        layers.push_back(copy);
    }
    const auto rows = probe::layer_sweep(layers, records, {probe::kDefaultL2, 1, 0.3});
    REQUIRE(rows.size() == 3);
    CHECK(rows[0].layer == 0);
    CHECK(rows[2].layer == 2);
    CHECK(probe::to_json(rows[0].dev) == probe::to_json(rows[1].dev));
    CHECK(probe::to_json(rows[1].dev) == probe::to_json(rows[2].dev));
}

TEST_CASE("probe model json round trip") {
    const auto sep = blobs(60, 2.0, 9);
    auto model = probe::fit_probe(sep.features, sep.labels, 0.01, 5);
    model = probe::tune_threshold(model, sep.features, sep.labels);
    const auto back = probe::probe_from_json(json::parse(dump_json(probe::to_json(model))));
    CHECK(back.layer == 5);
    CHECK(back.threshold == model.threshold);
    for (const auto& f : sep.features) {
        CHECK(back.score(f) == model.score(f));
    }
}
