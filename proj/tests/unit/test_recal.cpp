#include <cmath>
#include <random>

#include "doctest.h"
#include "synthetic.hpp"
#include "uncal/error.hpp"
#include "uncal/recal.hpp"

using namespace uncal;
using namespace uncal::recal;

namespace {

std::vector<Example> calibrated_batch(std::size_t n, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> unit(0.02, 0.98);
    std::uniform_real_distribution<double> coin(0.0, 1.0);
    std::vector<Example> out(n);
    for (auto& e : out) {
        e.confidence = unit(rng);
        e.correct = coin(rng) < e.confidence;
        e.features = {confidence_logit(e.confidence), 100.0, 3.0, 4.0};
    }
    return out;
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

TEST_CASE("apply_ts arithmetic") {
    CHECK(apply_ts({2.0}, 0.5) == doctest::Approx(0.5));
    CHECK(apply_ts({0.3}, 0.5) == doctest::Approx(0.5));
    CHECK(apply_ts({2.0}, 0.9) == doctest::Approx(1.0 / (1.0 + std::exp(-std::log(9.0) / 2.0))));
    CHECK(apply_ts({2.0}, 0.9) == doctest::Approx(0.75));
    CHECK(std::abs(apply_ts({1e9}, 0.99) - 0.5) < 1e-6);
    for (double c : {0.01, 0.2, 0.5, 0.77, 0.9999}) {
        CHECK(std::abs(apply_ts({1.0}, c) - c) <= 1e-12);
    }
    double prev = 0.0;
    for (int i = 1; i < 100; ++i) {
        const double v = apply_ts({1.7}, i / 100.0);
        CHECK(v > prev);
        prev = v;
    }
}

TEST_CASE("global TS on calibrated and inflated batches") {
    const auto cal = calibrated_batch(10000, 1);
    const auto t = fit_global_ts(cal);
    CHECK(t.temperature >= 0.95);
    CHECK(t.temperature <= 1.05);
    const auto inflated = testing::temperature_batch(2.0, 10000, 2);
    const auto t2 = fit_global_ts(inflated);
    CHECK(std::abs(t2.temperature - 2.0) / 2.0 < 0.1);
    CHECK(ts_nll(inflated, t2.temperature) <= ts_nll(inflated, 1.0));
    CHECK(t2.temperature >= std::exp(-5.0));
    CHECK(t2.temperature <= std::exp(5.0));
}

TEST_CASE("degenerate TS fits") {
    std::vector<Example> one_class(5);
    for (auto& e : one_class) {
        e.confidence = 0.7;
        e.correct = true;
    }
    expect_kind(ErrorKind::DegenerateFit, [&] { fit_global_ts(one_class); });
    std::vector<Example> edges{{1.0, true, {}}, {0.0, false, {}}, {1.0, false, {}}};
    expect_kind(ErrorKind::DegenerateFit, [&] { fit_global_ts(edges); });
    expect_kind(ErrorKind::DegenerateFit, [&] { fit_global_ts(std::vector<Example>{{0.4, true, {}}}); });
}

TEST_CASE("ATS with heavy regularization tracks global TS") {
    const auto b = testing::temperature_batch(1.5, 4000, 3);
    const auto ts = fit_global_ts(b);
    AtsOptions opts;
    opts.l2 = 5.0;
    const auto ats = fit_ats(b, opts);
    for (double w : ats.weights) {
        CHECK(std::abs(w) < 0.05);
    }
    CHECK(std::abs(ats_nll(ats, b) - ts_nll(b, ts.temperature)) < 1e-3);
}

TEST_CASE("ATS zero-variance feature keeps zero weight") {
    auto b = testing::temperature_batch(2.0, 2000, 4);
    for (auto& e : b) {
        e.features[2] = 7.0;
    }
    const auto ats = fit_ats(b);
    CHECK(ats.feature_scale[2] == 0.0);
    CHECK(ats.weights[2] == 0.0);
}

TEST_CASE("ATS beats TS on planted length overconfidence") {
    const auto b = testing::length_overconfidence_batch(6000, 5);
    const auto ts = fit_global_ts(b);
    const auto ats = fit_ats(b);
    CHECK(ats_nll(ats, b) < ts_nll(b, ts.temperature) - 0.01);
}

TEST_CASE("model json round trip is exact") {
    const auto b = testing::length_overconfidence_batch(500, 6);
    const auto ats = fit_ats(b);
    const auto back = ats_from_json(json::parse(dump_json(to_json(ats))));
    for (const auto& e : b) {
        CHECK(apply_ats(back, e) == apply_ats(ats, e));
    }
    const TsModel ts{1.2345678901234567};
    CHECK(ts_from_json(json::parse(dump_json(to_json(ts)))).temperature == ts.temperature);
}

TEST_CASE("reasoning depth") {
    CHECK(reasoning_depth("a\n\nb\nAnswer: x\nConfidence: 0.5") == 2);
    CHECK(reasoning_depth("a\nb\nc") == 3);
    CHECK(reasoning_depth("Answer: x") == 0);
}

TEST_CASE("P(True) replacement") {
    PredictionRecord r;
    r.verbal_confidence = 0.9;
    CHECK(ptrue_combine(r, 1.0) == 1.0);
    CHECK(r.verbal_confidence == 1.0);
    CHECK(ptrue_combine(r, 0.397) == 0.397);
    CHECK_THROWS_AS(ptrue_combine(r, 1.2), Error);

    // Wrong answers carry low affirmative probability: the overconfident-wrong rate drops.
    std::vector<calib::ScoredRecord> before;
    std::vector<calib::ScoredRecord> after;
    for (int i = 0; i < 20; ++i) {
        calib::ScoredRecord s;
        s.qid = std::to_string(i);
        s.correct = i % 2 == 0;
        s.confidence = 0.9;
        before.push_back(s);
        PredictionRecord p;
        p.verbal_confidence = 0.9;
        ptrue_combine(p, s.correct ? 0.8 : 0.2);
        s.confidence = p.verbal_confidence;
        after.push_back(s);
    }
    CHECK(overconfident_wrong_rate(before) == 0.5);
    CHECK(overconfident_wrong_rate(after) == 0.0);
}
