#include <random>

#include "doctest.h"
#include "uncal/error.hpp"
#include "uncal/metrics.hpp"
#include "uncal/ragctl.hpp"
#include "uncal/rewards.hpp"

using namespace uncal;
using namespace uncal::ragctl;

namespace {

RagTraceRecord trace(std::string qid, bool noret_right, bool ret_right, double conf = 0.5) {
    RagTraceRecord r;
    r.qid = std::move(qid);
    r.dataset = "d";
    r.gold_answers = {"paris"};
    r.noret_answer = noret_right ? "Paris" : "London";
    r.ret_answer = ret_right ? "Paris" : "Rome";
    r.noret_confidence = conf;
    return r;
}

std::vector<RagTraceRecord> load_fixture() {
    const auto loaded = load_traces(std::string(UNCAL_TEST_DATA) + "/rag_traces_20.jsonl");
    REQUIRE(loaded.errors.empty());
    return loaded.items;
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

TEST_CASE("decide boundaries") {
    auto r = trace("a", true, true, 0.5);
    CHECK_FALSE(decide(ControllerPolicy::parse("never"), r));
    CHECK(decide(ControllerPolicy::parse("always"), r));
    CHECK_FALSE(decide(ControllerPolicy::parse("conf:0.5"), r));
    CHECK(decide(ControllerPolicy::parse("conf:0.51"), r));
    r.noret_token_probs = std::vector<double>{0.4, 0.9, 1.0};
    CHECK_FALSE(decide(ControllerPolicy::parse("flare:0.4"), r));
    r.noret_token_probs = std::vector<double>{0.4, 0.39, 1.0};
    CHECK(decide(ControllerPolicy::parse("flare:0.4:3"), r));
    CHECK_FALSE(decide(ControllerPolicy::parse("emit"), r));
    CHECK_FALSE(decide(ControllerPolicy::parse("emit+probe:0.6"), r));
    r.noret_emissions = 1;
    CHECK(decide(ControllerPolicy::parse("emit"), r));
    expect_kind(ErrorKind::MissingSignal, [&] { decide(ControllerPolicy::parse("emit+probe:0.6"), r); });
    r.noret_probe_score = 0.6;
    CHECK(decide(ControllerPolicy::parse("emit+probe:0.6"), r));
    r.noret_confidence.reset();
    expect_kind(ErrorKind::MissingSignal, [&] { decide(ControllerPolicy::parse("conf:0.5"), r); });
    expect_kind(ErrorKind::MissingSignal, [&] { decide(ControllerPolicy::parse("external"), r); });
}

TEST_CASE("policy parsing") {
    CHECK(ControllerPolicy::parse("conf:0.25").describe() == "conf:0.25");
    CHECK(ControllerPolicy::parse("flare:0.4").window == 1);
    CHECK(ControllerPolicy::parse("flare:0.4:5").window == 5);
    for (const char* bad : {"conf", "conf:1.5", "conf:x", "bogus", "always:1", "flare:0.4:0", "emit+probe:-1"}) {
        CHECK_THROWS_AS(ControllerPolicy::parse(bad), Error);
    }
}

TEST_CASE("four-record hand fixture") {
    std::vector<RagTraceRecord> rs{trace("w1", false, true, 0.1), trace("w2", false, false, 0.9),
                                   trace("c1", true, true, 0.2), trace("c2", true, true, 0.8)};
    const auto rep = simulate(ControllerPolicy::parse("conf:0.5"), rs);
    CHECK(rep.triggered == 2);
    CHECK(rep.trigger_rate == 0.5);
    CHECK(rep.trigger_precision == 0.5);
    CHECK(rep.trigger_recall == 0.5);
    CHECK(rep.global_wrong_coverage == 0.5);
    CHECK(rep.untouched_accuracy == 0.5);
    CHECK(rep.final_accuracy == 0.75);
}

TEST_CASE("always and never reproduce retrieval-only and no-retrieval accounting") {
    const auto rs = load_fixture();
    const auto always = simulate(ControllerPolicy::parse("always"), rs);
    const auto never = simulate(ControllerPolicy::parse("never"), rs);
    std::size_t ret_ok = 0;
    std::size_t noret_ok = 0;
    for (const auto& r : rs) {
        ret_ok += rewards::match_answer(r.ret_answer, r.gold_answers).correct;
        noret_ok += rewards::match_answer(r.noret_answer, r.gold_answers).correct;
    }
    CHECK(always.trigger_rate == 1.0);
    CHECK(always.final_accuracy == static_cast<double>(ret_ok) / rs.size());
    CHECK(always.global_wrong_coverage == 1.0);
    CHECK(never.trigger_rate == 0.0);
    CHECK(never.final_accuracy == static_cast<double>(noret_ok) / rs.size());
    CHECK(never.untouched_accuracy == never.noret_accuracy);
    CHECK_FALSE(never.trigger_precision.has_value());
}

TEST_CASE("absent cells when there is nothing to divide") {
    std::vector<RagTraceRecord> all_right{trace("a", true, true), trace("b", true, false)};
    const auto rep = simulate(ControllerPolicy::parse("always"), all_right);
    CHECK_FALSE(rep.global_wrong_coverage.has_value());
    CHECK_FALSE(rep.trigger_recall.has_value());
    CHECK_FALSE(rep.untouched_accuracy.has_value());
    expect_kind(ErrorKind::EmptyBatch, [] { simulate(ControllerPolicy::parse("always"), {}); });
}

TEST_CASE("hedging cue counting") {
    CHECK(count_hedging_cues("I think it might be X, but I'm not sure") == 2);
    CHECK(count_hedging_cues("plain statement") == 0);
    CHECK(count_hedging_cues("PROBABLY probably") == 2);
}

TEST_CASE("surface classifier separates a cue-marked fixture") {
    std::vector<RagTraceRecord> rs;
    std::vector<int> labels;
    for (int i = 0; i < 20; ++i) {
        auto r = trace("q" + std::to_string(i), i % 2 == 1, true);
        r.noret_response = i % 2 == 0 ? "I couldn't find anything.\nAnswer: London" : "Known fact.\nAnswer: Paris";
        rs.push_back(r);
    }
    labels = wrongness_labels(rs);
    CHECK(classifier_auroc(rs, labels) == 1.0);

    for (auto& r : rs) {
        r.noret_response = "same text\nAnswer: x";
    }
    expect_kind(ErrorKind::UndefinedMetric, [&] { classifier_auroc(rs, labels); });
    ControllerPolicy p;
    p.kind = PolicyKind::FeatureClassifier;
    CHECK_THROWS_AS(p.validate(), Error);
}

TEST_CASE("threshold sweep") {
    const auto rs = load_fixture();
    const std::vector<double> grid{0.0, 1.0};
    const auto reps = sweep_threshold(ControllerPolicy::parse("conf:0.5"), rs, grid);
    const auto never = simulate(ControllerPolicy::parse("never"), rs);
    const auto always = simulate(ControllerPolicy::parse("always"), rs);
    CHECK(to_json(reps[0]) == to_json(never));
    CHECK(to_json(reps[1]) == to_json(always));
    const std::vector<double> one{0.5};
    CHECK(to_json(sweep_threshold(ControllerPolicy::parse("conf:0.1"), rs, one)[0]) ==
          to_json(simulate(ControllerPolicy::parse("conf:0.5"), rs)));
    CHECK_THROWS_AS(sweep_threshold(ControllerPolicy::parse("conf:0.5"), rs, std::vector<double>{}), Error);
    CHECK_THROWS_AS(sweep_threshold(ControllerPolicy::parse("emit"), rs, grid), Error);
}

TEST_CASE("report invariants on random fixtures") {
    std::mt19937_64 rng(31);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    for (int t = 0; t < 100; ++t) {
        std::vector<RagTraceRecord> rs;
        for (int i = 0; i < 15; ++i) {
            rs.push_back(trace(std::to_string(i), unit(rng) < 0.5, unit(rng) < 0.6, unit(rng)));
        }
        const auto rep = simulate(ControllerPolicy::parse("conf:0.6"), rs);
        if (rep.trigger_precision) {
            CHECK(*rep.trigger_precision * rep.triggered == doctest::Approx(rep.wrong_within_triggered));
        }
        std::size_t untouched = 0;
        for (const auto& r : rs) {
            untouched += !decide(ControllerPolicy::parse("conf:0.6"), r);
        }
        CHECK(untouched + rep.triggered == rep.n);
        for (double v : {rep.trigger_rate, rep.final_accuracy, rep.final_em, rep.final_f1}) {
            CHECK(v >= 0.0);
            CHECK(v <= 1.0);
        }
    }
}

TEST_CASE("per-dataset csv") {
    const auto rows = simulate_by_dataset(ControllerPolicy::parse("always"), load_fixture());
    REQUIRE(rows.size() == 2);
    CHECK(rows[0].first == "hotpotqa");
    const auto csv = dataset_csv(rows);
    CHECK(csv.rfind("dataset,n,em,f1,t\nhotpotqa,10,", 0) == 0);
}
