#include "uncal/trajspace.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <exception>
#include <limits>
#include <unordered_set>

#include "uncal/error.hpp"

namespace uncal::trajspace {

namespace {

constexpr double kNormalizationTolerance = 1e-12;
constexpr double kMaxExponent = 700.0;
constexpr double kNegInf = -std::numeric_limits<double>::infinity();

void validate(const std::vector<Trajectory>& trajectories) {
    if (trajectories.empty()) {
        throw Error(ErrorKind::InvalidArgument, "trajectory space is empty");
    }
    std::unordered_set<std::string> ids;
    double total = 0.0;
    for (const auto& t : trajectories) {
        if (!ids.insert(t.id).second) {
            throw Error(ErrorKind::InvalidArgument, "duplicate trajectory id '" + t.id + "'");
        }
        if (!(t.confidence >= 0.0 && t.confidence <= 1.0)) {
            throw Error(ErrorKind::InvalidArgument, "confidence of '" + t.id + "' outside [0,1]");
        }
        if (!(t.base_prob >= 0.0) || !std::isfinite(t.base_prob)) {
            throw Error(ErrorKind::InvalidArgument, "base_prob of '" + t.id + "' is negative or not finite");
        }
        total += t.base_prob;
    }
    if (std::abs(total - 1.0) > kNormalizationTolerance) {
        throw Error(ErrorKind::InvalidArgument, "base probabilities sum to " + std::to_string(total));
    }
}

double log_sum_exp(std::span<const double> xs) {
    double peak = kNegInf;
    for (double x : xs) {
        peak = std::max(peak, x);
    }
    if (peak == kNegInf) {
        return kNegInf;
    }
    double sum = 0.0;
    for (double x : xs) {
        sum += std::exp(x - peak);
    }
    return peak + std::log(sum);
}

// Log of the mass carried by trajectories ending in `answer`.
double log_answer_mass(const TrajectorySpace& space, const std::string& answer) {
    std::vector<double> terms;
    for (std::size_t i = 0; i < space.size(); ++i) {
        if (space.trajectories()[i].answer == answer) {
            terms.push_back(space.log_probs()[i]);
        }
    }
    return log_sum_exp(terms);
}

BoundCheck check_bound(const TrajectorySpace& space, const RewardSpec& spec, double eta, const std::string& correct,
                       const std::string& competing, double a, double b) {
    const double log_before_correct = log_answer_mass(space, correct);
    const double log_before_competing = log_answer_mass(space, competing);
    if (log_before_correct == kNegInf || log_before_competing == kNegInf) {
        throw Error(ErrorKind::DegenerateRatio, "an answer in the ratio has zero mass");
    }
    const auto after = tilt(space, spec, eta);
    const double log_after_correct = log_answer_mass(after, correct);
    const double log_after_competing = log_answer_mass(after, competing);

    BoundCheck check;
    check.a = a;
    check.b = b;
    check.lhs = std::exp(log_after_correct - log_after_competing);
    check.rhs = std::exp(eta * (a - b) + log_before_correct - log_before_competing);
    check.holds = check.lhs >= check.rhs - kBoundTolerance;
    check.support_preserved = true;
    for (std::size_t i = 0; i < space.size(); ++i) {
        const bool before_positive = space.trajectories()[i].base_prob > 0.0;
        const bool after_positive = after.trajectories()[i].base_prob > 0.0;
        check.support_preserved = check.support_preserved && (before_positive == after_positive);
    }
    return check;
}

void require_answers_present(const TrajectorySpace& space, const std::string& correct,
                             const std::string& competing) {
    bool has_correct = false;
    bool has_competing = false;
    for (const auto& t : space.trajectories()) {
        has_correct = has_correct || t.answer == correct;
        has_competing = has_competing || t.answer == competing;
    }
    if (!has_correct || !has_competing) {
        throw Error(ErrorKind::DegenerateRatio, "answer '" + (has_correct ? competing : correct) +
                                                    "' produced by no trajectory");
    }
    if (correct == competing) {
        throw Error(ErrorKind::HypothesisViolated, "correct and competing answers coincide");
    }
}

}  // namespace

TrajectorySpace::TrajectorySpace(std::vector<Trajectory> trajectories, std::string gold_answer)
    : trajectories_(std::move(trajectories)), gold_answer_(std::move(gold_answer)) {
    validate(trajectories_);
    log_probs_.reserve(trajectories_.size());
    for (auto& t : trajectories_) {
        t.correct = t.answer == gold_answer_;
        log_probs_.push_back(t.base_prob > 0.0 ? std::log(t.base_prob) : kNegInf);
    }
}

TrajectorySpace TrajectorySpace::from_log_probs(std::vector<Trajectory> trajectories, std::vector<double> log_probs,
                                                std::string gold_answer) {
    if (trajectories.size() != log_probs.size()) {
        throw Error(ErrorKind::InvalidArgument, "log-probability count differs from trajectory count");
    }
    for (std::size_t i = 0; i < trajectories.size(); ++i) {
        trajectories[i].base_prob = std::exp(log_probs[i]);
        trajectories[i].correct = trajectories[i].answer == gold_answer;
    }
    validate(trajectories);
    TrajectorySpace space;
    space.trajectories_ = std::move(trajectories);
    space.log_probs_ = std::move(log_probs);
    space.gold_answer_ = std::move(gold_answer);
    return space;
}

std::size_t TrajectorySpace::index_of(const std::string& id) const {
    for (std::size_t i = 0; i < trajectories_.size(); ++i) {
        if (trajectories_[i].id == id) {
            return i;
        }
    }
    throw Error(ErrorKind::InvalidArgument, "no trajectory with id '" + id + "'");
}

std::vector<std::string> TrajectorySpace::answers() const {
    std::vector<std::string> out;
    for (const auto& t : trajectories_) {
        if (std::find(out.begin(), out.end(), t.answer) == out.end()) {
            out.push_back(t.answer);
        }
    }
    return out;
}

double reward(const Trajectory& traj, const RewardSpec& spec) {
    switch (spec.kind) {
        case RewardKind::VerbalConfidence:
            return traj.correct ? traj.confidence : -traj.confidence;
        case RewardKind::Custom: {
            const auto it = spec.custom_values.find(traj.id);
            if (it == spec.custom_values.end()) {
                throw Error(ErrorKind::MissingReward, "no custom reward for trajectory '" + traj.id + "'");
            }
            return it->second;
        }
    }
    throw Error(ErrorKind::InvalidArgument, "unknown reward kind");
}

TrajectorySpace tilt(const TrajectorySpace& space, const RewardSpec& spec, double eta) {
    if (!(eta > 0.0) || !std::isfinite(eta)) {
        throw Error(ErrorKind::InvalidStep, "eta must be positive and finite");
    }
    std::vector<double> logits(space.size());
    for (std::size_t i = 0; i < space.size(); ++i) {
        const double exponent = eta * reward(space.trajectories()[i], spec);
        if (exponent > kMaxExponent) {
            throw Error(ErrorKind::NumericOverflow, "eta * reward exceeds 700");
        }
        logits[i] = space.log_probs()[i] + exponent;
    }
    const double log_partition = log_sum_exp(logits);
    for (auto& v : logits) {
        v -= log_partition;
    }
    return TrajectorySpace::from_log_probs(space.trajectories(), std::move(logits), space.gold_answer());
}

double log_odds_delta(const TrajectorySpace& space, const RewardSpec& spec, double eta, const std::string& z1,
                      const std::string& z2) {
    const auto& t1 = space.trajectories()[space.index_of(z1)];
    const auto& t2 = space.trajectories()[space.index_of(z2)];
    if (!(t1.base_prob > 0.0) || !(t2.base_prob > 0.0)) {
        throw Error(ErrorKind::UndefinedLogOdds, "log-odds undefined for a zero-probability trajectory");
    }
    return eta * (reward(t1, spec) - reward(t2, spec));
}

double answer_mass(const TrajectorySpace& space, const std::string& answer) {
    double mass = 0.0;
    for (const auto& t : space.trajectories()) {
        if (t.answer == answer) {
            mass += t.base_prob;
        }
    }
    return mass;
}

double confidence_weighted_score(const TrajectorySpace& space, const std::string& answer) {
    double score = 0.0;
    for (const auto& t : space.trajectories()) {
        if (t.answer == answer) {
            score += t.base_prob * t.confidence;
        }
    }
    return score;
}

double answer_margin(const TrajectorySpace& space) {
    const double gold = confidence_weighted_score(space, space.gold_answer());
    std::optional<double> best_competitor;
    for (const auto& answer : space.answers()) {
        if (answer == space.gold_answer()) {
            continue;
        }
        const double s = confidence_weighted_score(space, answer);
        best_competitor = best_competitor ? std::max(*best_competitor, s) : s;
    }
    return best_competitor ? gold - *best_competitor : gold;
}

BoundCheck verify_mass_ratio_bound(const TrajectorySpace& space, const RewardSpec& spec, double eta,
                                   const std::string& correct, const std::string& competing) {
    require_answers_present(space, correct, competing);
    double a = std::numeric_limits<double>::infinity();
    double b = -std::numeric_limits<double>::infinity();
    for (const auto& t : space.trajectories()) {
        if (t.answer == correct) {
            a = std::min(a, reward(t, spec));
        } else if (t.answer == competing) {
            b = std::max(b, reward(t, spec));
        }
    }
    if (a <= b) {
        throw Error(ErrorKind::HypothesisViolated, "min correct reward does not exceed max competing reward");
    }
    return check_bound(space, spec, eta, correct, competing, a, b);
}

BoundCheck verbal_specialized_bound(const TrajectorySpace& space, double eta, const std::string& correct,
                                    const std::string& competing) {
    require_answers_present(space, correct, competing);
    if (correct != space.gold_answer()) {
        throw Error(ErrorKind::HypothesisViolated, "verbal bound needs the gold answer as the correct label");
    }
    double alpha = std::numeric_limits<double>::infinity();
    double beta = std::numeric_limits<double>::infinity();
    for (const auto& t : space.trajectories()) {
        if (t.answer == correct) {
            alpha = std::min(alpha, t.confidence);
        } else if (t.answer == competing) {
            beta = std::min(beta, t.confidence);
        }
    }
    // alpha = beta = 0 gives a = b; the bound then states non-decrease and still holds.
    return check_bound(space, RewardSpec::verbal(), eta, correct, competing, alpha, -beta);
}

StepSummary summarize(const TrajectorySpace& space) {
    StepSummary s;
    s.gold_mass = answer_mass(space, space.gold_answer());
    s.margin = answer_margin(space);
    double wrong_mass = 0.0;
    double wrong_conf = 0.0;
    for (const auto& t : space.trajectories()) {
        if (!t.correct) {
            wrong_mass += t.base_prob;
            wrong_conf += t.base_prob * t.confidence;
        }
    }
    if (wrong_mass > 0.0) {
        s.wrong_confidence = wrong_conf / wrong_mass;
    }
    return s;
}

std::vector<TiltStep> iterate_tilt(const TrajectorySpace& space, const RewardSpec& spec, double eta,
                                   std::size_t steps) {
    if (steps == 0) {
        throw Error(ErrorKind::InvalidArgument, "steps must be at least 1");
    }
    std::vector<TiltStep> out;
    out.reserve(steps);
    TrajectorySpace current = space;
    for (std::size_t k = 1; k <= steps; ++k) {
        current = tilt(current, spec, eta);
        out.push_back({k, current, summarize(current)});
    }
    return out;
}

bool compression_ordering_holds(const TrajectorySpace& before, const TrajectorySpace& after) {
    const auto& ts = before.trajectories();
    for (std::size_t i = 0; i < ts.size(); ++i) {
        for (std::size_t j = 0; j < ts.size(); ++j) {
            if (i == j || ts[i].correct != ts[j].correct || !(ts[i].confidence > ts[j].confidence)) {
                continue;
            }
            if (!(ts[i].base_prob > 0.0 && ts[j].base_prob > 0.0)) {
                continue;
            }
            const double ratio_i = after.log_probs()[i] - before.log_probs()[i];
            const double ratio_j = after.log_probs()[j] - before.log_probs()[j];
            // i is the more confident of the pair.
            const bool ordered = ts[i].correct ? ratio_i > ratio_j : ratio_i < ratio_j;
            if (!ordered) {
                return false;
            }
        }
    }
    return true;
}

SpaceReport verify_space(const TrajectorySpace& space, double eta) {
    const auto spec = RewardSpec::verbal();
    SpaceReport report;
    report.status = "ok";
    const auto after = tilt(space, spec, eta);

    double total = 0.0;
    report.support_preserved = true;
    for (std::size_t i = 0; i < space.size(); ++i) {
        total += after.trajectories()[i].base_prob;
        report.support_preserved = report.support_preserved && ((space.trajectories()[i].base_prob > 0.0) ==
                                                                 (after.trajectories()[i].base_prob > 0.0));
    }
    report.normalized = std::abs(total - 1.0) <= kNormalizationTolerance;

    const auto& ts = space.trajectories();
    for (std::size_t i = 0; i < ts.size(); ++i) {
        for (std::size_t j = i + 1; j < ts.size(); ++j) {
            if (!(ts[i].base_prob > 0.0 && ts[j].base_prob > 0.0)) {
                continue;
            }
            const double measured = (std::log(after.trajectories()[i].base_prob) -
                                     std::log(after.trajectories()[j].base_prob)) -
                                    (std::log(ts[i].base_prob) - std::log(ts[j].base_prob));
            const double predicted = log_odds_delta(space, spec, eta, ts[i].id, ts[j].id);
            report.max_log_odds_error = std::max(report.max_log_odds_error, std::abs(measured - predicted));
        }
    }
    report.compression_ordered = compression_ordering_holds(space, after);

    std::optional<std::string> competing;
    double competing_mass = -1.0;
    for (const auto& answer : space.answers()) {
        if (answer == space.gold_answer()) {
            continue;
        }
        const double m = answer_mass(space, answer);
        if (m > competing_mass || (m == competing_mass && answer < *competing)) {
            competing = answer;
            competing_mass = m;
        }
    }
    report.competing = competing;
    if (!competing) {
        report.status = "no_competitor";
        return report;
    }
    try {
        report.bound = verify_mass_ratio_bound(space, spec, eta, space.gold_answer(), *competing);
    } catch (const Error& e) {
        report.status = std::string(to_string(e.kind()));
    }
    try {
        report.verbal_bound = verbal_specialized_bound(space, eta, space.gold_answer(), *competing);
    } catch (const Error&) {
        // Same degenerate cases as above; status already records them.
    }
    return report;
}

std::vector<SpaceReport> verify_batch(std::span<const TrajectorySpace> spaces, double eta) {
    std::vector<SpaceReport> reports(spaces.size());
    std::vector<std::exception_ptr> failures(spaces.size());
    const auto n = static_cast<std::int64_t>(spaces.size());
#pragma omp parallel for schedule(dynamic, 16)
    for (std::int64_t i = 0; i < n; ++i) {
        const auto k = static_cast<std::size_t>(i);
        try {
            reports[k] = verify_space(spaces[k], eta);
            reports[k].index = k;
        } catch (...) {
            failures[k] = std::current_exception();
        }
    }
    for (const auto& failure : failures) {
        if (failure) {
            std::rethrow_exception(failure);
        }
    }
    return reports;
}

std::vector<SpaceReport> verify_batch_serial(std::span<const TrajectorySpace> spaces, double eta) {
    std::vector<SpaceReport> reports;
    reports.reserve(spaces.size());
    for (std::size_t k = 0; k < spaces.size(); ++k) {
        reports.push_back(verify_space(spaces[k], eta));
        reports.back().index = k;
    }
    return reports;
}

TrajectorySpace space_from_json(const json& j) {
    std::vector<Trajectory> trajectories;
    for (const auto& t : j.at("trajectories")) {
        Trajectory traj;
        traj.id = t.at("id").is_string() ? t.at("id").get<std::string>() : t.at("id").dump();
        traj.answer = t.at("answer").get<std::string>();
        traj.confidence = t.at("confidence").get<double>();
        traj.base_prob = t.at("base_prob").get<double>();
        trajectories.push_back(std::move(traj));
    }
    return TrajectorySpace(std::move(trajectories), j.at("gold_answer").get<std::string>());
}

json space_to_json(const TrajectorySpace& space) {
    json trajectories = json::array();
    for (const auto& t : space.trajectories()) {
        trajectories.push_back(
            {{"id", t.id}, {"answer", t.answer}, {"confidence", t.confidence}, {"base_prob", t.base_prob}});
    }
    return {{"gold_answer", space.gold_answer()}, {"trajectories", std::move(trajectories)}};
}

json to_json(const BoundCheck& check) {
    return {{"a", check.a},       {"b", check.b},         {"lhs", check.lhs},
            {"rhs", check.rhs},   {"holds", check.holds}, {"support_preserved", check.support_preserved}};
}

json to_json(const SpaceReport& report) {
    json j{{"index", report.index},
           {"status", report.status},
           {"max_log_odds_error", report.max_log_odds_error},
           {"normalized", report.normalized},
           {"support_preserved", report.support_preserved},
           {"compression_ordered", report.compression_ordered}};
    j["competing"] = report.competing ? json(*report.competing) : json(nullptr);
    j["bound"] = report.bound ? to_json(*report.bound) : json(nullptr);
    j["verbal_bound"] = report.verbal_bound ? to_json(*report.verbal_bound) : json(nullptr);
    return j;
}

json to_json(const StepSummary& summary) {
    json j{{"gold_mass", summary.gold_mass}, {"margin", summary.margin}};
    j["wrong_confidence"] = summary.wrong_confidence ? json(*summary.wrong_confidence) : json(nullptr);
    return j;
}

}  // namespace uncal::trajspace
