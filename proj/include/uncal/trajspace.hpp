#pragma once

// Finite trajectory spaces and the exponential-tilting update.
//
// A TrajectorySpace is the full distribution over reasoning trajectories for
// one input. `tilt` reweights it by exp(eta * reward) and renormalizes; the
// remaining operations measure what that reweighting does to pairwise
// log-odds, answer-level mass, and the confidence-weighted answer margin.

#include <cstddef>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "uncal/json_io.hpp"

namespace uncal::trajspace {

struct Trajectory {
    std::string id;
    std::string answer;
    double confidence = 0.0;  ///< verbalized confidence in [0,1]
    double base_prob = 0.0;   ///< probability under the current policy
    bool correct = false;     ///< answer == gold answer of the owning space
};

/// Immutable distribution over trajectories for one input.
///
/// Probabilities are held as natural logs (zero-probability trajectories hold
/// -inf) and exposed as linear probabilities through `trajectories()`.
class TrajectorySpace {
public:
    /// Validates the invariants (non-empty, unique ids, confidences in [0,1],
    /// base_prob >= 0, total mass 1 within 1e-12) and recomputes every
    /// trajectory's `correct` flag from `gold_answer`. Throws InvalidArgument.
    TrajectorySpace(std::vector<Trajectory> trajectories, std::string gold_answer);

    [[nodiscard]] const std::vector<Trajectory>& trajectories() const noexcept { return trajectories_; }
    [[nodiscard]] const std::string& gold_answer() const noexcept { return gold_answer_; }
    [[nodiscard]] std::span<const double> log_probs() const noexcept { return log_probs_; }
    [[nodiscard]] std::size_t size() const noexcept { return trajectories_.size(); }

    /// Index of the trajectory with this id; throws InvalidArgument if absent.
    [[nodiscard]] std::size_t index_of(const std::string& id) const;

    /// Distinct answers in first-appearance order.
    [[nodiscard]] std::vector<std::string> answers() const;

    /// Builds a space directly from log-probabilities (used by tilt).
    static TrajectorySpace from_log_probs(std::vector<Trajectory> trajectories, std::vector<double> log_probs,
                                          std::string gold_answer);

private:
    TrajectorySpace() = default;

    std::vector<Trajectory> trajectories_;
    std::vector<double> log_probs_;
    std::string gold_answer_;
};

enum class RewardKind { VerbalConfidence, Custom };

struct RewardSpec {
    RewardKind kind = RewardKind::VerbalConfidence;
    std::map<std::string, double> custom_values;

    static RewardSpec verbal() { return {}; }
    static RewardSpec custom(std::map<std::string, double> values) {
        return {RewardKind::Custom, std::move(values)};
    }
};

/// +confidence for a correct trajectory, -confidence otherwise; Custom looks
/// up the table (MissingReward when absent).
double reward(const Trajectory& traj, const RewardSpec& spec);

/// Reweights by exp(eta * r(z)) and renormalizes.
/// InvalidStep when eta <= 0 or not finite; NumericOverflow when eta * r > 700.
TrajectorySpace tilt(const TrajectorySpace& space, const RewardSpec& spec, double eta);

/// eta * (r(z1) - r(z2)): the exact change in log(pi(z1)/pi(z2)) under tilt.
/// UndefinedLogOdds when either trajectory has zero probability.
double log_odds_delta(const TrajectorySpace& space, const RewardSpec& spec, double eta, const std::string& z1,
                      const std::string& z2);

/// Total probability of trajectories ending in `answer`.
double answer_mass(const TrajectorySpace& space, const std::string& answer);

/// Sum of base_prob * confidence over trajectories ending in `answer`.
double confidence_weighted_score(const TrajectorySpace& space, const std::string& answer);

/// Score of the gold answer minus the best competing score (or the gold score
/// itself when there is no competitor).
double answer_margin(const TrajectorySpace& space);

struct BoundCheck {
    double a = 0.0;    ///< lower reward bound over correct-answer trajectories
    double b = 0.0;    ///< upper reward bound over competing-answer trajectories
    double lhs = 0.0;  ///< M'(correct) / M'(competing)
    double rhs = 0.0;  ///< exp(eta (a - b)) * M(correct) / M(competing)
    bool holds = false;
    bool support_preserved = false;
};

inline constexpr double kBoundTolerance = 1e-10;

/// Checks the answer-mass ratio bound for one (correct, competing) answer pair
/// with a = min reward over `correct` trajectories and b = max over
/// `competing` trajectories. HypothesisViolated when a <= b; DegenerateRatio
/// when either answer has no trajectories or zero mass.
BoundCheck verify_mass_ratio_bound(const TrajectorySpace& space, const RewardSpec& spec, double eta,
                                   const std::string& correct, const std::string& competing);

/// Same bound under the verbal-confidence reward with a = alpha (min confidence
/// over correct trajectories) and b = -beta (min confidence over competing
/// ones). `correct` must be the gold answer and `competing` must differ from
/// it, otherwise HypothesisViolated.
BoundCheck verbal_specialized_bound(const TrajectorySpace& space, double eta, const std::string& correct,
                                    const std::string& competing);

struct StepSummary {
    double gold_mass = 0.0;
    double margin = 0.0;
    /// E[confidence | wrong]; absent when no wrong trajectory carries mass.
    std::optional<double> wrong_confidence;
};

struct TiltStep {
    std::size_t step = 0;
    TrajectorySpace space;
    StepSummary summary;
};

StepSummary summarize(const TrajectorySpace& space);

/// Applies tilt `steps` times (steps >= 1, else InvalidArgument).
std::vector<TiltStep> iterate_tilt(const TrajectorySpace& space, const RewardSpec& spec, double eta,
                                   std::size_t steps);

/// Whole-space report used by `uncal theory verify`.
struct SpaceReport {
    std::size_t index = 0;
    std::string status;  ///< "ok", or the ErrorKind name that stopped the bound check
    std::optional<std::string> competing;
    std::optional<BoundCheck> bound;
    std::optional<BoundCheck> verbal_bound;
    double max_log_odds_error = 0.0;
    bool normalized = false;
    bool support_preserved = false;
    bool compression_ordered = false;
};

/// Runs every check on one space with the verbal-confidence reward. The
/// competing answer is the non-gold answer with the largest mass (ties to the
/// lexicographically smallest label).
SpaceReport verify_space(const TrajectorySpace& space, double eta);

/// verify_space over a batch; spaces are independent so this fans out with
/// OpenMP. `verify_batch_serial` is the single-threaded reference.
std::vector<SpaceReport> verify_batch(std::span<const TrajectorySpace> spaces, double eta);
std::vector<SpaceReport> verify_batch_serial(std::span<const TrajectorySpace> spaces, double eta);

/// True when, among wrong trajectories, the post/pre probability ratio is
/// strictly decreasing in confidence and, among correct ones, strictly
/// increasing (pairs with equal confidence are skipped).
bool compression_ordering_holds(const TrajectorySpace& before, const TrajectorySpace& after);

// Serialization: {gold_answer, trajectories:[{id, answer, confidence, base_prob}]}.
TrajectorySpace space_from_json(const json& j);
json space_to_json(const TrajectorySpace& space);
json to_json(const BoundCheck& check);
json to_json(const SpaceReport& report);
json to_json(const StepSummary& summary);

}  // namespace uncal::trajspace
