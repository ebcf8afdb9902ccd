#include "uncal/trajspace_gen.hpp"

#include <algorithm>
#include <numeric>

namespace uncal::trajspace {

TrajectorySpace random_space(std::mt19937_64& rng, const GeneratorOptions& options) {
    std::uniform_int_distribution<std::size_t> count_dist(options.min_trajectories, options.max_trajectories);
    std::uniform_int_distribution<std::size_t> answer_dist(0, options.alphabet.size() - 1);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    std::exponential_distribution<double> gamma1(1.0);

    const std::size_t n = count_dist(rng);
    std::vector<double> weights(n);
    for (auto& w : weights) {
        w = gamma1(rng);
    }
    const double total = std::accumulate(weights.begin(), weights.end(), 0.0);

    std::vector<Trajectory> trajectories(n);
    double assigned = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        auto& t = trajectories[i];
        t.id = "z" + std::to_string(i);
        t.answer = options.alphabet[answer_dist(rng)];
        t.confidence = unit(rng);
        t.base_prob = weights[i] / total;
        assigned += t.base_prob;
    }
    // Put the rounding residue on the largest entry so the sum is 1 to the last bit or two.
    auto largest = std::max_element(trajectories.begin(), trajectories.end(),
                                    [](const auto& x, const auto& y) { return x.base_prob < y.base_prob; });
    largest->base_prob += 1.0 - assigned;
    return TrajectorySpace(std::move(trajectories), options.gold_answer);
}

std::vector<TrajectorySpace> random_spaces(std::uint64_t seed, std::size_t count, const GeneratorOptions& options) {
    std::mt19937_64 rng(seed);
    std::vector<TrajectorySpace> spaces;
    spaces.reserve(count);
    for (std::size_t i = 0; i < count; ++i) {
        spaces.push_back(random_space(rng, options));
    }
    return spaces;
}

}  // namespace uncal::trajspace
