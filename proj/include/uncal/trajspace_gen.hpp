#pragma once

#include <cstdint>
#include <random>
#include <vector>

#include "uncal/trajspace.hpp"

namespace uncal::trajspace {

struct GeneratorOptions {
    std::size_t min_trajectories = 2;
    std::size_t max_trajectories = 20;
    std::vector<std::string> alphabet{"A", "B", "C"};
    std::string gold_answer = "A";
};

/// Random space for property checks: trajectory count uniform in
/// [min, max], Dirichlet(1) base probabilities, confidences uniform in [0,1],
/// answers uniform over the alphabet.
TrajectorySpace random_space(std::mt19937_64& rng, const GeneratorOptions& options = {});

std::vector<TrajectorySpace> random_spaces(std::uint64_t seed, std::size_t count,
                                           const GeneratorOptions& options = {});

}  // namespace uncal::trajspace
