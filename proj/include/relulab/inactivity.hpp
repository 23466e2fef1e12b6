#pragma once

#include <cstdint>
#include <vector>

#include "relulab/network.hpp"
#include "relulab/probability.hpp"

namespace relulab {

// First-layer neurons (1-based) whose preactivation is negative on all of [a,b]^d.
std::vector<std::size_t> inactive_set(const Architecture& arch, const Vec& theta, double a, double b);

// Supremum of the preactivation of first-layer neuron i over [a,b]^d.
double neuron_sup(const Architecture& arch, const Vec& theta, std::size_t i, double a, double b);

// Layers k in 2..L whose whole parameter block is strictly negative.
std::vector<std::size_t> dead_blocks(const Architecture& arch, const Vec& theta);

struct PersistenceReport {
    std::vector<bool> contained;  // I(theta_0) subset of I(theta_n), per step
    std::vector<bool> frozen;     // inactive-neuron parameters bit-identical to theta_0, per step
    bool all() const;
};

PersistenceReport persistence_check(const Architecture& arch, const std::vector<Vec>& trajectory,
                                    double a, double b);

struct VanishingReport {
    std::vector<std::size_t> neurons;  // inactive first-layer neurons checked
    std::vector<bool> neuron_ok;
    std::vector<std::size_t> blocks;   // hidden dead blocks checked (k <= L-1)
    std::vector<bool> block_ok;
    std::vector<std::size_t> skipped_blocks;  // dead output block: no vanishing claim
    bool all() const;
};

VanishingReport vanishing_gradient_check(const Architecture& arch, const Vec& theta,
                                         const Dataset& batch, double a, double b);

// Fraction of N seeded initializations with #I >= m. Sample i draws from the
// stream (seed, run, i).
McEstimate mc_inactive_probability(const Architecture& arch, const InitDistribution& dist, double a,
                                   double b, std::size_t m, std::size_t samples, std::uint64_t seed,
                                   std::uint64_t run = 0, std::size_t workers = 1);

// Fraction of first-layer neurons that are inactive, pooled over N initializations.
McEstimate mc_per_neuron_probability(const Architecture& arch, const InitDistribution& dist, double a,
                                     double b, std::size_t samples, std::uint64_t seed,
                                     std::uint64_t run = 0, std::size_t workers = 1);

McEstimate mc_dead_block_probability(const Architecture& arch, const InitDistribution& dist,
                                     std::size_t samples, std::uint64_t seed, std::uint64_t run = 0,
                                     std::size_t workers = 1);

}  // namespace relulab
