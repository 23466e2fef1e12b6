#pragma once

#include <array>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "relulab/network.hpp"
#include "relulab/rng.hpp"

namespace relulab {

// Three ReLU units along one direction w summing to delta at X^k and 0 at
// every other data point.
struct SeparationTriple {
    Vec w;
    double B = 0.0;
    double eps = 0.0;
    double delta = 0.0;
    std::array<double, 3> a{};
    std::array<double, 3> b{};
    std::size_t k = 0;  // 0-based data index

    double operator()(std::span<const double> x) const;
};

SeparationTriple bump_with_direction(const std::vector<Vec>& X, std::size_t k, double delta, Vec w);
// Draws random unit directions until every other point has a nonzero offset.
SeparationTriple indicator_bump(const std::vector<Vec>& X, std::size_t k, double delta, Rng& rng);

struct RetargetResult {
    Vec theta;
    std::array<std::size_t, 3> neurons{};  // 1-based first-layer slots used for the bump
    double t_star = 0.0;
    std::size_t iterations = 0;
    Vec delta;  // shift of the layer-2 preactivation at the target point
    SeparationTriple bump;
};

// Moves the output at data point p (0-based) to Z using three inactive
// first-layer neurons; p1, p2 bracket Z by their current outputs.
RetargetResult retarget_point(const Architecture& arch, const Vec& theta, const Dataset& data,
                              std::size_t p, double Z, std::size_t p1, std::size_t p2, Rng& rng);

struct OutputClassification {
    Vec current;                                // network outputs at the data points
    std::vector<std::size_t> argmin, equal, argmax;  // A_{-1}, A_0, A_1
    std::vector<std::size_t> over_low, over_high;    // M_{-1}, M_1
    const std::vector<std::size_t>& A(int z) const { return z < 0 ? argmin : z > 0 ? argmax : equal; }
    const std::vector<std::size_t>& Mz(int z) const { return z < 0 ? over_low : over_high; }
};

OutputClassification classify_outputs(const Vec& current, const Vec& targets);

struct Certificate {
    std::string case_id;  // constant | interior-point | extreme-mismatch | affine-tweak
    double old_risk = 0.0;
    double new_risk = 0.0;
    double margin = 0.0;
    Vec theta;
    nlohmann::json diagnostics = nlohmann::json::object();
    bool improved() const { return margin > 0.0; }
};

// x -> Q + a * ReLU(<w,x> + b) with the scalar on the output weight.
Certificate constant_case_improve(const Architecture& arch, const Dataset& data, double Q, Rng& rng);

Certificate improve_risk(const Architecture& arch, const Vec& theta, const Dataset& data, double a,
                         double b, Rng& rng);

struct TrajectoryWitness {
    bool certifiable = false;
    std::string outcome;  // "witness", "no-gap", "not certifiable: ..."
    std::size_t inactive_at_init = 0;
    double trajectory_min_risk = 0.0;
    std::optional<Certificate> certificate;
    double gap = 0.0;  // trajectory_min_risk - certificate risk
    bool witness() const { return certifiable && gap > 0.0; }
};

TrajectoryWitness certify_trajectory(const Architecture& arch, const Vec& theta0, const Vec& theta_final,
                                     const Vec& risks, const Dataset& data, double a, double b, Rng& rng);

nlohmann::json certificate_to_json(const Certificate& c, const std::string& theta_path);

}  // namespace relulab
