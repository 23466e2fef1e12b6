#pragma once

#include <string>
#include <vector>

#include "relulab/network.hpp"

namespace relulab {

enum class GradMethod { backprop_limit, backprop_smoothed, path_sum, finite_difference };

struct GradientResult {
    Vec g;
    GradMethod method = GradMethod::backprop_limit;
    double param = 0.0;  // r for the smoothed gradient, h for finite differences
    std::string describe() const;
};

// Which side of the ReLU kink gets derivative 1. The generalized gradient uses
// the open convention; the closed one exists only as a negative control.
enum class Kink { open, closed };

GradientResult generalized_gradient(const Architecture& arch, const Vec& theta,
                                    const Dataset& batch, Kink kink = Kink::open);

// Exact gradient of the risk built from A_r (act.r < inf).
GradientResult smoothed_gradient(const Architecture& arch, const Vec& theta,
                                 const Activation& act, const Dataset& batch);

inline constexpr double kPathBudget = 1e5;

// Literal sum over neuron paths. Throws if prod(dims) exceeds the budget.
GradientResult path_sum_gradient(const Architecture& arch, const Vec& theta,
                                 const Dataset& batch, double budget = kPathBudget);

GradientResult finite_difference_gradient(const Architecture& arch, const Vec& theta,
                                          const Activation& act, const Dataset& batch,
                                          double h = 1e-6);

struct LimitResidual {
    double r;
    double grad_residual;  // Euclidean norm of grad L_r - G
    double risk_gap;       // |L_r - L_inf|
};

std::vector<LimitResidual> gradient_limit_residuals(const Architecture& arch, const Vec& theta,
                                                    const Dataset& batch, const Vec& r_list,
                                                    Bridge bridge = Bridge::cubic);

double max_abs_diff(const Vec& a, const Vec& b);

}  // namespace relulab
