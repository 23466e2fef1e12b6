#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include <json.hpp>

#include "relulab/network.hpp"
#include "relulab/rng.hpp"

namespace relulab {

double normal_cdf(double x);
double normal_pdf(double x);

// Adaptive Simpson with an absolute tolerance.
double adaptive_simpson(const std::function<double(double)>& f, double lo, double hi,
                        double tol = 1e-12, int max_depth = 50);

enum class Family { normal, uniform, quantile_table };

// Base density p plus per-coordinate scales: coordinate i of theta_0 is a draw
// from p divided by c_i.
class InitDistribution {
public:
    static InitDistribution standard_normal();
    static InitDistribution uniform_pm1();
    // Piecewise-linear CDF through (knots[k], probs[k]); probs runs from 0 to 1.
    static InitDistribution quantile_table(Vec knots, Vec probs);

    Family family() const { return family_; }
    std::string name() const;

    double pdf(double x) const;
    double cdf(double x) const;
    // Mass of [lo, hi] by quadrature of the density; lo may be -inf.
    double mass(double lo, double hi) const;
    double quantile(double u) const;
    double sample(Rng& rng) const;

    // Per-coordinate scales; coordinates beyond the vector use the common scale.
    void set_scales(Vec scales) { scales_ = std::move(scales); }
    void set_common_scale(double c) { common_scale_ = c; }
    double scale(std::size_t i) const { return i < scales_.size() ? scales_[i] : common_scale_; }

    Vec sample_params(const Architecture& arch, Rng& rng) const;
    // max over first-layer neurons i and inputs j of c_{l1 d + i} / c_{(i-1)d + j}
    double scale_ratio(const Architecture& arch) const;

    nlohmann::json to_json() const;
    static InitDistribution from_json(const nlohmann::json& j);

private:
    Family family_ = Family::normal;
    Vec knots_, probs_;
    Vec scales_;
    double common_scale_ = 1.0;
};

double binomial_tail(std::size_t l, std::size_t m, double p);
// P(at least m successes) for independent Bernoulli(x_i).
double poly_f(const Vec& x, std::size_t m);

// Lower bound on the probability that a single first-layer neuron is inactive.
double per_neuron_p(const InitDistribution& dist, std::size_t d, double a, double b, double eta,
                    double c = 1.0);

struct EtaChoice {
    double eta;
    double p;
    double bound;
};

// Maximizes binomial_tail(l, m, per_neuron_p(eta)) over eta.
EtaChoice optimize_eta(const InitDistribution& dist, std::size_t d, double a, double b,
                       std::size_t l, std::size_t m, double c = 1.0);

double depth_bound(std::size_t l, std::size_t L, double q);

struct McEstimate {
    double estimate = 0.0;
    double stderr_ = 0.0;
    std::size_t samples = 0;
};

struct RateFit {
    double slope = 0.0;
    double intercept = 0.0;
    Vec residuals;
    bool floored = false;       // some probability was replaced by the 1/N floor
    bool non_decaying = false;  // slope >= 0
};

// Least-squares slope of log(prob) against width. Nonpositive probabilities
// are replaced by floor (if positive) and flagged; otherwise they throw.
RateFit rate_fit(const Vec& widths, const Vec& probs, double floor = 0.0);

}  // namespace relulab
