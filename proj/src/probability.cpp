#include "relulab/probability.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>

namespace relulab {

double normal_cdf(double x) { return 0.5 * std::erfc(-x / std::numbers::sqrt2); }

double normal_pdf(double x) { return std::exp(-0.5 * x * x) / std::sqrt(2.0 * std::numbers::pi); }

namespace {

double simpson_rec(const std::function<double(double)>& f, double a, double b, double fa, double fm,
                   double fb, double whole, double tol, int depth) {
    const double m = 0.5 * (a + b);
    const double lm = 0.5 * (a + m), rm = 0.5 * (m + b);
    const double flm = f(lm), frm = f(rm);
    const double left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
    const double right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
    const double diff = left + right - whole;
    if (depth <= 0 || std::abs(diff) <= 15.0 * tol) return left + right + diff / 15.0;
    return simpson_rec(f, a, m, fa, flm, fm, left, 0.5 * tol, depth - 1) +
           simpson_rec(f, m, b, fm, frm, fb, right, 0.5 * tol, depth - 1);
}

}  // namespace

double adaptive_simpson(const std::function<double(double)>& f, double lo, double hi, double tol,
                        int max_depth) {
    if (!(hi > lo)) return 0.0;
    const double fa = f(lo), fb = f(hi), fm = f(0.5 * (lo + hi));
    const double whole = (hi - lo) / 6.0 * (fa + 4.0 * fm + fb);
    return simpson_rec(f, lo, hi, fa, fm, fb, whole, tol, max_depth);
}

InitDistribution InitDistribution::standard_normal() { return {}; }

InitDistribution InitDistribution::uniform_pm1() {
    InitDistribution d;
    d.family_ = Family::uniform;
    return d;
}

InitDistribution InitDistribution::quantile_table(Vec knots, Vec probs) {
    if (knots.size() < 2 || knots.size() != probs.size())
        throw std::invalid_argument("quantile table needs matching knots and probabilities (>= 2)");
    for (std::size_t k = 1; k < knots.size(); ++k)
        if (!(knots[k] > knots[k - 1]) || !(probs[k] >= probs[k - 1]))
            throw std::invalid_argument("quantile table must be increasing");
    if (probs.front() != 0.0 || probs.back() != 1.0)
        throw std::invalid_argument("quantile table probabilities must run from 0 to 1");
    InitDistribution d;
    d.family_ = Family::quantile_table;
    d.knots_ = std::move(knots);
    d.probs_ = std::move(probs);
    return d;
}

std::string InitDistribution::name() const {
    switch (family_) {
        case Family::normal: return "standard-normal";
        case Family::uniform: return "uniform(-1,1)";
        case Family::quantile_table: return "quantile-table";
    }
    return "?";
}

double InitDistribution::pdf(double x) const {
    switch (family_) {
        case Family::normal: return normal_pdf(x);
        case Family::uniform: return (x >= -1.0 && x <= 1.0) ? 0.5 : 0.0;
        case Family::quantile_table: {
            if (x < knots_.front() || x >= knots_.back()) return 0.0;
            auto it = std::upper_bound(knots_.begin(), knots_.end(), x);
            const std::size_t k = static_cast<std::size_t>(it - knots_.begin());
            return (probs_[k] - probs_[k - 1]) / (knots_[k] - knots_[k - 1]);
        }
    }
    return 0.0;
}

double InitDistribution::cdf(double x) const {
    switch (family_) {
        case Family::normal: return normal_cdf(x);
        case Family::uniform: return std::clamp(0.5 * (x + 1.0), 0.0, 1.0);
        case Family::quantile_table: {
            if (x <= knots_.front()) return 0.0;
            if (x >= knots_.back()) return 1.0;
            auto it = std::upper_bound(knots_.begin(), knots_.end(), x);
            const std::size_t k = static_cast<std::size_t>(it - knots_.begin());
            const double t = (x - knots_[k - 1]) / (knots_[k] - knots_[k - 1]);
            return probs_[k - 1] + t * (probs_[k] - probs_[k - 1]);
        }
    }
    return 0.0;
}

double InitDistribution::mass(double lo, double hi) const {
    if (!(hi > lo)) return 0.0;
    if (std::isinf(lo)) return cdf(hi);
    // Quadrature over the smooth pieces of the density.
    Vec cuts{lo};
    if (family_ == Family::uniform) {
        for (double k : {-1.0, 1.0})
            if (k > lo && k < hi) cuts.push_back(k);
    } else if (family_ == Family::quantile_table) {
        for (double k : knots_)
            if (k > lo && k < hi) cuts.push_back(k);
    }
    cuts.push_back(hi);
    double s = 0.0;
    for (std::size_t i = 1; i < cuts.size(); ++i) {
        const double a = cuts[i - 1], b = cuts[i];
        // Density values at the cut points belong to the open piece, not to a jump.
        const double in_a = std::nextafter(a, b), in_b = std::nextafter(b, a);
        auto f = [&](double x) { return pdf(std::clamp(x, in_a, in_b)); };
        s += adaptive_simpson(f, a, b);
    }
    return s;
}

double InitDistribution::quantile(double u) const {
    switch (family_) {
        case Family::normal: {
            // Bisection on the CDF; only used for diagnostics.
            double lo = -40.0, hi = 40.0;
            for (int i = 0; i < 200; ++i) {
                const double mid = 0.5 * (lo + hi);
                (normal_cdf(mid) < u ? lo : hi) = mid;
            }
            return 0.5 * (lo + hi);
        }
        case Family::uniform: return 2.0 * u - 1.0;
        case Family::quantile_table: {
            auto it = std::upper_bound(probs_.begin(), probs_.end(), u);
            std::size_t k = static_cast<std::size_t>(it - probs_.begin());
            k = std::clamp<std::size_t>(k, 1, probs_.size() - 1);
            const double dp = probs_[k] - probs_[k - 1];
            const double t = dp > 0.0 ? (u - probs_[k - 1]) / dp : 0.0;
            return knots_[k - 1] + t * (knots_[k] - knots_[k - 1]);
        }
    }
    return 0.0;
}

double InitDistribution::sample(Rng& rng) const {
    switch (family_) {
        case Family::normal: return std::normal_distribution<double>(0.0, 1.0)(rng);
        case Family::uniform: return std::uniform_real_distribution<double>(-1.0, 1.0)(rng);
        case Family::quantile_table: return quantile(std::uniform_real_distribution<double>(0.0, 1.0)(rng));
    }
    return 0.0;
}

Vec InitDistribution::sample_params(const Architecture& arch, Rng& rng) const {
    Vec theta(arch.param_count());
    for (std::size_t i = 0; i < theta.size(); ++i) theta[i] = sample(rng) / scale(i);
    return theta;
}

double InitDistribution::scale_ratio(const Architecture& arch) const {
    const std::size_t d = arch.input_dim(), l1 = arch.width(1);
    double c = 0.0;
    for (std::size_t i = 1; i <= l1; ++i)
        for (std::size_t j = 1; j <= d; ++j)
            c = std::max(c, scale(arch.bpos(1, i)) / scale(arch.wpos(1, i, j)));
    return c;
}

nlohmann::json InitDistribution::to_json() const {
    nlohmann::json j{{"family", family_ == Family::normal    ? "normal"
                                : family_ == Family::uniform ? "uniform"
                                                             : "quantile_table"}};
    if (family_ == Family::quantile_table) {
        j["knots"] = knots_;
        j["probs"] = probs_;
    }
    if (!scales_.empty()) j["scales"] = scales_;
    j["scale"] = common_scale_;
    return j;
}

InitDistribution InitDistribution::from_json(const nlohmann::json& j) {
    const std::string fam = j.value("family", std::string("normal"));
    InitDistribution d;
    if (fam == "normal" || fam == "standard-normal")
        d = standard_normal();
    else if (fam == "uniform")
        d = uniform_pm1();
    else if (fam == "quantile_table" || fam == "quantile-table")
        d = quantile_table(j.at("knots").get<Vec>(), j.at("probs").get<Vec>());
    else
        throw std::invalid_argument("unknown init family '" + fam + "'");
    if (j.contains("scales")) d.set_scales(j.at("scales").get<Vec>());
    if (j.contains("scale")) d.set_common_scale(j.at("scale").get<double>());
    if (!(d.common_scale_ > 0.0)) throw std::invalid_argument("init scale must be positive");
    for (double c : d.scales_)
        if (!(c > 0.0)) throw std::invalid_argument("init scales must be positive");
    return d;
}

double binomial_tail(std::size_t l, std::size_t m, double p) {
    if (!(p >= 0.0 && p <= 1.0)) throw std::invalid_argument("p must lie in [0,1]");
    if (m == 0) return 1.0;
    if (m > l) return 0.0;
    if (p == 0.0) return 0.0;
    if (p == 1.0) return 1.0;
    // Weights relative to the mode by the pmf ratio recurrence; the normalizer
    // cancels, so no factorials are needed.
    const double q = 1.0 - p;
    const std::size_t mode = std::min(l, static_cast<std::size_t>(std::floor(static_cast<double>(l + 1) * p)));
    Vec w(l + 1, 0.0);
    w[mode] = 1.0;
    for (std::size_t n = mode; n < l; ++n)
        w[n + 1] = w[n] * (static_cast<double>(l - n) / static_cast<double>(n + 1)) * (p / q);
    for (std::size_t n = mode; n > 0; --n)
        w[n - 1] = w[n] * (static_cast<double>(n) / static_cast<double>(l - n + 1)) * (q / p);
    double lower = 0.0, upper = 0.0;
    for (std::size_t n = 0; n < m; ++n) lower += w[n];
    for (std::size_t n = l + 1; n-- > m;) upper += w[n];
    return upper / (lower + upper);
}

double poly_f(const Vec& x, std::size_t m) {
    if (m == 0) return 1.0;
    if (m > x.size()) return 0.0;
    // dp[k] = probability of exactly k successes so far
    Vec dp(x.size() + 1, 0.0);
    dp[0] = 1.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double p = x[i];
        if (!(p >= 0.0 && p <= 1.0)) throw std::invalid_argument("poly_f arguments must lie in [0,1]");
        for (std::size_t k = i + 1; k > 0; --k) dp[k] = dp[k] * (1.0 - p) + dp[k - 1] * p;
        dp[0] *= 1.0 - p;
    }
    double s = 0.0;
    for (std::size_t k = m; k <= x.size(); ++k) s += dp[k];
    return std::min(1.0, s);
}

double per_neuron_p(const InitDistribution& dist, std::size_t d, double a, double b, double eta, double c) {
    if (!(eta > 0.0)) throw std::invalid_argument("eta must be positive");
    if (!(c > 0.0)) throw std::invalid_argument("scale ratio must be positive");
    if (d == 0) throw std::invalid_argument("input dimension must be positive");
    if (!(dist.cdf(0.0) > 0.0))
        throw std::invalid_argument("degenerate density support: no mass on (-inf, 0)");
    const double w = eta / (2.0 * c * static_cast<double>(d) * std::max(std::abs(a), std::abs(b)));
    const double tail = dist.mass(-kInf, -eta / 2.0);
    const double window = dist.mass(-w, w);
    return tail * std::pow(window, static_cast<double>(d));
}

EtaChoice optimize_eta(const InitDistribution& dist, std::size_t d, double a, double b, std::size_t l,
                       std::size_t m, double c) {
    if (!(l >= m && m >= 1)) throw std::invalid_argument("need l >= m >= 1");
    auto bound_at = [&](double log_eta) {
        return binomial_tail(l, m, per_neuron_p(dist, d, a, b, std::exp(log_eta), c));
    };
    const double lo = std::log(1e-4), hi = std::log(1e4);
    const int grid = 800;
    int best = 0;
    double best_val = -1.0;
    for (int i = 0; i <= grid; ++i) {
        const double v = bound_at(lo + (hi - lo) * i / grid);
        if (v > best_val) {
            best_val = v;
            best = i;
        }
    }
    if (!(best_val > 0.0)) throw std::runtime_error("bound is identically 0 over the eta grid");
    // Golden-section refinement between the neighbouring grid points.
    double x0 = lo + (hi - lo) * std::max(best - 1, 0) / grid;
    double x3 = lo + (hi - lo) * std::min(best + 1, grid) / grid;
    const double ratio = (std::sqrt(5.0) - 1.0) / 2.0;
    double x1 = x3 - ratio * (x3 - x0), x2 = x0 + ratio * (x3 - x0);
    double f1 = bound_at(x1), f2 = bound_at(x2);
    for (int it = 0; it < 100 && x3 - x0 > 1e-12; ++it) {
        if (f1 < f2) {
            x0 = x1;
            x1 = x2;
            f1 = f2;
            x2 = x0 + ratio * (x3 - x0);
            f2 = bound_at(x2);
        } else {
            x3 = x2;
            x2 = x1;
            f2 = f1;
            x1 = x3 - ratio * (x3 - x0);
            f1 = bound_at(x1);
        }
    }
    double x = f1 > f2 ? x1 : x2;
    double v = std::max(f1, f2);
    if (v < best_val) {
        x = lo + (hi - lo) * best / grid;
        v = best_val;
    }
    const double eta = std::exp(x);
    return {eta, per_neuron_p(dist, d, a, b, eta, c), v};
}

double depth_bound(std::size_t l, std::size_t L, double q) {
    if (!(q >= 0.0 && q <= 1.0)) throw std::invalid_argument("q must lie in [0,1]");
    if (L < 2) return 0.0;
    const double block = std::pow(q, static_cast<double>(l * (l + 1)));
    if (block >= 1.0) return 1.0;
    return -std::expm1(static_cast<double>(L - 1) * std::log1p(-block));
}

RateFit rate_fit(const Vec& widths, const Vec& probs, double floor) {
    if (widths.size() != probs.size()) throw std::invalid_argument("widths and probabilities differ in length");
    if (widths.size() < 3) throw std::invalid_argument("rate fit needs at least 3 widths");
    RateFit fit;
    Vec y(probs.size());
    for (std::size_t i = 0; i < probs.size(); ++i) {
        double p = probs[i];
        if (!(p > 0.0)) {
            if (!(floor > 0.0)) throw std::invalid_argument("nonpositive probability in rate fit");
            p = floor;
            fit.floored = true;
        }
        if (p > 1.0) throw std::invalid_argument("probability above 1 in rate fit");
        y[i] = std::log(p);
    }
    const double n = static_cast<double>(widths.size());
    double mx = 0.0, my = 0.0;
    for (std::size_t i = 0; i < y.size(); ++i) {
        mx += widths[i];
        my += y[i];
    }
    mx /= n;
    my /= n;
    double sxy = 0.0, sxx = 0.0;
    for (std::size_t i = 0; i < y.size(); ++i) {
        sxy += (widths[i] - mx) * (y[i] - my);
        sxx += (widths[i] - mx) * (widths[i] - mx);
    }
    if (!(sxx > 0.0)) throw std::invalid_argument("rate fit needs distinct widths");
    fit.slope = sxy / sxx;
    fit.intercept = my - fit.slope * mx;
    for (std::size_t i = 0; i < y.size(); ++i) fit.residuals.push_back(y[i] - (fit.intercept + fit.slope * widths[i]));
    fit.non_decaying = !(fit.slope < 0.0);
    return fit;
}

}  // namespace relulab
