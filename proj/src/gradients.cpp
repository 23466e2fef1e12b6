#include "relulab/gradients.hpp"

#include <cmath>
#include <stdexcept>

namespace relulab {

std::string GradientResult::describe() const {
    switch (method) {
        case GradMethod::backprop_limit: return "backprop-limit";
        case GradMethod::backprop_smoothed: return "backprop-smoothed(r=" + std::to_string(param) + ")";
        case GradMethod::path_sum: return "path-sum";
        case GradMethod::finite_difference: return "finite-difference(h=" + std::to_string(param) + ")";
    }
    return "unknown";
}

namespace {

void require_batch(const Architecture& arch, const Vec& theta, const Dataset& batch) {
    if (batch.size() == 0) throw std::invalid_argument("empty batch");
    if (arch.output_dim() != 1) throw std::invalid_argument("risk gradients need l_L = 1");
    if (theta.size() != arch.param_count()) throw std::invalid_argument("parameter vector has wrong length");
}

// Reverse-mode accumulation. Examples are processed in ascending order so the
// result does not depend on anything but the inputs.
Vec backprop(const Architecture& arch, const Vec& theta, const Activation& act,
             const Dataset& batch, Kink kink) {
    require_batch(arch, theta, batch);
    const std::size_t L = arch.depth();
    const double scale = 2.0 / static_cast<double>(batch.size());
    std::vector<Activation> layer_act(L);
    for (std::size_t v = 1; v < L; ++v) layer_act[v] = act.for_layer(v);

    Vec g(arch.param_count(), 0.0);
    Vec delta, below;
    for (std::size_t m = 0; m < batch.size(); ++m) {
        const ForwardTrace tr = forward(arch, theta, act, batch.x[m]);
        delta.assign(1, scale * (tr.output()[0] - batch.y[m]));
        for (std::size_t k = L; k >= 1; --k) {
            const std::size_t rows = arch.width(k), cols = arch.width(k - 1);
            const Vec& in = tr.post[k - 1];
            for (std::size_t i = 1; i <= rows; ++i) {
                const double di = delta[i - 1];
                double* gw = g.data() + arch.wpos(k, i, 1);
                for (std::size_t j = 0; j < cols; ++j) gw[j] += di * in[j];
                g[arch.bpos(k, i)] += di;
            }
            if (k == 1) break;
            below.assign(cols, 0.0);
            for (std::size_t i = 1; i <= rows; ++i) {
                const double* w = theta.data() + arch.wpos(k, i, 1);
                for (std::size_t j = 0; j < cols; ++j) below[j] += w[j] * delta[i - 1];
            }
            const Vec& z = tr.pre[k - 1];
            for (std::size_t j = 0; j < cols; ++j) {
                double d;
                if (act.is_relu())
                    d = kink == Kink::open ? (z[j] > 0.0 ? 1.0 : 0.0) : (z[j] >= 0.0 ? 1.0 : 0.0);
                else
                    d = layer_act[k - 1].deriv(z[j]);
                below[j] *= d;
            }
            delta.swap(below);
        }
    }
    return g;
}

}  // namespace

GradientResult generalized_gradient(const Architecture& arch, const Vec& theta,
                                    const Dataset& batch, Kink kink) {
    return {backprop(arch, theta, Activation{}, batch, kink), GradMethod::backprop_limit, kInf};
}

GradientResult smoothed_gradient(const Architecture& arch, const Vec& theta,
                                 const Activation& act, const Dataset& batch) {
    if (act.is_relu()) throw std::invalid_argument("smoothed gradient needs finite r");
    return {backprop(arch, theta, act, batch, Kink::open), GradMethod::backprop_smoothed, act.r};
}

GradientResult path_sum_gradient(const Architecture& arch, const Vec& theta,
                                 const Dataset& batch, double budget) {
    require_batch(arch, theta, batch);
    double paths = 1.0;
    for (std::size_t w : arch.dims()) paths *= static_cast<double>(w);
    if (paths > budget)
        throw std::invalid_argument("path budget exceeded: prod(dims) = " + std::to_string(paths));

    const std::size_t L = arch.depth();
    const double scale = 2.0 / static_cast<double>(batch.size());
    Vec g(arch.param_count(), 0.0);

    for (std::size_t m = 0; m < batch.size(); ++m) {
        const ForwardTrace tr = forward(arch, theta, Activation{}, batch.x[m]);
        const double res = scale * (tr.output()[0] - batch.y[m]);
        // Sum over v_{h+1}, ..., v_L of prod w^{q}_{v_q, v_{q-1}} 1_{(0,inf)}(N^{q-1}_{v_{q-1}}).
        auto paths_from = [&](auto&& self, std::size_t h, std::size_t v) -> double {
            if (h == L) return 1.0;
            const double ind = tr.pre[h][v - 1] > 0.0 ? 1.0 : 0.0;
            double s = 0.0;
            for (std::size_t u = 1; u <= arch.width(h + 1); ++u)
                s += theta[arch.wpos(h + 1, u, v)] * ind * self(self, h + 1, u);
            return s;
        };
        for (std::size_t k = 1; k <= L; ++k) {
            for (std::size_t i = 1; i <= arch.width(k); ++i) {
                const double s = paths_from(paths_from, k, i);
                for (std::size_t j = 1; j <= arch.width(k - 1); ++j) {
                    const double input = k == 1 ? batch.x[m][j - 1] : std::max(tr.pre[k - 1][j - 1], 0.0);
                    g[arch.wpos(k, i, j)] += res * s * input;
                }
                g[arch.bpos(k, i)] += res * s;
            }
        }
    }
    return {g, GradMethod::path_sum, 0.0};
}

namespace {

// Risk in extended precision, so that central differences of small
// coordinates are not swamped by rounding.
long double risk_ext(const Architecture& arch, const std::vector<long double>& theta, const Activation& act,
                     const Dataset& batch) {
    const std::size_t L = arch.depth();
    long double total = 0.0L;
    std::vector<long double> in, z;
    for (std::size_t m = 0; m < batch.size(); ++m) {
        in.assign(batch.x[m].begin(), batch.x[m].end());
        for (std::size_t k = 1; k <= L; ++k) {
            z.assign(arch.width(k), 0.0L);
            for (std::size_t i = 1; i <= arch.width(k); ++i) {
                long double s = 0.0L;
                for (std::size_t j = 1; j <= arch.width(k - 1); ++j) s += theta[arch.wpos(k, i, j)] * in[j - 1];
                z[i - 1] = theta[arch.bpos(k, i)] + s;
            }
            if (k < L) {
                const Activation a = act.for_layer(k);
                for (auto& v : z) v = a.eval(v);
            }
            in.swap(z);
        }
        const long double e = in[0] - batch.y[m];
        total += e * e;
    }
    return total / static_cast<long double>(batch.size());
}

}  // namespace

GradientResult finite_difference_gradient(const Architecture& arch, const Vec& theta,
                                          const Activation& act, const Dataset& batch, double h) {
    require_batch(arch, theta, batch);
    if (arch.output_dim() != 1) throw std::invalid_argument("finite differences need a scalar output");
    Vec g(theta.size());
    std::vector<long double> t(theta.begin(), theta.end());
    for (std::size_t i = 0; i < theta.size(); ++i) {
        t[i] = static_cast<long double>(theta[i]) + h;
        const long double up = risk_ext(arch, t, act, batch);
        t[i] = static_cast<long double>(theta[i]) - h;
        const long double dn = risk_ext(arch, t, act, batch);
        t[i] = theta[i];
        g[i] = static_cast<double>((up - dn) / (2.0L * h));
    }
    return {g, GradMethod::finite_difference, h};
}

std::vector<LimitResidual> gradient_limit_residuals(const Architecture& arch, const Vec& theta,
                                                    const Dataset& batch, const Vec& r_list,
                                                    Bridge bridge) {
    for (std::size_t i = 1; i < r_list.size(); ++i)
        if (!(r_list[i] > r_list[i - 1])) throw std::invalid_argument("r list must be increasing");
    const Vec limit = generalized_gradient(arch, theta, batch).g;
    const double risk_inf = empirical_risk(arch, theta, Activation{}, batch);
    std::vector<LimitResidual> out;
    for (double r : r_list) {
        const Activation act(r, bridge);
        const Vec gr = smoothed_gradient(arch, theta, act, batch).g;
        double s = 0.0;
        for (std::size_t i = 0; i < gr.size(); ++i) s += (gr[i] - limit[i]) * (gr[i] - limit[i]);
        out.push_back({r, std::sqrt(s), std::abs(empirical_risk(arch, theta, act, batch) - risk_inf)});
    }
    return out;
}

double max_abs_diff(const Vec& a, const Vec& b) {
    if (a.size() != b.size()) throw std::invalid_argument("size mismatch");
    double m = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
    return m;
}

}  // namespace relulab
