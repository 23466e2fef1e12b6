#include "relulab/improve.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <stdexcept>

#include "relulab/inactivity.hpp"

namespace relulab {

namespace {

double dot(std::span<const double> u, std::span<const double> v) {
    double s = 0.0;
    for (std::size_t j = 0; j < u.size(); ++j) s += u[j] * v[j];
    return s;
}

double relu(double x) { return x > 0.0 ? x : 0.0; }

// Output of the network when layer k's preactivation is replaced by z.
double propagate_from(const Architecture& arch, const Vec& theta, std::size_t k, Vec z) {
    const std::size_t L = arch.depth();
    for (std::size_t h = k; h < L; ++h) {
        Vec in(z.size());
        for (std::size_t i = 0; i < z.size(); ++i) in[i] = relu(z[i]);
        Vec next(arch.width(h + 1));
        for (std::size_t i = 1; i <= next.size(); ++i) {
            const double* w = theta.data() + arch.wpos(h + 1, i, 1);
            double s = 0.0;
            for (std::size_t j = 0; j < in.size(); ++j) s += w[j] * in[j];
            next[i - 1] = theta[arch.bpos(h + 1, i)] + s;
        }
        z = std::move(next);
    }
    return z.at(0);
}

void require_scalar(const Architecture& arch) {
    if (arch.output_dim() != 1) throw std::invalid_argument("risk improvement needs a scalar output");
    if (arch.depth() < 2) throw std::invalid_argument("risk improvement needs at least one hidden layer");
}

Vec random_unit(std::size_t d, Rng& rng) {
    std::normal_distribution<double> nd;
    for (;;) {
        Vec u(d);
        double n2 = 0.0;
        for (double& v : u) {
            v = nd(rng);
            n2 += v * v;
        }
        if (n2 > 1e-24) {
            const double n = std::sqrt(n2);
            for (double& v : u) v /= n;
            return u;
        }
    }
}

double pick_target(double lo, double hi, double current, double wanted) {
    if (lo < wanted && wanted < hi) return wanted;
    const double e = wanted <= lo ? lo : hi;
    return current + 0.99 * (e - current);
}

Certificate finish(std::string id, const Architecture& arch, const Dataset& data, double old_risk, Vec theta,
                   nlohmann::json diag) {
    Certificate c;
    c.case_id = std::move(id);
    c.old_risk = old_risk;
    c.new_risk = empirical_risk(arch, theta, Activation{}, data);
    c.margin = c.old_risk - c.new_risk;
    c.theta = std::move(theta);
    c.diagnostics = std::move(diag);
    return c;
}

}  // namespace

double SeparationTriple::operator()(std::span<const double> x) const {
    const double t = dot(w, x);
    double s = 0.0;
    for (std::size_t i = 0; i < 3; ++i) s += a[i] * relu(t + b[i]);
    return s;
}

SeparationTriple bump_with_direction(const std::vector<Vec>& X, std::size_t k, double delta, Vec w) {
    if (k >= X.size()) throw std::out_of_range("bump point out of range");
    SeparationTriple tr;
    tr.w = std::move(w);
    tr.k = k;
    tr.delta = delta;
    tr.B = -dot(tr.w, X[k]);
    double gap = kInf;
    for (std::size_t m = 0; m < X.size(); ++m)
        if (m != k) gap = std::min(gap, std::abs(dot(tr.w, X[m]) + tr.B));
    if (gap == 0.0) throw std::invalid_argument("direction does not separate the bump point");
    tr.eps = gap == kInf ? 1.0 : 0.5 * gap;
    const double e = tr.eps;
    tr.a = {2.0 * delta / e, 10.0 * delta / e, -12.0 * delta / e};
    tr.b = {tr.B + e / 2.0, tr.B - e, tr.B - 3.0 * e / 4.0};
    return tr;
}

SeparationTriple indicator_bump(const std::vector<Vec>& X, std::size_t k, double delta, Rng& rng) {
    if (k >= X.size()) throw std::out_of_range("bump point out of range");
    for (std::size_t m = 0; m < X.size(); ++m)
        if (m != k && X[m] == X[k]) throw std::invalid_argument("bump point is duplicated in the data");
    for (int attempt = 0; attempt < 1000; ++attempt) {
        try {
            return bump_with_direction(X, k, delta, random_unit(X[k].size(), rng));
        } catch (const std::invalid_argument&) {
        }
    }
    throw std::runtime_error("no separating direction found");
}

RetargetResult retarget_point(const Architecture& arch, const Vec& theta, const Dataset& data,
                              std::size_t p, double Z, std::size_t p1, std::size_t p2, Rng& rng) {
    require_scalar(arch);
    const std::size_t M = data.size();
    if (p >= M || p1 >= M || p2 >= M) throw std::out_of_range("data index out of range");
    const auto inactive = inactive_set(arch, theta, data.a, data.b);
    if (inactive.size() < 3) throw std::invalid_argument("retargeting needs at least three inactive neurons");

    const Activation relu_act;
    const ForwardTrace t1 = forward(arch, theta, relu_act, data.x[p1]);
    const ForwardTrace t2 = forward(arch, theta, relu_act, data.x[p2]);
    const ForwardTrace tp = forward(arch, theta, relu_act, data.x[p]);
    const Vec& n1 = t1.pre[2];
    const Vec& n2 = t2.pre[2];
    auto mixed = [&](double t) {
        Vec z(n1.size());
        for (std::size_t i = 0; i < z.size(); ++i) z[i] = t * n2[i] + (1.0 - t) * n1[i];
        return z;
    };
    auto upper = [&](double t) { return propagate_from(arch, theta, 2, mixed(t)); };
    const double lo_val = upper(0.0), hi_val = upper(1.0);
    if (!(lo_val < Z && Z < hi_val)) throw std::invalid_argument("target value is not bracketed");

    RetargetResult res;
    double lo = 0.0, hi = 1.0, t = 0.5;
    for (res.iterations = 1; res.iterations <= 200; ++res.iterations) {
        t = 0.5 * (lo + hi);
        const double h = upper(t);
        if (std::abs(h - Z) <= 1e-10) break;
        (h < Z ? lo : hi) = t;
    }
    res.t_star = t;
    const Vec target = mixed(t);
    res.delta.resize(target.size());
    for (std::size_t i = 0; i < target.size(); ++i) res.delta[i] = target[i] - tp.pre[2][i];

    res.bump = indicator_bump(data.x, p, 1.0, rng);
    res.theta = theta;
    for (std::size_t u = 0; u < 3; ++u) {
        const std::size_t n = inactive[u];
        res.neurons[u] = n;
        for (std::size_t j = 1; j <= arch.input_dim(); ++j) res.theta[arch.wpos(1, n, j)] = res.bump.w[j - 1];
        res.theta[arch.bpos(1, n)] = res.bump.b[u];
        for (std::size_t i = 1; i <= arch.width(2); ++i)
            res.theta[arch.wpos(2, i, n)] = res.bump.a[u] * res.delta[i - 1];
    }
    return res;
}

OutputClassification classify_outputs(const Vec& current, const Vec& targets) {
    if (current.size() != targets.size() || current.empty())
        throw std::invalid_argument("outputs and targets must be non-empty and equally long");
    OutputClassification c;
    c.current = current;
    const double lo = *std::min_element(current.begin(), current.end());
    const double hi = *std::max_element(current.begin(), current.end());
    for (std::size_t m = 0; m < current.size(); ++m) {
        if (current[m] <= lo) c.argmin.push_back(m);
        if (current[m] >= hi) c.argmax.push_back(m);
        if (current[m] == targets[m]) c.equal.push_back(m);
        if (current[m] < targets[m]) c.over_low.push_back(m);
        if (current[m] > targets[m]) c.over_high.push_back(m);
    }
    return c;
}

Certificate constant_case_improve(const Architecture& arch, const Dataset& data, double Q, Rng& rng) {
    require_scalar(arch);
    const std::size_t M = data.size();
    std::vector<std::size_t> mismatch;
    for (std::size_t m = 0; m < M; ++m)
        if (data.y[m] != Q) mismatch.push_back(m);
    if (mismatch.empty()) throw std::invalid_argument("constant network already interpolates the data");
    if (!data.distinct_inputs()) throw std::invalid_argument("data inputs must be distinct");

    Vec u;
    std::size_t p = 0;
    double top = 0.0, second = -kInf;
    for (int attempt = 0;; ++attempt) {
        if (attempt == 1000) throw std::runtime_error("no direction with a unique top projection");
        u = random_unit(data.dim(), rng);
        top = -kInf;
        second = -kInf;
        for (std::size_t m : mismatch) {
            const double s = dot(u, data.x[m]);
            if (s > top) {
                second = top;
                top = s;
                p = m;
            } else if (s > second) {
                second = s;
            }
        }
        if (mismatch.size() == 1 || top > second) break;
    }
    const double bias = mismatch.size() == 1 ? -top + 1.0 : -(top + second) / 2.0;

    double num = 0.0, den = 0.0;
    for (std::size_t m = 0; m < M; ++m) {
        const double r = relu(dot(u, data.x[m]) + bias);
        num += r * (Q - data.y[m]);
        den += r * r;
    }
    const double scal = -num / den;

    Vec theta(arch.param_count(), 0.0);
    const std::size_t L = arch.depth();
    for (std::size_t j = 1; j <= arch.input_dim(); ++j) theta[arch.wpos(1, 1, j)] = u[j - 1];
    theta[arch.bpos(1, 1)] = bias;
    for (std::size_t k = 2; k < L; ++k) theta[arch.wpos(k, 1, 1)] = 1.0;
    theta[arch.wpos(L, 1, 1)] = scal;
    theta[arch.bpos(L, 1)] = Q;

    double old_risk = 0.0;
    for (std::size_t m = 0; m < M; ++m) old_risk += (Q - data.y[m]) * (Q - data.y[m]);
    old_risk /= static_cast<double>(M);

    nlohmann::json diag = {{"point", p + 1}, {"direction", u}, {"bias", bias}, {"scalar", scal}, {"Q", Q}};
    return finish("constant", arch, data, old_risk, std::move(theta), std::move(diag));
}

Certificate improve_risk(const Architecture& arch, const Vec& theta, const Dataset& data, double a,
                         double b, Rng& rng) {
    require_scalar(arch);
    if (data.size() == 0) throw std::invalid_argument("empty dataset");
    if (!data.distinct_inputs()) throw std::invalid_argument("data inputs must be distinct");
    const std::size_t n_inactive = inactive_set(arch, theta, a, b).size();
    if (n_inactive < 3) throw std::invalid_argument("risk improvement needs at least three inactive neurons");
    const Activation relu_act;
    const Vec cur = outputs(arch, theta, relu_act, data);
    const double old_risk = mse(cur, data.y);
    if (!(old_risk > 0.0)) throw std::invalid_argument("risk is already zero");

    Dataset boxed = data;
    boxed.a = a;
    boxed.b = b;
    const auto cls = classify_outputs(cur, data.y);
    nlohmann::json attempts = nlohmann::json::array();

    if (cls.argmin.size() == data.size()) {
        Certificate c = constant_case_improve(arch, data, cur[0], rng);
        c.old_risk = old_risk;
        c.margin = c.old_risk - c.new_risk;
        return c;
    }

    auto try_retarget = [&](const std::string& id, std::size_t p, std::size_t p1, std::size_t p2)
        -> std::optional<Certificate> {
        const double lo = cur[p1], hi = cur[p2];
        const double Z = pick_target(lo, hi, cur[p], data.y[p]);
        nlohmann::json diag = {{"point", p + 1}, {"lower_point", p1 + 1}, {"upper_point", p2 + 1}, {"Z", Z}};
        try {
            RetargetResult r = retarget_point(arch, theta, boxed, p, Z, p1, p2, rng);
            diag["t_star"] = r.t_star;
            diag["bisection_iterations"] = r.iterations;
            diag["neurons"] = r.neurons;
            diag["bump"] = {{"direction", r.bump.w}, {"B", r.bump.B}, {"eps", r.bump.eps},
                            {"a", r.bump.a}, {"b", r.bump.b}};
            Certificate c = finish(id, arch, data, old_risk, std::move(r.theta), diag);
            if (c.improved()) {
                c.diagnostics["attempts"] = attempts;
                return c;
            }
            diag["failure"] = "no strict decrease";
            diag["new_risk"] = c.new_risk;
        } catch (const std::exception& e) {
            diag["failure"] = e.what();
        }
        diag["case"] = id;
        attempts.push_back(diag);
        return std::nullopt;
    };

    // Candidates with the largest residual first.
    std::vector<std::size_t> order(data.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(), [&](std::size_t i, std::size_t j) {
        return std::abs(cur[i] - data.y[i]) > std::abs(cur[j] - data.y[j]);
    });

    for (std::size_t p : order) {
        const bool extreme = cur[p] <= cur[cls.argmin[0]] || cur[p] >= cur[cls.argmax[0]];
        const bool equal = cur[p] == data.y[p];
        if (extreme || equal) continue;
        if (auto c = try_retarget("interior-point", p, cls.argmin[0], cls.argmax[0])) return *c;
    }

    for (int z : {1, -1}) {
        for (std::size_t p : order) {
            const auto& ext = cls.A(z);
            const auto& over = cls.Mz(z);
            if (!std::binary_search(ext.begin(), ext.end(), p) || !std::binary_search(over.begin(), over.end(), p))
                continue;
            const std::size_t q = cls.A(-z).front();
            auto c = z > 0 ? try_retarget("extreme-mismatch", p, q, p) : try_retarget("extreme-mismatch", p, p, q);
            if (c) return *c;
        }
    }

    double delta = 0.0;
    for (std::size_t m = 0; m < data.size(); ++m) delta += data.y[m] - cur[m];
    delta /= static_cast<double>(data.size());
    double eps = 0.0;
    if (delta == 0.0) {
        double num = 0.0, den = 0.0;
        for (std::size_t m = 0; m < data.size(); ++m) {
            num += cur[m] * (cur[m] - data.y[m]);
            den += cur[m] * cur[m];
        }
        eps = -num / den;
    }
    Vec tweaked = theta;
    for (std::size_t p = arch.block_begin(arch.depth()); p < tweaked.size(); ++p) tweaked[p] *= 1.0 + eps;
    tweaked.back() += delta;
    nlohmann::json diag = {{"shift", delta}, {"scale", eps}, {"attempts", attempts}};
    return finish("affine-tweak", arch, data, old_risk, std::move(tweaked), std::move(diag));
}

TrajectoryWitness certify_trajectory(const Architecture& arch, const Vec& theta0, const Vec& theta_final,
                                     const Vec& risks, const Dataset& data, double a, double b, Rng& rng) {
    TrajectoryWitness w;
    w.inactive_at_init = inactive_set(arch, theta0, a, b).size();
    if (risks.empty()) throw std::invalid_argument("empty risk trajectory");
    w.trajectory_min_risk = *std::min_element(risks.begin(), risks.end());
    if (w.inactive_at_init < 3) {
        w.outcome = "not certifiable: fewer than three inactive neurons at initialization";
        return w;
    }
    try {
        w.certificate = improve_risk(arch, theta_final, data, a, b, rng);
    } catch (const std::invalid_argument& e) {
        w.outcome = std::string("not certifiable: ") + e.what();
        return w;
    }
    w.certifiable = true;
    w.gap = w.trajectory_min_risk - w.certificate->new_risk;
    w.outcome = w.gap > 0.0 ? "witness" : "no-gap";
    return w;
}

nlohmann::json certificate_to_json(const Certificate& c, const std::string& theta_path) {
    return {{"case", c.case_id},           {"old_risk", c.old_risk}, {"new_risk", c.new_risk},
            {"margin", c.margin},          {"theta_improved", theta_path},
            {"diagnostics", c.diagnostics}};
}

}  // namespace relulab
