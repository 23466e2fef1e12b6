#include "relulab/optimizers.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

#include "relulab/gradients.hpp"
#include "relulab/rng.hpp"

namespace relulab {

std::string to_string(OptimizerKind k) {
    switch (k) {
        case OptimizerKind::sgd: return "sgd";
        case OptimizerKind::momentum: return "momentum";
        case OptimizerKind::nesterov: return "nesterov";
        case OptimizerKind::adagrad: return "adagrad";
        case OptimizerKind::rmsprop: return "rmsprop";
        case OptimizerKind::adam: return "adam";
        case OptimizerKind::adamax: return "adamax";
        case OptimizerKind::amsgrad: return "amsgrad";
        case OptimizerKind::nadam: return "nadam";
    }
    return "?";
}

OptimizerKind parse_optimizer(const std::string& id) {
    for (OptimizerKind k : kAllOptimizers)
        if (to_string(k) == id) return k;
    if (id == "adamw" || id == "adam-w" || id == "adadelta")
        throw std::invalid_argument("optimizer '" + id +
                                    "' is not supported: its update does not fit the full-history "
                                    "framework (a zero gradient history does not imply a zero update)");
    throw std::invalid_argument("unknown optimizer '" + id + "'");
}

Schedule Schedule::table(Vec values) {
    if (values.empty()) throw std::invalid_argument("schedule table is empty");
    Schedule s(values.front());
    s.table_ = std::move(values);
    return s;
}

double Schedule::operator()(std::size_t n) const {
    if (table_.empty()) return const_;
    if (n == 0) throw std::out_of_range("schedules are indexed from 1");
    return table_[std::min(n, table_.size()) - 1];
}

void validate(OptimizerKind kind, const HyperSchedule& s) {
    if (!(s.eps > 0.0)) throw std::invalid_argument("eps must be positive");
    auto unit = [](const Schedule& sc, const char* name) {
        auto check = [&](double v) {
            if (!(v >= 0.0 && v <= 1.0))
                throw std::invalid_argument(std::string(name) + " values must lie in [0,1]");
        };
        if (sc.is_table())
            for (double v : sc.values()) check(v);
        else
            check(sc.constant());
    };
    unit(s.alpha, "alpha");
    unit(s.beta, "beta");
    switch (kind) {
        case OptimizerKind::adam:
        case OptimizerKind::amsgrad:
        case OptimizerKind::nadam:
            if (!(std::max(s.alpha(1), s.beta(1)) < 1.0))
                throw std::invalid_argument(to_string(kind) + " needs max(alpha_1, beta_1) < 1");
            break;
        case OptimizerKind::adamax:
            if (!(s.alpha(1) < 1.0)) throw std::invalid_argument("adamax needs alpha_1 < 1");
            break;
        default: break;
    }
}

namespace {

Schedule schedule_from_json(const nlohmann::json& j, const char* name) {
    if (j.is_number()) return Schedule(j.get<double>());
    if (j.is_object() && j.contains("const")) return Schedule(j.at("const").get<double>());
    if (j.is_object() && j.contains("table")) return Schedule::table(j.at("table").get<Vec>());
    throw std::invalid_argument(std::string(name) + " must be a number, {\"const\": x} or {\"table\": [...]}");
}

nlohmann::json schedule_to_json(const Schedule& s) {
    if (s.is_table()) return {{"table", s.values()}};
    return {{"const", s.constant()}};
}

}  // namespace

OptimizerConfig optimizer_from_json(const nlohmann::json& j) {
    OptimizerConfig c;
    if (!j.is_object()) throw std::invalid_argument("optimizer config must be an object");
    c.kind = parse_optimizer(j.value("kind", std::string("sgd")));
    if (j.contains("gamma")) c.sched.gamma = schedule_from_json(j.at("gamma"), "gamma");
    if (j.contains("alpha")) c.sched.alpha = schedule_from_json(j.at("alpha"), "alpha");
    if (j.contains("beta")) c.sched.beta = schedule_from_json(j.at("beta"), "beta");
    if (j.contains("eps")) c.sched.eps = j.at("eps").get<double>();
    validate(c.kind, c.sched);
    return c;
}

nlohmann::json optimizer_to_json(const OptimizerConfig& c) {
    return {{"kind", to_string(c.kind)},
            {"gamma", schedule_to_json(c.sched.gamma)},
            {"alpha", schedule_to_json(c.sched.alpha)},
            {"beta", schedule_to_json(c.sched.beta)},
            {"eps", c.sched.eps}};
}

OptimizerState init_state(std::size_t dim) {
    OptimizerState s;
    s.m.assign(dim, 0.0);
    s.v.assign(dim, 0.0);
    s.vmax.assign(dim, 0.0);
    s.look.assign(dim, 0.0);
    return s;
}

void step_recursive(OptimizerKind kind, const HyperSchedule& sc, OptimizerState& st,
                    const Vec& g, Vec& theta) {
    if (g.size() != theta.size() || st.m.size() != theta.size())
        throw std::invalid_argument("optimizer state, gradient and parameters differ in size");
    const std::size_t n = ++st.n;
    const double gamma = sc.gamma(n), alpha = sc.alpha(n), beta = sc.beta(n), eps = sc.eps;
    st.prod_alpha *= alpha;
    st.prod_beta *= beta;
    const std::size_t dim = theta.size();

    auto momentum = [&](std::size_t j) { st.m[j] = alpha * st.m[j] + (1.0 - alpha) * g[j]; };
    auto second = [&](std::size_t j) { st.v[j] = beta * st.v[j] + (1.0 - beta) * (g[j] * g[j]); };

    for (std::size_t j = 0; j < dim; ++j) {
        double u = 0.0;
        switch (kind) {
            case OptimizerKind::sgd:
                u = gamma * g[j];
                break;
            case OptimizerKind::momentum:
                momentum(j);
                u = gamma * st.m[j];
                break;
            case OptimizerKind::nesterov:
                momentum(j);
                u = sc.gamma(n + 1) * sc.alpha(n + 1) * st.m[j] + gamma * (1.0 - alpha) * g[j];
                break;
            case OptimizerKind::adagrad:
                st.v[j] += g[j] * g[j];
                u = gamma / std::sqrt(eps + st.v[j]) * g[j];
                break;
            case OptimizerKind::rmsprop:
                second(j);
                u = gamma / std::sqrt(eps + st.v[j]) * g[j];
                break;
            case OptimizerKind::adam:
                momentum(j);
                second(j);
                u = gamma / (eps + std::sqrt(st.v[j] / (1.0 - st.prod_beta))) *
                    (st.m[j] / (1.0 - st.prod_alpha));
                break;
            case OptimizerKind::adamax:
                momentum(j);
                st.v[j] = std::max(beta * st.v[j], std::abs(g[j]));
                u = gamma / (eps + st.v[j]) * (st.m[j] / (1.0 - st.prod_alpha));
                break;
            case OptimizerKind::amsgrad:
                momentum(j);
                second(j);
                st.vmax[j] = std::max(st.vmax[j], st.v[j]);
                u = gamma / (eps + std::sqrt(st.vmax[j])) * st.m[j];
                break;
            case OptimizerKind::nadam: {
                momentum(j);
                second(j);
                const double a_next = sc.alpha(n + 1);
                st.look[j] = (1.0 - alpha) / (1.0 - st.prod_alpha) * g[j] +
                             a_next / (1.0 - st.prod_alpha * a_next) * st.m[j];
                u = gamma / (eps + std::sqrt(st.v[j] / (1.0 - st.prod_beta))) * st.look[j];
                break;
            }
        }
        theta[j] -= u;
    }
}

namespace {

// sum_{k=0}^{last} (1 - c_{k+1}) prod_{l=k+1}^{last} c_{l+1} f(g_{k,j})
template <class F>
double weighted_sum(const Schedule& c, const std::vector<Vec>& h, std::size_t last, std::size_t j, F f) {
    double s = 0.0, p = 1.0;
    for (std::size_t k = last + 1; k-- > 0;) {
        s += (1.0 - c(k + 1)) * p * f(h[k][j]);
        p *= c(k + 1);
    }
    return s;
}

double prod_first(const Schedule& c, std::size_t count) {
    double p = 1.0;
    for (std::size_t l = 1; l <= count; ++l) p *= c(l);
    return p;
}

}  // namespace

Vec phi_full_history(OptimizerKind kind, const HyperSchedule& sc, const std::vector<Vec>& h) {
    if (h.empty()) throw std::invalid_argument("history must be nonempty");
    const std::size_t n = h.size() - 1, dim = h.front().size();
    const double gamma = sc.gamma(n + 1), eps = sc.eps;
    const double pa = prod_first(sc.alpha, n + 1), pb = prod_first(sc.beta, n + 1);
    auto id = [](double x) { return x; };
    auto sq = [](double x) { return x * x; };
    Vec out(dim, 0.0);
    for (std::size_t j = 0; j < dim; ++j) {
        const double gn = h[n][j];
        switch (kind) {
            case OptimizerKind::sgd:
                out[j] = gamma * gn;
                break;
            case OptimizerKind::momentum:
                out[j] = gamma * weighted_sum(sc.alpha, h, n, j, id);
                break;
            case OptimizerKind::nesterov:
                out[j] = sc.gamma(n + 2) * sc.alpha(n + 2) * weighted_sum(sc.alpha, h, n, j, id) +
                         gamma * (1.0 - sc.alpha(n + 1)) * gn;
                break;
            case OptimizerKind::adagrad: {
                double s = 0.0;
                for (std::size_t k = 0; k <= n; ++k) s += h[k][j] * h[k][j];
                out[j] = gamma / std::sqrt(eps + s) * gn;
                break;
            }
            case OptimizerKind::rmsprop:
                out[j] = gamma / std::sqrt(eps + weighted_sum(sc.beta, h, n, j, sq)) * gn;
                break;
            case OptimizerKind::adam:
                out[j] = gamma / (eps + std::sqrt(weighted_sum(sc.beta, h, n, j, sq) / (1.0 - pb))) *
                         (weighted_sum(sc.alpha, h, n, j, id) / (1.0 - pa));
                break;
            case OptimizerKind::adamax: {
                double w = 0.0, p = 1.0;
                for (std::size_t k = n + 1; k-- > 0;) {
                    w = std::max(w, p * std::abs(h[k][j]));
                    p *= sc.beta(k + 1);
                }
                out[j] = gamma / (eps + w) * (weighted_sum(sc.alpha, h, n, j, id) / (1.0 - pa));
                break;
            }
            case OptimizerKind::amsgrad: {
                double vmax = 0.0;
                for (std::size_t i = 0; i <= n; ++i) vmax = std::max(vmax, weighted_sum(sc.beta, h, i, j, sq));
                out[j] = gamma / (eps + std::sqrt(vmax)) * weighted_sum(sc.alpha, h, n, j, id);
                break;
            }
            case OptimizerKind::nadam: {
                const double a1 = sc.alpha(n + 1), a2 = sc.alpha(n + 2);
                const double pa2 = pa * a2;
                const double older = n > 0 ? weighted_sum(sc.alpha, h, n - 1, j, id) : 0.0;
                const double look = a2 * a1 * older / (1.0 - pa2) +
                                    ((1.0 - a1) / (1.0 - pa) + a2 * (1.0 - a1) / (1.0 - pa2)) * gn;
                out[j] = gamma / (eps + std::sqrt(weighted_sum(sc.beta, h, n, j, sq) / (1.0 - pb))) * look;
                break;
            }
        }
    }
    return out;
}

double equivalence_check(OptimizerKind kind, const HyperSchedule& sched,
                         const std::vector<Vec>& stream, const Vec& theta0) {
    Vec rec = theta0, hist = theta0;
    OptimizerState st = init_state(theta0.size());
    std::vector<Vec> history;
    double dev = 0.0;
    for (const Vec& g : stream) {
        step_recursive(kind, sched, st, g, rec);
        history.push_back(g);
        const Vec phi = phi_full_history(kind, sched, history);
        for (std::size_t j = 0; j < hist.size(); ++j) {
            hist[j] -= phi[j];
            dev = std::max(dev, std::abs(rec[j] - hist[j]));
        }
    }
    return dev;
}

HyperSchedule random_schedule(OptimizerKind kind, std::size_t steps, std::uint64_t seed) {
    Rng rng = make_stream(seed, static_cast<std::uint64_t>(kind), 0x5c4ed);
    std::uniform_real_distribution<double> ua(0.0, 0.99), ub(0.5, 0.9999), ug(0.0, 0.05), ue(-8.0, -3.0);
    Vec a(steps + 2), b(steps + 2), g(steps + 2);
    for (std::size_t i = 0; i < steps + 2; ++i) {
        a[i] = ua(rng);
        b[i] = ub(rng);
        g[i] = ug(rng);
    }
    HyperSchedule s;
    s.alpha = Schedule::table(a);
    s.beta = Schedule::table(b);
    s.gamma = Schedule::table(g);
    s.eps = std::pow(10.0, ue(rng));
    validate(kind, s);
    return s;
}

FuzzOutcome zero_coordinate_fuzz(OptimizerKind kind, std::size_t trials, std::uint64_t seed, double eps) {
    FuzzOutcome out;
    for (std::size_t t = 0; t < trials; ++t) {
        Rng rng = make_stream(seed, static_cast<std::uint64_t>(kind), t);
        const std::size_t dim = std::uniform_int_distribution<std::size_t>(1, 6)(rng);
        const std::size_t len = std::uniform_int_distribution<std::size_t>(1, 40)(rng);
        const std::size_t zero = std::uniform_int_distribution<std::size_t>(0, dim - 1)(rng);
        const double mag = std::pow(10.0, std::uniform_real_distribution<double>(-3.0, 12.0)(rng));
        std::normal_distribution<double> nd(0.0, mag);
        HyperSchedule sched = random_schedule(kind, len, seed ^ (t * 0x9e3779b97f4a7c15ULL));
        if (eps > 0.0) sched.eps = eps;

        std::vector<Vec> history;
        Vec theta(dim);
        for (double& v : theta) v = nd(rng);
        const double frozen = theta[zero];
        OptimizerState st = init_state(dim);
        bool ok = true;
        for (std::size_t k = 0; k < len; ++k) {
            Vec g(dim);
            for (double& v : g) v = nd(rng);
            g[zero] = 0.0;
            history.push_back(g);
            if (phi_full_history(kind, sched, history)[zero] != 0.0) ok = false;
            step_recursive(kind, sched, st, g, theta);
        }
        if (theta[zero] != frozen) ok = false;
        ++out.trials;
        if (!ok) ++out.failures;
    }
    return out;
}

double Trajectory::min_risk() const {
    if (risk.empty()) return kInf;
    return *std::min_element(risk.begin(), risk.end());
}

namespace {

bool all_finite(const Vec& v) {
    return std::all_of(v.begin(), v.end(), [](double x) { return std::isfinite(x); });
}

}  // namespace

Trajectory train(const Architecture& arch, const Vec& theta0, OptimizerKind kind,
                 const HyperSchedule& sched, const Dataset& data, const TrainOptions& opts,
                 const Monitor& monitor) {
    validate(kind, sched);
    if (theta0.size() != arch.param_count()) throw std::invalid_argument("theta0 has wrong length");
    Trajectory tr;
    Vec theta = theta0;
    const Activation relu;
    tr.risk.push_back(empirical_risk(arch, theta, relu, data));
    if (opts.keep_thetas) tr.thetas.push_back(theta);
    OptimizerState st = init_state(theta.size());
    std::vector<Vec> history;
    Vec hist_theta = theta;

    std::vector<std::size_t> order(data.size());
    for (std::size_t n = 1; n <= opts.steps; ++n) {
        Vec g;
        if (opts.batch_size == 0 || opts.batch_size >= data.size()) {
            g = generalized_gradient(arch, theta, data).g;
        } else {
            std::iota(order.begin(), order.end(), std::size_t{0});
            Rng rng = make_stream(opts.batch_seed, n);
            std::shuffle(order.begin(), order.end(), rng);
            std::vector<std::size_t> pick(order.begin(), order.begin() + opts.batch_size);
            std::sort(pick.begin(), pick.end());
            g = generalized_gradient(arch, theta, data.subset(pick)).g;
        }
        step_recursive(kind, sched, st, g, theta);
        if (opts.cross_check_history) {
            history.push_back(g);
            const Vec phi = phi_full_history(kind, sched, history);
            for (std::size_t j = 0; j < theta.size(); ++j) {
                hist_theta[j] -= phi[j];
                tr.history_deviation = std::max(tr.history_deviation, std::abs(hist_theta[j] - theta[j]));
            }
        }
        tr.steps_done = n;
        if (!all_finite(theta)) {
            tr.nonfinite = true;
            tr.nonfinite_step = n;
            break;
        }
        tr.risk.push_back(empirical_risk(arch, theta, relu, data));
        if (opts.keep_thetas) tr.thetas.push_back(theta);
        if (monitor) monitor(n, theta, g);
        if (opts.plateau_window > 0 && n >= opts.plateau_window &&
            std::abs(tr.risk[n] - tr.risk[n - opts.plateau_window]) < opts.plateau_tol) {
            tr.plateaued = true;
            break;
        }
    }
    tr.theta_final = theta;
    return tr;
}

}  // namespace relulab
