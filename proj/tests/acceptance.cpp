#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <random>
#include <sstream>
#include <string>

#include "relulab/experiments.hpp"
#include "relulab/gradients.hpp"
#include "relulab/improve.hpp"
#include "relulab/inactivity.hpp"
#include "relulab/optimizers.hpp"
#include "relulab/probability.hpp"

using namespace relulab;

namespace {

struct Outcome {
    bool pass = true;
    std::string detail;
};

Vec normal_vec(std::size_t n, Rng& rng) {
    std::normal_distribution<double> nd;
    Vec v(n);
    for (double& x : v) x = nd(rng);
    return v;
}

Dataset random_batch(std::size_t d, std::size_t M, Rng& rng) {
    std::uniform_real_distribution<double> u(0.0, 1.0);
    std::normal_distribution<double> nd;
    Dataset b;
    for (std::size_t m = 0; m < M; ++m) {
        Vec x(d);
        for (double& v : x) v = u(rng);
        b.x.push_back(x);
        b.y.push_back(nd(rng));
    }
    return b;
}

std::string fmt(const char* f, double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, f, v);
    return buf;
}

Outcome gradient_oracles() {
    const Architecture arch({2, 3, 3, 1});
    double worst_ps = 0.0, worst_fd = 0.0;
    for (std::uint64_t s = 0; s < 100; ++s) {
        Rng rng = make_stream(1, s);
        const Vec theta = normal_vec(arch.param_count(), rng);
        const Dataset batch = random_batch(2, 10, rng);
        worst_ps = std::max(worst_ps, max_abs_diff(generalized_gradient(arch, theta, batch).g,
                                                   path_sum_gradient(arch, theta, batch).g));
        const Activation act(100.0);
        const Vec sm = smoothed_gradient(arch, theta, act, batch).g;
        const Vec fd = finite_difference_gradient(arch, theta, act, batch, 1e-6).g;
        for (std::size_t p = 0; p < sm.size(); ++p)
            if (std::abs(sm[p]) >= 1e-8) worst_fd = std::max(worst_fd, std::abs(fd[p] - sm[p]) / std::abs(sm[p]));
    }
    return {worst_ps <= 1e-10 && worst_fd <= 1e-5,
            "path-sum max diff " + fmt("%.2e", worst_ps) + ", FD max rel err " + fmt("%.2e", worst_fd)};
}

Outcome gradient_limit() {
    const Architecture arch({2, 3, 3, 1});
    const Vec rs{1e1, 1e2, 1e3, 1e4, 1e5, 1e6, 1e7, 1e8};
    std::size_t residual_bad = 0, gap_bad = 0, gap_final_bad = 0;
    for (std::uint64_t s = 0; s < 50; ++s) {
        Rng rng = make_stream(2, s);
        const Vec theta = normal_vec(arch.param_count(), rng);
        const Dataset batch = random_batch(2, 10, rng);
        const auto res = gradient_limit_residuals(arch, theta, batch, rs);
        bool zero = false, res_ok = true, mono = true;
        for (std::size_t i = 0; i < res.size(); ++i) {
            if (zero && res[i].grad_residual != 0.0) res_ok = false;
            zero = zero || res[i].grad_residual == 0.0;
            if (i > 0 && res[i].risk_gap > res[i - 1].risk_gap) mono = false;
        }
        residual_bad += !(res_ok && zero);
        gap_bad += !mono;
        gap_final_bad += res.back().risk_gap != 0.0;
    }
    return {residual_bad == 0 && gap_bad == 0 && gap_final_bad == 0,
            "residual not eventually 0: " + std::to_string(residual_bad) + "/50, risk gap increasing somewhere: " +
                std::to_string(gap_bad) + "/50, final gap nonzero: " + std::to_string(gap_final_bad) + "/50"};
}

Outcome optimizer_duality() {
    double worst = 0.0;
    std::size_t fuzz_fail = 0;
    for (OptimizerKind kind : kAllOptimizers) {
        const HyperSchedule sched;
        for (std::uint64_t s = 0; s < 20; ++s) {
            Rng rng = make_stream(3, s, static_cast<std::uint64_t>(kind));
            std::vector<Vec> stream;
            for (int n = 0; n < 200; ++n) stream.push_back(normal_vec(6, rng));
            worst = std::max(worst, equivalence_check(kind, sched, stream, normal_vec(6, rng)));
        }
        fuzz_fail += zero_coordinate_fuzz(kind, 1000, 3 + static_cast<std::uint64_t>(kind)).failures;
    }
    return {worst <= 1e-9 && fuzz_fail == 0,
            "max deviation " + fmt("%.2e", worst) + ", fuzz failures " + std::to_string(fuzz_fail) + "/9000"};
}

Outcome persistence() {
    const Architecture arch({1, 20, 10, 1});
    const Dataset data = synthetic_dataset(1, 10, 0.0, 1.0, "sin", 0.0, 4);
    const auto dist = InitDistribution::standard_normal();
    std::size_t runs = 0, bad_persist = 0, bad_vanish = 0, coords = 0;
    for (OptimizerKind kind : kAllOptimizers) {
        for (std::uint64_t run = 0; run < 50; ++run) {
            Rng rng = make_stream(4, run);
            const Vec theta0 = dist.sample_params(arch, rng);
            TrainOptions o;
            o.steps = 500;
            o.keep_thetas = true;
            const Trajectory tr = train(arch, theta0, kind, HyperSchedule{}, data, o);
            ++runs;
            bad_persist += !persistence_check(arch, tr.thetas, 0.0, 1.0).all();
            const auto inactive = inactive_set(arch, theta0, 0.0, 1.0);
            bool vanish = true;
            for (std::size_t n = 50; n <= 500; n += 50) {
                const Vec g = generalized_gradient(arch, tr.thetas[n], data).g;
                for (std::size_t i : inactive) {
                    vanish = vanish && g[arch.bpos(1, i)] == 0.0 && g[arch.wpos(1, i, 1)] == 0.0;
                    coords += 2;
                }
                vanish = vanish && vanishing_gradient_check(arch, tr.thetas[n], data, 0.0, 1.0).all();
            }
            bad_vanish += !vanish;
        }
    }
    return {bad_persist == 0 && bad_vanish == 0,
            std::to_string(runs) + " runs, persistence failures " + std::to_string(bad_persist) +
                ", vanishing failures " + std::to_string(bad_vanish) + " (" + std::to_string(coords) +
                " coordinates checked)"};
}

Outcome per_neuron_probability() {
    // Trapezoid rule for the integral of Phi(u) phi(u) over [0, 12].
    double analytic = 0.0;
    const int n = 100000;
    const double h = 12.0 / n;
    for (int i = 0; i <= n; ++i) {
        const double u = h * i;
        const double f = 0.5 * std::erfc(-u / std::sqrt(2.0)) * std::exp(-0.5 * u * u) / std::sqrt(2.0 * M_PI);
        analytic += (i == 0 || i == n) ? 0.5 * f : f;
    }
    analytic *= h;
    const auto dist = InitDistribution::standard_normal();
    const McEstimate one = mc_per_neuron_probability(Architecture({1, 1, 1}), dist, 0.0, 1.0, 20000, 5);
    const McEstimate w20 = mc_inactive_probability(Architecture({1, 20, 1}), dist, 0.0, 1.0, 3, 20000, 5);
    const double tail = binomial_tail(20, 3, 0.375);
    const bool ok = std::abs(analytic - 0.375) < 1e-9 && std::abs(one.estimate - 0.375) <= 3.0 * one.stderr_ &&
                    std::abs(w20.estimate - tail) <= 3.0 * w20.stderr_;
    return {ok, "quadrature " + fmt("%.10f", analytic) + ", MC " + fmt("%.4f", one.estimate) + " +- " +
                    fmt("%.4f", one.stderr_) + "; P(#I>=3) MC " + fmt("%.4f", w20.estimate) + " vs exact " +
                    fmt("%.4f", tail)};
}

Outcome bound_validity() {
    const auto dist = InitDistribution::standard_normal();
    const std::size_t N = 20000;
    Vec widths, below;
    bool ok = true;
    std::ostringstream os;
    for (std::size_t l : {5u, 10u, 20u, 40u}) {
        const EtaChoice e = optimize_eta(dist, 1, 0.0, 1.0, l, 3);
        const McEstimate mc = mc_inactive_probability(Architecture({1, l, 1}), dist, 0.0, 1.0, 3, N, 6);
        ok = ok && mc.estimate >= e.bound - 3.0 * mc.stderr_;
        os << "l=" << l << " mc " << fmt("%.4f", mc.estimate) << " bound " << fmt("%.4f", e.bound) << "; ";
        widths.push_back(static_cast<double>(l));
        below.push_back(1.0 - mc.estimate);
    }
    const RateFit fit = rate_fit(widths, below, 1.0 / static_cast<double>(N));
    ok = ok && fit.slope < 0.0;
    os << "decay slope " << fmt("%.4f", fit.slope) << (fit.floored ? " (floored)" : "");
    return {ok, os.str()};
}

Outcome depth_bound_check() {
    std::vector<std::size_t> dims{1};
    for (int k = 0; k < 9; ++k) dims.push_back(2);
    dims.push_back(1);
    const McEstimate mc =
        mc_dead_block_probability(Architecture(dims), InitDistribution::standard_normal(), 20000, 7);
    const double bound = depth_bound(2, 10, 0.5);
    return {mc.estimate >= bound - 3.0 * mc.stderr_,
            "MC " + fmt("%.4f", mc.estimate) + " +- " + fmt("%.4f", mc.stderr_) + " vs bound " + fmt("%.5f", bound)};
}

Outcome certificates() {
    std::ostringstream os;
    bool ok = true;
    for (const char* opt : {"sgd", "adam"}) {
        nlohmann::json optimizer = {{"kind", opt}, {"gamma", 0.05}};
        if (std::string(opt) == "adam") {
            Vec table;
            for (int n = 1; n <= 40000; ++n) table.push_back(0.01 / (1.0 + n / 200.0));
            optimizer["gamma"] = {{"table", table}};
        }
        const ExperimentConfig c = config_from_json({{"dims", {1, 8, 8, 1}},
                                                     {"optimizer", optimizer},
                                                     {"dataset", {{"synthetic", {{"M", 10}}}}},
                                                     {"steps", 40000},
                                                     {"plateau", {{"window", 100}, {"tol", 1e-10}}},
                                                     {"seed", 8}});
        const Architecture arch = train_architecture(c);
        const Dataset data = load_dataset(c);
        std::size_t eligible = 0, witnessed = 0, tried = 0, unplateaued = 0;
        for (std::size_t run = 0; eligible < 20 && run < 400; ++run) {
            RunRecord r = run_training(c, arch, data, run, true);
            ++tried;
            if (r.inactive_init < 3) continue;
            if (!r.trajectory.plateaued) {
                ++unplateaued;
                continue;
            }
            ++eligible;
            witnessed += r.certificate && r.certificate->margin > 0.0 && r.certificate_gap > 0.0;
        }
        ok = ok && eligible == 20 && witnessed == eligible;
        os << opt << ": " << witnessed << "/" << eligible << " plateaued runs with #I>=3 certified (" << tried
           << " runs drawn, " << unplateaued << " not plateaued); ";
    }
    return {ok, os.str()};
}

Outcome constructions() {
    Rng rng = make_stream(9, 0);
    std::uniform_int_distribution<std::size_t> dim(1, 5), count(1, 50);
    std::uniform_real_distribution<double> u(-1.0, 1.0), u01(0.0, 1.0);
    double worst_bump = 0.0;
    for (int t = 0; t < 1000; ++t) {
        const std::size_t d = dim(rng), M = count(rng);
        std::vector<Vec> X(M, Vec(d));
        for (auto& x : X)
            for (double& v : x) v = u(rng);
        const std::size_t k = std::uniform_int_distribution<std::size_t>(0, M - 1)(rng);
        const double delta = 3.0 * u(rng);
        const SeparationTriple s = indicator_bump(X, k, delta, rng);
        for (std::size_t m = 0; m < M; ++m) worst_bump = std::max(worst_bump, std::abs(s(X[m]) - (m == k ? delta : 0.0)));
    }

    double worst_hit = 0.0, worst_other = 0.0;
    std::size_t instances = 0, inexact_instances = 0, inexact_points = 0, points = 0;
    while (instances < 100) {
        const std::size_t d = dim(rng), M = 4 + count(rng) % 17;
        const Architecture arch({d, 7, 4, 1});
        Vec theta = normal_vec(arch.param_count(), rng);
        for (std::size_t i = 1; i <= 3; ++i) {
            for (std::size_t j = 1; j <= d; ++j) theta[arch.wpos(1, i, j)] = -std::abs(theta[arch.wpos(1, i, j)]);
            theta[arch.bpos(1, i)] = -std::abs(theta[arch.bpos(1, i)]) - 0.01;
        }
        Dataset data;
        for (std::size_t m = 0; m < M; ++m) {
            Vec x(d);
            for (double& v : x) v = u01(rng);
            data.x.push_back(x);
            data.y.push_back(0.0);
        }
        const Vec before = outputs(arch, theta, Activation{}, data);
        const std::size_t lo = static_cast<std::size_t>(std::min_element(before.begin(), before.end()) - before.begin());
        const std::size_t hi = static_cast<std::size_t>(std::max_element(before.begin(), before.end()) - before.begin());
        if (!(before[lo] < before[hi])) continue;
        const std::size_t p = std::uniform_int_distribution<std::size_t>(0, M - 1)(rng);
        const double Z = before[lo] + (0.05 + 0.9 * u01(rng)) * (before[hi] - before[lo]);
        const RetargetResult r = retarget_point(arch, theta, data, p, Z, lo, hi, rng);
        const Vec after = outputs(arch, r.theta, Activation{}, data);
        worst_hit = std::max(worst_hit, std::abs(after[p] - Z));
        bool exact = true;
        for (std::size_t m = 0; m < M; ++m) {
            if (m == p) continue;
            ++points;
            worst_other = std::max(worst_other, std::abs(after[m] - before[m]));
            if (after[m] != before[m]) {
                exact = false;
                ++inexact_points;
            }
        }
        inexact_instances += !exact;
        ++instances;
    }
    return {worst_bump <= 1e-9 && worst_hit <= 1e-9 && inexact_instances == 0,
            "bump max err " + fmt("%.2e", worst_bump) + ", retarget max |N-Z| " + fmt("%.2e", worst_hit) +
                ", non-target outputs changed at " + std::to_string(inexact_points) + "/" + std::to_string(points) +
                " points in " + std::to_string(inexact_instances) + "/100 instances (max change " +
                fmt("%.2e", worst_other) + ")"};
}

}  // namespace

int main() {
    struct Criterion {
        int id;
        const char* name;
        double budget_s;
        std::function<Outcome()> run;
    };
    const Criterion criteria[] = {
        {1, "gradient oracle equivalence", 10, gradient_oracles},
        {2, "gradient limit", 10, gradient_limit},
        {3, "optimizer duality", 30, optimizer_duality},
        {4, "inactivity persistence and vanishing gradients", 120, persistence},
        {5, "per-neuron inactivity probability", 30, per_neuron_probability},
        {6, "bound validity", 60, bound_validity},
        {7, "depth bound", 30, depth_bound_check},
        {8, "non-convergence certificate", 300, certificates},
        {9, "construction exactness", 30, constructions},
    };
    int failures = 0;
    for (const auto& c : criteria) {
        const auto t0 = std::chrono::steady_clock::now();
        Outcome o;
        try {
            o = c.run();
        } catch (const std::exception& e) {
            o = {false, std::string("exception: ") + e.what()};
        }
        const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        const bool pass = o.pass && secs < c.budget_s;
        failures += !pass;
        std::printf("criterion %d (%s): %s [%.2f s / %.0f s] %s\n", c.id, c.name, pass ? "PASS" : "FAIL", secs,
                    c.budget_s, o.detail.c_str());
        std::fflush(stdout);
    }
    return failures == 0 ? 0 : 1;
}
