#include "relulab/inactivity.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <stdexcept>

#include "relulab/gradients.hpp"
#include "relulab/parallel.hpp"

namespace relulab {

namespace {

double corner_sum(const Architecture& arch, const Vec& theta, std::size_t i, double a, double b) {
    double s = 0.0;
    for (std::size_t j = 1; j <= arch.input_dim(); ++j) {
        const double w = theta[arch.wpos(1, i, j)];
        s += std::max(w * a, w * b);
    }
    return s;
}

void check_box(double a, double b) {
    if (!(a < b)) throw std::invalid_argument("box needs a < b");
}

}  // namespace

std::vector<std::size_t> inactive_set(const Architecture& arch, const Vec& theta, double a, double b) {
    check_box(a, b);
    std::vector<std::size_t> out;
    for (std::size_t i = 1; i <= arch.width(1); ++i)
        if (corner_sum(arch, theta, i, a, b) < -theta[arch.bpos(1, i)]) out.push_back(i);
    return out;
}

double neuron_sup(const Architecture& arch, const Vec& theta, std::size_t i, double a, double b) {
    return corner_sum(arch, theta, i, a, b) + theta[arch.bpos(1, i)];
}

std::vector<std::size_t> dead_blocks(const Architecture& arch, const Vec& theta) {
    std::vector<std::size_t> out;
    for (std::size_t k = 2; k <= arch.depth(); ++k) {
        bool dead = true;
        for (std::size_t p = arch.block_begin(k); p < arch.block_end(k) && dead; ++p) dead = theta[p] < 0.0;
        if (dead) out.push_back(k);
    }
    return out;
}

bool PersistenceReport::all() const {
    return std::all_of(contained.begin(), contained.end(), [](bool v) { return v; }) &&
           std::all_of(frozen.begin(), frozen.end(), [](bool v) { return v; });
}

PersistenceReport persistence_check(const Architecture& arch, const std::vector<Vec>& trajectory,
                                    double a, double b) {
    PersistenceReport rep;
    if (trajectory.empty()) return rep;
    const Vec& theta0 = trajectory.front();
    const auto base = inactive_set(arch, theta0, a, b);
    std::vector<std::size_t> coords;
    for (std::size_t i : base) {
        for (std::size_t j = 1; j <= arch.input_dim(); ++j) coords.push_back(arch.wpos(1, i, j));
        coords.push_back(arch.bpos(1, i));
    }
    for (const Vec& th : trajectory) {
        const auto now = inactive_set(arch, th, a, b);
        rep.contained.push_back(std::includes(now.begin(), now.end(), base.begin(), base.end()));
        bool frozen = true;
        for (std::size_t p : coords)
            frozen = frozen && std::bit_cast<std::uint64_t>(th[p]) == std::bit_cast<std::uint64_t>(theta0[p]);
        rep.frozen.push_back(frozen);
    }
    return rep;
}

bool VanishingReport::all() const {
    return std::all_of(neuron_ok.begin(), neuron_ok.end(), [](bool v) { return v; }) &&
           std::all_of(block_ok.begin(), block_ok.end(), [](bool v) { return v; });
}

VanishingReport vanishing_gradient_check(const Architecture& arch, const Vec& theta, const Dataset& batch,
                                         double a, double b) {
    VanishingReport rep;
    const Vec g = generalized_gradient(arch, theta, batch).g;
    for (std::size_t i : inactive_set(arch, theta, a, b)) {
        bool ok = g[arch.bpos(1, i)] == 0.0;
        for (std::size_t j = 1; j <= arch.input_dim(); ++j) ok = ok && g[arch.wpos(1, i, j)] == 0.0;
        rep.neurons.push_back(i);
        rep.neuron_ok.push_back(ok);
    }
    for (std::size_t k : dead_blocks(arch, theta)) {
        if (k == arch.depth()) {
            rep.skipped_blocks.push_back(k);
            continue;
        }
        bool ok = true;
        for (std::size_t p = 0; p < arch.block_end(k); ++p) ok = ok && g[p] == 0.0;
        rep.blocks.push_back(k);
        rep.block_ok.push_back(ok);
    }
    return rep;
}

namespace {

McEstimate bernoulli_estimate(const std::vector<double>& hits, double trials_per_sample) {
    double s = 0.0;
    for (double h : hits) s += h;  // ascending sample order
    const double n = static_cast<double>(hits.size()) * trials_per_sample;
    McEstimate est;
    est.samples = hits.size();
    est.estimate = s / n;
    est.stderr_ = std::sqrt(est.estimate * (1.0 - est.estimate) / n);
    return est;
}

Vec sample_first_block(const Architecture& arch, const InitDistribution& dist, Rng& rng) {
    // Same values as the first block of a full draw: coordinates are sampled in order.
    Vec theta(arch.param_count(), 0.0);
    for (std::size_t p = 0; p < arch.block_end(1); ++p) theta[p] = dist.sample(rng) / dist.scale(p);
    return theta;
}

}  // namespace

McEstimate mc_inactive_probability(const Architecture& arch, const InitDistribution& dist, double a,
                                   double b, std::size_t m, std::size_t samples, std::uint64_t seed,
                                   std::uint64_t run, std::size_t workers) {
    if (samples < 100) throw std::invalid_argument("Monte Carlo needs at least 100 samples");
    check_box(a, b);
    std::vector<double> hits(samples, 0.0);
    parallel_for(samples, workers, [&](std::size_t i) {
        Rng rng = make_stream(seed, run, i);
        const Vec theta = sample_first_block(arch, dist, rng);
        hits[i] = inactive_set(arch, theta, a, b).size() >= m ? 1.0 : 0.0;
    });
    return bernoulli_estimate(hits, 1.0);
}

McEstimate mc_per_neuron_probability(const Architecture& arch, const InitDistribution& dist, double a,
                                     double b, std::size_t samples, std::uint64_t seed, std::uint64_t run,
                                     std::size_t workers) {
    if (samples < 100) throw std::invalid_argument("Monte Carlo needs at least 100 samples");
    check_box(a, b);
    std::vector<double> hits(samples, 0.0);
    parallel_for(samples, workers, [&](std::size_t i) {
        Rng rng = make_stream(seed, run, i);
        const Vec theta = sample_first_block(arch, dist, rng);
        hits[i] = static_cast<double>(inactive_set(arch, theta, a, b).size());
    });
    return bernoulli_estimate(hits, static_cast<double>(arch.width(1)));
}

McEstimate mc_dead_block_probability(const Architecture& arch, const InitDistribution& dist,
                                     std::size_t samples, std::uint64_t seed, std::uint64_t run,
                                     std::size_t workers) {
    if (samples < 100) throw std::invalid_argument("Monte Carlo needs at least 100 samples");
    std::vector<double> hits(samples, 0.0);
    parallel_for(samples, workers, [&](std::size_t i) {
        Rng rng = make_stream(seed, run, i);
        const Vec theta = dist.sample_params(arch, rng);
        hits[i] = dead_blocks(arch, theta).empty() ? 0.0 : 1.0;
    });
    return bernoulli_estimate(hits, 1.0);
}

}  // namespace relulab
