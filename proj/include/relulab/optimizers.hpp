#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include <json.hpp>

#include "relulab/network.hpp"

namespace relulab {

enum class OptimizerKind { sgd, momentum, nesterov, adagrad, rmsprop, adam, adamax, amsgrad, nadam };

inline constexpr OptimizerKind kAllOptimizers[] = {
    OptimizerKind::sgd,     OptimizerKind::momentum, OptimizerKind::nesterov,
    OptimizerKind::adagrad, OptimizerKind::rmsprop,  OptimizerKind::adam,
    OptimizerKind::adamax,  OptimizerKind::amsgrad,  OptimizerKind::nadam};

std::string to_string(OptimizerKind k);
// Throws std::invalid_argument for unknown ids, with a dedicated message for
// adamw and adadelta.
OptimizerKind parse_optimizer(const std::string& id);

// n -> value for n = 1, 2, ...; a table holds its last entry past the end.
class Schedule {
public:
    Schedule(double c = 0.0) : const_(c) {}
    static Schedule table(Vec values);
    double operator()(std::size_t n) const;
    bool is_table() const { return !table_.empty(); }
    const Vec& values() const { return table_; }
    double constant() const { return const_; }

private:
    double const_ = 0.0;
    Vec table_;
};

struct HyperSchedule {
    Schedule gamma{0.01};
    Schedule alpha{0.9};
    Schedule beta{0.999};
    double eps = 1e-8;
};

void validate(OptimizerKind kind, const HyperSchedule& sched);

struct OptimizerConfig {
    OptimizerKind kind = OptimizerKind::sgd;
    HyperSchedule sched;
};

// {"kind": ..., "gamma": {"const": x} | {"table": [...]} | x, "alpha": ..., "beta": ..., "eps": x}
OptimizerConfig optimizer_from_json(const nlohmann::json& j);
nlohmann::json optimizer_to_json(const OptimizerConfig& c);

struct OptimizerState {
    Vec m;      // first moment
    Vec v;      // second moment (adamax: running max of |g|)
    Vec vmax;   // amsgrad running max of v
    Vec look;   // nadam lookahead moment
    std::size_t n = 0;
    double prod_alpha = 1.0;
    double prod_beta = 1.0;
};

OptimizerState init_state(std::size_t dim);

// Step n = state.n + 1: consumes the gradient evaluated at theta_{n-1}, updates
// state and theta in place.
void step_recursive(OptimizerKind kind, const HyperSchedule& sched, OptimizerState& state,
                    const Vec& grad, Vec& theta);

// Closed-form update Phi_n for history g_0..g_n (theta_{n+1} = theta_n - Phi_n).
Vec phi_full_history(OptimizerKind kind, const HyperSchedule& sched, const std::vector<Vec>& history);

// Drives both forms on the same stream from theta0 and returns the largest
// coordinate deviation over all steps.
double equivalence_check(OptimizerKind kind, const HyperSchedule& sched,
                         const std::vector<Vec>& stream, const Vec& theta0);

struct FuzzOutcome {
    std::size_t trials = 0;
    std::size_t failures = 0;
    bool passed() const { return failures == 0; }
};

// Random histories with one coordinate held at zero; the update in that
// coordinate must be exactly 0 in both forms. eps overrides the schedule's
// epsilon when positive.
FuzzOutcome zero_coordinate_fuzz(OptimizerKind kind, std::size_t trials, std::uint64_t seed,
                                 double eps = 0.0);

HyperSchedule random_schedule(OptimizerKind kind, std::size_t steps, std::uint64_t seed);

struct TrainOptions {
    std::size_t steps = 0;
    std::size_t batch_size = 0;  // 0 means full batch
    std::uint64_t batch_seed = 0;
    bool keep_thetas = false;
    bool cross_check_history = false;
    std::size_t plateau_window = 0;  // 0 disables early stopping
    double plateau_tol = 1e-10;
};

struct Trajectory {
    Vec risk;                  // full-data risk at theta_0..theta_n
    std::vector<Vec> thetas;   // filled when keep_thetas
    Vec theta_final;
    std::size_t steps_done = 0;
    bool nonfinite = false;
    std::size_t nonfinite_step = 0;
    bool plateaued = false;
    double history_deviation = 0.0;
    double min_risk() const;
};

// Called after every step n >= 1 with theta_n and the gradient that produced it.
using Monitor = std::function<void(std::size_t n, const Vec& theta, const Vec& grad)>;

Trajectory train(const Architecture& arch, const Vec& theta0, OptimizerKind kind,
                 const HyperSchedule& sched, const Dataset& data, const TrainOptions& opts,
                 const Monitor& monitor = {});

}  // namespace relulab
