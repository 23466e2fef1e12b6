#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "relulab/improve.hpp"
#include "relulab/network.hpp"
#include "relulab/optimizers.hpp"
#include "relulab/probability.hpp"

namespace relulab {

struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct NumericError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct DatasetSpec {
    std::string file;  // CSV path; empty selects the synthetic generator
    std::size_t M = 10;
    std::string target = "sin";
    double noise = 0.0;
};

struct ExperimentConfig {
    std::vector<std::size_t> dims;    // single architecture for train / grad-check
    std::size_t input_dim = 1;
    std::vector<std::size_t> widths;  // sweep grid
    std::vector<std::size_t> depths;  // hidden layers per grid cell
    nlohmann::json width_map;         // echoed, never used
    InitDistribution init = InitDistribution::standard_normal();
    OptimizerConfig optimizer;
    DatasetSpec dataset;
    double a = 0.0, b = 1.0;
    std::size_t steps = 0;
    std::size_t plateau_window = 100;
    double plateau_tol = 1e-10;
    std::vector<std::size_t> thresholds{3};
    std::size_t runs = 1;
    std::size_t samples = 20000;
    std::uint64_t seed = 0;
    std::size_t monitor_every = 10;
    std::size_t batch = 0;
    Vec r_list{1e1, 1e2, 1e3, 1e4, 1e5, 1e6, 1e7, 1e8};
};

ExperimentConfig config_from_json(const nlohmann::json& j);
nlohmann::json config_to_json(const ExperimentConfig& c);
ExperimentConfig load_config(const std::filesystem::path& path);

// (d, w, ..., w, 1) with `hidden` copies of w.
Architecture grid_architecture(std::size_t input_dim, std::size_t width, std::size_t hidden);
Architecture train_architecture(const ExperimentConfig& c);

// M equally spaced points in the box, jittered by up to a quarter spacing.
Dataset synthetic_dataset(std::size_t d, std::size_t M, double a, double b, const std::string& target,
                          double noise, std::uint64_t seed);
Dataset load_dataset(const ExperimentConfig& c);

// Stream purposes under (master seed, run).
enum class Purpose : std::uint64_t { init = 0, batches = 1, certificate = 2, dataset = 3 };
Rng purpose_stream(std::uint64_t seed, std::uint64_t run, Purpose p);

struct RunRecord {
    std::size_t run = 0;
    std::uint64_t seed = 0;
    std::string architecture;
    std::string optimizer;
    std::size_t inactive_init = 0;
    std::size_t inactive_final = 0;
    Trajectory trajectory;
    std::vector<std::size_t> monitored_steps;
    std::vector<std::size_t> inactive_count;  // at each monitored step
    bool persistence_ok = true;
    bool vanishing_ok = true;
    std::string certificate_outcome;
    std::optional<Certificate> certificate;
    double certificate_gap = 0.0;
    double wall_seconds = 0.0;
    Vec theta0;

    nlohmann::json to_json() const;  // wall time included; the trajectory is not
};

// Initializes from (seed, run), trains, monitors and attempts a certificate.
RunRecord run_training(const ExperimentConfig& c, const Architecture& arch, const Dataset& data,
                       std::size_t run, bool certify = true);

struct CommandResult {
    std::vector<std::string> failures;  // assertion failures, empty when all hold
    std::vector<std::filesystem::path> files;
    bool ok() const { return failures.empty(); }
};

CommandResult cmd_train(const ExperimentConfig& c, const std::filesystem::path& out, std::size_t workers);
CommandResult cmd_sweep(const ExperimentConfig& c, const std::filesystem::path& out, std::size_t workers);
CommandResult cmd_mc_inactive(const ExperimentConfig& c, const std::filesystem::path& out,
                              std::size_t workers);
CommandResult cmd_bound_report(const ExperimentConfig& c, const std::filesystem::path& out,
                               std::size_t workers);
CommandResult cmd_grad_check(const ExperimentConfig& c, const std::filesystem::path& out);

struct CertifyInputs {
    std::filesystem::path params;      // final parameters
    std::filesystem::path data;        // dataset CSV
    std::filesystem::path init;        // optional initial parameters
    std::filesystem::path trajectory;  // optional trajectory CSV with a risk column
    std::optional<double> a, b;        // box override
    std::optional<std::size_t> run;    // row filter for multi-run trajectory CSVs
    std::uint64_t seed = 0;
};

CommandResult cmd_improve_certify(const CertifyInputs& in, const std::filesystem::path& out);

}  // namespace relulab
