#include <cstdint>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "relulab/experiments.hpp"

using namespace relulab;

namespace {

constexpr int kOk = 0;
constexpr int kUsage = 1;
constexpr int kNumeric = 2;
constexpr int kAssert = 3;

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Experiments on dead first-layer neurons and non-convergence of ReLU network training"};
    app.require_subcommand(1);

    std::string config_path, out_dir = "out";
    std::optional<std::uint64_t> seed;
    std::size_t workers = 1;
    bool assert_mode = false;
    app.add_option("--config", config_path, "experiment config (JSON)");
    app.add_option("--seed", seed, "master seed, overrides the config");
    app.add_option("--workers", workers, "worker threads")->check(CLI::PositiveNumber);
    app.add_option("--out", out_dir, "output directory");
    app.add_flag("--assert", assert_mode, "exit with status 3 when a check fails");

    auto* train = app.add_subcommand("train", "train with monitors and attempt a certificate");
    auto* sweep = app.add_subcommand("sweep", "width x depth grid of inactivity fractions");
    auto* mc = app.add_subcommand("mc-inactive", "Monte Carlo inactivity probabilities");
    auto* bound = app.add_subcommand("bound-report", "inactivity lower bounds against Monte Carlo");
    auto* grad = app.add_subcommand("grad-check", "backprop, path-sum and finite-difference comparison");
    auto* cert = app.add_subcommand("improve-certify", "certificate of a strictly better parameter");

    CertifyInputs ci;
    std::vector<double> box;
    cert->add_option("--params", ci.params, "final parameters (JSON)")->required();
    cert->add_option("--data", ci.data, "dataset CSV")->required();
    cert->add_option("--init", ci.init, "initial parameters (JSON)");
    cert->add_option("--trajectory", ci.trajectory, "trajectory CSV with a risk column");
    cert->add_option("--box", box, "box endpoints a b")->expected(2);
    cert->add_option("--run", ci.run, "run id to read from the trajectory CSV");
    for (auto* sub : {train, sweep, mc, bound, grad, cert}) sub->fallthrough();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e) == 0 ? kOk : kUsage;
    }

    try {
        CommandResult res;
        if (cert->parsed()) {
            if (box.size() == 2) {
                ci.a = box[0];
                ci.b = box[1];
            }
            ci.seed = seed.value_or(0);
            res = cmd_improve_certify(ci, out_dir);
        } else {
            ExperimentConfig cfg = config_path.empty() ? ExperimentConfig{} : load_config(config_path);
            if (seed) cfg.seed = *seed;
            if (train->parsed()) res = cmd_train(cfg, out_dir, workers);
            if (sweep->parsed()) res = cmd_sweep(cfg, out_dir, workers);
            if (mc->parsed()) res = cmd_mc_inactive(cfg, out_dir, workers);
            if (bound->parsed()) res = cmd_bound_report(cfg, out_dir, workers);
            if (grad->parsed()) res = cmd_grad_check(cfg, out_dir);
        }
        for (const auto& f : res.files) std::cout << f.string() << '\n';
        for (const auto& msg : res.failures) std::cerr << "check failed: " << msg << '\n';
        return assert_mode && !res.ok() ? kAssert : kOk;
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << '\n';
        return kUsage;
    } catch (const NumericError& e) {
        std::cerr << "numeric failure: " << e.what() << '\n';
        return kNumeric;
    } catch (const std::invalid_argument& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kUsage;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kNumeric;
    }
}
