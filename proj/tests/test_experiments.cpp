#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "relulab/experiments.hpp"
#include "relulab/inactivity.hpp"
#include "relulab/io.hpp"

using namespace relulab;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
    const fs::path p = fs::temp_directory_path() / ("relulab_test_" + name);
    fs::remove_all(p);
    return p;
}

std::string slurp(const fs::path& p) {
    std::ifstream f(p, std::ios::binary);
    std::stringstream ss;
    ss << f.rdbuf();
    return ss.str();
}

std::vector<std::string> lines(const fs::path& p) {
    std::ifstream f(p);
    std::vector<std::string> out;
    for (std::string s; std::getline(f, s);) out.push_back(s);
    return out;
}

ExperimentConfig small_train(const std::string& optimizer, std::size_t steps) {
    return config_from_json({{"dims", {1, 12, 6, 1}},
                             {"optimizer", {{"kind", optimizer}, {"gamma", 0.02}}},
                             {"dataset", {{"synthetic", {{"M", 8}}}}},
                             {"steps", steps},
                             {"runs", 3},
                             {"seed", 5}});
}

}  // namespace

TEST(Config, ParsesAndRoundTrips) {
    const ExperimentConfig c = config_from_json({{"dims", {2, 5, 1}},
                                                 {"input_dim", 2},
                                                 {"box", {-1.0, 2.0}},
                                                 {"thresholds", {1, 3}},
                                                 {"plateau", {{"window", 50}, {"tol", 1e-9}}},
                                                 {"init", {{"family", "uniform"}}},
                                                 {"optimizer", {{"kind", "adam"}, {"gamma", {{"table", {0.1, 0.01}}}}}}});
    EXPECT_EQ(c.dims, (std::vector<std::size_t>{2, 5, 1}));
    EXPECT_EQ(c.a, -1.0);
    EXPECT_EQ(c.b, 2.0);
    EXPECT_EQ(c.plateau_window, 50u);
    EXPECT_EQ(c.optimizer.kind, OptimizerKind::adam);
    EXPECT_TRUE(c.optimizer.sched.gamma.is_table());
    EXPECT_EQ(c.init.family(), Family::uniform);
    const ExperimentConfig back = config_from_json(config_to_json(c));
    EXPECT_EQ(config_to_json(back), config_to_json(c));
}

TEST(Config, Errors) {
    EXPECT_THROW(config_from_json({{"dimz", {1, 2, 1}}}), ConfigError);
    EXPECT_THROW(config_from_json(nlohmann::json::array()), ConfigError);
    EXPECT_THROW(config_from_json({{"box", {1.0, 0.0}}}), ConfigError);
    EXPECT_THROW(config_from_json({{"optimizer", {{"kind", "adamw"}}}}), ConfigError);
    EXPECT_THROW(config_from_json({{"optimizer", {{"kind", "adam"}, {"beta", 1.5}}}}), ConfigError);
    EXPECT_THROW(config_from_json({{"widths", {5, 0}}}), ConfigError);
    EXPECT_THROW(config_from_json({{"widths", {5, -2}}}), ConfigError);
    EXPECT_THROW(config_from_json({{"steps", -1}}), ConfigError);
    EXPECT_THROW(config_from_json({{"r_list", {100.0, 10.0}}}), ConfigError);
    EXPECT_THROW(config_from_json({{"dataset", {{"synthetic", {{"target", "cosh"}}}}}}), ConfigError);
    EXPECT_THROW(train_architecture(ExperimentConfig{}), ConfigError);
    EXPECT_THROW(load_config("/nonexistent/relulab.json"), ConfigError);
}

TEST(Dataset, SyntheticIsDistinctAndSeeded) {
    const Dataset a = synthetic_dataset(1, 10, 0.0, 1.0, "sin", 0.0, 3);
    EXPECT_EQ(a.size(), 10u);
    EXPECT_TRUE(a.distinct_inputs());
    EXPECT_TRUE(a.inside_box());
    for (std::size_t m = 1; m < a.size(); ++m) EXPECT_LT(a.x[m - 1][0], a.x[m][0]);
    EXPECT_EQ(a.x, synthetic_dataset(1, 10, 0.0, 1.0, "sin", 0.0, 3).x);
    EXPECT_NE(a.x, synthetic_dataset(1, 10, 0.0, 1.0, "sin", 0.0, 4).x);
    const Dataset z = synthetic_dataset(3, 20, -1.0, 1.0, "zero", 0.0, 1);
    EXPECT_EQ(z.dim(), 3u);
    for (double y : z.y) EXPECT_EQ(y, 0.0);
}

TEST(Dataset, LoadChecksDimensionAndBox) {
    const fs::path dir = scratch("load");
    fs::create_directories(dir);
    Dataset d;
    d.x = {{0.1}, {0.5}, {2.0}};
    d.y = {0.0, 1.0, 0.0};
    write_dataset(dir / "d.csv", d);
    ExperimentConfig c = config_from_json({{"dims", {1, 3, 1}}, {"dataset", {{"file", (dir / "d.csv").string()}}}});
    EXPECT_THROW(load_dataset(c), ConfigError);
    c.b = 3.0;
    EXPECT_EQ(load_dataset(c).size(), 3u);
    c.input_dim = 2;
    EXPECT_THROW(load_dataset(c), ConfigError);
}

TEST(Train, ZeroStepsGivesOneRowPerRun) {
    ExperimentConfig c = small_train("sgd", 0);
    c.runs = 1;
    const fs::path out = scratch("t0");
    const CommandResult res = cmd_train(c, out, 1);
    const auto rows = lines(out / "trajectory.csv");
    ASSERT_EQ(rows.size(), 2u);
    EXPECT_EQ(rows[0], "run,step,risk");
    EXPECT_EQ(rows[1].rfind("0,0,", 0), 0u);
}

TEST(Train, SameSeedSameBytes) {
    const ExperimentConfig c = small_train("adam", 300);
    const fs::path o1 = scratch("s1"), o2 = scratch("s2"), o3 = scratch("s3");
    cmd_train(c, o1, 1);
    cmd_train(c, o2, 1);
    cmd_train(c, o3, 3);
    for (const char* f : {"trajectory.csv", "monitor.csv", "dataset.csv", "params_final_run2.json"}) {
        EXPECT_EQ(slurp(o1 / f), slurp(o2 / f)) << f;
        EXPECT_EQ(slurp(o1 / f), slurp(o3 / f)) << f;
        EXPECT_FALSE(slurp(o1 / f).empty()) << f;
    }
}

TEST(Train, InitIndependentOfOptimizer) {
    const ExperimentConfig adam = small_train("adam", 50), sgd = small_train("sgd", 50);
    const Architecture arch = train_architecture(adam);
    const Dataset data = load_dataset(adam);
    const RunRecord ra = run_training(adam, arch, data, 1, false);
    const RunRecord rs = run_training(sgd, arch, data, 1, false);
    EXPECT_EQ(ra.theta0, rs.theta0);
    EXPECT_EQ(ra.trajectory.risk.front(), rs.trajectory.risk.front());
    EXPECT_NE(ra.trajectory.risk.back(), rs.trajectory.risk.back());
    EXPECT_NE(run_training(adam, arch, data, 2, false).theta0, ra.theta0);
}

TEST(Train, MonitorsHoldAndCertificatesAreWritten) {
    ExperimentConfig c = small_train("sgd", 2000);
    c.dims = {1, 16, 8, 1};
    c.runs = 6;
    const fs::path out = scratch("mon");
    const CommandResult res = cmd_train(c, out, 2);
    EXPECT_TRUE(res.ok());
    for (const auto& line : lines(out / "runs.jsonl")) {
        const auto j = nlohmann::json::parse(line);
        EXPECT_TRUE(j["persistence_ok"].get<bool>());
        EXPECT_TRUE(j["vanishing_ok"].get<bool>());
        EXPECT_LE(j["inactive_init"].get<std::size_t>(), j["inactive_final"].get<std::size_t>());
        const std::size_t run = j["run"].get<std::size_t>();
        if (j["inactive_init"].get<std::size_t>() >= 3)
            EXPECT_TRUE(fs::exists(out / ("certificate_run" + std::to_string(run) + ".json")));
    }
}

TEST(Sweep, SingleCellIsAnError) {
    const ExperimentConfig c = config_from_json({{"widths", {5}}, {"depths", {1}}, {"samples", 200}});
    EXPECT_THROW(cmd_sweep(c, scratch("sw1"), 1), ConfigError);
}

TEST(Sweep, WorkerCountDoesNotChangeNumbers) {
    const ExperimentConfig c =
        config_from_json({{"widths", {2, 4, 8}}, {"depths", {1, 2}}, {"samples", 400}, {"seed", 9}});
    const fs::path o1 = scratch("sw_a"), o2 = scratch("sw_b");
    cmd_sweep(c, o1, 1);
    cmd_sweep(c, o2, 4);
    EXPECT_EQ(slurp(o1 / "sweep.csv"), slurp(o2 / "sweep.csv"));
    const auto rows = lines(o1 / "sweep.csv");
    EXPECT_EQ(rows.size(), 7u);
    EXPECT_EQ(rows[0].rfind("width,depth,threshold,", 0), 0u);
}

TEST(McInactive, WritesOneRowPerWidth) {
    const ExperimentConfig c = config_from_json({{"widths", {3, 6}}, {"samples", 300}});
    const fs::path out = scratch("mc");
    cmd_mc_inactive(c, out, 2);
    EXPECT_EQ(lines(out / "mc_inactive.csv").size(), 3u);
}

TEST(BoundReport, UniformBoundsHold) {
    const ExperimentConfig c = config_from_json(
        {{"widths", {5, 10, 20}}, {"samples", 4000}, {"init", {{"family", "uniform"}}}, {"seed", 2}});
    const fs::path out = scratch("br");
    const CommandResult res = cmd_bound_report(c, out, 2);
    EXPECT_TRUE(res.ok()) << (res.failures.empty() ? "" : res.failures.front());
    EXPECT_EQ(lines(out / "bound_report.csv").size(), 4u);
    EXPECT_TRUE(fs::exists(out / "bound_report.json"));
}

TEST(GradCheck, DefaultConfigPasses) {
    const fs::path out = scratch("gc");
    const CommandResult res = cmd_grad_check(ExperimentConfig{}, out);
    for (const auto& f : res.failures) ADD_FAILURE() << f;
    const auto j = nlohmann::json::parse(slurp(out / "grad_check.json"));
    EXPECT_TRUE(j["negative_control_detected"].get<bool>());
}

TEST(ImproveCertify, RoundTripThroughFiles) {
    ExperimentConfig c = small_train("sgd", 500);
    c.dims = {1, 16, 1};
    c.runs = 8;
    const fs::path out = scratch("ic");
    cmd_train(c, out, 1);
    std::size_t certified = 0;
    for (std::size_t run = 0; run < c.runs; ++run) {
        const std::string tag = std::to_string(run);
        if (!fs::exists(out / ("certificate_run" + tag + ".json"))) continue;
        CertifyInputs in;
        in.params = out / ("params_final_run" + tag + ".json");
        in.init = out / ("params_init_run" + tag + ".json");
        in.data = out / "dataset.csv";
        in.trajectory = out / "trajectory.csv";
        in.run = run;
        in.seed = c.seed;
        in.a = 0.0;
        in.b = 1.0;
        const fs::path o = out / ("cli" + tag);
        cmd_improve_certify(in, o);
        const auto j = nlohmann::json::parse(slurp(o / "certificate.json"));
        EXPECT_GT(j["margin"].get<double>(), 0.0);
        const auto train_cert = nlohmann::json::parse(slurp(out / ("certificate_run" + tag + ".json")));
        EXPECT_EQ(j["new_risk"], train_cert["new_risk"]);
        EXPECT_EQ(j["theta_improved"].get<std::string>(), "theta_improved.json");
        const ParamFile improved = read_params(o / j["theta_improved"].get<std::string>());
        const Dataset data = read_dataset(in.data);
        EXPECT_DOUBLE_EQ(empirical_risk(improved.arch, improved.theta, Activation{}, data),
                         j["new_risk"].get<double>());
        ++certified;
    }
    EXPECT_GT(certified, 0u);
}

TEST(ImproveCertify, MultiRunTrajectoryNeedsRunId) {
    ExperimentConfig c = small_train("sgd", 20);
    const fs::path out = scratch("ic_runs");
    cmd_train(c, out, 1);
    CertifyInputs in;
    in.params = out / "params_final_run0.json";
    in.data = out / "dataset.csv";
    in.trajectory = out / "trajectory.csv";
    EXPECT_THROW(cmd_improve_certify(in, out / "cli"), ConfigError);
    in.run = 17;
    EXPECT_THROW(cmd_improve_certify(in, out / "cli"), ConfigError);
}
