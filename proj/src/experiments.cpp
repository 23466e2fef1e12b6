#include "relulab/experiments.hpp"

#include <algorithm>
#include <array>
#include <bit>
#include <chrono>
#include <cmath>
#include <fstream>
#include <numbers>
#include <set>
#include <sstream>

#include "relulab/gradients.hpp"
#include "relulab/inactivity.hpp"
#include "relulab/io.hpp"
#include "relulab/parallel.hpp"

namespace relulab {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

const std::set<std::string> kKeys = {
    "dims",  "input_dim", "widths", "depths",  "width_map", "init",      "optimizer",     "dataset",
    "box",   "steps",     "plateau", "threshold", "thresholds", "runs",  "samples",       "seed",
    "monitor_every", "batch", "r_list"};

bool is_count(const json& v) {
    return v.is_number_unsigned() || (v.is_number_integer() && v.get<std::int64_t>() >= 0);
}

std::size_t count_value(const json& j, const char* key, std::size_t fallback) {
    if (!j.contains(key)) return fallback;
    if (!is_count(j[key])) throw ConfigError(std::string(key) + " must be a non-negative integer");
    return j[key].get<std::size_t>();
}

std::vector<std::size_t> size_list(const json& j, const char* key) {
    if (is_count(j)) return {j.get<std::size_t>()};
    if (!j.is_array()) throw ConfigError(std::string(key) + " must be a positive integer or a list of them");
    std::vector<std::size_t> out;
    for (const auto& v : j) {
        if (!is_count(v)) throw ConfigError(std::string(key) + " entries must be non-negative integers");
        out.push_back(v.get<std::size_t>());
    }
    return out;
}

std::ofstream open_out(const fs::path& p) {
    if (p.has_parent_path()) fs::create_directories(p.parent_path());
    std::ofstream f(p, std::ios::binary);
    if (!f) throw std::runtime_error("cannot write " + p.string());
    return f;
}

std::string csv_row(std::initializer_list<std::string> cells) {
    std::string s;
    bool first = true;
    for (const auto& c : cells) {
        if (!first) s += ',';
        s += c;
        first = false;
    }
    return s + '\n';
}

std::string num(double v) { return fmt_double(v); }
std::string num(std::size_t v) { return std::to_string(v); }
std::string num(std::uint64_t v, int) { return std::to_string(v); }

double target_fn(const std::string& name, const Vec& x, double a, double b) {
    double mean = 0.0;
    for (double v : x) mean += v;
    mean /= static_cast<double>(x.size());
    const double u = (mean - a) / (b - a);
    if (name == "sin") return std::sin(2.0 * std::numbers::pi * u);
    if (name == "linear") return u;
    if (name == "zero") return 0.0;
    throw ConfigError("unknown synthetic target '" + name + "'");
}

bool frozen_first_layer(const Architecture& arch, const Vec& theta, const Vec& theta0,
                        const std::vector<std::size_t>& neurons) {
    for (std::size_t i : neurons) {
        for (std::size_t j = 1; j <= arch.input_dim(); ++j) {
            const std::size_t p = arch.wpos(1, i, j);
            if (std::bit_cast<std::uint64_t>(theta[p]) != std::bit_cast<std::uint64_t>(theta0[p])) return false;
        }
        const std::size_t p = arch.bpos(1, i);
        if (std::bit_cast<std::uint64_t>(theta[p]) != std::bit_cast<std::uint64_t>(theta0[p])) return false;
    }
    return true;
}

bool gradient_vanishes(const Architecture& arch, const Vec& theta, const Vec& g, double a, double b) {
    for (std::size_t i : inactive_set(arch, theta, a, b)) {
        if (g[arch.bpos(1, i)] != 0.0) return false;
        for (std::size_t j = 1; j <= arch.input_dim(); ++j)
            if (g[arch.wpos(1, i, j)] != 0.0) return false;
    }
    for (std::size_t k : dead_blocks(arch, theta)) {
        if (k == arch.depth()) continue;
        for (std::size_t p = 0; p < arch.block_end(k); ++p)
            if (g[p] != 0.0) return false;
    }
    return true;
}

void write_run_files(const fs::path& out, const Architecture& arch, const RunRecord& r, CommandResult& res) {
    const std::string tag = "run" + std::to_string(r.run);
    const fs::path init = out / ("params_init_" + tag + ".json");
    const fs::path fin = out / ("params_final_" + tag + ".json");
    write_params(init, arch, r.theta0);
    write_params(fin, arch, r.trajectory.theta_final);
    res.files.push_back(init);
    res.files.push_back(fin);
    if (r.certificate) {
        const fs::path th = out / ("theta_improved_" + tag + ".json");
        const fs::path cert = out / ("certificate_" + tag + ".json");
        write_params(th, arch, r.certificate->theta);
        write_json(cert, certificate_to_json(*r.certificate, th.filename().string()));
        res.files.push_back(th);
        res.files.push_back(cert);
    }
}

}  // namespace

ExperimentConfig config_from_json(const json& j) {
    if (!j.is_object()) throw ConfigError("config must be a JSON object");
    for (const auto& [k, v] : j.items())
        if (!kKeys.count(k)) throw ConfigError("unknown config key '" + k + "'");
    ExperimentConfig c;
    try {
        if (j.contains("dims")) c.dims = size_list(j["dims"], "dims");
        c.input_dim = count_value(j, "input_dim", c.input_dim);
        if (j.contains("widths")) c.widths = size_list(j["widths"], "widths");
        if (j.contains("depths")) c.depths = size_list(j["depths"], "depths");
        if (j.contains("width_map")) c.width_map = j["width_map"];
        if (j.contains("init")) c.init = InitDistribution::from_json(j["init"]);
        if (j.contains("optimizer")) c.optimizer = optimizer_from_json(j["optimizer"]);
        if (j.contains("dataset")) {
            const json& d = j["dataset"];
            if (d.contains("file")) {
                c.dataset.file = d["file"].get<std::string>();
            } else if (d.contains("synthetic")) {
                const json& s = d["synthetic"];
                c.dataset.M = count_value(s, "M", c.dataset.M);
                c.dataset.target = s.value("target", c.dataset.target);
                c.dataset.noise = s.value("noise", c.dataset.noise);
            } else {
                throw ConfigError("dataset needs 'file' or 'synthetic'");
            }
        }
        if (j.contains("box")) {
            const auto box = j["box"].get<Vec>();
            if (box.size() != 2) throw ConfigError("box must be [a, b]");
            c.a = box[0];
            c.b = box[1];
        }
        c.steps = count_value(j, "steps", c.steps);
        if (j.contains("plateau")) {
            c.plateau_window = count_value(j["plateau"], "window", c.plateau_window);
            c.plateau_tol = j["plateau"].value("tol", c.plateau_tol);
        }
        if (j.contains("threshold")) c.thresholds = size_list(j["threshold"], "threshold");
        if (j.contains("thresholds")) c.thresholds = size_list(j["thresholds"], "thresholds");
        c.runs = count_value(j, "runs", c.runs);
        c.samples = count_value(j, "samples", c.samples);
        c.seed = count_value(j, "seed", c.seed);
        c.monitor_every = count_value(j, "monitor_every", c.monitor_every);
        c.batch = count_value(j, "batch", c.batch);
        if (j.contains("r_list")) c.r_list = j["r_list"].get<Vec>();
    } catch (const ConfigError&) {
        throw;
    } catch (const std::exception& e) {
        throw ConfigError(e.what());
    }
    if (!(c.a < c.b)) throw ConfigError("box needs a < b");
    if (c.input_dim == 0) throw ConfigError("input_dim must be positive");
    if (c.thresholds.empty()) throw ConfigError("need at least one threshold");
    if (!c.dims.empty()) {
        try {
            Architecture{c.dims};
        } catch (const std::exception& e) {
            throw ConfigError(e.what());
        }
        c.input_dim = c.dims.front();
    }
    for (std::size_t w : c.widths)
        if (w == 0) throw ConfigError("widths must be positive");
    if (c.dataset.file.empty() && c.dataset.M == 0) throw ConfigError("synthetic dataset needs M > 0");
    if (c.dataset.file.empty()) target_fn(c.dataset.target, {c.a}, c.a, c.b);
    if (!std::is_sorted(c.r_list.begin(), c.r_list.end())) throw ConfigError("r_list must be increasing");
    return c;
}

json config_to_json(const ExperimentConfig& c) {
    json j;
    if (!c.dims.empty()) j["dims"] = c.dims;
    j["input_dim"] = c.input_dim;
    if (!c.widths.empty()) j["widths"] = c.widths;
    if (!c.depths.empty()) j["depths"] = c.depths;
    if (!c.width_map.is_null()) j["width_map"] = c.width_map;
    j["init"] = c.init.to_json();
    j["optimizer"] = optimizer_to_json(c.optimizer);
    if (!c.dataset.file.empty())
        j["dataset"] = {{"file", c.dataset.file}};
    else
        j["dataset"] = {{"synthetic", {{"M", c.dataset.M}, {"target", c.dataset.target}, {"noise", c.dataset.noise}}}};
    j["box"] = {c.a, c.b};
    j["steps"] = c.steps;
    j["plateau"] = {{"window", c.plateau_window}, {"tol", c.plateau_tol}};
    j["thresholds"] = c.thresholds;
    j["runs"] = c.runs;
    j["samples"] = c.samples;
    j["seed"] = c.seed;
    j["monitor_every"] = c.monitor_every;
    j["batch"] = c.batch;
    j["r_list"] = c.r_list;
    return j;
}

ExperimentConfig load_config(const fs::path& path) {
    json j;
    try {
        j = read_json(path);
    } catch (const std::exception& e) {
        throw ConfigError(e.what());
    }
    return config_from_json(j);
}

Architecture grid_architecture(std::size_t input_dim, std::size_t width, std::size_t hidden) {
    std::vector<std::size_t> dims{input_dim};
    for (std::size_t h = 0; h < hidden; ++h) dims.push_back(width);
    dims.push_back(1);
    return Architecture(dims);
}

Architecture train_architecture(const ExperimentConfig& c) {
    if (!c.dims.empty()) return Architecture(c.dims);
    if (!c.widths.empty())
        return grid_architecture(c.input_dim, c.widths.front(), c.depths.empty() ? 1 : c.depths.front());
    throw ConfigError("config needs 'dims' or 'widths'");
}

Rng purpose_stream(std::uint64_t seed, std::uint64_t run, Purpose p) {
    return make_stream(seed, run, static_cast<std::uint64_t>(p));
}

Dataset synthetic_dataset(std::size_t d, std::size_t M, double a, double b, const std::string& target,
                          double noise, std::uint64_t seed) {
    Rng rng = purpose_stream(seed, 0, Purpose::dataset);
    std::uniform_real_distribution<double> jitter(-0.25, 0.25);
    std::uniform_real_distribution<double> unif(a, b);
    std::normal_distribution<double> nd;
    Dataset data;
    data.a = a;
    data.b = b;
    const double h = (b - a) / static_cast<double>(M);
    for (std::size_t m = 0; m < M; ++m) {
        Vec x(d);
        x[0] = a + (static_cast<double>(m) + 0.5 + jitter(rng)) * h;
        for (std::size_t j = 1; j < d; ++j) x[j] = unif(rng);
        const double y = target_fn(target, x, a, b) + (noise > 0.0 ? noise * nd(rng) : 0.0);
        data.x.push_back(std::move(x));
        data.y.push_back(y);
    }
    return data;
}

Dataset load_dataset(const ExperimentConfig& c) {
    Dataset data;
    if (!c.dataset.file.empty()) {
        try {
            data = read_dataset(c.dataset.file);
        } catch (const std::exception& e) {
            throw ConfigError(e.what());
        }
        data.a = c.a;
        data.b = c.b;
    } else {
        data = synthetic_dataset(c.input_dim, c.dataset.M, c.a, c.b, c.dataset.target, c.dataset.noise, c.seed);
    }
    if (data.dim() != c.input_dim) throw ConfigError("dataset dimension does not match the architecture");
    if (!data.distinct_inputs()) throw ConfigError("dataset inputs must be distinct");
    if (!data.inside_box()) throw ConfigError("dataset inputs must lie in the box");
    return data;
}

json RunRecord::to_json() const {
    json j = {{"run", run},
              {"seed", seed},
              {"architecture", architecture},
              {"optimizer", optimizer},
              {"inactive_init", inactive_init},
              {"inactive_final", inactive_final},
              {"steps_done", trajectory.steps_done},
              {"plateaued", trajectory.plateaued},
              {"nonfinite", trajectory.nonfinite},
              {"final_risk", trajectory.risk.back()},
              {"min_risk", trajectory.min_risk()},
              {"persistence_ok", persistence_ok},
              {"vanishing_ok", vanishing_ok},
              {"monitored_steps", monitored_steps.size()},
              {"certificate_outcome", certificate_outcome},
              {"wall_seconds", wall_seconds}};
    if (certificate) {
        j["certificate_case"] = certificate->case_id;
        j["certificate_risk"] = certificate->new_risk;
        j["certificate_gap"] = certificate_gap;
    }
    return j;
}

RunRecord run_training(const ExperimentConfig& c, const Architecture& arch, const Dataset& data,
                       std::size_t run, bool certify) {
    const auto t0 = std::chrono::steady_clock::now();
    RunRecord rec;
    rec.run = run;
    rec.seed = c.seed;
    rec.architecture = arch.to_string();
    rec.optimizer = to_string(c.optimizer.kind);
    Rng init_rng = purpose_stream(c.seed, run, Purpose::init);
    rec.theta0 = c.init.sample_params(arch, init_rng);
    const auto base = inactive_set(arch, rec.theta0, c.a, c.b);
    rec.inactive_init = base.size();

    TrainOptions opts;
    opts.steps = c.steps;
    opts.batch_size = c.batch;
    opts.batch_seed = purpose_stream(c.seed, run, Purpose::batches)();
    opts.plateau_window = c.plateau_window;
    opts.plateau_tol = c.plateau_tol;

    Vec prev = rec.theta0;
    auto monitor = [&](std::size_t n, const Vec& theta, const Vec& g) {
        if (c.monitor_every > 0 && n % c.monitor_every == 0) {
            const auto now = inactive_set(arch, theta, c.a, c.b);
            rec.monitored_steps.push_back(n);
            rec.inactive_count.push_back(now.size());
            rec.persistence_ok = rec.persistence_ok && std::includes(now.begin(), now.end(), base.begin(), base.end()) &&
                                 frozen_first_layer(arch, theta, rec.theta0, base);
            rec.vanishing_ok = rec.vanishing_ok && gradient_vanishes(arch, prev, g, c.a, c.b);
        }
        prev = theta;
    };
    rec.trajectory = train(arch, rec.theta0, c.optimizer.kind, c.optimizer.sched, data, opts, monitor);
    rec.inactive_final = inactive_set(arch, rec.trajectory.theta_final, c.a, c.b).size();

    if (rec.trajectory.nonfinite) {
        rec.certificate_outcome = "not certifiable: non-finite parameters";
    } else if (certify) {
        Rng cert_rng = purpose_stream(c.seed, run, Purpose::certificate);
        TrajectoryWitness w = certify_trajectory(arch, rec.theta0, rec.trajectory.theta_final, rec.trajectory.risk,
                                                 data, c.a, c.b, cert_rng);
        rec.certificate_outcome = w.outcome;
        if (!rec.trajectory.plateaued && w.certifiable) rec.certificate_outcome += " (not plateaued)";
        rec.certificate = w.certificate;
        rec.certificate_gap = w.gap;
    }
    rec.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return rec;
}

CommandResult cmd_train(const ExperimentConfig& c, const fs::path& out, std::size_t workers) {
    const Architecture arch = train_architecture(c);
    const Dataset data = load_dataset(c);
    if (data.size() == 0) throw ConfigError("empty dataset");
    std::vector<RunRecord> recs(c.runs);
    parallel_for(c.runs, workers, [&](std::size_t r) { recs[r] = run_training(c, arch, data, r); });

    CommandResult res;
    fs::create_directories(out);
    write_json(out / "config.json", config_to_json(c));
    write_dataset(out / "dataset.csv", data);
    {
        auto f = open_out(out / "trajectory.csv");
        f << "run,step,risk\n";
        for (const auto& r : recs)
            for (std::size_t n = 0; n < r.trajectory.risk.size(); ++n)
                f << csv_row({num(r.run), num(n), num(r.trajectory.risk[n])});
    }
    {
        auto f = open_out(out / "monitor.csv");
        f << "run,step,inactive_count\n";
        for (const auto& r : recs)
            for (std::size_t i = 0; i < r.monitored_steps.size(); ++i)
                f << csv_row({num(r.run), num(r.monitored_steps[i]), num(r.inactive_count[i])});
    }
    {
        auto f = open_out(out / "runs.jsonl");
        for (const auto& r : recs) f << r.to_json().dump() << '\n';
    }
    res.files = {out / "config.json", out / "dataset.csv", out / "trajectory.csv", out / "monitor.csv",
                 out / "runs.jsonl"};
    for (const auto& r : recs) write_run_files(out, arch, r, res);

    for (const auto& r : recs) {
        if (r.trajectory.nonfinite)
            throw NumericError("run " + std::to_string(r.run) + ": non-finite parameters at step " +
                               std::to_string(r.trajectory.nonfinite_step));
        if (!r.persistence_ok) res.failures.push_back("run " + std::to_string(r.run) + ": inactivity not persistent");
        if (!r.vanishing_ok) res.failures.push_back("run " + std::to_string(r.run) + ": gradient not zero on inactive coordinates");
    }
    return res;
}

CommandResult cmd_sweep(const ExperimentConfig& c, const fs::path& out, std::size_t workers) {
    const std::vector<std::size_t> depths = c.depths.empty() ? std::vector<std::size_t>{1} : c.depths;
    if (c.widths.size() * depths.size() < 2) throw ConfigError("sweep needs at least two grid points");
    const double q_neg = c.init.cdf(0.0);

    struct Cell {
        std::size_t width, depth;
        std::vector<McEstimate> inactive;
        std::vector<double> bound;
        McEstimate dead;
        double dead_closed = std::nan("");
        std::size_t train_runs = 0, certifiable = 0, certified = 0;
    };
    std::vector<Cell> cells;
    for (std::size_t h : depths)
        for (std::size_t w : c.widths) cells.push_back(Cell{w, h, {}, {}, {}, std::nan(""), 0, 0, 0});

    Dataset data;
    if (c.steps > 0 && c.runs > 0) data = load_dataset(c);

    for (std::size_t ci = 0; ci < cells.size(); ++ci) {
        Cell& cell = cells[ci];
        const Architecture arch = grid_architecture(c.input_dim, cell.width, cell.depth);
        for (std::size_t m : c.thresholds) {
            cell.inactive.push_back(mc_inactive_probability(arch, c.init, c.a, c.b, m, c.samples, c.seed, ci, workers));
            double bnd = std::nan("");
            try {
                bnd = optimize_eta(c.init, c.input_dim, c.a, c.b, cell.width, m, c.init.scale_ratio(arch)).bound;
            } catch (const std::exception&) {
            }
            cell.bound.push_back(bnd);
        }
        if (cell.depth >= 2) {
            cell.dead = mc_dead_block_probability(arch, c.init, c.samples, c.seed, ci, workers);
            cell.dead_closed = depth_bound(cell.width, cell.depth + 1, q_neg);
        }
        if (c.steps > 0 && c.runs > 0) {
            std::vector<RunRecord> recs(c.runs);
            parallel_for(c.runs, workers,
                         [&](std::size_t r) { recs[r] = run_training(c, arch, data, ci * c.runs + r); });
            for (const auto& r : recs) {
                if (r.trajectory.nonfinite) throw NumericError("sweep training produced non-finite parameters");
                ++cell.train_runs;
                if (r.inactive_init >= 3 && r.certificate) ++cell.certifiable;
                if (r.certificate_outcome.rfind("witness", 0) == 0) ++cell.certified;
            }
        }
    }

    CommandResult res;
    fs::create_directories(out);
    {
        auto f = open_out(out / "sweep.csv");
        f << "width,depth,threshold,n_samples,seed,frac_inactive,frac_inactive_stderr,bound,dead_block_frac,"
             "dead_block_stderr,dead_block_closed_form,train_runs,certifiable_runs,frac_certified\n";
        for (const auto& cell : cells)
            for (std::size_t t = 0; t < c.thresholds.size(); ++t) {
                const std::string frac_cert =
                    cell.certifiable ? num(static_cast<double>(cell.certified) / static_cast<double>(cell.certifiable))
                                     : "";
                f << csv_row({num(cell.width), num(cell.depth), num(c.thresholds[t]), num(c.samples),
                              num(c.seed, 0), num(cell.inactive[t].estimate), num(cell.inactive[t].stderr_),
                              num(cell.bound[t]), cell.depth >= 2 ? num(cell.dead.estimate) : "",
                              cell.depth >= 2 ? num(cell.dead.stderr_) : "", cell.depth >= 2 ? num(cell.dead_closed) : "",
                              num(cell.train_runs), num(cell.certifiable), frac_cert});
            }
    }
    {
        auto f = open_out(out / "sweep_fit.csv");
        f << "depth,threshold,slope,intercept,floored,non_decaying,monotone\n";
        for (std::size_t h : depths)
            for (std::size_t t = 0; t < c.thresholds.size(); ++t) {
                Vec widths, probs;
                std::vector<const McEstimate*> ests;
                for (const auto& cell : cells)
                    if (cell.depth == h) {
                        widths.push_back(static_cast<double>(cell.width));
                        probs.push_back(1.0 - cell.inactive[t].estimate);
                        ests.push_back(&cell.inactive[t]);
                    }
                bool monotone = true;
                for (std::size_t i = 1; i < ests.size(); ++i)
                    if (widths[i] > widths[i - 1] &&
                        ests[i]->estimate < ests[i - 1]->estimate - 3.0 * (ests[i]->stderr_ + ests[i - 1]->stderr_))
                        monotone = false;
                if (widths.size() < 3) {
                    f << csv_row({num(h), num(c.thresholds[t]), "", "", "", "", monotone ? "1" : "0"});
                    continue;
                }
                const RateFit fit = rate_fit(widths, probs, 1.0 / static_cast<double>(c.samples));
                f << csv_row({num(h), num(c.thresholds[t]), num(fit.slope), num(fit.intercept), fit.floored ? "1" : "0",
                              fit.non_decaying ? "1" : "0", monotone ? "1" : "0"});
                if (fit.non_decaying)
                    res.failures.push_back("depth " + std::to_string(h) + ": inactivity shortfall does not decay");
                if (!monotone)
                    res.failures.push_back("depth " + std::to_string(h) + ": inactive fraction not monotone in width");
            }
    }
    res.files = {out / "sweep.csv", out / "sweep_fit.csv"};
    return res;
}

CommandResult cmd_mc_inactive(const ExperimentConfig& c, const fs::path& out, std::size_t workers) {
    std::vector<Architecture> archs;
    if (!c.widths.empty()) {
        for (std::size_t h : c.depths.empty() ? std::vector<std::size_t>{1} : c.depths)
            for (std::size_t w : c.widths) archs.push_back(grid_architecture(c.input_dim, w, h));
    } else {
        archs.push_back(train_architecture(c));
    }
    CommandResult res;
    fs::create_directories(out);
    auto f = open_out(out / "mc_inactive.csv");
    f << "architecture,width,threshold,n_samples,seed,per_neuron,per_neuron_stderr,p_at_least_m,"
         "p_at_least_m_stderr\n";
    for (std::size_t ai = 0; ai < archs.size(); ++ai) {
        const Architecture& arch = archs[ai];
        const McEstimate per = mc_per_neuron_probability(arch, c.init, c.a, c.b, c.samples, c.seed, ai, workers);
        for (std::size_t m : c.thresholds) {
            const McEstimate at = mc_inactive_probability(arch, c.init, c.a, c.b, m, c.samples, c.seed, ai, workers);
            f << csv_row({arch.to_string(), num(arch.width(1)), num(m), num(c.samples), num(c.seed, 0),
                          num(per.estimate), num(per.stderr_), num(at.estimate), num(at.stderr_)});
        }
    }
    res.files = {out / "mc_inactive.csv"};
    return res;
}

CommandResult cmd_bound_report(const ExperimentConfig& c, const fs::path& out, std::size_t workers) {
    const std::size_t hidden = c.depths.empty() ? 1 : c.depths.front();
    std::vector<std::size_t> widths = c.widths;
    if (widths.empty()) widths.push_back(train_architecture(c).width(1));

    json rows = json::array();
    CommandResult res;
    fs::create_directories(out);
    auto f = open_out(out / "bound_report.csv");
    f << "width,depth,threshold,eta,p,bound,mc_estimate,mc_stderr,n_samples,seed\n";
    std::vector<Vec> shortfall(c.thresholds.size());
    for (std::size_t wi = 0; wi < widths.size(); ++wi) {
        const Architecture arch = grid_architecture(c.input_dim, widths[wi], hidden);
        for (std::size_t t = 0; t < c.thresholds.size(); ++t) {
            const std::size_t m = c.thresholds[t];
            const EtaChoice e = optimize_eta(c.init, c.input_dim, c.a, c.b, widths[wi], m, c.init.scale_ratio(arch));
            const McEstimate mc = mc_inactive_probability(arch, c.init, c.a, c.b, m, c.samples, c.seed, wi, workers);
            f << csv_row({num(widths[wi]), num(hidden), num(m), num(e.eta), num(e.p), num(e.bound), num(mc.estimate),
                          num(mc.stderr_), num(c.samples), num(c.seed, 0)});
            rows.push_back({{"width", widths[wi]}, {"depth", hidden}, {"threshold", m}, {"eta", e.eta},
                            {"p", e.p}, {"bound", e.bound}, {"mc_estimate", mc.estimate},
                            {"mc_stderr", mc.stderr_}, {"n_samples", c.samples}, {"seed", c.seed}});
            shortfall[t].push_back(1.0 - mc.estimate);
            if (mc.estimate < e.bound - 3.0 * mc.stderr_)
                res.failures.push_back("width " + std::to_string(widths[wi]) + ", m " + std::to_string(m) +
                                       ": Monte Carlo estimate below the bound");
        }
    }
    json fits = json::array();
    if (widths.size() >= 3) {
        Vec wv(widths.begin(), widths.end());
        for (std::size_t t = 0; t < c.thresholds.size(); ++t) {
            const RateFit fit = rate_fit(wv, shortfall[t], 1.0 / static_cast<double>(c.samples));
            fits.push_back({{"threshold", c.thresholds[t]}, {"slope", fit.slope}, {"intercept", fit.intercept},
                            {"floored", fit.floored}, {"non_decaying", fit.non_decaying}});
            if (fit.non_decaying) res.failures.push_back("inactivity shortfall does not decay with width");
        }
    }
    write_json(out / "bound_report.json", {{"distribution", c.init.to_json()},
                                           {"input_dim", c.input_dim},
                                           {"box", {c.a, c.b}},
                                           {"rows", rows},
                                           {"rate_fit", fits}});
    res.files = {out / "bound_report.csv", out / "bound_report.json"};
    return res;
}

CommandResult cmd_grad_check(const ExperimentConfig& c, const fs::path& out) {
    const Architecture arch = c.dims.empty() ? Architecture({2, 3, 3, 1}) : train_architecture(c);
    const std::size_t M = c.dataset.M;
    CommandResult res;
    fs::create_directories(out);
    auto f = open_out(out / "grad_check.csv");
    f << "pair,path_sum_maxabs,fd_max_rel_r10,fd_max_rel_r100,limit_zero_from_r,risk_gap_monotone,"
         "bridge_invariant\n";

    std::size_t path_fail = 0, fd_fail = 0, limit_fail = 0, gap_fail = 0, bridge_fail = 0;
    for (std::size_t run = 0; run < c.runs; ++run) {
        Rng rng = purpose_stream(c.seed, run, Purpose::init);
        const Vec theta = c.init.sample_params(arch, rng);
        Dataset batch;
        batch.a = c.a;
        batch.b = c.b;
        std::uniform_real_distribution<double> unif(c.a, c.b);
        std::normal_distribution<double> nd;
        for (std::size_t m = 0; m < M; ++m) {
            Vec x(arch.input_dim());
            for (double& v : x) v = unif(rng);
            batch.x.push_back(std::move(x));
            batch.y.push_back(nd(rng));
        }
        const Vec g = generalized_gradient(arch, theta, batch).g;
        double ps = kInf;
        try {
            ps = max_abs_diff(g, path_sum_gradient(arch, theta, batch).g);
        } catch (const std::exception&) {
        }
        if (!(ps <= 1e-10)) ++path_fail;

        std::array<double, 2> fd_rel{0.0, 0.0};
        const std::array<double, 2> rs{10.0, 100.0};
        for (std::size_t k = 0; k < 2; ++k) {
            const Activation act(rs[k]);
            const Vec sm = smoothed_gradient(arch, theta, act, batch).g;
            const Vec fd = finite_difference_gradient(arch, theta, act, batch, 1e-6).g;
            for (std::size_t p = 0; p < sm.size(); ++p)
                if (std::abs(sm[p]) >= 1e-8) fd_rel[k] = std::max(fd_rel[k], std::abs(fd[p] - sm[p]) / std::abs(sm[p]));
            if (!(fd_rel[k] <= 1e-5)) ++fd_fail;
        }

        const auto resid = gradient_limit_residuals(arch, theta, batch, c.r_list);
        std::size_t zero_from = resid.size();
        while (zero_from > 0 && resid[zero_from - 1].grad_residual == 0.0) --zero_from;
        if (zero_from == resid.size()) ++limit_fail;
        bool gap_ok = resid.empty() || resid.back().risk_gap == 0.0;
        for (std::size_t i = 1; i < resid.size(); ++i) gap_ok = gap_ok && resid[i].risk_gap <= resid[i - 1].risk_gap;
        if (!gap_ok) ++gap_fail;

        const Vec gc = smoothed_gradient(arch, theta, Activation(1e8, Bridge::cubic), batch).g;
        const Vec gq = smoothed_gradient(arch, theta, Activation(1e8, Bridge::quintic), batch).g;
        const bool bridge_ok = gc == gq && gc == g;
        if (!bridge_ok) ++bridge_fail;

        f << csv_row({num(run), num(ps), num(fd_rel[0]), num(fd_rel[1]),
                      zero_from < resid.size() ? num(resid[zero_from].r) : "", gap_ok ? "1" : "0",
                      bridge_ok ? "1" : "0"});
    }

    // Negative control: every first-layer preactivation is exactly 0 at the origin.
    Rng rng = purpose_stream(c.seed, c.runs, Purpose::init);
    Vec theta = c.init.sample_params(arch, rng);
    for (std::size_t i = 1; i <= arch.width(1); ++i) theta[arch.bpos(1, i)] = 0.0;
    Dataset kink;
    kink.a = c.a;
    kink.b = c.b;
    kink.x = {Vec(arch.input_dim(), 0.0)};
    kink.y = {realize(arch, theta, Activation{}, kink.x[0]) + 1.0};
    double control_gap = 0.0;
    try {
        control_gap = max_abs_diff(generalized_gradient(arch, theta, kink, Kink::closed).g,
                                   path_sum_gradient(arch, theta, kink).g);
    } catch (const std::exception&) {
    }
    const bool control_detected = control_gap > 1e-10;

    auto fail = [&](std::size_t n, const std::string& what) {
        if (n) res.failures.push_back(std::to_string(n) + " pair(s): " + what);
    };
    fail(path_fail, "backprop and path-sum disagree");
    fail(fd_fail, "finite differences disagree with the smoothed gradient");
    fail(limit_fail, "limit residual never reaches 0");
    fail(gap_fail, "risk gap not nonincreasing to 0");
    fail(bridge_fail, "limit gradient depends on the bridge");
    if (!control_detected) res.failures.push_back("closed-kink convention not detected");

    write_json(out / "grad_check.json", {{"architecture", arch.to_string()},
                                         {"pairs", c.runs},
                                         {"path_sum_failures", path_fail},
                                         {"finite_difference_failures", fd_fail},
                                         {"limit_failures", limit_fail},
                                         {"risk_gap_failures", gap_fail},
                                         {"bridge_failures", bridge_fail},
                                         {"negative_control_gap", control_gap},
                                         {"negative_control_detected", control_detected},
                                         {"pass", res.failures.empty()}});
    res.files = {out / "grad_check.csv", out / "grad_check.json"};
    return res;
}

CommandResult cmd_improve_certify(const CertifyInputs& in, const fs::path& out) {
    ParamFile fin;
    Dataset data;
    try {
        fin = read_params(in.params);
        data = read_dataset(in.data);
    } catch (const std::exception& e) {
        throw ConfigError(e.what());
    }
    if (in.a) data.a = *in.a;
    if (in.b) data.b = *in.b;
    if (!data.distinct_inputs()) throw ConfigError("dataset inputs must be distinct");
    Vec theta0 = fin.theta;
    if (!in.init.empty()) {
        const ParamFile init = read_params(in.init);
        if (!(init.arch == fin.arch)) throw ConfigError("initial and final parameters disagree on architecture");
        theta0 = init.theta;
    }
    Vec risks;
    if (!in.trajectory.empty()) {
        std::ifstream f(in.trajectory);
        if (!f) throw ConfigError("cannot read " + in.trajectory.string());
        std::string line;
        std::getline(f, line);
        std::vector<std::string> header;
        std::stringstream hs(line);
        for (std::string cell; std::getline(hs, cell, ',');) header.push_back(cell);
        const auto it = std::find(header.begin(), header.end(), "risk");
        if (it == header.end()) throw ConfigError("trajectory CSV has no risk column");
        const std::size_t col = static_cast<std::size_t>(it - header.begin());
        const auto run_it = std::find(header.begin(), header.end(), "run");
        std::set<std::string> runs_seen;
        while (std::getline(f, line)) {
            std::stringstream ls(line);
            std::vector<std::string> cells;
            for (std::string cell; std::getline(ls, cell, ',');) cells.push_back(cell);
            if (cells.size() <= col) throw ConfigError("short row in trajectory CSV");
            if (run_it != header.end()) {
                const std::string& r = cells.at(static_cast<std::size_t>(run_it - header.begin()));
                if (in.run && r != std::to_string(*in.run)) continue;
                runs_seen.insert(r);
            }
            risks.push_back(std::stod(cells[col]));
        }
        if (runs_seen.size() > 1) throw ConfigError("trajectory CSV holds several runs; select one with --run");
        if (in.run && risks.empty()) throw ConfigError("run " + std::to_string(*in.run) + " not found in trajectory CSV");
    }
    if (risks.empty()) risks.push_back(empirical_risk(fin.arch, fin.theta, Activation{}, data));

    Rng rng = purpose_stream(in.seed, in.run.value_or(0), Purpose::certificate);
    const TrajectoryWitness w = certify_trajectory(fin.arch, theta0, fin.theta, risks, data, data.a, data.b, rng);
    CommandResult res;
    fs::create_directories(out);
    json report;
    if (w.certificate) {
        write_params(out / "theta_improved.json", fin.arch, w.certificate->theta);
        report = certificate_to_json(*w.certificate, "theta_improved.json");
        res.files.push_back(out / "theta_improved.json");
    } else {
        report = {{"case", nullptr}, {"diagnostics", json::object()}};
    }
    report["outcome"] = w.outcome;
    report["inactive_at_init"] = w.inactive_at_init;
    report["trajectory_min_risk"] = w.trajectory_min_risk;
    report["gap"] = w.gap;
    write_json(out / "certificate.json", report);
    res.files.push_back(out / "certificate.json");
    if (!w.witness()) res.failures.push_back("no certificate below the trajectory minimum: " + w.outcome);
    return res;
}

}  // namespace relulab
