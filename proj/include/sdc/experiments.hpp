#pragma once

// Experiment harness: seeded sweeps over dataset sizes and control
// frequencies, CSV emission with provenance headers, and figure rendering.

#include <atomic>
#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>
#include <numeric>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <tuple>
#include <vector>

#include "sdc/gp.hpp"
#include "sdc/linearize.hpp"
#include "sdc/rng.hpp"
#include "sdc/sdp.hpp"
#include "sdc/serialize.hpp"
#include "sdc/sim.hpp"
#include "sdc/svg.hpp"
#include "sdc/version.hpp"

namespace sdc::experiments {

namespace fs = std::filesystem;
using Eigen::MatrixXd;
using Eigen::VectorXd;
using io::json;

// ============================================================================
// Configuration
// ============================================================================

struct ExperimentConfig {
    // plant and operating point
    sim::QuadrotorParams quadrotor;
    VectorXd x_e;
    VectorXd u_e;
    VectorXd x0;
    std::vector<VectorXd> extra_initial_states;

    // training data
    VectorXd box_lower;
    VectorXd box_upper;
    VectorXd noise_stddev;
    std::vector<int> dataset_sizes;
    int trials = 5;

    // learning and linearization
    double prob_per_row = 0.99;
    double bound_scale = 1.0;  // multiplies the learned bounds; 0 removes uncertainty
    int fit_multistarts = 1;
    int fit_max_iterations = 50;
    double fit_gradient_tolerance = 1e-5;
    double fit_fixed_noise_stddev = 0.1;  // <= 0 means fit the noise level

    // synthesis
    double eps_log10_min = -3.0;
    double eps_log10_max = 3.0;
    int eps_points = 11;
    int eps2d_points = 5;
    double ts_start = 1e-3;
    double ts_min = 1e-6;
    double ts_cap = 100.0;
    double bisect_rel_tol = 1e-3;

    // evaluation
    std::vector<double> frequency_multipliers = {1.0, 1.25, 1.5, 2.0};
    double freq_grid_min_hz = 10.0;
    double freq_grid_max_hz = 30.0;
    int freq_grid_points = 6;
    int cost_grid_trials = 2;
    VectorXd cost_q_diag;
    VectorXd cost_r_diag;
    double horizon_seconds = 10.0;
    double sim_step_max = 1e-3;
    std::string sampling_policy = "periodic";  // or "uniform_random"
    double sampling_lower_fraction = 0.5;
    bool save_trajectories = true;

    // harness
    std::uint64_t seed = 1;
    int jobs = 0;  // 0 = hardware concurrency
    std::string out_dir = "results";

    std::vector<double> eps_grid() const {
        return sdp::default_eps_grid(eps_log10_min, eps_log10_max, eps_points);
    }
    std::vector<double> eps_grid_2d() const {
        return sdp::default_eps_grid(eps_log10_min, eps_log10_max, eps2d_points);
    }
    gp::FitConfig fit_config(std::uint64_t fit_seed) const {
        gp::FitConfig cfg;
        cfg.multistarts = fit_multistarts;
        cfg.max_iterations = fit_max_iterations;
        cfg.gradient_tolerance = fit_gradient_tolerance;
        if (fit_fixed_noise_stddev > 0.0) cfg.fixed_noise_stddev = fit_fixed_noise_stddev;
        cfg.seed = fit_seed;
        return cfg;
    }
    sdp::McfOptions mcf_options() const {
        sdp::McfOptions opt;
        opt.ts_start = ts_start;
        opt.ts_min = ts_min;
        opt.ts_cap = ts_cap;
        opt.bisect_rel_tol = bisect_rel_tol;
        return opt;
    }
    sim::Box box() const { return sim::Box{box_lower, box_upper}; }
    num::SymMatrix q_cost() const {
        return num::SymMatrix::from_full(MatrixXd(cost_q_diag.asDiagonal()));
    }
    num::SymMatrix r_cost() const {
        return num::SymMatrix::from_full(MatrixXd(cost_r_diag.asDiagonal()));
    }
    std::vector<VectorXd> initial_states() const {
        std::vector<VectorXd> states = {x0};
        for (const auto& s : extra_initial_states) states.push_back(s);
        return states;
    }
    int worker_count() const {
        if (jobs > 0) return jobs;
        unsigned hw = std::thread::hardware_concurrency();
        return hw > 0 ? static_cast<int>(hw) : 1;
    }
};

// full vertical-plane quadrotor setup: hover thrust split across two rotors,
// training box spanning the flight envelope, LQR-style position weights
inline ExperimentConfig default_config() {
    ExperimentConfig c;
    c.x_e = (VectorXd(6) << 1, 0, 0, 0, 0, 0).finished();
    c.u_e = c.quadrotor.hover_input();
    c.x0 = (VectorXd(6) << 1.2, 0, 0.2, 0, 0, 0).finished();
    // axis-permuted variants of the position offset, plus a velocity variant
    c.extra_initial_states = {
        (VectorXd(6) << 0.8, 0, 0.2, 0, 0, 0).finished(),
        (VectorXd(6) << 1.2, 0, -0.2, 0, 0, 0).finished(),
        (VectorXd(6) << 0.8, 0, -0.2, 0, 0, 0).finished(),
        (VectorXd(6) << 1.0, 0.2, 0, 0.2, 0, 0).finished(),
    };
    c.box_lower = (VectorXd(8) << 0, -5, 0, -5, -M_PI / 2, -5, 0, 0).finished();
    c.box_upper = (VectorXd(8) << 2, 5, 2, 5, M_PI / 2, 5, 2, 2).finished();
    c.noise_stddev = VectorXd::Constant(6, 0.1);
    c.dataset_sizes = {200, 400, 800};
    c.cost_q_diag = (VectorXd(6) << 100, 1, 100, 1, 100, 1).finished();
    c.cost_r_diag = VectorXd::Constant(2, 0.01);
    return c;
}

inline json config_to_json(const ExperimentConfig& c) {
    json j;
    j["plant"] = {{"type", "quadrotor"},
                  {"mass", c.quadrotor.mass},
                  {"arm", c.quadrotor.arm},
                  {"gravity", c.quadrotor.gravity},
                  {"inertia_yy", c.quadrotor.inertia_yy}};
    j["equilibrium"] = {{"x", io::vector_to_json(c.x_e)}, {"u", io::vector_to_json(c.u_e)}};
    j["initial_state"] = io::vector_to_json(c.x0);
    json extras = json::array();
    for (const auto& s : c.extra_initial_states) extras.push_back(io::vector_to_json(s));
    j["extra_initial_states"] = std::move(extras);
    j["data"] = {{"box_lower", io::vector_to_json(c.box_lower)},
                 {"box_upper", io::vector_to_json(c.box_upper)},
                 {"noise_stddev", io::vector_to_json(c.noise_stddev)},
                 {"sizes", c.dataset_sizes},
                 {"trials", c.trials}};
    j["prob_per_row"] = c.prob_per_row;
    j["bound_scale"] = c.bound_scale;
    j["fit"] = {{"multistarts", c.fit_multistarts},
                {"max_iterations", c.fit_max_iterations},
                {"gradient_tolerance", c.fit_gradient_tolerance},
                {"fixed_noise_stddev", c.fit_fixed_noise_stddev}};
    j["eps_grid"] = {{"log10_min", c.eps_log10_min},
                     {"log10_max", c.eps_log10_max},
                     {"points", c.eps_points},
                     {"points_2d", c.eps2d_points}};
    j["mcf"] = {{"ts_start", c.ts_start},
                {"ts_min", c.ts_min},
                {"ts_cap", c.ts_cap},
                {"bisect_rel_tol", c.bisect_rel_tol}};
    j["frequency_multipliers"] = c.frequency_multipliers;
    j["frequency_grid_hz"] = {{"min", c.freq_grid_min_hz},
                              {"max", c.freq_grid_max_hz},
                              {"points", c.freq_grid_points},
                              {"trials", c.cost_grid_trials}};
    j["cost"] = {{"q_diag", io::vector_to_json(c.cost_q_diag)},
                 {"r_diag", io::vector_to_json(c.cost_r_diag)}};
    j["horizon_seconds"] = c.horizon_seconds;
    j["sim_step_max"] = c.sim_step_max;
    j["sampling"] = {{"policy", c.sampling_policy},
                     {"lower_fraction", c.sampling_lower_fraction}};
    j["save_trajectories"] = c.save_trajectories;
    j["seed"] = c.seed;
    j["jobs"] = c.jobs;
    j["out_dir"] = c.out_dir;
    return j;
}

inline ExperimentConfig config_from_json(const json& j) {
    ExperimentConfig c = default_config();
    const auto& p = j.at("plant");
    c.quadrotor.mass = p.at("mass").get<double>();
    c.quadrotor.arm = p.at("arm").get<double>();
    c.quadrotor.gravity = p.at("gravity").get<double>();
    c.quadrotor.inertia_yy = p.at("inertia_yy").get<double>();
    c.x_e = io::vector_from_json(j.at("equilibrium").at("x"));
    c.u_e = io::vector_from_json(j.at("equilibrium").at("u"));
    c.x0 = io::vector_from_json(j.at("initial_state"));
    c.extra_initial_states.clear();
    for (const auto& s : j.at("extra_initial_states"))
        c.extra_initial_states.push_back(io::vector_from_json(s));
    const auto& d = j.at("data");
    c.box_lower = io::vector_from_json(d.at("box_lower"));
    c.box_upper = io::vector_from_json(d.at("box_upper"));
    c.noise_stddev = io::vector_from_json(d.at("noise_stddev"));
    c.dataset_sizes = d.at("sizes").get<std::vector<int>>();
    c.trials = d.at("trials").get<int>();
    c.prob_per_row = j.at("prob_per_row").get<double>();
    c.bound_scale = j.at("bound_scale").get<double>();
    const auto& f = j.at("fit");
    c.fit_multistarts = f.at("multistarts").get<int>();
    c.fit_max_iterations = f.at("max_iterations").get<int>();
    c.fit_gradient_tolerance = f.at("gradient_tolerance").get<double>();
    c.fit_fixed_noise_stddev = f.at("fixed_noise_stddev").get<double>();
    const auto& e = j.at("eps_grid");
    c.eps_log10_min = e.at("log10_min").get<double>();
    c.eps_log10_max = e.at("log10_max").get<double>();
    c.eps_points = e.at("points").get<int>();
    c.eps2d_points = e.at("points_2d").get<int>();
    const auto& m = j.at("mcf");
    c.ts_start = m.at("ts_start").get<double>();
    c.ts_min = m.at("ts_min").get<double>();
    c.ts_cap = m.at("ts_cap").get<double>();
    c.bisect_rel_tol = m.at("bisect_rel_tol").get<double>();
    c.frequency_multipliers = j.at("frequency_multipliers").get<std::vector<double>>();
    const auto& fg = j.at("frequency_grid_hz");
    c.freq_grid_min_hz = fg.at("min").get<double>();
    c.freq_grid_max_hz = fg.at("max").get<double>();
    c.freq_grid_points = fg.at("points").get<int>();
    c.cost_grid_trials = fg.at("trials").get<int>();
    c.cost_q_diag = io::vector_from_json(j.at("cost").at("q_diag"));
    c.cost_r_diag = io::vector_from_json(j.at("cost").at("r_diag"));
    c.horizon_seconds = j.at("horizon_seconds").get<double>();
    c.sim_step_max = j.at("sim_step_max").get<double>();
    c.sampling_policy = j.at("sampling").at("policy").get<std::string>();
    c.sampling_lower_fraction = j.at("sampling").at("lower_fraction").get<double>();
    c.save_trajectories = j.at("save_trajectories").get<bool>();
    c.seed = j.at("seed").get<std::uint64_t>();
    c.jobs = j.at("jobs").get<int>();
    c.out_dir = j.at("out_dir").get<std::string>();
    return c;
}

inline void validate(const ExperimentConfig& c) {
    c.quadrotor.validate();
    c.box().validate();
    if (c.dataset_sizes.empty()) throw std::invalid_argument("config: dataset sizes empty");
    for (int n : c.dataset_sizes)
        if (n < 2) throw std::invalid_argument("config: dataset sizes must be at least 2");
    if (c.trials < 1) throw std::invalid_argument("config: trials must be positive");
    if (!(c.prob_per_row >= 0.0 && c.prob_per_row < 1.0))
        throw InvalidProbability("config: prob_per_row must lie in [0, 1)");
    if (c.bound_scale < 0.0) throw std::invalid_argument("config: bound_scale must be nonnegative");
    if (c.eps_points < 1 || c.eps2d_points < 1)
        throw std::invalid_argument("config: epsilon grids must be nonempty");
    if (c.frequency_multipliers.empty())
        throw std::invalid_argument("config: frequency multiplier list empty");
    for (double xi : c.frequency_multipliers)
        if (xi < 1.0) throw std::invalid_argument("config: frequency multipliers must be >= 1");
    if (c.freq_grid_points < 1) throw std::invalid_argument("config: frequency grid empty");
    if (!(c.horizon_seconds > 0.0)) throw std::invalid_argument("config: horizon must be positive");
    if (c.sampling_policy != "periodic" && c.sampling_policy != "uniform_random")
        throw std::invalid_argument("config: unknown sampling policy");
}

inline std::uint64_t config_hash(const ExperimentConfig& c) {
    std::string dump = config_to_json(c).dump();
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char ch : dump) {
        h ^= ch;
        h *= 0x100000001b3ULL;
    }
    return h;
}

// ============================================================================
// Pipeline pieces shared by the runners
// ============================================================================

struct TrialSystem {
    gp::Dataset dataset;
    std::vector<gp::GpModel> models;
    lin::UncertainLinearization linearization;
    lin::NormBoundedSystem system;
};

inline TrialSystem build_trial_system(const ExperimentConfig& config, int n_points,
                                      std::uint64_t trial_seed) {
    TrialSystem t;
    sim::Plant plant = sim::make_quadrotor(config.quadrotor);
    t.dataset = sim::generate_dataset(plant, config.box(), n_points, config.noise_stddev,
                                      trial_seed);
    for (Eigen::Index i = 0; i < 6; ++i)
        t.models.push_back(
            gp::fit_hyperparameters(t.dataset, i, config.fit_config(derive_seed(trial_seed, i))));
    VectorXd z_e(8);
    z_e << config.x_e, config.u_e;
    // f is unknown entirely: the known-model Jacobian is zero
    t.linearization =
        lin::linearize_at(t.models, MatrixXd::Zero(6, 8), z_e, config.prob_per_row);
    if (config.bound_scale != 1.0) {
        t.linearization.a_bound *= config.bound_scale;
        t.linearization.b_bound *= config.bound_scale;
    }
    t.system = lin::to_norm_bounded(t.linearization);
    return t;
}

inline sim::SampledController make_controller(const ExperimentConfig& config,
                                              const MatrixXd& gain, double t_s) {
    sim::SampledController ctrl;
    ctrl.gain = gain;
    ctrl.x_e = config.x_e;
    ctrl.u_e = config.u_e;
    ctrl.sampling_interval = t_s;
    ctrl.policy = config.sampling_policy == "uniform_random" ? sim::SamplingPolicy::UniformRandom
                                                             : sim::SamplingPolicy::Periodic;
    ctrl.lower_fraction = config.sampling_lower_fraction;
    return ctrl;
}

inline double sim_step(const ExperimentConfig& config, double t_s) {
    return std::min(config.sim_step_max, t_s / 20.0);
}

// bounded worker pool; cell results land in pre-allocated slots so output
// order is schedule-independent
inline void parallel_cells(int workers, int count, const std::function<void(int)>& run) {
    if (workers <= 1 || count <= 1) {
        for (int i = 0; i < count; ++i) run(i);
        return;
    }
    std::atomic<int> next{0};
    std::vector<std::thread> pool;
    int spawn = std::min(workers, count);
    for (int w = 0; w < spawn; ++w)
        pool.emplace_back([&] {
            for (int i = next.fetch_add(1); i < count; i = next.fetch_add(1)) run(i);
        });
    for (auto& th : pool) th.join();
}

inline void write_provenance(std::ostream& os, const ExperimentConfig& config) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%016llx",
                  static_cast<unsigned long long>(config_hash(config)));
    os << "# sdc " << kVersion << " config=0x" << buf << "\n";
}

// ============================================================================
// MCF versus dataset size
// ============================================================================

struct McfTrialRow {
    int n_points = 0;
    int trial = 0;
    std::string status;  // ok | infeasible | error:<reason>
    double f_c_min_hz = std::numeric_limits<double>::quiet_NaN();
    double t_s_max_s = std::numeric_limits<double>::quiet_NaN();
    double eps_used = std::numeric_limits<double>::quiet_NaN();
};

struct McfSummaryRow {
    int n_points = 0;
    double median_mcf_hz = std::numeric_limits<double>::quiet_NaN();
    double feasible_fraction = 0.0;
};

struct McfExperimentResult {
    std::vector<McfTrialRow> rows;
    std::vector<McfSummaryRow> summary;
};

inline McfExperimentResult run_experiment_mcf_vs_n(const ExperimentConfig& config) {
    validate(config);
    const int n_sizes = static_cast<int>(config.dataset_sizes.size());
    const int cells = n_sizes * config.trials;
    std::vector<McfTrialRow> rows(cells);

    parallel_cells(config.worker_count(), cells, [&](int cell) {
        int size_index = cell / config.trials;
        int trial = cell % config.trials;
        McfTrialRow& row = rows[cell];
        row.n_points = config.dataset_sizes[size_index];
        row.trial = trial;
        std::uint64_t trial_seed = derive_seed(config.seed, static_cast<std::uint64_t>(cell));
        try {
            TrialSystem sys = build_trial_system(config, row.n_points, trial_seed);
            sdp::ControllerDesign design =
                sdp::min_control_frequency(sys.system, config.eps_grid(), config.mcf_options());
            row.status = "ok";
            row.f_c_min_hz = design.min_frequency;
            row.t_s_max_s = design.t_s_max;
            row.eps_used = design.eps_used.first;
        } catch (const InfeasibleAtAllFrequencies&) {
            row.status = "infeasible";
        } catch (const std::exception& e) {
            row.status = std::string("error:") + e.what();
        }
    });

    McfExperimentResult result;
    result.rows = std::move(rows);
    for (int s = 0; s < n_sizes; ++s) {
        McfSummaryRow sum;
        sum.n_points = config.dataset_sizes[s];
        std::vector<double> feasible;
        for (int t = 0; t < config.trials; ++t) {
            const auto& row = result.rows[s * config.trials + t];
            if (row.status == "ok") feasible.push_back(row.f_c_min_hz);
        }
        sum.feasible_fraction = static_cast<double>(feasible.size()) / config.trials;
        if (!feasible.empty()) {
            std::sort(feasible.begin(), feasible.end());
            std::size_t mid = feasible.size() / 2;
            sum.median_mcf_hz = (feasible.size() % 2 == 1)
                                    ? feasible[mid]
                                    : 0.5 * (feasible[mid - 1] + feasible[mid]);
        }
        result.summary.push_back(sum);
    }
    return result;
}

inline void write_mcf_csv(const McfExperimentResult& result, const ExperimentConfig& config,
                          const fs::path& dir) {
    {
        std::ofstream os(dir / "mcf_vs_n.csv");
        write_provenance(os, config);
        os << "N,trial,status,f_c_min_hz,t_s_max_s,eps_used\n";
        os.precision(12);
        for (const auto& r : result.rows) {
            os << r.n_points << "," << r.trial << "," << r.status << ",";
            if (std::isfinite(r.f_c_min_hz))
                os << r.f_c_min_hz << "," << r.t_s_max_s << "," << r.eps_used;
            else
                os << ",,";
            os << "\n";
        }
    }
    {
        std::ofstream os(dir / "mcf_vs_n_summary.csv");
        write_provenance(os, config);
        os << "N,median_mcf_hz,feasible_fraction\n";
        os.precision(12);
        for (const auto& s : result.summary) {
            os << s.n_points << ",";
            if (std::isfinite(s.median_mcf_hz)) os << s.median_mcf_hz;
            os << "," << s.feasible_fraction << "\n";
        }
    }
}

// ============================================================================
// Cost versus frequency
// ============================================================================

struct CostCellRow {
    int n_points = 0;
    double f_c_hz = 0.0;
    double feasible_fraction = 0.0;
    double mean_cost = std::numeric_limits<double>::quiet_NaN();
    double eta = std::numeric_limits<double>::quiet_NaN();
};

struct XiRow {
    int n_points = 0;
    double xi = 0.0;
    int trial = 0;
    std::string status;
    double f_c_hz = std::numeric_limits<double>::quiet_NaN();
    double eta = std::numeric_limits<double>::quiet_NaN();
    double mean_cost = std::numeric_limits<double>::quiet_NaN();
};

struct CostGridResult {
    std::vector<CostCellRow> grid;
    std::vector<XiRow> xi_rows;
};

// mean simulated cost over the configured initial conditions; NaN when any
// simulation diverges
inline double mean_closed_loop_cost(const ExperimentConfig& config, const MatrixXd& gain,
                                    double t_s, std::uint64_t seed, int max_initial_states = -1) {
    sim::Plant plant = sim::make_quadrotor(config.quadrotor);
    sim::SampledController ctrl = make_controller(config, gain, t_s);
    num::SymMatrix qj = config.q_cost();
    num::SymMatrix rj = config.r_cost();
    auto states = config.initial_states();
    if (max_initial_states > 0 && static_cast<int>(states.size()) > max_initial_states)
        states.resize(max_initial_states);
    double total = 0.0;
    int k = 0;
    for (const auto& x0 : states) {
        auto traj = sim::simulate_closed_loop(plant, ctrl, x0, config.horizon_seconds,
                                              sim_step(config, t_s), derive_seed(seed, k++));
        if (traj.status != sim::TrajectoryStatus::Completed)
            return std::numeric_limits<double>::quiet_NaN();
        total += sim::evaluate_cost(traj, qj, rj, config.x_e, config.u_e);
    }
    return total / static_cast<double>(states.size());
}

inline CostGridResult run_experiment_cost_grid(const ExperimentConfig& config,
                                               const fs::path& traj_dir = {}) {
    validate(config);
    const int n_sizes = static_cast<int>(config.dataset_sizes.size());
    const int trials = config.cost_grid_trials;
    const int cells = n_sizes * trials;

    std::vector<double> freqs;
    for (int i = 0; i < config.freq_grid_points; ++i) {
        double t = (config.freq_grid_points == 1)
                       ? 0.0
                       : static_cast<double>(i) / (config.freq_grid_points - 1);
        freqs.push_back(config.freq_grid_min_hz +
                        t * (config.freq_grid_max_hz - config.freq_grid_min_hz));
    }

    struct TrialOutcome {
        std::vector<double> cost;  // per frequency, NaN if infeasible
        std::vector<double> eta;
        std::vector<XiRow> xi_rows;
    };
    std::vector<TrialOutcome> outcomes(cells);

    parallel_cells(config.worker_count(), cells, [&](int cell) {
        int size_index = cell / trials;
        int trial = cell % trials;
        int n_points = config.dataset_sizes[size_index];
        std::uint64_t trial_seed =
            derive_seed(config.seed ^ 0xc057ULL, static_cast<std::uint64_t>(cell));
        TrialOutcome& out = outcomes[cell];
        out.cost.assign(freqs.size(), std::numeric_limits<double>::quiet_NaN());
        out.eta.assign(freqs.size(), std::numeric_limits<double>::quiet_NaN());

        std::optional<TrialSystem> sys;
        std::optional<sdp::ControllerDesign> mcf;
        try {
            sys = build_trial_system(config, n_points, trial_seed);
            mcf = sdp::min_control_frequency(sys->system, config.eps_grid(),
                                             config.mcf_options());
        } catch (const std::exception&) {
            for (double xi : config.frequency_multipliers) {
                XiRow row;
                row.n_points = n_points;
                row.xi = xi;
                row.trial = trial;
                row.status = "infeasible";
                out.xi_rows.push_back(row);
            }
            return;  // every frequency cell infeasible for this trial
        }

        num::SymMatrix qj = config.q_cost();
        num::SymMatrix rj = config.r_cost();

        // absolute-frequency grid cells
        for (std::size_t fi = 0; fi < freqs.size(); ++fi) {
            double f_c = freqs[fi];
            if (f_c < mcf->min_frequency) continue;  // below the certified MCF
            double t_s = std::min(1.0 / f_c, mcf->t_s_max * (1.0 - 3.0 * config.bisect_rel_tol));
            try {
                auto perf = sdp::optimize_performance(sys->system, t_s, qj, rj,
                                                      config.eps_grid_2d(), {}, &*mcf);
                double cost = mean_closed_loop_cost(config, perf.design.gain, t_s,
                                                    derive_seed(trial_seed, 1000 + fi));
                out.cost[fi] = cost;
                out.eta[fi] = perf.eta;
            } catch (const std::exception&) {
                // cell stays infeasible
            }
        }

        // frequency-multiplier sweep relative to the trial MCF
        for (std::size_t xi_index = 0; xi_index < config.frequency_multipliers.size();
             ++xi_index) {
            double xi = config.frequency_multipliers[xi_index];
            XiRow row;
            row.n_points = n_points;
            row.xi = xi;
            row.trial = trial;
            double t_s =
                std::min(mcf->t_s_max / xi, mcf->t_s_max * (1.0 - 3.0 * config.bisect_rel_tol));
            row.f_c_hz = 1.0 / t_s;
            try {
                auto perf = sdp::optimize_performance(sys->system, t_s, qj, rj,
                                                      config.eps_grid_2d(), {}, &*mcf);
                row.eta = perf.eta;
                row.mean_cost = mean_closed_loop_cost(config, perf.design.gain, t_s,
                                                      derive_seed(trial_seed, 2000 + xi_index));
                row.status = std::isfinite(row.mean_cost) ? "ok" : "diverged";
                if (config.save_trajectories && !traj_dir.empty()) {
                    sim::Plant plant = sim::make_quadrotor(config.quadrotor);
                    auto traj = sim::simulate_closed_loop(
                        plant, make_controller(config, perf.design.gain, t_s), config.x0,
                        config.horizon_seconds, sim_step(config, t_s),
                        derive_seed(trial_seed, 3000 + xi_index));
                    std::ostringstream name;
                    name << "traj_N" << n_points << "_xi" << svg::fmt(xi) << "_trial" << trial
                         << ".csv";
                    std::ofstream os(traj_dir / name.str());
                    write_provenance(os, config);
                    sim::write_trajectory_csv(traj, os);
                }
            } catch (const std::exception&) {
                row.status = "infeasible";
            }
            out.xi_rows.push_back(row);
        }
    });

    CostGridResult result;
    for (int s = 0; s < n_sizes; ++s) {
        for (std::size_t fi = 0; fi < freqs.size(); ++fi) {
            CostCellRow cell;
            cell.n_points = config.dataset_sizes[s];
            cell.f_c_hz = freqs[fi];
            std::vector<double> costs, etas;
            for (int t = 0; t < trials; ++t) {
                const auto& out = outcomes[s * trials + t];
                if (std::isfinite(out.cost[fi])) {
                    costs.push_back(out.cost[fi]);
                    etas.push_back(out.eta[fi]);
                }
            }
            cell.feasible_fraction = static_cast<double>(costs.size()) / trials;
            if (!costs.empty()) {
                cell.mean_cost = std::accumulate(costs.begin(), costs.end(), 0.0) / costs.size();
                cell.eta = std::accumulate(etas.begin(), etas.end(), 0.0) / etas.size();
            }
            result.grid.push_back(cell);
        }
    }
    for (const auto& out : outcomes)
        result.xi_rows.insert(result.xi_rows.end(), out.xi_rows.begin(), out.xi_rows.end());
    std::stable_sort(result.xi_rows.begin(), result.xi_rows.end(),
                     [](const XiRow& a, const XiRow& b) {
                         return std::tie(a.n_points, a.xi, a.trial) <
                                std::tie(b.n_points, b.xi, b.trial);
                     });
    return result;
}

inline void write_cost_grid_csv(const CostGridResult& result, const ExperimentConfig& config,
                                const fs::path& dir) {
    {
        std::ofstream os(dir / "cost_grid.csv");
        write_provenance(os, config);
        os << "N,f_c_hz,feasible_fraction,mean_cost,eta\n";
        os.precision(12);
        for (const auto& c : result.grid) {
            os << c.n_points << "," << c.f_c_hz << "," << c.feasible_fraction << ",";
            if (std::isfinite(c.mean_cost)) os << c.mean_cost;
            os << ",";
            if (std::isfinite(c.eta)) os << c.eta;
            os << "\n";
        }
    }
    {
        std::ofstream os(dir / "cost_vs_xi.csv");
        write_provenance(os, config);
        os << "N,xi,trial,status,f_c_hz,eta,mean_cost\n";
        os.precision(12);
        for (const auto& r : result.xi_rows) {
            os << r.n_points << "," << r.xi << "," << r.trial << "," << r.status << ",";
            if (std::isfinite(r.f_c_hz)) os << r.f_c_hz;
            os << ",";
            if (std::isfinite(r.eta)) os << r.eta;
            os << ",";
            if (std::isfinite(r.mean_cost)) os << r.mean_cost;
            os << "\n";
        }
    }
}

} // namespace sdc::experiments
