// Command-line interface: each stage reads and writes the JSON/CSV
// interchange formats, so the pipeline can run end to end or piecewise.

#include <CLI11.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include "sdc/experiments.hpp"
#include "sdc/render.hpp"
#include "sdc/serialize.hpp"
#include "sdc/version.hpp"

namespace fs = std::filesystem;
using namespace sdc;
using experiments::ExperimentConfig;
using io::json;

namespace {

struct CommonOpts {
    std::string config_path;
    std::string out_dir = "results";
    std::optional<std::uint64_t> seed;
    std::optional<int> jobs;
    bool verbose = false;
};

ExperimentConfig load_config(const CommonOpts& opts) {
    ExperimentConfig config = opts.config_path.empty()
                                  ? experiments::default_config()
                                  : experiments::config_from_json(
                                        io::read_json_file(opts.config_path));
    if (opts.seed) config.seed = *opts.seed;
    if (opts.jobs) config.jobs = *opts.jobs;
    if (!opts.out_dir.empty()) config.out_dir = opts.out_dir;
    experiments::validate(config);
    return config;
}

void add_common(CLI::App* cmd, CommonOpts& opts) {
    cmd->add_option("--config", opts.config_path, "experiment config JSON (built-in default)");
    cmd->add_option("--out", opts.out_dir, "output directory");
    cmd->add_option("--seed", opts.seed, "RNG seed override");
    cmd->add_option("--jobs", opts.jobs, "worker pool width (0 = hardware)");
    cmd->add_flag("--verbose", opts.verbose, "solver trace to <out>/solver_trace.log");
}

fs::path prepare_out(const ExperimentConfig& config) {
    fs::path dir(config.out_dir);
    fs::create_directories(dir);
    io::write_json_file(experiments::config_to_json(config), (dir / "config_used.json").string());
    return dir;
}

std::vector<gp::GpModel> load_models(const fs::path& dir) {
    std::vector<gp::GpModel> models;
    for (int i = 0;; ++i) {
        fs::path p = dir / ("gp_model_" + std::to_string(i) + ".json");
        if (!fs::exists(p)) break;
        models.push_back(io::gp_model_from_json(io::read_json_file(p.string())));
    }
    if (models.empty()) throw std::runtime_error("no gp_model_<i>.json files in " + dir.string());
    return models;
}

int run_fit(const CommonOpts& opts, const std::string& data_path, int generate_n) {
    ExperimentConfig config = load_config(opts);
    fs::path dir = prepare_out(config);
    sim::Plant plant = sim::make_quadrotor(config.quadrotor);

    gp::Dataset data;
    if (!data_path.empty()) {
        std::ifstream is(data_path);
        if (!is) throw std::runtime_error("cannot read " + data_path);
        data = gp::read_dataset_csv(is, config.noise_stddev);
    } else {
        int n = generate_n > 0 ? generate_n : config.dataset_sizes.back();
        data = sim::generate_dataset(plant, config.box(), n, config.noise_stddev, config.seed);
        std::ofstream os(dir / "dataset.csv");
        gp::write_dataset_csv(data, os);
        std::cout << "generated dataset N=" << n << " -> " << (dir / "dataset.csv").string()
                  << "\n";
    }

    for (Eigen::Index i = 0; i < data.output_dim(); ++i) {
        gp::GpModel model =
            gp::fit_hyperparameters(data, i, config.fit_config(derive_seed(config.seed, i)));
        io::write_json_file(io::gp_model_to_json(model),
                            (dir / ("gp_model_" + std::to_string(i) + ".json")).string());
        std::cout << "fit output " << i << ": L=" << model.fit_report.log_marginal_likelihood
                  << " iters=" << model.fit_report.iterations << "\n";
    }
    return 0;
}

int run_linearize(const CommonOpts& opts, const std::string& models_dir) {
    ExperimentConfig config = load_config(opts);
    fs::path dir = prepare_out(config);
    auto models = load_models(models_dir.empty() ? dir : fs::path(models_dir));

    Eigen::VectorXd z_e(config.x_e.size() + config.u_e.size());
    z_e << config.x_e, config.u_e;
    Eigen::MatrixXd known = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(models.size()),
                                                  models.front().input_dim());
    auto l = lin::linearize_at(models, known, z_e, config.prob_per_row);
    auto sys = lin::to_norm_bounded(l);
    io::write_json_file(io::linearization_to_json(l), (dir / "linearization.json").string());
    io::write_json_file(io::norm_bounded_to_json(sys), (dir / "norm_bounded.json").string());
    std::cout << "gamma=" << l.gamma << " joint confidence=" << l.joint_confidence << "\n";
    std::cout << "wrote " << (dir / "linearization.json").string() << " and norm_bounded.json\n";
    return 0;
}

int run_mcf(const CommonOpts& opts, const std::string& system_path) {
    ExperimentConfig config = load_config(opts);
    fs::path dir = prepare_out(config);
    fs::path sys_path = system_path.empty() ? dir / "norm_bounded.json" : fs::path(system_path);
    auto sys = io::norm_bounded_from_json(io::read_json_file(sys_path.string()));

    sdp::McfOptions mcf_opts = config.mcf_options();
    std::ofstream trace;
    if (opts.verbose) {
        trace.open(dir / "solver_trace.log");
        mcf_opts.solve.trace = &trace;
    }
    auto design = sdp::min_control_frequency(sys, config.eps_grid(), mcf_opts);
    io::write_json_file(io::design_to_json(design), (dir / "mcf_design.json").string());
    std::cout << "T_s,max = " << design.t_s_max << " s, MCF = " << design.min_frequency
              << " Hz (eps1=" << design.eps_used.first << ")\n";
    return 0;
}

int run_synthesize(const CommonOpts& opts, const std::string& system_path, double t_s,
                   double frequency_hz) {
    ExperimentConfig config = load_config(opts);
    fs::path dir = prepare_out(config);
    fs::path sys_path = system_path.empty() ? dir / "norm_bounded.json" : fs::path(system_path);
    auto sys = io::norm_bounded_from_json(io::read_json_file(sys_path.string()));

    std::optional<sdp::ControllerDesign> reference;
    if (fs::exists(dir / "mcf_design.json"))
        reference = io::design_from_json(io::read_json_file((dir / "mcf_design.json").string()));

    double ts = t_s;
    if (frequency_hz > 0.0) ts = 1.0 / frequency_hz;
    if (ts <= 0.0) {
        if (!reference) throw std::runtime_error("synthesize: give --ts or --frequency, or run mcf first");
        ts = reference->t_s_max * (1.0 - 3.0 * config.bisect_rel_tol);
    }

    auto perf = sdp::optimize_performance(sys, ts, config.q_cost(), config.r_cost(),
                                          config.eps_grid_2d(), {},
                                          reference ? &*reference : nullptr);
    json j = io::design_to_json(perf.design);
    j["eta"] = perf.eta;
    io::write_json_file(j, (dir / "performance_design.json").string());
    std::cout << "eta = " << perf.eta << " at T_s = " << ts << " s (eps1="
              << perf.design.eps_used.first << ", eps2=" << perf.design.eps_used.second << ")\n";
    return 0;
}

int run_simulate(const CommonOpts& opts, const std::string& design_path) {
    ExperimentConfig config = load_config(opts);
    fs::path dir = prepare_out(config);
    fs::path path = design_path.empty()
                        ? (fs::exists(dir / "performance_design.json")
                               ? dir / "performance_design.json"
                               : dir / "mcf_design.json")
                        : fs::path(design_path);
    auto design = io::design_from_json(io::read_json_file(path.string()));

    sim::Plant plant = sim::make_quadrotor(config.quadrotor);
    auto ctrl = experiments::make_controller(config, design.gain, design.t_s_max);
    auto traj = sim::simulate_closed_loop(plant, ctrl, config.x0, config.horizon_seconds,
                                          experiments::sim_step(config, design.t_s_max),
                                          config.seed);
    std::ofstream os(dir / "trajectory.csv");
    experiments::write_provenance(os, config);
    sim::write_trajectory_csv(traj, os);
    double cost = sim::evaluate_cost(traj, config.q_cost(), config.r_cost(), config.x_e,
                                     config.u_e);
    std::cout << "status="
              << (traj.status == sim::TrajectoryStatus::Completed ? "completed" : "diverged")
              << " final_error=" << (traj.final_state() - config.x_e).norm()
              << " cost=" << cost << "\n";
    return traj.status == sim::TrajectoryStatus::Completed ? 0 : 1;
}

int run_experiment_mcf(const CommonOpts& opts) {
    ExperimentConfig config = load_config(opts);
    fs::path dir = prepare_out(config);
    auto result = experiments::run_experiment_mcf_vs_n(config);
    experiments::write_mcf_csv(result, config, dir);
    for (const auto& s : result.summary)
        std::cout << "N=" << s.n_points << " median_mcf=" << s.median_mcf_hz
                  << " Hz feasible=" << s.feasible_fraction << "\n";
    std::cout << "wrote " << (dir / "mcf_vs_n.csv").string() << "\n";
    return 0;
}

int run_experiment_cost(const CommonOpts& opts) {
    ExperimentConfig config = load_config(opts);
    fs::path dir = prepare_out(config);
    auto result = experiments::run_experiment_cost_grid(config, dir);
    experiments::write_cost_grid_csv(result, config, dir);
    std::cout << "wrote " << (dir / "cost_grid.csv").string() << " and cost_vs_xi.csv\n";
    return 0;
}

int run_render(const CommonOpts& opts, const std::string& results_dir) {
    fs::path in = results_dir.empty() ? fs::path(opts.out_dir) : fs::path(results_dir);
    if (!fs::exists(in)) throw std::runtime_error("render: no such directory " + in.string());
    int produced = render::render_outputs(in, in);
    if (produced == 0) {
        std::cout << "nothing to render in " << in.string() << "\n";
        return 0;
    }
    std::cout << "rendered " << produced << " figure(s) into " << in.string() << "\n";
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"sdc: learned-model sampled-data control design"};
    app.set_version_flag("--version", std::string(kVersion));
    app.require_subcommand(1);

    CommonOpts opts;
    std::string data_path, models_dir, system_path, design_path, results_dir;
    int generate_n = 0;
    double t_s = 0.0, frequency_hz = 0.0;

    auto* fit = app.add_subcommand("fit", "fit per-output GP models to derivative data");
    add_common(fit, opts);
    fit->add_option("--data", data_path, "dataset CSV (generated from config when omitted)");
    fit->add_option("--generate", generate_n, "generate a dataset of this size");

    auto* linearize = app.add_subcommand("linearize", "uncertain linearization at the setpoint");
    add_common(linearize, opts);
    linearize->add_option("--models", models_dir, "directory with gp_model_<i>.json");

    auto* mcf = app.add_subcommand("mcf", "compute the minimum control frequency");
    add_common(mcf, opts);
    mcf->add_option("--system", system_path, "norm_bounded.json path");

    auto* synthesize = app.add_subcommand("synthesize", "performance-optimized gain at fixed T_s");
    add_common(synthesize, opts);
    synthesize->add_option("--system", system_path, "norm_bounded.json path");
    synthesize->add_option("--ts", t_s, "sampling interval [s]");
    synthesize->add_option("--frequency", frequency_hz, "control frequency [Hz]");

    auto* simulate = app.add_subcommand("simulate", "closed-loop simulation of a design");
    add_common(simulate, opts);
    simulate->add_option("--design", design_path, "controller design JSON");

    auto* experiment = app.add_subcommand("experiment", "seeded experiment sweeps");
    experiment->require_subcommand(1);
    auto* exp_mcf = experiment->add_subcommand("mcf-vs-n", "MCF across dataset sizes");
    add_common(exp_mcf, opts);
    auto* exp_cost = experiment->add_subcommand("cost-grid", "cost across (N, f_c) cells");
    add_common(exp_cost, opts);

    auto* render_cmd = app.add_subcommand("render", "render SVG figures from result CSVs");
    add_common(render_cmd, opts);
    render_cmd->add_option("--results", results_dir, "results directory (defaults to --out)");

    CLI11_PARSE(app, argc, argv);

    try {
        if (*fit) return run_fit(opts, data_path, generate_n);
        if (*linearize) return run_linearize(opts, models_dir);
        if (*mcf) return run_mcf(opts, system_path);
        if (*synthesize) return run_synthesize(opts, system_path, t_s, frequency_hz);
        if (*simulate) return run_simulate(opts, design_path);
        if (*exp_mcf) return run_experiment_mcf(opts);
        if (*exp_cost) return run_experiment_cost(opts);
        if (*render_cmd) return run_render(opts, results_dir);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
