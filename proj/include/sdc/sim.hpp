#pragma once

#include <Eigen/Core>

#include <cmath>
#include <functional>
#include <ostream>
#include <string>
#include <vector>

#include "sdc/errors.hpp"
#include "sdc/gp.hpp"
#include "sdc/numerics.hpp"
#include "sdc/rng.hpp"

namespace sdc::sim {

using Eigen::MatrixXd;
using Eigen::VectorXd;

// ============================================================================
// Plants
// ============================================================================

struct Plant {
    Eigen::Index state_dim = 0;
    Eigen::Index input_dim = 0;
    std::function<VectorXd(const VectorXd&, const VectorXd&)> derivative;
};

struct QuadrotorParams {
    double mass = 0.1;      // kg
    double arm = 0.1;       // m, effective moment arm d
    double gravity = 9.81;  // m/s^2
    double inertia_yy = 0.1 * 0.1 * 0.1 / 12.0;  // kg m^2, m*d^2/12

    void validate() const {
        if (!(mass > 0.0 && arm > 0.0 && gravity > 0.0 && inertia_yy > 0.0))
            throw std::invalid_argument("QuadrotorParams: all parameters must be positive");
    }

    // total thrust balancing gravity, split across both rotors
    VectorXd hover_input() const {
        VectorXd u(2);
        u.setConstant(0.5 * mass * gravity);
        return u;
    }
};

// Planar quadrotor, state [x, xdot, z, zdot, theta, thetadot], input [T1, T2]:
//   m xddot     = -(T1 + T2) sin(theta)
//   m zddot     =  (T1 + T2) cos(theta) - m g
//   Iyy thetadd =  (T1 - T2) d
inline VectorXd quadrotor_derivative(const VectorXd& state, const VectorXd& input,
                                     const QuadrotorParams& params) {
    if (state.size() != 6 || input.size() != 2)
        throw DimensionMismatch("quadrotor_derivative: state must be 6-d, input 2-d");
    const double theta = state(4);
    const double thrust = input(0) + input(1);
    VectorXd d(6);
    d(0) = state(1);
    d(1) = -thrust * std::sin(theta) / params.mass;
    d(2) = state(3);
    d(3) = thrust * std::cos(theta) / params.mass - params.gravity;
    d(4) = state(5);
    d(5) = (input(0) - input(1)) * params.arm / params.inertia_yy;
    return d;
}

inline Plant make_quadrotor(const QuadrotorParams& params = {}) {
    params.validate();
    return Plant{6, 2, [params](const VectorXd& x, const VectorXd& u) {
                     return quadrotor_derivative(x, u, params);
                 }};
}

// Analytic Jacobian of the quadrotor dynamics at (state, input), n x (n+m)
inline MatrixXd quadrotor_jacobian(const VectorXd& state, const VectorXd& input,
                                   const QuadrotorParams& params) {
    const double theta = state(4);
    const double thrust = input(0) + input(1);
    MatrixXd jac = MatrixXd::Zero(6, 8);
    jac(0, 1) = 1.0;
    jac(2, 3) = 1.0;
    jac(4, 5) = 1.0;
    jac(1, 4) = -thrust * std::cos(theta) / params.mass;
    jac(1, 6) = -std::sin(theta) / params.mass;
    jac(1, 7) = -std::sin(theta) / params.mass;
    jac(3, 4) = -thrust * std::sin(theta) / params.mass;
    jac(3, 6) = std::cos(theta) / params.mass;
    jac(3, 7) = std::cos(theta) / params.mass;
    jac(5, 6) = params.arm / params.inertia_yy;
    jac(5, 7) = -params.arm / params.inertia_yy;
    return jac;
}

// linear plant xdot = A (x - x_e) + B (u - u_e), e.g. a sampled realization of
// the uncertain linearized model
inline Plant make_linear_plant(const MatrixXd& a, const MatrixXd& b, const VectorXd& x_e,
                               const VectorXd& u_e) {
    return Plant{a.rows(), b.cols(), [a, b, x_e, u_e](const VectorXd& x, const VectorXd& u) {
                     return VectorXd(a * (x - x_e) + b * (u - u_e));
                 }};
}

// ============================================================================
// Training data
// ============================================================================

struct Box {
    VectorXd lower;
    VectorXd upper;

    void validate() const {
        if (lower.size() != upper.size()) throw InvalidBox("Box: bound sizes differ");
        if ((lower.array() >= upper.array()).any())
            throw InvalidBox("Box: lower bound must be strictly below upper bound");
    }
};

// Uniform inputs over the box; targets are the exact plant derivative minus
// the known-model part, plus i.i.d. Gaussian noise.
inline gp::Dataset generate_dataset(
    const Plant& plant, const Box& box, Eigen::Index n_points, const VectorXd& noise_stddev,
    std::uint64_t seed,
    const std::function<VectorXd(const VectorXd&, const VectorXd&)>& known_model = nullptr) {
    box.validate();
    if (n_points < 1) throw std::invalid_argument("generate_dataset: need at least one point");
    const Eigen::Index n = plant.state_dim;
    const Eigen::Index m = plant.input_dim;
    if (box.lower.size() != n + m)
        throw InvalidBox("generate_dataset: box dimension must equal n + m");
    if (noise_stddev.size() != n)
        throw DimensionMismatch("generate_dataset: noise vector must have one entry per state");

    Rng rng(seed);
    gp::Dataset data;
    data.inputs.resize(n_points, n + m);
    data.targets.resize(n_points, n);
    data.noise_stddev = noise_stddev;
    for (Eigen::Index i = 0; i < n_points; ++i) {
        for (Eigen::Index j = 0; j < n + m; ++j)
            data.inputs(i, j) = rng.uniform(box.lower(j), box.upper(j));
        VectorXd x = data.inputs.row(i).head(n);
        VectorXd u = data.inputs.row(i).tail(m);
        VectorXd y = plant.derivative(x, u);
        if (known_model) y -= known_model(x, u);
        for (Eigen::Index j = 0; j < n; ++j)
            data.targets(i, j) = y(j) + noise_stddev(j) * rng.normal();
    }
    data.validate();
    return data;
}

// ============================================================================
// Sampled-data closed loop
// ============================================================================

enum class SamplingPolicy { Periodic, UniformRandom };

struct SampledController {
    MatrixXd gain;  // K, m x n
    VectorXd x_e;
    VectorXd u_e;
    double sampling_interval = 0.0;  // T_s upper bound
    SamplingPolicy policy = SamplingPolicy::Periodic;
    double lower_fraction = 0.5;  // random intervals drawn from [fraction*T_s, T_s]
};

enum class TrajectoryStatus { Completed, Diverged };

struct Trajectory {
    std::vector<double> times;
    std::vector<VectorXd> states;
    std::vector<VectorXd> inputs;        // input active at each time
    std::vector<bool> is_sample_instant;
    TrajectoryStatus status = TrajectoryStatus::Completed;

    const VectorXd& final_state() const { return states.back(); }
};

namespace detail {

inline VectorXd rk4_step(const Plant& plant, const VectorXd& x, const VectorXd& u, double h) {
    VectorXd k1 = plant.derivative(x, u);
    VectorXd k2 = plant.derivative(x + 0.5 * h * k1, u);
    VectorXd k3 = plant.derivative(x + 0.5 * h * k2, u);
    VectorXd k4 = plant.derivative(x + h * k3, u);
    return x + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
}

} // namespace detail

inline constexpr double kDivergenceNorm = 1e6;

// Fixed-step RK4 between sampling instants; the input is recomputed as
// u = u_e + K (x(t_k) - x_e) at each instant and held. Random sampling draws
// interval lengths i.i.d. from [fraction * T_s, T_s].
inline Trajectory simulate_closed_loop(const Plant& plant, const SampledController& controller,
                                       const VectorXd& x0, double horizon, double step,
                                       std::uint64_t seed = 0) {
    if (!(controller.sampling_interval > 0.0))
        throw std::invalid_argument("simulate_closed_loop: sampling interval must be positive");
    if (!(step <= controller.sampling_interval / 10.0))
        throw std::invalid_argument("simulate_closed_loop: step must be at most T_s / 10");
    if (x0.size() != plant.state_dim)
        throw DimensionMismatch("simulate_closed_loop: initial state dimension mismatch");

    Rng rng(seed);
    Trajectory traj;
    VectorXd x = x0;
    double t = 0.0;

    while (t < horizon - 1e-12) {
        double interval = controller.sampling_interval;
        if (controller.policy == SamplingPolicy::UniformRandom)
            interval = rng.uniform(controller.lower_fraction * controller.sampling_interval,
                                   controller.sampling_interval);
        double t_next = std::min(t + interval, horizon);

        VectorXd u = controller.u_e + controller.gain * (x - controller.x_e);
        traj.times.push_back(t);
        traj.states.push_back(x);
        traj.inputs.push_back(u);
        traj.is_sample_instant.push_back(true);

        double segment = t_next - t;
        int substeps = std::max(1, static_cast<int>(std::ceil(segment / step - 1e-12)));
        double h = segment / substeps;
        for (int s = 0; s < substeps; ++s) {
            x = detail::rk4_step(plant, x, u, h);
            t += h;
            bool diverged = x.norm() > kDivergenceNorm || !x.allFinite();
            if (diverged || s + 1 < substeps) {
                traj.times.push_back(t);
                traj.states.push_back(x);
                traj.inputs.push_back(u);
                traj.is_sample_instant.push_back(false);
            }
            if (diverged) {
                traj.status = TrajectoryStatus::Diverged;
                return traj;
            }
        }
        t = t_next;  // avoid accumulated rounding
    }
    // terminal record keeps the held input of the last segment
    traj.times.push_back(horizon);
    traj.states.push_back(x);
    traj.inputs.push_back(traj.inputs.back());
    traj.is_sample_instant.push_back(false);
    return traj;
}

// J = sum_k (t_{k+1} - t_k) [ xt(t_k)^T Q_J xt(t_k) + ut_k^T R_J ut_k ] over
// sampling instants, with the final interval closed by the horizon end.
inline double evaluate_cost(const Trajectory& traj, const num::SymMatrix& q_cost,
                            const num::SymMatrix& r_cost, const VectorXd& x_e,
                            const VectorXd& u_e) {
    std::vector<std::size_t> instants;
    for (std::size_t i = 0; i < traj.times.size(); ++i)
        if (traj.is_sample_instant[i]) instants.push_back(i);
    if (instants.empty()) throw EmptyTrajectory("evaluate_cost: trajectory has no sample instants");

    double j = 0.0;
    for (std::size_t k = 0; k < instants.size(); ++k) {
        std::size_t i = instants[k];
        double t_next = (k + 1 < instants.size()) ? traj.times[instants[k + 1]] : traj.times.back();
        double dt = t_next - traj.times[i];
        VectorXd xt = traj.states[i] - x_e;
        VectorXd ut = traj.inputs[i] - u_e;
        j += dt * (xt.dot(q_cost.mat() * xt) + ut.dot(r_cost.mat() * ut));
    }
    return j;
}

// CSV interchange: t, x_1..x_n, u_1..u_m, is_sample_instant
inline void write_trajectory_csv(const Trajectory& traj, std::ostream& os) {
    const Eigen::Index n = traj.states.front().size();
    const Eigen::Index m = traj.inputs.front().size();
    os << "t";
    for (Eigen::Index j = 0; j < n; ++j) os << ",x_" << (j + 1);
    for (Eigen::Index j = 0; j < m; ++j) os << ",u_" << (j + 1);
    os << ",is_sample_instant\n";
    os.precision(12);
    for (std::size_t i = 0; i < traj.times.size(); ++i) {
        os << traj.times[i];
        for (Eigen::Index j = 0; j < n; ++j) os << "," << traj.states[i](j);
        for (Eigen::Index j = 0; j < m; ++j) os << "," << traj.inputs[i](j);
        os << "," << (traj.is_sample_instant[i] ? 1 : 0) << "\n";
    }
}

} // namespace sdc::sim
