#include "doctest.h"

#include "oracles.hpp"
#include "sdc/sdp.hpp"
#include "sdc/sim.hpp"

using namespace sdc;
using Eigen::MatrixXd;
using Eigen::VectorXd;

namespace {

lin::NormBoundedSystem make_system(const MatrixXd& a, const MatrixXd& b, const MatrixXd& a_bound,
                                   const MatrixXd& b_bound) {
    lin::UncertainLinearization l;
    l.a_nominal = a;
    l.b_nominal = b;
    l.a_bound = a_bound;
    l.b_bound = b_bound;
    l.operating_point = VectorXd::Zero(a.rows() + b.cols());
    return lin::to_norm_bounded(l);
}

// lightly damped two-state plant with one input
lin::NormBoundedSystem two_state_system(double bound_scale) {
    MatrixXd a(2, 2);
    a << 0.0, 1.0, -2.0, -0.4;
    MatrixXd b(2, 1);
    b << 0.0, 1.0;
    MatrixXd ab = MatrixXd::Constant(2, 2, bound_scale);
    MatrixXd bb = MatrixXd::Constant(2, 1, bound_scale);
    return make_system(a, b, ab, bb);
}

sdp::SdpProblem synthesis_problem(const lin::NormBoundedSystem& sys, double ts, double e1,
                                  double e2) {
    lmi::DecisionLayout lay(sys.state_dim(), sys.input_dim());
    sdp::SdpProblem problem;
    problem.layout = lay;
    problem.constraints = lmi::robust_stability_constraints(sys, ts, e1, e2, lay);
    problem.constraints.push_back(lmi::positive_definite_constraint(lay, lay.q1_offset()));
    problem.constraints.push_back(lmi::positive_definite_constraint(lay, lay.r_offset()));
    return problem;
}

} // namespace

TEST_CASE("scalar toy feasibility: x I - I psd") {
    lmi::DecisionLayout lay(1, 1);  // 8 scalar slots; slot 0 plays the free variable
    lmi::AffineLmi c(2, lmi::LmiSense::PositiveSemidefinite);
    c.add_coeff(0, 0, 0, 1.0);
    c.add_coeff(0, 1, 1, 1.0);
    c.add_const(0, 0, -1.0);
    c.add_const(1, 1, -1.0);
    c.normalize();

    sdp::SdpProblem problem;
    problem.layout = lay;
    problem.constraints = {c};
    auto res = sdp::solve_feasibility(problem);
    REQUIRE(res.status == sdp::SolveStatus::Feasible);
    CHECK(res.values(0) >= 1.0);
}

TEST_CASE("contradictory scalar intervals are infeasible") {
    lmi::DecisionLayout lay(1, 1);
    lmi::AffineLmi upper(1, lmi::LmiSense::StrictNegative);  // x + 1 < 0
    upper.add_coeff(0, 0, 0, 1.0);
    upper.add_const(0, 0, 1.0);
    upper.normalize();
    lmi::AffineLmi lower(1, lmi::LmiSense::PositiveSemidefinite);  // x - 1 >= 0
    lower.add_coeff(0, 0, 0, 1.0);
    lower.add_const(0, 0, -1.0);
    lower.normalize();

    sdp::SdpProblem problem;
    problem.layout = lay;
    problem.constraints = {upper, lower};
    auto res = sdp::solve_feasibility(problem);
    CHECK(res.status == sdp::SolveStatus::Infeasible);
}

TEST_CASE("feasible certificates satisfy margins under re-evaluation") {
    auto sys = two_state_system(0.05);
    auto problem = synthesis_problem(sys, 0.05, 1.0, 1.0);
    auto res = sdp::solve_feasibility(problem);
    REQUIRE(res.status == sdp::SolveStatus::Feasible);
    REQUIRE(res.margins.size() == problem.constraints.size());
    for (std::size_t i = 0; i < problem.constraints.size(); ++i) {
        const auto& c = problem.constraints[i];
        if (c.sense() == lmi::LmiSense::StrictNegative)
            CHECK(res.margins[i] <= -c.strictness_margin() / 2.0);
        else
            CHECK(res.margins[i] >= -1e-8);
    }
}

TEST_CASE("nominal scalar system stabilizes in closed loop") {
    // xdot = -x + u sampled at Ts = 0.5 under the relaxed synthesis blocks
    MatrixXd a = MatrixXd::Constant(1, 1, -1.0);
    MatrixXd b = MatrixXd::Constant(1, 1, 1.0);
    lmi::DecisionLayout lay(1, 1);
    sdp::SdpProblem problem;
    problem.layout = lay;
    problem.constraints = lmi::nominal_stability_constraints(a, b, 0.5, lay);
    problem.constraints.push_back(lmi::positive_definite_constraint(lay, lay.q1_offset()));
    problem.constraints.push_back(lmi::positive_definite_constraint(lay, lay.r_offset()));

    auto res = sdp::solve_feasibility(problem);
    REQUIRE(res.status == sdp::SolveStatus::Feasible);
    MatrixXd k = sdp::extract_gain(res, lay);

    sim::Plant plant = sim::make_linear_plant(a, b, VectorXd::Zero(1), VectorXd::Zero(1));
    sim::SampledController ctrl;
    ctrl.gain = k;
    ctrl.x_e = VectorXd::Zero(1);
    ctrl.u_e = VectorXd::Zero(1);
    ctrl.sampling_interval = 0.5;
    auto traj = sim::simulate_closed_loop(plant, ctrl, VectorXd::Ones(1), 10.0, 0.01);
    CHECK(traj.status == sim::TrajectoryStatus::Completed);
    CHECK(std::abs(traj.final_state()(0)) <= 1e-2);
}

TEST_CASE("gain extraction identities") {
    lmi::DecisionLayout lay(2, 1);
    sdp::SolveResult cert;
    cert.values = VectorXd::Zero(lay.variable_count());
    lay.set_sym(cert.values, lay.q1_offset(), MatrixXd::Identity(2, 2));
    cert.values(lay.y(0, 0)) = 3.0;
    cert.values(lay.y(0, 1)) = -1.0;
    MatrixXd k = sdp::extract_gain(cert, lay);
    CHECK(k(0, 0) == doctest::Approx(3.0));
    CHECK(k(0, 1) == doctest::Approx(-1.0));

    // zero numerator
    cert.values(lay.y(0, 0)) = 0.0;
    cert.values(lay.y(0, 1)) = 0.0;
    CHECK(sdp::extract_gain(cert, lay).norm() == 0.0);

    // scaling invariance of Y Q1^-1
    Rng rng(3);
    MatrixXd q1 = oracles::random_spd(rng, 2);
    MatrixXd y = oracles::random_matrix(rng, 1, 2);
    VectorXd v1 = VectorXd::Zero(lay.variable_count());
    VectorXd v2 = v1;
    lay.set_sym(v1, lay.q1_offset(), q1);
    lay.set_sym(v2, lay.q1_offset(), q1 / 7.0);
    for (Eigen::Index j = 0; j < 2; ++j) {
        v1(lay.y(0, j)) = y(0, j);
        v2(lay.y(0, j)) = y(0, j) / 7.0;
    }
    sdp::SolveResult c1, c2;
    c1.values = v1;
    c2.values = v2;
    CHECK((sdp::extract_gain(c1, lay) - sdp::extract_gain(c2, lay)).norm() <= 1e-10);
}

TEST_CASE("autonomous stable system admits a large sampling bound") {
    MatrixXd a(2, 2);
    a << -1.0, 0.0, 0.0, -2.0;
    MatrixXd b(2, 1);
    b << 1.0, 0.0;
    auto sys = make_system(a, b, MatrixXd::Zero(2, 2), MatrixXd::Zero(2, 1));

    sdp::McfOptions opt;
    auto design = sdp::min_control_frequency(sys, {1.0}, opt);
    CHECK(design.t_s_max >= 1.0);
    CHECK(design.min_frequency * design.t_s_max == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("sampling bound shrinks as uncertainty grows") {
    auto grid = sdp::default_eps_grid(-2, 2, 5);
    double prev = std::numeric_limits<double>::infinity();
    for (double scale : {0.0, 0.1, 0.2}) {
        auto design = sdp::min_control_frequency(two_state_system(scale), grid);
        CHECK(design.t_s_max <= prev * (1.0 + 2e-3));
        prev = design.t_s_max;
    }
}

TEST_CASE("bisection endpoint: feasible at the bound, infeasible just above") {
    auto sys = two_state_system(0.15);
    auto grid = sdp::default_eps_grid(-1, 1, 3);
    auto design = sdp::min_control_frequency(sys, grid);

    auto probe = [&](double ts) {
        auto problem = synthesis_problem(sys, ts, design.eps_used.first, design.eps_used.second);
        return sdp::solve_feasibility(problem).status;
    };
    CHECK(probe(design.t_s_max) == sdp::SolveStatus::Feasible);
    CHECK(probe(design.t_s_max * 1.002) == sdp::SolveStatus::Infeasible);
}

TEST_CASE("robust certificates imply nominal margins for sampled realizations") {
    auto sys = two_state_system(0.1);
    auto grid = sdp::default_eps_grid(-1, 1, 3);
    auto design = sdp::min_control_frequency(sys, grid);
    lmi::DecisionLayout lay(2, 1);

    Rng rng(7);
    const Eigen::Index p = sys.uncertainty_dim();
    for (int rep = 0; rep < 100; ++rep) {
        VectorXd delta(p);
        for (Eigen::Index i = 0; i < p; ++i) delta(i) = rng.uniform(-1.0, 1.0);
        auto real = lin::sample_realization(sys, delta);
        auto margins = lmi::nominal_stability_check(real.a, real.b, design.t_s_max,
                                                    design.certificate.values, lay);
        CHECK(margins.margin_neg < 0.0);
        CHECK(margins.margin_psd >= -1e-8);
    }
}

TEST_CASE("certificate rescaling keeps margins and gain") {
    auto sys = two_state_system(0.1);
    auto design = sdp::min_control_frequency(sys, {1.0});
    lmi::DecisionLayout lay(2, 1);
    MatrixXd k0 = design.gain;

    for (double c : {0.1, 10.0}) {
        VectorXd scaled = design.certificate.values / c;
        auto cons = lmi::robust_stability_constraints(sys, design.t_s_max,
                                                      design.eps_used.first * c,
                                                      design.eps_used.second * c, lay);
        CHECK(cons[0].margin(scaled) < 0.0);
        CHECK(cons[1].margin(scaled) >= -1e-9);
        sdp::SolveResult cert;
        cert.values = scaled;
        CHECK((sdp::extract_gain(cert, lay) - k0).norm() <= 1e-10 * (1.0 + k0.norm()));
    }
}

TEST_CASE("performance optimization meets the Schur recheck") {
    auto sys = two_state_system(0.0);
    num::SymMatrix qj = num::SymMatrix::identity(2);
    num::SymMatrix rj = num::SymMatrix::identity(1);
    auto grid = sdp::default_eps_grid(-1, 1, 3);

    auto perf = sdp::optimize_performance(sys, 0.01, qj, rj, grid);
    lmi::DecisionLayout lay(2, 1, true);
    MatrixXd q1 = lay.q1_matrix(perf.design.certificate.values);
    MatrixXd y = lay.y_matrix(perf.design.certificate.values);
    MatrixXd quad = q1 * qj.mat() * q1 + y.transpose() * rj.mat() * y;
    double lmax = num::max_eigenvalue(num::SymMatrix::from_full(quad));
    CHECK(perf.eta >= lmax - 1e-8);
}

TEST_CASE("performance bound improves with faster sampling") {
    auto sys = two_state_system(0.05);
    num::SymMatrix qj = num::SymMatrix::identity(2);
    num::SymMatrix rj = num::SymMatrix::identity(1);
    auto grid = sdp::default_eps_grid(-1, 1, 3);

    auto mcf = sdp::min_control_frequency(sys, grid);
    double t = mcf.t_s_max * 0.9;
    double prev = std::numeric_limits<double>::infinity();
    for (double ts : {t, t / 2.0, t / 4.0}) {
        auto perf = sdp::optimize_performance(sys, ts, qj, rj, grid);
        CHECK(perf.eta <= prev * (1.0 + 3e-2));
        prev = perf.eta;
    }
}

TEST_CASE("infeasible sampling interval reports the dedicated error") {
    auto sys = two_state_system(0.15);
    auto grid = sdp::default_eps_grid(-1, 1, 3);
    auto mcf = sdp::min_control_frequency(sys, grid);
    num::SymMatrix qj = num::SymMatrix::identity(2);
    num::SymMatrix rj = num::SymMatrix::identity(1);
    CHECK_THROWS_AS(
        sdp::optimize_performance(sys, mcf.t_s_max * 1.5, qj, rj, grid),
        InfeasibleAtGivenTs);

    // and the caller-supplied-design precondition
    CHECK_THROWS_AS(
        sdp::optimize_performance(sys, mcf.t_s_max * 1.1, qj, rj, grid, {}, &mcf),
        std::invalid_argument);
}

TEST_CASE("empty epsilon grid is rejected") {
    auto sys = two_state_system(0.1);
    CHECK_THROWS_AS(sdp::min_control_frequency(sys, {}), std::invalid_argument);
}
