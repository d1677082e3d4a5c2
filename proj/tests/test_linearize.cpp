#include "doctest.h"

#include <memory>

#include "oracles.hpp"
#include "sdc/linearize.hpp"
#include "sdc/sim.hpp"

using namespace sdc;
using Eigen::MatrixXd;
using Eigen::VectorXd;

namespace {

std::vector<gp::GpModel> prior_models(Eigen::Index n, Eigen::Index nz, double sf2, double ls) {
    std::vector<gp::GpModel> models;
    for (Eigen::Index i = 0; i < n; ++i) {
        gp::SeKernel k;
        k.output_variance = sf2;
        k.lengthscales = VectorXd::Constant(nz, ls);
        models.push_back(gp::GpModel::prior(k, 1e-4));
    }
    return models;
}

lin::UncertainLinearization random_linearization(Rng& rng, Eigen::Index n, Eigen::Index m) {
    lin::UncertainLinearization l;
    l.a_nominal = oracles::random_matrix(rng, n, n);
    l.b_nominal = oracles::random_matrix(rng, n, m);
    l.a_bound = oracles::random_matrix(rng, n, n).cwiseAbs();
    l.b_bound = oracles::random_matrix(rng, n, m).cwiseAbs();
    l.prob_per_row = 0.95;
    l.gamma = 1.0;
    l.operating_point = VectorXd::Zero(n + m);
    return l;
}

MatrixXd random_interval(Rng& rng, Eigen::Index r, Eigen::Index c) {
    MatrixXd m(r, c);
    for (Eigen::Index i = 0; i < r; ++i)
        for (Eigen::Index j = 0; j < c; ++j) m(i, j) = rng.uniform(-1.0, 1.0);
    return m;
}

} // namespace

TEST_CASE("quadrotor hover linearization with exact known dynamics") {
    sim::QuadrotorParams params;
    VectorXd x_e = (VectorXd(6) << 1, 0, 0, 0, 0, 0).finished();
    VectorXd u_e = params.hover_input();
    VectorXd z_e(8);
    z_e << x_e, u_e;
    MatrixXd known = sim::quadrotor_jacobian(x_e, u_e, params);

    // prior GPs carry zero mean, so the nominal part is exactly the known
    // Jacobian; small hyperparameters make the bound shrink toward zero
    auto models = prior_models(6, 8, 1e-10, 10.0);
    auto l = lin::linearize_at(models, known, z_e, 0.99);

    CHECK(l.a_nominal(1, 4) == doctest::Approx(-9.81).epsilon(1e-12));
    CHECK(l.b_nominal(3, 0) == doctest::Approx(10.0).epsilon(1e-12));
    CHECK(l.b_nominal(3, 1) == doctest::Approx(10.0).epsilon(1e-12));
    CHECK(l.b_nominal(5, 0) == doctest::Approx(1200.0).epsilon(1e-12));
    CHECK(l.b_nominal(5, 1) == doctest::Approx(-1200.0).epsilon(1e-12));
    CHECK(l.a_bound.maxCoeff() <= 1e-3);
    CHECK(l.joint_confidence == doctest::Approx(std::pow(0.99, 6)));
}

TEST_CASE("zero per-row probability gives zero bounds") {
    auto models = prior_models(2, 3, 1.0, 1.0);
    MatrixXd known = MatrixXd::Zero(2, 3);
    auto l = lin::linearize_at(models, known, VectorXd::Zero(3), 0.0);
    CHECK(l.gamma == 0.0);
    CHECK(l.a_bound.norm() == 0.0);
    CHECK(l.b_bound.norm() == 0.0);
}

TEST_CASE("prior-only models give column-constant bounds") {
    auto models = prior_models(2, 3, 1.0, 1.0);
    MatrixXd known = MatrixXd::Zero(2, 3);
    auto l = lin::linearize_at(models, known, VectorXd::Zero(3), 0.9);
    double expected = std::sqrt(num::chi2_quantile(0.9, 3));  // gamma * sigma/l = gamma
    for (Eigen::Index i = 0; i < 2; ++i) {
        for (Eigen::Index j = 0; j < 2; ++j)
            CHECK(l.a_bound(i, j) == doctest::Approx(expected).epsilon(1e-12));
        CHECK(l.b_bound(i, 0) == doctest::Approx(expected).epsilon(1e-12));
    }
}

TEST_CASE("gamma is monotone in the per-row probability") {
    auto models = prior_models(2, 3, 1.0, 1.0);
    MatrixXd known = MatrixXd::Zero(2, 3);
    double prev = -1.0;
    for (double p : {0.0, 0.3, 0.6, 0.9, 0.99}) {
        auto l = lin::linearize_at(models, known, VectorXd::Zero(3), p);
        CHECK(l.gamma >= prev);
        prev = l.gamma;
    }
}

TEST_CASE("invalid probability is rejected") {
    auto models = prior_models(2, 3, 1.0, 1.0);
    MatrixXd known = MatrixXd::Zero(2, 3);
    CHECK_THROWS_AS(lin::linearize_at(models, known, VectorXd::Zero(3), 1.0),
                    InvalidProbability);
}

TEST_CASE("norm-bounded H, E, F structure") {
    Rng rng(3);
    auto l = random_linearization(rng, 3, 2);
    auto sys = lin::to_norm_bounded(l);
    const Eigen::Index n = 3, m = 2, p = n * n + n * m;
    REQUIRE(sys.h.rows() == n);
    REQUIRE(sys.h.cols() == p);
    for (Eigen::Index i = 0; i < n; ++i) {
        CHECK(sys.h.row(i).sum() == doctest::Approx(double(n + m)));
        for (Eigen::Index q = 0; q < p; ++q) {
            double expected = 0.0;
            if (q < n * n && q / n == i) expected = 1.0;
            if (q >= n * n && (q - n * n) / m == i) expected = 1.0;
            CHECK(sys.h(i, q) == expected);
        }
    }
    // E vanishes on the input block rows, F on the state block rows
    CHECK(sys.e.bottomRows(n * m).norm() == 0.0);
    CHECK(sys.f.topRows(n * n).norm() == 0.0);
}

TEST_CASE("zero bounds give zero uncertainty factors") {
    Rng rng(5);
    auto l = random_linearization(rng, 2, 1);
    l.a_bound.setZero();
    l.b_bound.setZero();
    auto sys = lin::to_norm_bounded(l);
    CHECK(sys.e.norm() == 0.0);
    CHECK(sys.f.norm() == 0.0);
    auto real = lin::sample_realization(sys, VectorXd::Constant(sys.uncertainty_dim(), 0.7));
    CHECK(real.a.isApprox(l.a_nominal, 1e-15));
    CHECK(real.b.isApprox(l.b_nominal, 1e-15));
}

TEST_CASE("hand-computed Hadamard example") {
    lin::UncertainLinearization l;
    l.a_nominal = MatrixXd::Zero(2, 2);
    l.b_nominal = MatrixXd::Zero(2, 1);
    l.a_bound = (MatrixXd(2, 2) << 1, 2, 3, 4).finished();
    l.b_bound = MatrixXd::Zero(2, 1);
    auto sys = lin::to_norm_bounded(l);

    MatrixXd omega = (MatrixXd(2, 2) << 0.5, -1, 0, 1).finished();
    VectorXd delta = lin::delta_from_intervals(omega, MatrixXd::Zero(2, 1));
    auto real = lin::sample_realization(sys, delta);
    MatrixXd expected = (MatrixXd(2, 2) << 0.5, -2, 0, 4).finished();
    CHECK(real.a.isApprox(expected, 1e-15));
}

TEST_CASE("diagonal-factor identity reconstructs elementwise products exactly") {
    // H Diag(vec) E equals U o V for arbitrary magnitudes, not just |v| <= 1
    auto check = [](const MatrixXd& u, const MatrixXd& v) {
        lin::UncertainLinearization l;
        const Eigen::Index n = u.rows();
        l.a_nominal = MatrixXd::Zero(n, n);
        l.b_nominal = MatrixXd::Zero(n, 1);
        l.a_bound = u;
        l.b_bound = MatrixXd::Zero(n, 1);
        auto sys = lin::to_norm_bounded(l);
        VectorXd delta = lin::delta_from_intervals(v, MatrixXd::Zero(n, 1));
        MatrixXd recon = sys.h * delta.asDiagonal() * sys.e;
        CHECK((recon - u.cwiseProduct(v)).cwiseAbs().maxCoeff() <= 1e-14 * u.norm() * v.norm());
    };
    check((MatrixXd(2, 2) << 1, 2, 3, 4).finished(),
          (MatrixXd(2, 2) << 5, 6, 7, 8).finished());
    Rng rng(29);
    check(oracles::random_matrix(rng, 3, 3, 2.0), oracles::random_matrix(rng, 3, 3, 5.0));
}

TEST_CASE("reparameterization is exact for random interval matrices") {
    Rng rng(7);
    for (int rep = 0; rep < 50; ++rep) {
        Eigen::Index n = 1 + static_cast<Eigen::Index>(rng.next_u64() % 4);
        Eigen::Index m = 1 + static_cast<Eigen::Index>(rng.next_u64() % 2);
        auto l = random_linearization(rng, n, m);
        auto sys = lin::to_norm_bounded(l);

        MatrixXd omega = random_interval(rng, n, n);
        MatrixXd psi = random_interval(rng, n, m);
        VectorXd delta = lin::delta_from_intervals(omega, psi);
        auto real = lin::sample_realization(sys, delta);

        MatrixXd expected_a = l.a_nominal + l.a_bound.cwiseProduct(omega);
        MatrixXd expected_b = l.b_nominal + l.b_bound.cwiseProduct(psi);
        CHECK((real.a - expected_a).cwiseAbs().maxCoeff() <= 1e-12);
        CHECK((real.b - expected_b).cwiseAbs().maxCoeff() <= 1e-12);
    }
}

TEST_CASE("realizations honor delta contracts") {
    Rng rng(9);
    auto l = random_linearization(rng, 3, 2);
    auto sys = lin::to_norm_bounded(l);
    const Eigen::Index p = sys.uncertainty_dim();

    auto nominal = lin::sample_realization(sys, VectorXd::Zero(p));
    CHECK(nominal.a.isApprox(l.a_nominal, 1e-15));
    CHECK(nominal.b.isApprox(l.b_nominal, 1e-15));

    auto extreme = lin::sample_realization(sys, VectorXd::Ones(p));
    CHECK(extreme.a.isApprox(l.a_nominal + l.a_bound, 1e-13));
    CHECK(extreme.b.isApprox(l.b_nominal + l.b_bound, 1e-13));

    for (int rep = 0; rep < 20; ++rep) {
        VectorXd delta(p);
        for (Eigen::Index i = 0; i < p; ++i) delta(i) = rng.uniform(-1.0, 1.0);
        auto real = lin::sample_realization(sys, delta);
        CHECK(((real.a - l.a_nominal).cwiseAbs().array() <= l.a_bound.array() + 1e-12).all());
        CHECK(((real.b - l.b_nominal).cwiseAbs().array() <= l.b_bound.array() + 1e-12).all());
    }

    CHECK_THROWS_AS(lin::sample_realization(sys, VectorXd::Constant(p, 1.5)), DeltaOutOfRange);
}

TEST_CASE("bounds shrink as data accumulates") {
    Rng rng(13);
    gp::SeKernel k;
    k.output_variance = 1.0;
    k.lengthscales = VectorXd::Ones(3);

    MatrixXd all_inputs = oracles::random_matrix(rng, 20, 3);
    VectorXd all_targets = oracles::random_matrix(rng, 20, 1).col(0);

    MatrixXd known = MatrixXd::Zero(2, 3);
    VectorXd z_e = VectorXd::Zero(3);

    MatrixXd prev_bound;
    for (Eigen::Index count : {5, 10, 20}) {
        auto inputs = std::make_shared<MatrixXd>(all_inputs.topRows(count));
        VectorXd targets = all_targets.head(count);
        std::vector<gp::GpModel> models;
        models.push_back(gp::GpModel::condition(k, 1e-2, inputs, targets));
        models.push_back(gp::GpModel::condition(k, 1e-2, inputs, targets));
        auto l = lin::linearize_at(models, known, z_e, 0.95);
        MatrixXd bound(2, 3);
        bound << l.a_bound, l.b_bound;
        if (prev_bound.size() > 0)
            CHECK(((bound.array() - prev_bound.array()) <= 1e-9).all());
        prev_bound = bound;
    }
}
