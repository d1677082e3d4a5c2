#include "doctest.h"

#include <cmath>
#include <memory>
#include <sstream>

#include "oracles.hpp"
#include "sdc/gp.hpp"
#include "sdc/rng.hpp"

using namespace sdc;
using Eigen::MatrixXd;
using Eigen::VectorXd;

namespace {

gp::SeKernel unit_kernel(Eigen::Index nz) {
    gp::SeKernel k;
    k.output_variance = 1.0;
    k.lengthscales = VectorXd::Ones(nz);
    return k;
}

gp::GpModel random_model(Rng& rng, Eigen::Index n_points, Eigen::Index nz, double noise_var) {
    gp::SeKernel k;
    k.output_variance = 0.5 + rng.uniform();
    k.lengthscales = VectorXd::NullaryExpr(nz, [&](Eigen::Index) { return 0.5 + rng.uniform(); });
    auto inputs = std::make_shared<MatrixXd>(oracles::random_matrix(rng, n_points, nz, 1.5));
    VectorXd targets = oracles::random_matrix(rng, n_points, 1).col(0);
    return gp::GpModel::condition(k, noise_var, inputs, targets);
}

} // namespace

TEST_CASE("se kernel derivatives at coincident points") {
    gp::SeKernel k;
    k.output_variance = 2.5;
    k.lengthscales = (VectorXd(3) << 1.0, 2.0, 0.5).finished();
    VectorXd z = (VectorXd(3) << 0.3, -0.1, 1.2).finished();
    auto d = gp::se_kernel_derivatives(k, z, z);
    CHECK(d.value == doctest::Approx(2.5));
    CHECK(d.grad_z.norm() == 0.0);
    MatrixXd expected = (2.5 * k.lengthscales.array().square().inverse()).matrix().asDiagonal();
    CHECK(d.cross_hessian.isApprox(expected, 1e-14));
}

TEST_CASE("se kernel gradient and cross hessian match finite differences") {
    Rng rng(11);
    gp::SeKernel k;
    k.output_variance = 1.7;
    k.lengthscales = (VectorXd(3) << 0.8, 1.3, 2.1).finished();
    VectorXd z = oracles::random_matrix(rng, 3, 1).col(0);
    VectorXd zp = oracles::random_matrix(rng, 3, 1).col(0);

    auto d = gp::se_kernel_derivatives(k, z, zp);
    auto value_at = [&](const VectorXd& zz) { return k(zz, zp); };
    VectorXd fd_grad = oracles::finite_difference_gradient(value_at, z, 1e-5);
    CHECK((d.grad_z - fd_grad).norm() <= 1e-6 * (1.0 + fd_grad.norm()));

    // columns of the cross hessian: d(grad_z)/d(z'_j)
    for (Eigen::Index j = 0; j < 3; ++j) {
        VectorXd zpp = zp, zpm = zp;
        zpp(j) += 1e-5;
        zpm(j) -= 1e-5;
        VectorXd col_fd = (gp::se_kernel_derivatives(k, z, zpp).grad_z -
                           gp::se_kernel_derivatives(k, z, zpm).grad_z) /
                          (2e-5);
        CHECK((d.cross_hessian.col(j) - col_fd).norm() <= 1e-5 * (1.0 + col_fd.norm()));
    }
}

TEST_CASE("se kernel derivative dimension mismatch") {
    gp::SeKernel k = unit_kernel(2);
    VectorXd z2 = VectorXd::Zero(2), z3 = VectorXd::Zero(3);
    CHECK_THROWS_AS(gp::se_kernel_derivatives(k, z2, z3), DimensionMismatch);
}

TEST_CASE("posterior mean interpolates with vanishing noise") {
    Rng rng(5);
    auto inputs = std::make_shared<MatrixXd>(oracles::random_matrix(rng, 6, 2));
    VectorXd targets = oracles::random_matrix(rng, 6, 1).col(0);
    gp::GpModel m = gp::GpModel::condition(unit_kernel(2), 1e-16, inputs, targets);
    for (Eigen::Index i = 0; i < 6; ++i) {
        auto pred = gp::posterior_predict(m, inputs->row(i).transpose());
        CHECK(std::abs(pred.mean - targets(i)) <= 1e-6);
        CHECK(pred.variance <= 1e-6);
    }
}

TEST_CASE("posterior variance recovers the prior far from data") {
    Rng rng(6);
    auto inputs = std::make_shared<MatrixXd>(oracles::random_matrix(rng, 5, 2));
    VectorXd targets = oracles::random_matrix(rng, 5, 1).col(0);
    gp::GpModel m = gp::GpModel::condition(unit_kernel(2), 1e-4, inputs, targets);
    VectorXd far = (VectorXd(2) << 100.0, -100.0).finished();
    auto pred = gp::posterior_predict(m, far);
    CHECK(std::abs(pred.variance - 1.0) <= 1e-8);
    CHECK(std::abs(pred.mean) <= 1e-8);
}

TEST_CASE("single-point posterior mean has the closed form value") {
    auto inputs = std::make_shared<MatrixXd>(MatrixXd::Zero(1, 1));
    VectorXd target = VectorXd::Ones(1);
    gp::GpModel m = gp::GpModel::condition(unit_kernel(1), 1.0, inputs, target);
    auto pred = gp::posterior_predict(m, VectorXd::Zero(1));
    CHECK(pred.mean == doctest::Approx(0.5).epsilon(1e-12));
}

TEST_CASE("posterior derivative of the prior") {
    gp::SeKernel k;
    k.output_variance = 2.0;
    k.lengthscales = (VectorXd(2) << 0.5, 2.0).finished();
    gp::GpModel m = gp::GpModel::prior(k, 1e-4);
    auto d = gp::posterior_derivative(m, VectorXd::Zero(2));
    CHECK(d.mean.norm() == 0.0);
    CHECK(d.covariance(0, 0) == doctest::Approx(2.0 / 0.25));
    CHECK(d.covariance(1, 1) == doctest::Approx(2.0 / 4.0));
    CHECK(d.covariance(0, 1) == doctest::Approx(0.0));
}

TEST_CASE("posterior derivative mean matches finite differences of the posterior mean") {
    Rng rng(17);
    for (int rep = 0; rep < 20; ++rep) {
        Eigen::Index nz = 1 + static_cast<Eigen::Index>(rng.next_u64() % 4);
        Eigen::Index n = 2 + static_cast<Eigen::Index>(rng.next_u64() % 49);
        gp::GpModel m = random_model(rng, n, nz, 1e-3);
        VectorXd z = oracles::random_matrix(rng, nz, 1).col(0);

        auto d = gp::posterior_derivative(m, z);
        auto mean_at = [&](const VectorXd& zz) { return gp::posterior_predict(m, zz).mean; };
        VectorXd fd = oracles::finite_difference_gradient(mean_at, z, 1e-4);
        CHECK((d.mean - fd).norm() <= 1e-5 * (1.0 + fd.norm()));
    }
}

TEST_CASE("posterior derivative covariance is PSD and dominated by the prior") {
    Rng rng(23);
    for (int rep = 0; rep < 20; ++rep) {
        Eigen::Index nz = 1 + static_cast<Eigen::Index>(rng.next_u64() % 4);
        Eigen::Index n = 2 + static_cast<Eigen::Index>(rng.next_u64() % 40);
        gp::GpModel m = random_model(rng, n, nz, 1e-3);
        VectorXd z = oracles::random_matrix(rng, nz, 1).col(0);
        auto d = gp::posterior_derivative(m, z);

        double lmin = num::min_eigenvalue(d.covariance);
        CHECK(lmin >= -1e-9 * (1.0 + d.covariance.trace()));

        MatrixXd prior = (m.kernel().output_variance *
                          m.kernel().lengthscales.array().square().inverse())
                             .matrix()
                             .asDiagonal();
        double gap = num::min_eigenvalue(num::SymMatrix::from_full(prior - d.covariance.mat()));
        CHECK(gap >= -1e-9);
    }
}

TEST_CASE("appending a training point never increases predictive variance") {
    Rng rng(31);
    gp::SeKernel k = unit_kernel(2);
    auto inputs = std::make_shared<MatrixXd>(oracles::random_matrix(rng, 10, 2));
    VectorXd targets = oracles::random_matrix(rng, 10, 1).col(0);
    gp::GpModel before = gp::GpModel::condition(k, 1e-2, inputs, targets);

    MatrixXd grown(11, 2);
    grown.topRows(10) = *inputs;
    grown.row(10) = oracles::random_matrix(rng, 1, 2);
    VectorXd grown_targets(11);
    grown_targets.head(10) = targets;
    grown_targets(10) = rng.normal();
    gp::GpModel after =
        gp::GpModel::condition(k, 1e-2, std::make_shared<MatrixXd>(grown), grown_targets);

    for (int rep = 0; rep < 10; ++rep) {
        VectorXd z = oracles::random_matrix(rng, 2, 1).col(0);
        CHECK(gp::posterior_predict(after, z).variance <=
              gp::posterior_predict(before, z).variance + 1e-9);
        auto da = gp::posterior_derivative(after, z);
        auto db = gp::posterior_derivative(before, z);
        for (Eigen::Index j = 0; j < 2; ++j)
            CHECK(da.covariance(j, j) <= db.covariance(j, j) + 1e-9);
    }
}

TEST_CASE("posterior variance stays within [0, output variance]") {
    Rng rng(37);
    gp::GpModel m = random_model(rng, 25, 3, 1e-2);
    for (int rep = 0; rep < 50; ++rep) {
        VectorXd z = oracles::random_matrix(rng, 3, 1).col(0) * 3.0;
        auto pred = gp::posterior_predict(m, z);
        CHECK(pred.variance >= 0.0);
        CHECK(pred.variance <= m.kernel().output_variance + 1e-12);
    }
}

TEST_CASE("fit on the zero function drives the signal variance to its floor") {
    MatrixXd x(12, 1);
    for (int i = 0; i < 12; ++i) x(i, 0) = 0.5 * i;
    gp::Dataset data;
    data.inputs = x;
    data.targets = MatrixXd::Zero(12, 1);
    data.noise_stddev = VectorXd::Constant(1, 0.1);

    gp::FitConfig cfg;
    cfg.multistarts = 2;
    cfg.fixed_noise_stddev = 0.1;
    cfg.seed = 9;
    gp::GpModel m = gp::fit_hyperparameters(data, 0, cfg);
    CHECK(m.kernel().output_variance <= 10.0 * gp::kMinOutputVariance);
    auto pred = gp::posterior_predict(m, VectorXd::Constant(1, 2.2));
    CHECK(std::abs(pred.mean) <= 3.0 * std::sqrt(pred.variance) + 1e-9);
}

TEST_CASE("fit recovers a plausible lengthscale for a sine wave") {
    Rng rng(41);
    MatrixXd x(30, 1);
    MatrixXd y(30, 1);
    for (int i = 0; i < 30; ++i) {
        x(i, 0) = 2.0 * M_PI * i / 29.0;
        y(i, 0) = std::sin(x(i, 0)) + 0.01 * rng.normal();
    }
    gp::Dataset data{x, y, VectorXd::Constant(1, 0.01)};

    gp::FitConfig cfg;
    cfg.multistarts = 3;
    cfg.seed = 3;
    gp::GpModel m = gp::fit_hyperparameters(data, 0, cfg);
    CHECK(m.kernel().lengthscales(0) >= 0.5);
    CHECK(m.kernel().lengthscales(0) <= 3.0);

    double sq_err = 0.0;
    for (int i = 0; i < 50; ++i) {
        double z = 0.1 + (2.0 * M_PI - 0.2) * i / 49.0;
        double mean = gp::posterior_predict(m, VectorXd::Constant(1, z)).mean;
        sq_err += (mean - std::sin(z)) * (mean - std::sin(z));
    }
    CHECK(std::sqrt(sq_err / 50.0) <= 0.05);
}

TEST_CASE("analytic likelihood gradient matches finite differences") {
    Rng rng(43);
    MatrixXd x = oracles::random_matrix(rng, 12, 2);
    VectorXd y = oracles::random_matrix(rng, 12, 1).col(0);

    gp::detail::LogParams p;
    p.fit_noise = true;
    p.nz = 2;
    p.v = (VectorXd(4) << 0.2, -0.1, 0.4, -2.0).finished();

    auto eval = gp::detail::eval_likelihood(x, y, p, 0.0, true);
    REQUIRE(eval.ok);
    auto value_at = [&](const VectorXd& v) {
        gp::detail::LogParams q = p;
        q.v = v;
        return gp::detail::eval_likelihood(x, y, q, 0.0, false).value;
    };
    VectorXd fd = oracles::finite_difference_gradient(value_at, p.v, 1e-6);
    CHECK((eval.gradient - fd).norm() <= 1e-5 * (1.0 + fd.norm()));
}

TEST_CASE("constant targets with free noise are rejected") {
    gp::Dataset data;
    data.inputs = MatrixXd::Random(5, 1);
    data.targets = MatrixXd::Constant(5, 1, 3.0);
    data.noise_stddev = VectorXd::Constant(1, 0.1);
    gp::FitConfig cfg;
    cfg.multistarts = 1;
    CHECK_THROWS_AS(gp::fit_hyperparameters(data, 0, cfg), DegenerateData);
}

TEST_CASE("dataset CSV round trip") {
    Rng rng(51);
    gp::Dataset data;
    data.inputs = oracles::random_matrix(rng, 7, 3);
    data.targets = oracles::random_matrix(rng, 7, 2);
    data.noise_stddev = (VectorXd(2) << 0.1, 0.2).finished();

    std::stringstream ss;
    gp::write_dataset_csv(data, ss);
    gp::Dataset back = gp::read_dataset_csv(ss, data.noise_stddev);
    CHECK(back.inputs.isApprox(data.inputs, 1e-15));
    CHECK(back.targets.isApprox(data.targets, 1e-15));

    std::stringstream bad("a,b\n1,2\n");
    CHECK_THROWS_AS(gp::read_dataset_csv(bad, data.noise_stddev), SchemaMismatch);
}
