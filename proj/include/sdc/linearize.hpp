#pragma once

#include <Eigen/Core>

#include <cmath>
#include <vector>

#include "sdc/errors.hpp"
#include "sdc/gp.hpp"
#include "sdc/numerics.hpp"

namespace sdc::lin {

using Eigen::MatrixXd;
using Eigen::VectorXd;

// ============================================================================
// Probabilistic linearization around an operating point
// ============================================================================
// Nominal Jacobian = known-model Jacobian + stacked GP derivative means; the
// elementwise bound is gamma * sqrt(diag Sigma'_i) per row, where
// gamma = sqrt(chi2 quantile at the per-row confidence level). Each row holds
// with probability p, so the joint level is at least p^n.

struct UncertainLinearization {
    MatrixXd a_nominal;  // n x n
    MatrixXd b_nominal;  // n x m
    MatrixXd a_bound;    // n x n, entrywise >= 0
    MatrixXd b_bound;    // n x m, entrywise >= 0
    double prob_per_row = 0.0;
    double joint_confidence = 0.0;  // prob_per_row^n
    double gamma = 0.0;             // sqrt(chi2_{n_z}(p))
    VectorXd operating_point;       // z_e = (x_e, u_e)

    Eigen::Index state_dim() const { return a_nominal.rows(); }
    Eigen::Index input_dim() const { return b_nominal.cols(); }
};

// diagonal variance entries below this produce exact zero bound entries,
// keeping the sparsity of E and F meaningful
inline constexpr double kZeroVarianceFloor = 1e-14;

inline UncertainLinearization linearize_at(const std::vector<gp::GpModel>& models,
                                           const MatrixXd& known_jacobian, const VectorXd& z_e,
                                           double prob_per_row) {
    if (!(prob_per_row >= 0.0 && prob_per_row < 1.0))
        throw InvalidProbability("linearize_at: per-row probability must lie in [0, 1)");
    const Eigen::Index n = static_cast<Eigen::Index>(models.size());
    if (n == 0) throw std::invalid_argument("linearize_at: no models");
    const Eigen::Index nz = models.front().input_dim();
    if (known_jacobian.rows() != n || known_jacobian.cols() != nz)
        throw DimensionMismatch("linearize_at: known Jacobian must be n x n_z");
    if (z_e.size() != nz)
        throw DimensionMismatch("linearize_at: operating point must have size n_z");
    const Eigen::Index m = nz - n;
    if (m < 1) throw DimensionMismatch("linearize_at: n_z must exceed the state dimension");

    const double gamma =
        std::sqrt(num::chi2_quantile(prob_per_row, static_cast<int>(nz)));

    MatrixXd nominal = known_jacobian;
    MatrixXd bound = MatrixXd::Zero(n, nz);
    for (Eigen::Index i = 0; i < n; ++i) {
        gp::DerivativePrediction pred = gp::posterior_derivative(models[i], z_e);
        nominal.row(i) += pred.mean.transpose();
        for (Eigen::Index j = 0; j < nz; ++j) {
            double var = pred.covariance(j, j);
            bound(i, j) = (var < kZeroVarianceFloor) ? 0.0 : gamma * std::sqrt(var);
        }
    }

    UncertainLinearization lin;
    lin.a_nominal = nominal.leftCols(n);
    lin.b_nominal = nominal.rightCols(m);
    lin.a_bound = bound.leftCols(n);
    lin.b_bound = bound.rightCols(m);
    lin.prob_per_row = prob_per_row;
    lin.joint_confidence = std::pow(prob_per_row, static_cast<double>(n));
    lin.gamma = gamma;
    lin.operating_point = z_e;
    return lin;
}

// ============================================================================
// Norm-bounded reparameterization
// ============================================================================
// Abar o Omega = H Delta E and Bbar o Psi = H Delta F with diagonal Delta,
// |delta_i| <= 1. Delta indices follow row-major traversal of Abar and then
// Bbar: delta[i*n + j] pairs with Abar(i,j), delta[n^2 + i*m + j] with
// Bbar(i,j).

struct NormBoundedSystem {
    MatrixXd a_nominal;  // n x n
    MatrixXd b_nominal;  // n x m
    MatrixXd h;          // n x p_u, fixed 0/1 pattern
    MatrixXd e;          // p_u x n
    MatrixXd f;          // p_u x m

    Eigen::Index state_dim() const { return a_nominal.rows(); }
    Eigen::Index input_dim() const { return b_nominal.cols(); }
    Eigen::Index uncertainty_dim() const { return h.cols(); }
};

inline NormBoundedSystem to_norm_bounded(const UncertainLinearization& lin) {
    const Eigen::Index n = lin.state_dim();
    const Eigen::Index m = lin.input_dim();
    const Eigen::Index p = n * n + n * m;

    NormBoundedSystem sys;
    sys.a_nominal = lin.a_nominal;
    sys.b_nominal = lin.b_nominal;

    sys.h = MatrixXd::Zero(n, p);
    for (Eigen::Index i = 0; i < n; ++i) {
        for (Eigen::Index j = 0; j < n; ++j) sys.h(i, i * n + j) = 1.0;
        for (Eigen::Index j = 0; j < m; ++j) sys.h(i, n * n + i * m + j) = 1.0;
    }

    sys.e = MatrixXd::Zero(p, n);
    for (Eigen::Index i = 0; i < n; ++i)
        for (Eigen::Index j = 0; j < n; ++j) sys.e(i * n + j, j) = lin.a_bound(i, j);

    sys.f = MatrixXd::Zero(p, m);
    for (Eigen::Index i = 0; i < n; ++i)
        for (Eigen::Index j = 0; j < m; ++j) sys.f(n * n + i * m + j, j) = lin.b_bound(i, j);

    return sys;
}

// Delta vector realizing given interval matrices Omega, Psi
inline VectorXd delta_from_intervals(const MatrixXd& omega, const MatrixXd& psi) {
    const Eigen::Index n = omega.rows();
    const Eigen::Index m = psi.cols();
    if (omega.cols() != n || psi.rows() != n)
        throw DimensionMismatch("delta_from_intervals: Omega must be n x n, Psi n x m");
    VectorXd delta(n * n + n * m);
    for (Eigen::Index i = 0; i < n; ++i)
        for (Eigen::Index j = 0; j < n; ++j) delta(i * n + j) = omega(i, j);
    for (Eigen::Index i = 0; i < n; ++i)
        for (Eigen::Index j = 0; j < m; ++j) delta(n * n + i * m + j) = psi(i, j);
    return delta;
}

struct Realization {
    MatrixXd a;
    MatrixXd b;
};

inline Realization sample_realization(const NormBoundedSystem& sys, const VectorXd& delta) {
    if (delta.size() != sys.uncertainty_dim())
        throw DimensionMismatch("sample_realization: delta size does not match p_u");
    if ((delta.array().abs() > 1.0 + 1e-12).any())
        throw DeltaOutOfRange("sample_realization: |delta_i| <= 1 required");
    MatrixXd hd = sys.h * delta.asDiagonal();
    return Realization{sys.a_nominal + hd * sys.e, sys.b_nominal + hd * sys.f};
}

} // namespace sdc::lin
