#pragma once

#include <Eigen/Cholesky>
#include <Eigen/Core>
#include <Eigen/Eigenvalues>

#include <cmath>
#include <limits>
#include <string>
#include <utility>

#include "sdc/errors.hpp"

namespace sdc::num {

using Eigen::MatrixXd;
using Eigen::VectorXd;

inline bool all_finite(const MatrixXd& m) { return m.allFinite(); }

// ============================================================================
// Symmetric matrices
// ============================================================================
// Value type that keeps A(i,j) == A(j,i) exact by construction: writes always
// mirror, and the from_full factory averages the two triangles once.

class SymMatrix {
  public:
    SymMatrix() = default;

    explicit SymMatrix(Eigen::Index dim) : m_(MatrixXd::Zero(dim, dim)) {}

    static SymMatrix identity(Eigen::Index dim) {
        SymMatrix s(dim);
        s.m_ = MatrixXd::Identity(dim, dim);
        return s;
    }

    static SymMatrix from_full(const MatrixXd& a) {
        if (a.rows() != a.cols())
            throw DimensionMismatch("SymMatrix::from_full: matrix not square");
        SymMatrix s;
        s.m_ = 0.5 * (a + a.transpose());
        return s;
    }

    Eigen::Index dim() const { return m_.rows(); }

    double operator()(Eigen::Index i, Eigen::Index j) const { return m_(i, j); }

    // mirrored write
    void set(Eigen::Index i, Eigen::Index j, double v) {
        m_(i, j) = v;
        m_(j, i) = v;
    }

    void add(Eigen::Index i, Eigen::Index j, double v) {
        m_(i, j) += v;
        if (i != j) m_(j, i) += v;
    }

    const MatrixXd& mat() const { return m_; }

    double trace() const { return m_.trace(); }
    double frobenius_norm() const { return m_.norm(); }

  private:
    MatrixXd m_;
};

// ============================================================================
// Cholesky with escalating jitter
// ============================================================================
// Gram matrices built from nearly noise-free data sit close to singular, so a
// single LLT attempt is not enough. Jitter starts at zero and escalates
// 1e-12 * trace/dim -> x10 -> ... -> 1e-6 * trace/dim before giving up.

struct CholeskyFactor {
    Eigen::Index dim = 0;
    MatrixXd lower;           // L with A + jitter*I = L*L^T
    double jitter_applied = 0.0;

    template <typename Derived>
    typename Derived::PlainObject solve(const Eigen::MatrixBase<Derived>& rhs) const {
        typename Derived::PlainObject y = lower.triangularView<Eigen::Lower>().solve(rhs.derived());
        return lower.transpose().triangularView<Eigen::Upper>().solve(y);
    }

    double log_det() const {
        return 2.0 * lower.diagonal().array().log().sum();
    }
};

inline CholeskyFactor cholesky_factor(const SymMatrix& a) {
    const Eigen::Index n = a.dim();
    if (n == 0) throw DimensionMismatch("cholesky_factor: empty matrix");
    const double unit = std::abs(a.trace()) / static_cast<double>(n);
    const double base = (unit > 0.0) ? unit : 1.0;

    double jitter = 0.0;
    for (int attempt = 0; attempt < 9; ++attempt) {
        MatrixXd shifted = a.mat();
        if (jitter > 0.0) shifted.diagonal().array() += jitter;
        Eigen::LLT<MatrixXd> llt(shifted);
        if (llt.info() == Eigen::Success && llt.matrixL().toDenseMatrix().diagonal().minCoeff() > 0.0) {
            CholeskyFactor f;
            f.dim = n;
            f.lower = llt.matrixL();
            f.jitter_applied = jitter;
            return f;
        }
        jitter = (jitter == 0.0) ? 1e-12 * base : jitter * 10.0;
        if (jitter > 1e-6 * base * 1.0000001) break;
    }
    throw NotPositiveDefinite("cholesky_factor: not positive definite after maximum jitter escalation");
}

struct CholeskySolve {
    MatrixXd x;
    double jitter_applied = 0.0;
};

inline CholeskySolve cholesky_solve(const SymMatrix& a, const MatrixXd& rhs) {
    if (rhs.rows() != a.dim())
        throw DimensionMismatch("cholesky_solve: rhs row count does not match matrix dimension");
    CholeskyFactor f = cholesky_factor(a);
    return CholeskySolve{f.solve(rhs), f.jitter_applied};
}

// ============================================================================
// Symmetric eigendecomposition
// ============================================================================

struct SymEig {
    VectorXd eigenvalues;   // ascending
    MatrixXd eigenvectors;  // columns, orthonormal
};

inline SymEig sym_eig(const SymMatrix& a) {
    if (!all_finite(a.mat()))
        throw DimensionMismatch("sym_eig: non-finite entries");
    Eigen::SelfAdjointEigenSolver<MatrixXd> es(a.mat());
    if (es.info() != Eigen::Success)
        throw NoConvergence("sym_eig: eigensolver did not converge");
    return SymEig{es.eigenvalues(), es.eigenvectors()};
}

inline double max_eigenvalue(const SymMatrix& a) {
    Eigen::SelfAdjointEigenSolver<MatrixXd> es(a.mat(), Eigen::EigenvaluesOnly);
    if (es.info() != Eigen::Success)
        throw NoConvergence("max_eigenvalue: eigensolver did not converge");
    return es.eigenvalues().maxCoeff();
}

inline double min_eigenvalue(const SymMatrix& a) {
    Eigen::SelfAdjointEigenSolver<MatrixXd> es(a.mat(), Eigen::EigenvaluesOnly);
    if (es.info() != Eigen::Success)
        throw NoConvergence("min_eigenvalue: eigensolver did not converge");
    return es.eigenvalues().minCoeff();
}

// ============================================================================
// Regularized incomplete gamma and the chi-squared quantile
// ============================================================================
// P(s, x) via the series for x < s+1 and the Lentz continued fraction for the
// complement otherwise; the quantile is a safeguarded Newton/bisection on the
// CDF. Dependency-free on purpose.

namespace detail {

inline double gamma_p_series(double s, double x) {
    double term = 1.0 / s;
    double sum = term;
    double ap = s;
    for (int k = 0; k < 500; ++k) {
        ap += 1.0;
        term *= x / ap;
        sum += term;
        if (std::abs(term) < std::abs(sum) * 1e-16) break;
    }
    return sum * std::exp(-x + s * std::log(x) - std::lgamma(s));
}

inline double gamma_q_contfrac(double s, double x) {
    const double tiny = 1e-300;
    double b = x + 1.0 - s;
    double c = 1.0 / tiny;
    double d = 1.0 / b;
    double h = d;
    for (int i = 1; i <= 500; ++i) {
        double an = -static_cast<double>(i) * (static_cast<double>(i) - s);
        b += 2.0;
        d = an * d + b;
        if (std::abs(d) < tiny) d = tiny;
        c = b + an / c;
        if (std::abs(c) < tiny) c = tiny;
        d = 1.0 / d;
        double delta = d * c;
        h *= delta;
        if (std::abs(delta - 1.0) < 1e-16) break;
    }
    return h * std::exp(-x + s * std::log(x) - std::lgamma(s));
}

} // namespace detail

// regularized lower incomplete gamma P(s, x), s > 0, x >= 0
inline double regularized_gamma_p(double s, double x) {
    if (s <= 0.0) throw std::invalid_argument("regularized_gamma_p: s must be positive");
    if (x < 0.0) throw std::invalid_argument("regularized_gamma_p: x must be nonnegative");
    if (x == 0.0) return 0.0;
    if (x < s + 1.0) return detail::gamma_p_series(s, x);
    return 1.0 - detail::gamma_q_contfrac(s, x);
}

inline double chi2_cdf(double x, int dof) {
    return regularized_gamma_p(0.5 * dof, 0.5 * x);
}

inline double chi2_pdf(double x, int dof) {
    if (x <= 0.0) return (dof == 2 && x == 0.0) ? 0.5 : 0.0;
    double s = 0.5 * dof;
    return std::exp((s - 1.0) * std::log(x) - 0.5 * x - s * std::log(2.0) - std::lgamma(s));
}

inline double chi2_quantile(double prob, int dof) {
    if (!(prob >= 0.0 && prob < 1.0))
        throw InvalidProbability("chi2_quantile: probability must lie in [0, 1)");
    if (dof < 1) throw std::invalid_argument("chi2_quantile: dof must be positive");
    if (prob == 0.0) return 0.0;

    double lo = 0.0;
    double hi = 10.0 * dof + 100.0;
    // expand the bracket in the (unreachable at double precision) tail case
    while (chi2_cdf(hi, dof) < prob) {
        lo = hi;
        hi *= 2.0;
    }
    double x = 0.5 * (lo + hi);
    for (int it = 0; it < 200; ++it) {
        double f = chi2_cdf(x, dof) - prob;
        if (std::abs(f) < 1e-15 || hi - lo < 1e-13 * (1.0 + hi)) break;
        if (f > 0.0) hi = x; else lo = x;
        double dfdx = chi2_pdf(x, dof);
        double x_newton = x - ((dfdx > 0.0) ? f / dfdx : 0.0);
        if (dfdx > 0.0 && x_newton > lo && x_newton < hi) {
            x = x_newton;
        } else {
            x = 0.5 * (lo + hi);
        }
    }
    return x;
}

} // namespace sdc::num
