#pragma once

// Test-only oracles, independent of the implementation paths they check.

#include <Eigen/Core>

#include <cmath>
#include <functional>

#include "sdc/numerics.hpp"
#include "sdc/rng.hpp"

namespace oracles {

using Eigen::MatrixXd;
using Eigen::VectorXd;

// adaptive Simpson quadrature
inline double simpson(const std::function<double(double)>& f, double a, double b, double fa,
                      double fb, double fm, double eps, int depth) {
    double m = 0.5 * (a + b);
    double lm = 0.5 * (a + m), rm = 0.5 * (m + b);
    double flm = f(lm), frm = f(rm);
    double whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
    double left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
    double right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
    if (depth <= 0 || std::abs(left + right - whole) < 15.0 * eps)
        return left + right + (left + right - whole) / 15.0;
    return simpson(f, a, m, fa, fm, flm, eps / 2.0, depth - 1) +
           simpson(f, m, b, fm, fb, frm, eps / 2.0, depth - 1);
}

inline double integrate(const std::function<double(double)>& f, double a, double b,
                        double eps = 1e-12) {
    double m = 0.5 * (a + b);
    return simpson(f, a, b, f(a), f(b), f(m), eps, 48);
}

// chi-squared CDF by direct quadrature of the density
inline double chi2_cdf_quadrature(double x, int dof) {
    if (x <= 0.0) return 0.0;
    auto pdf = [dof](double t) { return sdc::num::chi2_pdf(t, dof); };
    return integrate(pdf, 0.0, x);
}

// chi-squared quantile by bisection against the quadrature CDF
inline double chi2_quantile_bisect(double prob, int dof) {
    double lo = 0.0, hi = 10.0 * dof + 100.0;
    for (int i = 0; i < 200; ++i) {
        double mid = 0.5 * (lo + hi);
        if (chi2_cdf_quadrature(mid, dof) < prob) lo = mid;
        else hi = mid;
        if (hi - lo < 1e-12 * (1.0 + hi)) break;
    }
    return 0.5 * (lo + hi);
}

// determinant by cofactor expansion, usable up to dim ~6
inline double det_cofactor(const MatrixXd& a) {
    const Eigen::Index n = a.rows();
    if (n == 1) return a(0, 0);
    double det = 0.0;
    for (Eigen::Index j = 0; j < n; ++j) {
        MatrixXd minor(n - 1, n - 1);
        for (Eigen::Index r = 1; r < n; ++r) {
            Eigen::Index cc = 0;
            for (Eigen::Index c = 0; c < n; ++c) {
                if (c == j) continue;
                minor(r - 1, cc++) = a(r, c);
            }
        }
        det += ((j % 2 == 0) ? 1.0 : -1.0) * a(0, j) * det_cofactor(minor);
    }
    return det;
}

inline MatrixXd random_matrix(sdc::Rng& rng, Eigen::Index rows, Eigen::Index cols,
                              double scale = 1.0) {
    MatrixXd m(rows, cols);
    for (Eigen::Index i = 0; i < rows; ++i)
        for (Eigen::Index j = 0; j < cols; ++j) m(i, j) = scale * rng.normal();
    return m;
}

inline MatrixXd random_spd(sdc::Rng& rng, Eigen::Index n) {
    MatrixXd g = random_matrix(rng, n, n);
    return g.transpose() * g + MatrixXd::Identity(n, n);
}

// central finite difference of a scalar function of a vector
inline VectorXd finite_difference_gradient(const std::function<double(const VectorXd&)>& f,
                                           const VectorXd& x, double step) {
    VectorXd g(x.size());
    for (Eigen::Index i = 0; i < x.size(); ++i) {
        VectorXd xp = x, xm = x;
        xp(i) += step;
        xm(i) -= step;
        g(i) = (f(xp) - f(xm)) / (2.0 * step);
    }
    return g;
}

} // namespace oracles
