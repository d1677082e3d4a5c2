#pragma once

#include <Eigen/Core>

#include <algorithm>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "sdc/errors.hpp"
#include "sdc/linearize.hpp"
#include "sdc/numerics.hpp"

namespace sdc::lmi {

using Eigen::MatrixXd;
using Eigen::VectorXd;
using num::SymMatrix;

// ============================================================================
// Decision-variable layout
// ============================================================================
// Flat scalar indexing of the synthesis variables, in a fixed slot order:
//   Q1 (sym) | Q2 | Q3 (full) | Z1 (sym) | Z2 (full) | Z3 (sym) | R (sym)
//   | Y (m x n, row-major) | eta (optional scalar)
// Symmetric slots pack the lower triangle row-major.

class DecisionLayout {
  public:
    DecisionLayout() = default;
    DecisionLayout(Eigen::Index n, Eigen::Index m, bool with_eta = false)
        : n_(n), m_(m), with_eta_(with_eta) {
        const Eigen::Index sym = n * (n + 1) / 2;
        const Eigen::Index full = n * n;
        q1_ = 0;
        q2_ = q1_ + sym;
        q3_ = q2_ + full;
        z1_ = q3_ + full;
        z2_ = z1_ + sym;
        z3_ = z2_ + full;
        r_ = z3_ + sym;
        y_ = r_ + sym;
        eta_ = y_ + m * n;
        total_ = eta_ + (with_eta_ ? 1 : 0);
    }

    Eigen::Index n() const { return n_; }
    Eigen::Index m() const { return m_; }
    bool has_eta() const { return with_eta_; }
    Eigen::Index variable_count() const { return total_; }

    Eigen::Index q1(Eigen::Index i, Eigen::Index j) const { return q1_ + sym_index(i, j); }
    Eigen::Index q2(Eigen::Index i, Eigen::Index j) const { return q2_ + i * n_ + j; }
    Eigen::Index q3(Eigen::Index i, Eigen::Index j) const { return q3_ + i * n_ + j; }
    Eigen::Index z1(Eigen::Index i, Eigen::Index j) const { return z1_ + sym_index(i, j); }
    Eigen::Index z2(Eigen::Index i, Eigen::Index j) const { return z2_ + i * n_ + j; }
    Eigen::Index z3(Eigen::Index i, Eigen::Index j) const { return z3_ + sym_index(i, j); }
    Eigen::Index r(Eigen::Index i, Eigen::Index j) const { return r_ + sym_index(i, j); }
    Eigen::Index y(Eigen::Index i, Eigen::Index j) const { return y_ + i * n_ + j; }
    Eigen::Index eta() const {
        if (!with_eta_) throw std::logic_error("DecisionLayout: eta slot not present");
        return eta_;
    }

    MatrixXd q1_matrix(const VectorXd& v) const { return sym_matrix(v, q1_); }
    MatrixXd q2_matrix(const VectorXd& v) const { return full_matrix(v, q2_); }
    MatrixXd q3_matrix(const VectorXd& v) const { return full_matrix(v, q3_); }
    MatrixXd z1_matrix(const VectorXd& v) const { return sym_matrix(v, z1_); }
    MatrixXd z2_matrix(const VectorXd& v) const { return full_matrix(v, z2_); }
    MatrixXd z3_matrix(const VectorXd& v) const { return sym_matrix(v, z3_); }
    MatrixXd r_matrix(const VectorXd& v) const { return sym_matrix(v, r_); }
    MatrixXd y_matrix(const VectorXd& v) const {
        MatrixXd out(m_, n_);
        for (Eigen::Index i = 0; i < m_; ++i)
            for (Eigen::Index j = 0; j < n_; ++j) out(i, j) = v(y(i, j));
        return out;
    }

    void set_sym(VectorXd& v, Eigen::Index offset_slot, const MatrixXd& mat) const {
        for (Eigen::Index i = 0; i < n_; ++i)
            for (Eigen::Index j = 0; j <= i; ++j) v(offset_slot + sym_index(i, j)) = mat(i, j);
    }
    Eigen::Index q1_offset() const { return q1_; }
    Eigen::Index r_offset() const { return r_; }

  private:
    Eigen::Index sym_index(Eigen::Index i, Eigen::Index j) const {
        if (i < j) std::swap(i, j);
        return i * (i + 1) / 2 + j;
    }
    MatrixXd sym_matrix(const VectorXd& v, Eigen::Index offset) const {
        MatrixXd out(n_, n_);
        for (Eigen::Index i = 0; i < n_; ++i)
            for (Eigen::Index j = 0; j <= i; ++j) {
                double val = v(offset + sym_index(i, j));
                out(i, j) = val;
                out(j, i) = val;
            }
        return out;
    }
    MatrixXd full_matrix(const VectorXd& v, Eigen::Index offset) const {
        MatrixXd out(n_, n_);
        for (Eigen::Index i = 0; i < n_; ++i)
            for (Eigen::Index j = 0; j < n_; ++j) out(i, j) = v(offset + i * n_ + j);
        return out;
    }

    Eigen::Index n_ = 0, m_ = 0;
    bool with_eta_ = false;
    Eigen::Index q1_ = 0, q2_ = 0, q3_ = 0, z1_ = 0, z2_ = 0, z3_ = 0, r_ = 0, y_ = 0, eta_ = 0;
    Eigen::Index total_ = 0;
};

// ============================================================================
// Affine matrix constraints
// ============================================================================

enum class LmiSense { StrictNegative, PositiveSemidefinite };

// one canonical entry (row >= col); contributes value at (row, col) and,
// off the diagonal, at (col, row) as well
struct SymTriplet {
    int row = 0;
    int col = 0;
    double value = 0.0;
};

class AffineLmi {
  public:
    AffineLmi() = default;
    AffineLmi(Eigen::Index size, LmiSense sense, bool strict = true)
        : size_(size), sense_(sense), strict_(strict), constant_(size) {}

    Eigen::Index size() const { return size_; }
    LmiSense sense() const { return sense_; }
    bool strict() const { return strict_; }
    double scale() const { return scale_; }
    const SymMatrix& constant() const { return constant_; }
    const std::map<Eigen::Index, std::vector<SymTriplet>>& coefficients() const {
        return coeffs_;
    }

    void add_const(Eigen::Index r, Eigen::Index c, double v) { constant_.add(r, c, v); }

    void add_coeff(Eigen::Index var, Eigen::Index r, Eigen::Index c, double v) {
        if (v == 0.0) return;
        if (r < c) std::swap(r, c);
        auto& list = coeffs_[var];
        for (auto& t : list) {
            if (t.row == r && t.col == c) {
                t.value += v;
                return;
            }
        }
        list.push_back(SymTriplet{static_cast<int>(r), static_cast<int>(c), v});
    }

    // rescale so the constant block has unit Frobenius norm; zero-constant
    // constraints stay as built
    void normalize() {
        double norm = constant_.frobenius_norm();
        if (norm <= 0.0) {
            scale_ = 1.0;
            return;
        }
        scale_ = norm;
        SymMatrix scaled(size_);
        for (Eigen::Index i = 0; i < size_; ++i)
            for (Eigen::Index j = 0; j <= i; ++j) scaled.set(i, j, constant_(i, j) / norm);
        constant_ = scaled;
        for (auto& [var, list] : coeffs_)
            for (auto& t : list) t.value /= norm;
    }

    // strictness margin; zero for the non-strict variant
    double strictness_margin() const {
        if (!strict_) return 0.0;
        return 1e-7 * (1.0 + constant_.frobenius_norm());
    }

    SymMatrix evaluate(const VectorXd& values) const {
        SymMatrix out = constant_;
        for (const auto& [var, list] : coeffs_) {
            double v = values(var);
            if (v == 0.0) continue;
            for (const auto& t : list) out.add(t.row, t.col, t.value * v);
        }
        return out;
    }

    SymMatrix coefficient_block(Eigen::Index var) const {
        SymMatrix out(size_);
        auto it = coeffs_.find(var);
        if (it != coeffs_.end())
            for (const auto& t : it->second) out.add(t.row, t.col, t.value);
        return out;
    }

    // extreme eigenvalue in the sense direction: lambda_max for strict-negative
    // constraints (feasible when well below zero), lambda_min for PSD ones
    double margin(const VectorXd& values) const {
        SymMatrix m = evaluate(values);
        return sense_ == LmiSense::StrictNegative ? num::max_eigenvalue(m)
                                                  : num::min_eigenvalue(m);
    }

  private:
    Eigen::Index size_ = 0;
    LmiSense sense_ = LmiSense::PositiveSemidefinite;
    bool strict_ = true;
    SymMatrix constant_;
    double scale_ = 1.0;
    std::map<Eigen::Index, std::vector<SymTriplet>> coeffs_;
};

// ============================================================================
// Constraint builders
// ============================================================================

namespace detail {

// Emit the 3n x 3n sampled-data stability block
//   [ Xi         Xi_AB                      Ts Q2^T ]
//   [  *   -Q3 - Q3^T + Ts Z3               Ts Q3^T ]
//   [  *         *                          -Ts R   ]
// with Xi = Q2 + Q2^T + Ts Z1 and
// Xi_AB = Q3 - Q2^T + Q1 A^T + Ts Z2 + Y^T B^T.
inline void emit_w_block(AffineLmi& lmi, const MatrixXd& a, const MatrixXd& b, double t_s,
                         const DecisionLayout& lay) {
    const Eigen::Index n = lay.n();
    const Eigen::Index m = lay.m();
    for (Eigen::Index r = 0; r < n; ++r)
        for (Eigen::Index c = 0; c <= r; ++c) {
            if (r == c) {
                lmi.add_coeff(lay.q2(r, r), r, r, 2.0);
            } else {
                lmi.add_coeff(lay.q2(r, c), r, c, 1.0);
                lmi.add_coeff(lay.q2(c, r), r, c, 1.0);
            }
            lmi.add_coeff(lay.z1(r, c), r, c, t_s);
        }
    for (Eigen::Index i = 0; i < n; ++i)
        for (Eigen::Index j = 0; j < n; ++j) {
            lmi.add_coeff(lay.q3(i, j), n + j, i, 1.0);
            lmi.add_coeff(lay.q2(j, i), n + j, i, -1.0);
            lmi.add_coeff(lay.z2(i, j), n + j, i, t_s);
            for (Eigen::Index u = 0; u < n; ++u)
                lmi.add_coeff(lay.q1(i, u), n + j, i, a(j, u));
            for (Eigen::Index u = 0; u < m; ++u)
                lmi.add_coeff(lay.y(u, i), n + j, i, b(j, u));
        }
    for (Eigen::Index i = 0; i < n; ++i)
        for (Eigen::Index j = 0; j < n; ++j)
            lmi.add_coeff(lay.q2(j, i), 2 * n + j, i, t_s);
    for (Eigen::Index r = 0; r < n; ++r)
        for (Eigen::Index c = 0; c <= r; ++c) {
            if (r == c) {
                lmi.add_coeff(lay.q3(r, r), n + r, n + r, -2.0);
            } else {
                lmi.add_coeff(lay.q3(r, c), n + r, n + c, -1.0);
                lmi.add_coeff(lay.q3(c, r), n + r, n + c, -1.0);
            }
            lmi.add_coeff(lay.z3(r, c), n + r, n + c, t_s);
        }
    for (Eigen::Index i = 0; i < n; ++i)
        for (Eigen::Index j = 0; j < n; ++j)
            lmi.add_coeff(lay.q3(j, i), 2 * n + j, n + i, t_s);
    for (Eigen::Index r = 0; r < n; ++r)
        for (Eigen::Index c = 0; c <= r; ++c)
            lmi.add_coeff(lay.r(r, c), 2 * n + r, 2 * n + c, -t_s);
}

} // namespace detail

// Robust stability conditions for the norm-bounded uncertain system at a given
// sampling bound and fixed multipliers (eps1, eps2). Returns the strict
// (3n+2p)-block and the PSD (3n+2p)-block, both normalized.
inline std::vector<AffineLmi> robust_stability_constraints(const lin::NormBoundedSystem& sys,
                                                           double t_s, double eps1, double eps2,
                                                           const DecisionLayout& lay) {
    const Eigen::Index n = sys.state_dim();
    const Eigen::Index m = sys.input_dim();
    const Eigen::Index p = sys.uncertainty_dim();
    if (lay.n() != n || lay.m() != m)
        throw DimensionMismatch("robust_stability_constraints: layout does not match system");
    if (!(t_s > 0.0) || !(eps1 > 0.0) || !(eps2 > 0.0))
        throw std::invalid_argument("robust_stability_constraints: t_s, eps1, eps2 must be positive");

    const Eigen::Index size = 3 * n + 2 * p;

    AffineLmi neg(size, LmiSense::StrictNegative);
    detail::emit_w_block(neg, sys.a_nominal, sys.b_nominal, t_s, lay);
    for (Eigen::Index i = 0; i < n; ++i)
        for (Eigen::Index q = 0; q < p; ++q)
            if (sys.h(i, q) != 0.0) neg.add_const(3 * n + q, n + i, sys.h(i, q));
    for (Eigen::Index q = 0; q < p; ++q) {
        for (Eigen::Index a = 0; a < n; ++a) {
            double ev = sys.e(q, a);
            if (ev == 0.0) continue;
            for (Eigen::Index i = 0; i < n; ++i)
                neg.add_coeff(lay.q1(i, a), 3 * n + p + q, i, eps1 * ev);
        }
        for (Eigen::Index u = 0; u < m; ++u) {
            double fv = sys.f(q, u);
            if (fv == 0.0) continue;
            for (Eigen::Index i = 0; i < n; ++i)
                neg.add_coeff(lay.y(u, i), 3 * n + p + q, i, eps1 * fv);
        }
        neg.add_const(3 * n + q, 3 * n + q, -eps1);
        neg.add_const(3 * n + p + q, 3 * n + p + q, -eps1);
    }
    neg.normalize();

    AffineLmi psd(size, LmiSense::PositiveSemidefinite);
    for (Eigen::Index r = 0; r < n; ++r)
        for (Eigen::Index c = 0; c <= r; ++c) {
            psd.add_coeff(lay.q1(r, c), r, c, 2.0);
            psd.add_coeff(lay.r(r, c), r, c, -1.0);
        }
    for (Eigen::Index i = 0; i < n; ++i)
        for (Eigen::Index j = 0; j < n; ++j)
            for (Eigen::Index u = 0; u < m; ++u)
                psd.add_coeff(lay.y(u, i), 2 * n + j, i, sys.b_nominal(j, u));
    for (Eigen::Index r = 0; r < n; ++r)
        for (Eigen::Index c = 0; c <= r; ++c) psd.add_coeff(lay.z1(r, c), n + r, n + c, 1.0);
    for (Eigen::Index i = 0; i < n; ++i)
        for (Eigen::Index j = 0; j < n; ++j) psd.add_coeff(lay.z2(i, j), 2 * n + j, n + i, 1.0);
    for (Eigen::Index r = 0; r < n; ++r)
        for (Eigen::Index c = 0; c <= r; ++c) psd.add_coeff(lay.z3(r, c), 2 * n + r, 2 * n + c, 1.0);
    for (Eigen::Index i = 0; i < n; ++i)
        for (Eigen::Index q = 0; q < p; ++q)
            if (sys.h(i, q) != 0.0) psd.add_const(3 * n + q, 2 * n + i, sys.h(i, q));
    for (Eigen::Index q = 0; q < p; ++q) {
        for (Eigen::Index u = 0; u < m; ++u) {
            double fv = sys.f(q, u);
            if (fv == 0.0) continue;
            for (Eigen::Index i = 0; i < n; ++i)
                psd.add_coeff(lay.y(u, i), 3 * n + p + q, i, eps2 * fv);
        }
        psd.add_const(3 * n + q, 3 * n + q, eps2);
        psd.add_const(3 * n + p + q, 3 * n + p + q, eps2);
    }
    psd.normalize();

    return {std::move(neg), std::move(psd)};
}

// Nominal (uncertainty-free) synthesis conditions: the 3n strict block and the
// 3n PSD block under the 2Q1 - R relaxation.
inline std::vector<AffineLmi> nominal_stability_constraints(const MatrixXd& a, const MatrixXd& b,
                                                            double t_s,
                                                            const DecisionLayout& lay) {
    const Eigen::Index n = lay.n();
    const Eigen::Index m = lay.m();
    if (a.rows() != n || a.cols() != n || b.rows() != n || b.cols() != m)
        throw DimensionMismatch("nominal_stability_constraints: bad system dimensions");

    AffineLmi neg(3 * n, LmiSense::StrictNegative);
    detail::emit_w_block(neg, a, b, t_s, lay);
    neg.normalize();

    AffineLmi psd(3 * n, LmiSense::PositiveSemidefinite);
    for (Eigen::Index r = 0; r < n; ++r)
        for (Eigen::Index c = 0; c <= r; ++c) {
            psd.add_coeff(lay.q1(r, c), r, c, 2.0);
            psd.add_coeff(lay.r(r, c), r, c, -1.0);
            psd.add_coeff(lay.z1(r, c), n + r, n + c, 1.0);
            psd.add_coeff(lay.z3(r, c), 2 * n + r, 2 * n + c, 1.0);
        }
    for (Eigen::Index i = 0; i < n; ++i)
        for (Eigen::Index j = 0; j < n; ++j) {
            psd.add_coeff(lay.z2(i, j), 2 * n + j, n + i, 1.0);
            for (Eigen::Index u = 0; u < m; ++u)
                psd.add_coeff(lay.y(u, i), 2 * n + j, i, b(j, u));
        }
    psd.normalize();

    return {std::move(neg), std::move(psd)};
}

// slot ≻ 0, encoded as -slot strictly negative
inline AffineLmi positive_definite_constraint(const DecisionLayout& lay, Eigen::Index offset_slot) {
    const Eigen::Index n = lay.n();
    AffineLmi lmi(n, LmiSense::StrictNegative);
    Eigen::Index k = 0;
    for (Eigen::Index i = 0; i < n; ++i)
        for (Eigen::Index j = 0; j <= i; ++j, ++k) lmi.add_coeff(offset_slot + k, i, j, -1.0);
    lmi.normalize();
    return lmi;
}

// Performance bound block
//   [ -eta I   Q1        Y^T      ]
//   [   *     -Q_J^-1    0        ]
//   [   *      *        -R_J^-1   ]  <= 0  (non-strict)
inline AffineLmi cost_constraint(const SymMatrix& q_cost, const SymMatrix& r_cost,
                                 const DecisionLayout& lay) {
    const Eigen::Index n = lay.n();
    const Eigen::Index m = lay.m();
    if (q_cost.dim() != n || r_cost.dim() != m)
        throw DimensionMismatch("cost_constraint: weight dimensions do not match layout");

    MatrixXd q_inv = num::cholesky_factor(q_cost).solve(MatrixXd::Identity(n, n));
    MatrixXd r_inv = num::cholesky_factor(r_cost).solve(MatrixXd::Identity(m, m));

    AffineLmi lmi(2 * n + m, LmiSense::StrictNegative, /*strict=*/false);
    for (Eigen::Index i = 0; i < n; ++i) lmi.add_coeff(lay.eta(), i, i, -1.0);
    for (Eigen::Index i = 0; i < n; ++i)
        for (Eigen::Index j = 0; j < n; ++j) lmi.add_coeff(lay.q1(i, j), n + j, i, 1.0);
    for (Eigen::Index i = 0; i < n; ++i)
        for (Eigen::Index u = 0; u < m; ++u) lmi.add_coeff(lay.y(u, i), 2 * n + u, i, 1.0);
    for (Eigen::Index r = 0; r < n; ++r)
        for (Eigen::Index c = 0; c <= r; ++c) lmi.add_const(n + r, n + c, -q_inv(r, c));
    for (Eigen::Index r = 0; r < m; ++r)
        for (Eigen::Index c = 0; c <= r; ++c) lmi.add_const(2 * n + r, 2 * n + c, -r_inv(r, c));
    lmi.normalize();
    return lmi;
}

// ============================================================================
// Verification oracle with the exact nonlinear block
// ============================================================================

struct NominalMargins {
    double margin_neg = 0.0;  // lambda_max of the W block; stable when < 0
    double margin_psd = 0.0;  // lambda_min of the exact Q1 R^-1 Q1 block; needs >= 0
};

// Evaluates the original conditions at fixed numbers: the strict W block and
// the PSD block with the exact Q1 R^-1 Q1 corner (no relaxation). Used to
// recheck robust certificates against sampled realizations.
inline NominalMargins nominal_stability_check(const MatrixXd& a, const MatrixXd& b, double t_s,
                                              const VectorXd& values, const DecisionLayout& lay) {
    const Eigen::Index n = lay.n();
    MatrixXd q1 = lay.q1_matrix(values);
    MatrixXd q2 = lay.q2_matrix(values);
    MatrixXd q3 = lay.q3_matrix(values);
    MatrixXd z1 = lay.z1_matrix(values);
    MatrixXd z2 = lay.z2_matrix(values);
    MatrixXd z3 = lay.z3_matrix(values);
    MatrixXd rr = lay.r_matrix(values);
    MatrixXd yy = lay.y_matrix(values);

    num::CholeskyFactor r_chol = [&] {
        SymMatrix rs = SymMatrix::from_full(rr);
        num::CholeskyFactor f = num::cholesky_factor(rs);
        if (f.jitter_applied > 0.0)
            throw NotPositiveDefinite("nominal_stability_check: R not positive definite");
        return f;
    }();
    {
        SymMatrix q1s = SymMatrix::from_full(q1);
        num::CholeskyFactor f = num::cholesky_factor(q1s);
        if (f.jitter_applied > 0.0)
            throw NotPositiveDefinite("nominal_stability_check: Q1 not positive definite");
    }

    MatrixXd xi = q2 + q2.transpose() + t_s * z1;
    MatrixXd xi_ab = q3 - q2.transpose() + q1 * a.transpose() + t_s * z2 +
                     yy.transpose() * b.transpose();
    MatrixXd w(3 * n, 3 * n);
    w.block(0, 0, n, n) = xi;
    w.block(0, n, n, n) = xi_ab;
    w.block(0, 2 * n, n, n) = t_s * q2.transpose();
    w.block(n, 0, n, n) = xi_ab.transpose();
    w.block(n, n, n, n) = -q3 - q3.transpose() + t_s * z3;
    w.block(n, 2 * n, n, n) = t_s * q3.transpose();
    w.block(2 * n, 0, n, n) = w.block(0, 2 * n, n, n).transpose();
    w.block(2 * n, n, n, n) = w.block(n, 2 * n, n, n).transpose();
    w.block(2 * n, 2 * n, n, n) = -t_s * rr;

    MatrixXd q1rq1 = q1 * r_chol.solve(q1);
    MatrixXd psd(3 * n, 3 * n);
    psd.setZero();
    psd.block(0, 0, n, n) = q1rq1;
    psd.block(0, 2 * n, n, n) = yy.transpose() * b.transpose();
    psd.block(2 * n, 0, n, n) = psd.block(0, 2 * n, n, n).transpose();
    psd.block(n, n, n, n) = z1;
    psd.block(n, 2 * n, n, n) = z2;
    psd.block(2 * n, n, n, n) = z2.transpose();
    psd.block(2 * n, 2 * n, n, n) = z3;

    NominalMargins out;
    out.margin_neg = num::max_eigenvalue(SymMatrix::from_full(w));
    out.margin_psd = num::min_eigenvalue(SymMatrix::from_full(psd));
    return out;
}

} // namespace sdc::lmi
