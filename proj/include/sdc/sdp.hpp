#pragma once

#include <Eigen/Cholesky>
#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <functional>
#include <optional>
#include <ostream>
#include <utility>
#include <vector>

#include "sdc/errors.hpp"
#include "sdc/lmi.hpp"
#include "sdc/linearize.hpp"
#include "sdc/numerics.hpp"

namespace sdc::sdp {

using Eigen::MatrixXd;
using Eigen::VectorXd;

// ============================================================================
// Problem and result types
// ============================================================================

struct SdpProblem {
    lmi::DecisionLayout layout;
    std::vector<lmi::AffineLmi> constraints;
    // sparse linear objective to minimize; empty for pure feasibility
    std::vector<std::pair<Eigen::Index, double>> objective;
};

enum class SolveStatus { Optimal, Feasible, Infeasible, IterationLimit };

inline const char* to_string(SolveStatus s) {
    switch (s) {
        case SolveStatus::Optimal: return "optimal";
        case SolveStatus::Feasible: return "feasible";
        case SolveStatus::Infeasible: return "infeasible";
        default: return "iteration_limit";
    }
}

struct SolveResult {
    SolveStatus status = SolveStatus::IterationLimit;
    VectorXd values;
    std::vector<double> margins;  // per-constraint extreme eigenvalues
    std::optional<double> objective_value;
    int newton_iterations = 0;
    double slack = 0.0;  // final phase-1 slack in normalized units
};

struct SolveOptions {
    double mu0 = 1e-3;  // the wide-barrier stages above this add nothing here
    double mu_factor = 0.2;
    double mu_min = 1e-10;
    double newton_tol = 1e-9;  // squared Newton decrement / 2
    int newton_cap = 600;      // per phase
    double t_cap = 1e3;
    double var_bound = 1e9;
    double t_target = 1e-6;  // interior slack at which phase 1 declares success
    std::ostream* trace = nullptr;
    std::optional<VectorXd> warm_start;
};

// margins accepted under independent re-evaluation
inline bool margins_ok(const SdpProblem& problem, const VectorXd& values,
                       std::vector<double>* out_margins = nullptr) {
    bool ok = true;
    if (out_margins) out_margins->clear();
    for (const auto& c : problem.constraints) {
        double m = c.margin(values);
        if (out_margins) out_margins->push_back(m);
        if (c.sense() == lmi::LmiSense::StrictNegative) {
            double need = c.strict() ? -c.strictness_margin() / 2.0 : 1e-8;
            if (!(m <= need)) ok = false;
        } else {
            if (!(m >= -1e-8)) ok = false;
        }
    }
    return ok;
}

// ============================================================================
// Log-det barrier solver
// ============================================================================
// Feasibility maximizes the minimum slack t with blocks P_j(v) - t I >= 0,
// where P_j folds the constraint sense and strictness shift; any iterate with
// t > 0 is a feasibility certificate. Infeasibility is certified from the
// barrier duality gap: at a mu-center, sup t <= t(mu) + mu * nu. Linear
// objectives reduce to bisection on an upper-bound level set with warm-started
// feasibility oracles. Variables additionally live in a large box so the
// subproblems stay bounded.

namespace detail {

struct Entry {
    int i, j;
    double w;
};

struct Block {
    Eigen::Index size = 0;
    MatrixXd constant;
    std::vector<Eigen::Index> vars;
    std::vector<std::vector<Entry>> entries;
    bool slack = false;  // phase-1 t enters the diagonal
};

class Barrier {
  public:
    Barrier(const SdpProblem& problem, const SolveOptions& opt, bool with_slack)
        : opt_(opt), with_slack_(with_slack) {
        nvars_ = problem.layout.variable_count();
        dim_ = nvars_ + (with_slack ? 1 : 0);
        nu_ = 0.0;
        for (const auto& c : problem.constraints) {
            Block b;
            b.size = c.size();
            b.constant = c.constant().mat();
            double shift = (c.sense() == lmi::LmiSense::StrictNegative && c.strict())
                               ? c.strictness_margin()
                               : 0.0;
            double sign = (c.sense() == lmi::LmiSense::StrictNegative) ? -1.0 : 1.0;
            b.constant *= sign;
            b.constant.diagonal().array() -= shift;
            for (const auto& [var, list] : c.coefficients()) {
                std::vector<Entry> dir;
                for (const auto& t : list) {
                    dir.push_back({t.row, t.col, sign * t.value});
                    if (t.row != t.col) dir.push_back({t.col, t.row, sign * t.value});
                }
                b.vars.push_back(var);
                b.entries.push_back(std::move(dir));
            }
            b.slack = with_slack;
            nu_ += static_cast<double>(b.size);
            blocks_.push_back(std::move(b));
        }
        nu_ += 2.0 * static_cast<double>(nvars_);  // variable box
        if (with_slack) nu_ += 1.0;                // t cap
    }

    double nu() const { return nu_; }
    Eigen::Index dim() const { return dim_; }

    MatrixXd block_value(const Block& b, const VectorXd& x) const {
        MatrixXd m = b.constant;
        for (std::size_t k = 0; k < b.vars.size(); ++k) {
            double v = x(b.vars[k]);
            if (v == 0.0) continue;
            for (const auto& e : b.entries[k]) m(e.i, e.j) += e.w * v;
        }
        if (b.slack && with_slack_) m.diagonal().array() -= x(nvars_);
        return m;
    }

    // barrier value: sum of logdets; -inf if outside the cone
    bool barrier_value(const VectorXd& x, double& out) const {
        double total = 0.0;
        for (const auto& b : blocks_) {
            Eigen::LLT<MatrixXd> llt(block_value(b, x));
            if (llt.info() != Eigen::Success) return false;
            MatrixXd l = llt.matrixL();
            if (l.diagonal().minCoeff() <= 0.0) return false;
            total += 2.0 * l.diagonal().array().log().sum();
        }
        for (Eigen::Index k = 0; k < nvars_; ++k) {
            double lo = opt_.var_bound + x(k), hi = opt_.var_bound - x(k);
            if (lo <= 0.0 || hi <= 0.0) return false;
            total += std::log(lo) + std::log(hi);
        }
        if (with_slack_) {
            double cap = opt_.t_cap - x(nvars_);
            if (cap <= 0.0) return false;
            total += std::log(cap);
        }
        out = total;
        return true;
    }

    // gradient and negated Hessian of the barrier at x (assumes interior)
    void derivatives(const VectorXd& x, VectorXd& grad, MatrixXd& neg_hess) const {
        grad.setZero(dim_);
        neg_hess.setZero(dim_, dim_);
        for (const auto& b : blocks_) {
            MatrixXd m = block_value(b, x);
            Eigen::LLT<MatrixXd> llt(m);
            MatrixXd pinv = llt.solve(MatrixXd::Identity(b.size, b.size));
            const std::size_t nv = b.vars.size();
            // gradient entries tr(P^-1 A_k)
            for (std::size_t k = 0; k < nv; ++k) {
                double acc = 0.0;
                for (const auto& e : b.entries[k]) acc += e.w * pinv(e.j, e.i);
                grad(b.vars[k]) += acc;
            }
            // Hessian entries tr(P^-1 A_k P^-1 A_l)
            for (std::size_t ka = 0; ka < nv; ++ka) {
                const auto& ea = b.entries[ka];
                for (std::size_t kb = 0; kb <= ka; ++kb) {
                    const auto& eb = b.entries[kb];
                    double acc = 0.0;
                    for (const auto& a : ea)
                        for (const auto& bb : eb)
                            acc += a.w * bb.w * pinv(a.j, bb.i) * pinv(bb.j, a.i);
                    neg_hess(b.vars[ka], b.vars[kb]) += acc;
                    if (ka != kb) neg_hess(b.vars[kb], b.vars[ka]) += acc;
                }
            }
            if (b.slack && with_slack_) {
                grad(nvars_) -= pinv.trace();
                neg_hess(nvars_, nvars_) += pinv.squaredNorm();
                for (std::size_t k = 0; k < nv; ++k) {
                    double acc = 0.0;
                    for (const auto& e : b.entries[k])
                        acc += e.w * pinv.row(e.j).dot(pinv.col(e.i));
                    neg_hess(nvars_, b.vars[k]) -= acc;
                    neg_hess(b.vars[k], nvars_) -= acc;
                }
            }
        }
        for (Eigen::Index k = 0; k < nvars_; ++k) {
            double lo = opt_.var_bound + x(k), hi = opt_.var_bound - x(k);
            grad(k) += 1.0 / lo - 1.0 / hi;
            neg_hess(k, k) += 1.0 / (lo * lo) + 1.0 / (hi * hi);
        }
        if (with_slack_) {
            double cap = opt_.t_cap - x(nvars_);
            grad(nvars_) -= 1.0 / cap;
            neg_hess(nvars_, nvars_) += 1.0 / (cap * cap);
        }
    }

    const std::vector<Block>& blocks() const { return blocks_; }
    Eigen::Index nvars() const { return nvars_; }

  private:
    const SolveOptions& opt_;
    bool with_slack_;
    Eigen::Index nvars_ = 0;
    Eigen::Index dim_ = 0;
    double nu_ = 0.0;
    std::vector<Block> blocks_;
};

enum class CenterStatus { Converged, Stalled, Budget };

// Maximize obj(x)/mu + barrier(x) by damped Newton. An optional predicate
// stops the stage as soon as the current iterate is already good enough for
// the caller.
inline CenterStatus center(const Barrier& barrier, const VectorXd& objective, double mu,
                           VectorXd& x, int& budget, double tol, double* out_decrement,
                           const std::function<bool(const VectorXd&)>& good_enough = nullptr) {
    while (budget > 0) {
        if (good_enough && good_enough(x)) return CenterStatus::Converged;
        --budget;
        VectorXd grad;
        MatrixXd neg_hess;
        barrier.derivatives(x, grad, neg_hess);
        for (Eigen::Index k = 0; k < objective.size(); ++k) grad(k) += objective(k) / mu;

        Eigen::LLT<MatrixXd> llt(neg_hess);
        if (llt.info() != Eigen::Success) {
            neg_hess.diagonal().array() += 1e-12 * (1.0 + neg_hess.trace() / neg_hess.rows());
            llt.compute(neg_hess);
            if (llt.info() != Eigen::Success)
                throw NumericalBreakdown("sdp: Newton system not factorizable");
        }
        VectorXd step = llt.solve(grad);
        double lambda2 = grad.dot(step);
        if (out_decrement) *out_decrement = lambda2;
        if (lambda2 / 2.0 <= tol) return CenterStatus::Converged;

        double f0;
        if (!barrier.barrier_value(x, f0)) return CenterStatus::Stalled;
        for (Eigen::Index k = 0; k < objective.size(); ++k) f0 += objective(k) * x(k) / mu;

        double lambda = std::sqrt(std::max(lambda2, 0.0));
        double alpha = (lambda > 0.25) ? 1.0 / (1.0 + lambda) : 1.0;
        bool moved = false;
        for (int ls = 0; ls < 60; ++ls) {
            VectorXd trial = x + alpha * step;
            double f1;
            if (barrier.barrier_value(trial, f1)) {
                for (Eigen::Index k = 0; k < objective.size(); ++k)
                    f1 += objective(k) * trial(k) / mu;
                if (f1 > f0 + 1e-4 * alpha * lambda2) {
                    x = trial;
                    moved = true;
                    break;
                }
            }
            alpha *= 0.5;
        }
        if (!moved) return CenterStatus::Stalled;
    }
    return CenterStatus::Budget;
}

} // namespace detail

// ============================================================================
// Feasibility
// ============================================================================

inline SolveResult solve_feasibility(const SdpProblem& problem, const SolveOptions& options = {}) {
    const Eigen::Index nvars = problem.layout.variable_count();
    detail::Barrier barrier(problem, options, /*with_slack=*/true);

    VectorXd x(nvars + 1);
    if (options.warm_start && options.warm_start->size() == nvars) {
        x.head(nvars) =
            options.warm_start->cwiseMax(-0.9 * options.var_bound).cwiseMin(0.9 * options.var_bound);
    } else {
        x.head(nvars).setZero();
    }

    SolveResult result;
    int budget = options.newton_cap;

    auto finish = [&](SolveStatus status) {
        result.status = status;
        result.values = x.head(nvars);
        result.slack = x(nvars);
        result.newton_iterations = options.newton_cap - budget;
        std::vector<double> margins;
        bool ok = margins_ok(problem, result.values, &margins);
        result.margins = std::move(margins);
        if (status == SolveStatus::Feasible && !ok) result.status = SolveStatus::IterationLimit;
        return result;
    };

    // a margin-satisfying warm start needs no iterations at all
    if (options.warm_start && margins_ok(problem, x.head(nvars))) {
        double lmin = options.t_cap;
        for (const auto& b : barrier.blocks()) {
            MatrixXd m = b.constant;
            for (std::size_t k = 0; k < b.vars.size(); ++k) {
                double v = x(b.vars[k]);
                if (v == 0.0) continue;
                for (const auto& e : b.entries[k]) m(e.i, e.j) += e.w * v;
            }
            lmin = std::min(lmin, num::min_eigenvalue(num::SymMatrix::from_full(m)));
        }
        if (lmin > 0.0) {
            x(nvars) = lmin;
            return finish(SolveStatus::Feasible);
        }
    }

    {
        double t0 = options.t_cap / 2.0;
        for (const auto& b : barrier.blocks()) {
            MatrixXd m = b.constant;
            for (std::size_t k = 0; k < b.vars.size(); ++k) {
                double v = x(b.vars[k]);
                if (v == 0.0) continue;
                for (const auto& e : b.entries[k]) m(e.i, e.j) += e.w * v;
            }
            double lmin = num::min_eigenvalue(num::SymMatrix::from_full(m));
            t0 = std::min(t0, lmin);
        }
        x(nvars) = t0 - std::max(1e-8, 0.25 * std::abs(t0));
    }

    VectorXd objective = VectorXd::Zero(nvars + 1);
    objective(nvars) = 1.0;

    // a warm start is expected to sit near the feasibility boundary already,
    // so skip the early wide-barrier stages
    double mu = options.warm_start ? std::min(options.mu0, 1e-3) : options.mu0;
    const double nu = barrier.nu();
    auto good_enough = [&](const VectorXd& v) { return v(nvars) >= options.t_target; };

    while (true) {
        double decrement = 0.0;
        detail::CenterStatus cs = detail::center(barrier, objective, mu, x, budget,
                                                 options.newton_tol, &decrement, good_enough);
        if (options.trace)
            (*options.trace) << "phase1 mu=" << mu << " slack=" << x(nvars)
                             << " decrement2=" << decrement << " budget=" << budget << "\n";
        if (x(nvars) >= options.t_target) return finish(SolveStatus::Feasible);
        if (cs != detail::CenterStatus::Converged) {
            if (x(nvars) > 0.0) return finish(SolveStatus::Feasible);
            return finish(SolveStatus::IterationLimit);
        }
        // certified upper bound on the optimal slack, valid at a mu-center only
        if (x(nvars) + 2.0 * mu * nu < 0.0) return finish(SolveStatus::Infeasible);
        if (mu <= options.mu_min) {
            if (x(nvars) > 0.0) return finish(SolveStatus::Feasible);
            if (x(nvars) + 2.0 * mu * nu < options.t_target)
                return finish(SolveStatus::Infeasible);
            return finish(SolveStatus::IterationLimit);
        }
        mu *= options.mu_factor;
    }
}

// ============================================================================
// Linear objective minimization
// ============================================================================

// Linear objectives are minimized by bisection on an upper-bound level set:
// feasibility of {constraints, c^T v <= bound} is monotone in the bound and
// each oracle call warm-starts from the last feasible assignment. This reuses
// the slack-max machinery instead of a separate objective-following path.
// With must_beat set, the search starts at that bound and reports Infeasible
// when nothing below it exists.
inline SolveResult solve_minimize(const SdpProblem& problem, const SolveOptions& options = {},
                                  double objective_rel_tol = 5e-3,
                                  std::optional<double> must_beat = {}) {
    if (problem.objective.empty()) return solve_feasibility(problem, options);

    auto obj_value = [&](const VectorXd& v) {
        double val = 0.0;
        for (const auto& [k, w] : problem.objective) val += w * v(k);
        return val;
    };

    auto bounded_problem = [&](double bound) {
        SdpProblem p = problem;
        lmi::AffineLmi level(1, lmi::LmiSense::PositiveSemidefinite);
        for (const auto& [k, w] : problem.objective) level.add_coeff(k, 0, 0, -w);
        level.add_const(0, 0, bound);
        level.normalize();
        p.constraints.push_back(std::move(level));
        return p;
    };

    SolveOptions oracle = options;
    oracle.t_target = std::min(options.t_target, 1e-8);
    oracle.mu_min = std::max(options.mu_min, 1e-9);
    oracle.newton_cap = std::min(options.newton_cap, 300);

    SolveResult incumbent;
    if (must_beat) {
        incumbent = solve_feasibility(bounded_problem(*must_beat), oracle);
    } else {
        incumbent = solve_feasibility(problem, oracle);
    }
    if (incumbent.status != SolveStatus::Feasible) return incumbent;

    int total_newton = incumbent.newton_iterations;
    double hi = obj_value(incumbent.values);

    auto try_bound = [&](double bound) {
        SolveOptions so = oracle;
        so.warm_start = incumbent.values;
        SolveResult res = solve_feasibility(bounded_problem(bound), so);
        total_newton += res.newton_iterations;
        if (res.status == SolveStatus::Feasible) {
            incumbent = res;
            hi = std::min(hi, obj_value(res.values));
            return true;
        }
        return false;
    };

    // expand downward to bracket the optimum
    double span = std::max(1.0, std::abs(hi));
    double lo = hi - span;
    int expansions = 0;
    while (try_bound(lo) && expansions < 60) {
        span *= 4.0;
        lo = hi - span;
        ++expansions;
    }
    if (expansions >= 60) {
        // practically unbounded below; report the deepest point found
        SolveResult res = incumbent;
        res.status = SolveStatus::Optimal;
        res.objective_value = hi;
        res.newton_iterations = total_newton;
        return res;
    }

    while (hi - lo > objective_rel_tol * (1.0 + std::abs(hi))) {
        // geometric probes close the gap quickly when the bracket spans orders
        // of magnitude; arithmetic bisection finishes the job
        double mid;
        if (lo > 0.0 && hi / lo > 16.0) mid = std::sqrt(lo * hi);
        else if (lo <= 0.0 && hi > 16.0 * std::max(1.0, -lo)) mid = hi / 8.0;
        else mid = 0.5 * (lo + hi);
        if (!try_bound(mid)) lo = std::max(lo, mid);
    }

    SolveResult result = incumbent;
    result.status = SolveStatus::Optimal;
    result.objective_value = obj_value(incumbent.values);
    result.newton_iterations = total_newton;
    std::vector<double> margins;
    bool ok = margins_ok(problem, result.values, &margins);
    result.margins = std::move(margins);
    if (!ok) result.status = SolveStatus::IterationLimit;
    return result;
}

// ============================================================================
// Gain extraction and the synthesis drivers
// ============================================================================

inline MatrixXd extract_gain(const SolveResult& certificate, const lmi::DecisionLayout& layout) {
    MatrixXd q1 = layout.q1_matrix(certificate.values);
    MatrixXd y = layout.y_matrix(certificate.values);
    Eigen::LLT<MatrixXd> llt(q1);
    if (llt.info() != Eigen::Success)
        throw NotPositiveDefinite("extract_gain: Q1 not positive definite");
    // K = Y Q1^-1 via Q1 X = Y^T
    return llt.solve(y.transpose()).transpose();
}

struct ControllerDesign {
    MatrixXd gain;
    double t_s_max = 0.0;
    double min_frequency = 0.0;  // 1 / t_s_max
    std::pair<double, double> eps_used{0.0, 0.0};
    SolveResult certificate;
};

struct McfOptions {
    double ts_start = 1e-3;
    double ts_min = 1e-6;
    double ts_cap = 100.0;
    double bisect_rel_tol = 1e-3;
    bool prune_with_best = true;
    SolveOptions solve;
};

inline std::vector<double> default_eps_grid(double log10_min = -3.0, double log10_max = 3.0,
                                            int points = 21) {
    std::vector<double> grid;
    grid.reserve(points);
    for (int i = 0; i < points; ++i) {
        double t = (points == 1) ? log10_min
                                 : log10_min + (log10_max - log10_min) * i / (points - 1);
        grid.push_back(std::pow(10.0, t));
    }
    return grid;
}

// Largest certifiable sampling bound over an epsilon grid with eps2 = 1/eps1;
// per epsilon the bound is bracketed geometrically and bisected. The best
// assignment found per epsilon warm-starts the next solve.
inline ControllerDesign min_control_frequency(const lin::NormBoundedSystem& sys,
                                              const std::vector<double>& eps_grid,
                                              const McfOptions& options = {}) {
    if (eps_grid.empty()) throw std::invalid_argument("min_control_frequency: empty epsilon grid");
    const Eigen::Index n = sys.state_dim();
    const Eigen::Index m = sys.input_dim();
    lmi::DecisionLayout layout(n, m, false);

    // sweep the grid center-out: moderate multipliers are feasible far more
    // often, and an early incumbent lets the probe skip the extremes
    std::vector<double> sweep = eps_grid;
    std::stable_sort(sweep.begin(), sweep.end(), [](double a, double b) {
        return std::abs(std::log10(a)) < std::abs(std::log10(b));
    });

    std::optional<ControllerDesign> best;

    for (double eps : sweep) {
        const double e1 = eps, e2 = 1.0 / eps;
        // the incumbent certificate is usually an excellent starting guess
        std::optional<VectorXd> warm;
        if (best) warm = best->certificate.values;

        auto try_ts = [&](double ts) {
            SdpProblem problem;
            problem.layout = layout;
            problem.constraints = lmi::robust_stability_constraints(sys, ts, e1, e2, layout);
            problem.constraints.push_back(
                lmi::positive_definite_constraint(layout, layout.q1_offset()));
            problem.constraints.push_back(
                lmi::positive_definite_constraint(layout, layout.r_offset()));
            SolveOptions so = options.solve;
            so.warm_start = warm;
            SolveResult res = solve_feasibility(problem, so);
            if (res.status == SolveStatus::Feasible) warm = res.values;
            return res;
        };

        // cheap skip: this epsilon cannot improve on the incumbent if it is
        // already infeasible just above it
        double lo = 0.0, hi = 0.0;
        SolveResult lo_result;
        if (best && options.prune_with_best) {
            double probe = best->t_s_max * (1.0 + 2.0 * options.bisect_rel_tol);
            SolveResult res = try_ts(probe);
            if (res.status != SolveStatus::Feasible) continue;
            lo = probe;
            lo_result = res;
        } else {
            double ts = options.ts_start;
            SolveResult res = try_ts(ts);
            while (res.status != SolveStatus::Feasible && ts > options.ts_min) {
                ts *= 0.1;
                if (ts < options.ts_min) break;
                res = try_ts(ts);
            }
            if (res.status != SolveStatus::Feasible) continue;
            lo = ts;
            lo_result = res;
        }

        // grow to an infeasible upper end
        hi = lo * 2.0;
        bool capped = false;
        while (true) {
            if (hi > options.ts_cap) {
                hi = options.ts_cap;
                capped = true;
            }
            SolveResult res = try_ts(hi);
            if (res.status == SolveStatus::Feasible) {
                lo = hi;
                lo_result = res;
                if (capped) break;
                hi *= 2.0;
            } else {
                capped = false;
                break;
            }
        }

        if (!capped) {
            while (hi - lo > options.bisect_rel_tol * lo) {
                double mid = 0.5 * (lo + hi);
                SolveResult res = try_ts(mid);
                if (res.status == SolveStatus::Feasible) {
                    lo = mid;
                    lo_result = res;
                } else {
                    hi = mid;
                }
            }
        }

        if (!best || lo > best->t_s_max) {
            ControllerDesign design;
            design.t_s_max = lo;
            design.min_frequency = 1.0 / lo;
            design.eps_used = {e1, e2};
            design.certificate = lo_result;
            design.gain = extract_gain(lo_result, layout);
            best = std::move(design);
        }
    }

    if (!best)
        throw InfeasibleAtAllFrequencies(
            "min_control_frequency: no epsilon admits a certifiable sampling bound");
    return *best;
}

struct PerformanceResult {
    double eta = 0.0;
    ControllerDesign design;
};

// Minimize the performance bound eta at a fixed sampling interval over a 2-D
// epsilon grid; no single-epsilon shortcut applies here.
inline PerformanceResult optimize_performance(const lin::NormBoundedSystem& sys, double t_s,
                                              const num::SymMatrix& q_cost,
                                              const num::SymMatrix& r_cost,
                                              const std::vector<double>& eps_grid,
                                              const SolveOptions& solve_options = {},
                                              const ControllerDesign* reference = nullptr,
                                              double eta_rel_tol = 1e-2) {
    if (eps_grid.empty()) throw std::invalid_argument("optimize_performance: empty epsilon grid");
    if (reference && t_s > reference->t_s_max * (1.0 + 1e-9))
        throw std::invalid_argument(
            "optimize_performance: t_s exceeds the certified maximum sampling interval");

    const Eigen::Index n = sys.state_dim();
    const Eigen::Index m = sys.input_dim();
    lmi::DecisionLayout layout(n, m, /*with_eta=*/true);
    lmi::AffineLmi cost = lmi::cost_constraint(q_cost, r_cost, layout);

    // center-out cell order plus an incumbent-bound probe per cell: a cell
    // that cannot beat the best eta so far dies after a single oracle call
    std::vector<std::pair<double, double>> cells;
    for (double e1 : eps_grid)
        for (double e2 : eps_grid) cells.emplace_back(e1, e2);
    std::stable_sort(cells.begin(), cells.end(), [](const auto& a, const auto& b) {
        return std::abs(std::log10(a.first)) + std::abs(std::log10(a.second)) <
               std::abs(std::log10(b.first)) + std::abs(std::log10(b.second));
    });
    // the reference design's multipliers are known stability-feasible at this
    // sampling interval; probing them first seeds the incumbent immediately
    std::optional<VectorXd> seed_warm;
    if (reference) {
        cells.insert(cells.begin(), reference->eps_used);
        const VectorXd& ref = reference->certificate.values;
        VectorXd padded = VectorXd::Zero(layout.variable_count());
        padded.head(std::min<Eigen::Index>(ref.size(), layout.variable_count())) =
            ref.head(std::min<Eigen::Index>(ref.size(), layout.variable_count()));
        // seed eta above its boundary for the seeded matrices
        MatrixXd q1r = layout.q1_matrix(padded);
        MatrixXd yr = layout.y_matrix(padded);
        MatrixXd quad = q1r * q_cost.mat() * q1r + yr.transpose() * r_cost.mat() * yr;
        padded(layout.eta()) = 2.0 * num::max_eigenvalue(num::SymMatrix::from_full(quad)) + 1.0;
        seed_warm = padded;
    }

    lmi::DecisionLayout layout_stab(n, m, false);
    std::optional<PerformanceResult> best;
    bool first_cell = true;
    for (const auto& [e1, e2] : cells) {
        // most cells are already stability-infeasible at this sampling
        // interval; certifying that is far cheaper than a bounded eta search
        if (!first_cell) {
            SdpProblem stab;
            stab.layout = layout_stab;
            stab.constraints = lmi::robust_stability_constraints(sys, t_s, e1, e2, layout_stab);
            stab.constraints.push_back(
                lmi::positive_definite_constraint(layout_stab, layout_stab.q1_offset()));
            stab.constraints.push_back(
                lmi::positive_definite_constraint(layout_stab, layout_stab.r_offset()));
            SolveOptions probe = solve_options;
            if (best)
                probe.warm_start =
                    best->design.certificate.values.head(layout_stab.variable_count()).eval();
            SolveResult stab_res = solve_feasibility(stab, probe);
            if (stab_res.status != SolveStatus::Feasible) continue;
        }

        SdpProblem problem;
        problem.layout = layout;
        problem.constraints = lmi::robust_stability_constraints(sys, t_s, e1, e2, layout);
        problem.constraints.push_back(
            lmi::positive_definite_constraint(layout, layout.q1_offset()));
        problem.constraints.push_back(
            lmi::positive_definite_constraint(layout, layout.r_offset()));
        problem.constraints.push_back(cost);
        problem.objective = {{layout.eta(), 1.0}};

        SolveOptions so = solve_options;
        std::optional<double> must_beat;
        if (best) {
            must_beat = best->eta * (1.0 - eta_rel_tol);
            so.warm_start = best->design.certificate.values;
        } else if (first_cell && seed_warm) {
            so.warm_start = seed_warm;
        }
        first_cell = false;
        SolveResult res = solve_minimize(problem, so, eta_rel_tol, must_beat);
        if (res.status != SolveStatus::Optimal) continue;
        double eta = *res.objective_value;
        if (!best || eta < best->eta) {
            PerformanceResult pr;
            pr.eta = eta;
            pr.design.gain = extract_gain(res, layout);
            pr.design.t_s_max = t_s;
            pr.design.min_frequency = 1.0 / t_s;
            pr.design.eps_used = {e1, e2};
            pr.design.certificate = res;
            best = std::move(pr);
        }
    }
    if (!best)
        throw InfeasibleAtGivenTs("optimize_performance: no epsilon pair feasible at given t_s");
    return *best;
}

} // namespace sdc::sdp
