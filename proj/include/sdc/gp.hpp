#pragma once

#include <Eigen/Core>

#include <cmath>
#include <fstream>
#include <memory>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "sdc/errors.hpp"
#include "sdc/numerics.hpp"
#include "sdc/rng.hpp"

namespace sdc::gp {

using Eigen::MatrixXd;
using Eigen::VectorXd;
using num::SymMatrix;

// ============================================================================
// Squared-exponential kernel with per-dimension lengthscales
// ============================================================================

struct SeKernel {
    double output_variance = 1.0;  // signal variance sigma_eta^2
    VectorXd lengthscales;         // l, one per input dimension

    Eigen::Index input_dim() const { return lengthscales.size(); }

    double operator()(const VectorXd& z, const VectorXd& zp) const {
        VectorXd d = (z - zp).cwiseQuotient(lengthscales);
        return output_variance * std::exp(-0.5 * d.squaredNorm());
    }
};

struct KernelDerivatives {
    double value = 0.0;
    VectorXd grad_z;        // d k / d z
    MatrixXd cross_hessian; // d^2 k / dz dz'
};

// value, gradient w.r.t. the first argument, and the mixed second derivative.
// With d = z - z' and Li2 = L^-2:
//   dk/dz      = -Li2 d k
//   d2k/dz dz' = (Li2 - Li2 d d^T Li2) k
inline KernelDerivatives se_kernel_derivatives(const SeKernel& kernel, const VectorXd& z,
                                               const VectorXd& zp) {
    if (z.size() != kernel.input_dim() || zp.size() != kernel.input_dim())
        throw DimensionMismatch("se_kernel_derivatives: point dimension does not match kernel");
    VectorXd inv_l2 = kernel.lengthscales.array().square().inverse();
    VectorXd d = z - zp;
    VectorXd w = inv_l2.cwiseProduct(d);
    double value = kernel.output_variance * std::exp(-0.5 * d.dot(w));
    KernelDerivatives out;
    out.value = value;
    out.grad_z = -w * value;
    out.cross_hessian = (inv_l2.asDiagonal().toDenseMatrix() - w * w.transpose()) * value;
    return out;
}

// ============================================================================
// Dataset
// ============================================================================

struct Dataset {
    MatrixXd inputs;        // N x n_z, rows are z^(i) = (x, u)
    MatrixXd targets;       // N x n
    VectorXd noise_stddev;  // per-output sigma_n

    Eigen::Index size() const { return inputs.rows(); }
    Eigen::Index input_dim() const { return inputs.cols(); }
    Eigen::Index output_dim() const { return targets.cols(); }

    void validate() const {
        if (inputs.rows() < 1) throw std::invalid_argument("Dataset: N must be at least 1");
        if (inputs.rows() != targets.rows())
            throw DimensionMismatch("Dataset: input and target row counts differ");
        if (noise_stddev.size() != targets.cols())
            throw DimensionMismatch("Dataset: noise vector size does not match output count");
        if (!inputs.allFinite() || !targets.allFinite() || !noise_stddev.allFinite())
            throw std::invalid_argument("Dataset: non-finite values");
        if ((noise_stddev.array() < 0.0).any())
            throw std::invalid_argument("Dataset: noise stddev must be nonnegative");
    }
};

// CSV interchange: header z_1,...,z_{n_z},y_1,...,y_n
inline void write_dataset_csv(const Dataset& data, std::ostream& os) {
    const Eigen::Index nz = data.input_dim(), n = data.output_dim();
    for (Eigen::Index j = 0; j < nz; ++j) os << (j ? "," : "") << "z_" << (j + 1);
    for (Eigen::Index j = 0; j < n; ++j) os << ",y_" << (j + 1);
    os << "\n";
    os.precision(17);
    for (Eigen::Index i = 0; i < data.size(); ++i) {
        for (Eigen::Index j = 0; j < nz; ++j) os << (j ? "," : "") << data.inputs(i, j);
        for (Eigen::Index j = 0; j < n; ++j) os << "," << data.targets(i, j);
        os << "\n";
    }
}

inline Dataset read_dataset_csv(std::istream& is, const VectorXd& noise_stddev) {
    std::string line;
    if (!std::getline(is, line)) throw SchemaMismatch("dataset CSV: missing header");
    Eigen::Index nz = 0, n = 0;
    {
        std::stringstream ss(line);
        std::string col;
        while (std::getline(ss, col, ',')) {
            if (col.rfind("z_", 0) == 0) ++nz;
            else if (col.rfind("y_", 0) == 0) ++n;
            else throw SchemaMismatch("dataset CSV: unexpected column '" + col + "'");
        }
    }
    std::vector<double> values;
    Eigen::Index rows = 0;
    while (std::getline(is, line)) {
        if (line.empty()) continue;
        std::stringstream ss(line);
        std::string cell;
        Eigen::Index c = 0;
        while (std::getline(ss, cell, ',')) {
            values.push_back(std::stod(cell));
            ++c;
        }
        if (c != nz + n) throw SchemaMismatch("dataset CSV: row with wrong column count");
        ++rows;
    }
    Dataset data;
    data.inputs.resize(rows, nz);
    data.targets.resize(rows, n);
    for (Eigen::Index i = 0; i < rows; ++i) {
        for (Eigen::Index j = 0; j < nz; ++j) data.inputs(i, j) = values[i * (nz + n) + j];
        for (Eigen::Index j = 0; j < n; ++j) data.targets(i, j) = values[i * (nz + n) + nz + j];
    }
    data.noise_stddev = noise_stddev;
    data.validate();
    return data;
}

// ============================================================================
// Fitted model (one output dimension)
// ============================================================================

struct FitConfig {
    int multistarts = 5;
    int max_iterations = 200;
    double gradient_tolerance = 1e-6;
    std::optional<double> fixed_noise_stddev;  // fit sigma_n unless set
    std::uint64_t seed = 0;
    double stagnation_tolerance = 1e-10;  // relative log-likelihood improvement
};

struct FitReport {
    bool converged = false;
    int iterations = 0;
    double gradient_norm = 0.0;
    double log_marginal_likelihood = -std::numeric_limits<double>::infinity();
};

// hyperparameter floors guarding against degenerate fits
inline constexpr double kMinOutputVariance = 1e-8;
inline constexpr double kMinLengthscale = 1e-4;
inline constexpr double kMinNoiseVariance = 1e-10;

class GpModel {
  public:
    GpModel() = default;

    // prior-only model (no data)
    static GpModel prior(SeKernel kernel, double noise_variance) {
        GpModel m;
        m.kernel_ = std::move(kernel);
        m.noise_variance_ = noise_variance;
        m.inputs_ = std::make_shared<MatrixXd>(0, m.kernel_.input_dim());
        return m;
    }

    static GpModel condition(SeKernel kernel, double noise_variance,
                             std::shared_ptr<const MatrixXd> inputs, const VectorXd& targets) {
        GpModel m;
        m.kernel_ = std::move(kernel);
        m.noise_variance_ = noise_variance;
        m.inputs_ = std::move(inputs);
        const Eigen::Index n = m.inputs_->rows();
        if (targets.size() != n)
            throw DimensionMismatch("GpModel::condition: target size does not match inputs");
        if (n == 0) return m;
        SymMatrix gram = SymMatrix::from_full(m.gram_matrix());
        m.gram_factor_ = num::cholesky_factor(gram);
        m.alpha_ = m.gram_factor_.solve(targets);
        m.targets_ = targets;
        return m;
    }

    const SeKernel& kernel() const { return kernel_; }
    double noise_variance() const { return noise_variance_; }
    const MatrixXd& inputs() const { return *inputs_; }
    std::shared_ptr<const MatrixXd> inputs_ptr() const { return inputs_; }
    const VectorXd& alpha() const { return alpha_; }
    const VectorXd& targets() const { return targets_; }
    const num::CholeskyFactor& gram_factor() const { return gram_factor_; }
    Eigen::Index data_size() const { return inputs_ ? inputs_->rows() : 0; }
    Eigen::Index input_dim() const { return kernel_.input_dim(); }

    FitReport fit_report;

    MatrixXd gram_matrix() const {
        const MatrixXd& x = *inputs_;
        const Eigen::Index n = x.rows();
        MatrixXd k(n, n);
        for (Eigen::Index i = 0; i < n; ++i) {
            k(i, i) = kernel_.output_variance + noise_variance_;
            for (Eigen::Index j = 0; j < i; ++j) {
                double v = kernel_(x.row(i).transpose(), x.row(j).transpose());
                k(i, j) = v;
                k(j, i) = v;
            }
        }
        return k;
    }

  private:
    SeKernel kernel_;
    double noise_variance_ = 1e-4;
    std::shared_ptr<const MatrixXd> inputs_;
    VectorXd alpha_;
    VectorXd targets_;
    num::CholeskyFactor gram_factor_;
};

// ============================================================================
// Posterior prediction
// ============================================================================

struct Prediction {
    double mean = 0.0;
    double variance = 0.0;
};

inline Prediction posterior_predict(const GpModel& model, const VectorXd& z_star) {
    if (z_star.size() != model.input_dim())
        throw DimensionMismatch("posterior_predict: point dimension does not match model");
    const Eigen::Index n = model.data_size();
    if (n == 0) return Prediction{0.0, model.kernel().output_variance};
    VectorXd k_star(n);
    for (Eigen::Index i = 0; i < n; ++i)
        k_star(i) = model.kernel()(model.inputs().row(i).transpose(), z_star);
    double mean = k_star.dot(model.alpha());
    VectorXd solved = model.gram_factor().solve(k_star);
    double variance = model.kernel().output_variance - k_star.dot(solved);
    if (variance < 0.0) variance = 0.0;
    return Prediction{mean, variance};
}

struct DerivativePrediction {
    VectorXd mean;        // mu'
    SymMatrix covariance; // Sigma', eigenvalue-floored at zero
};

inline DerivativePrediction posterior_derivative(const GpModel& model, const VectorXd& z_star) {
    if (z_star.size() != model.input_dim())
        throw DimensionMismatch("posterior_derivative: point dimension does not match model");
    const Eigen::Index nz = model.input_dim();
    const Eigen::Index n = model.data_size();
    VectorXd inv_l2 = model.kernel().lengthscales.array().square().inverse();
    MatrixXd prior_cov = (model.kernel().output_variance * inv_l2).asDiagonal();

    DerivativePrediction out;
    if (n == 0) {
        out.mean = VectorXd::Zero(nz);
        out.covariance = SymMatrix::from_full(prior_cov);
        return out;
    }

    // D is n_z x N; column i is the gradient of k(z*, z^(i)) in z*
    MatrixXd d(nz, n);
    for (Eigen::Index i = 0; i < n; ++i) {
        VectorXd diff = z_star - model.inputs().row(i).transpose();
        double k = model.kernel().output_variance *
                   std::exp(-0.5 * diff.dot(inv_l2.cwiseProduct(diff)));
        d.col(i) = -inv_l2.cwiseProduct(diff) * k;
    }
    out.mean = d * model.alpha();
    MatrixXd solved = model.gram_factor().solve(d.transpose());
    MatrixXd cov = prior_cov - d * solved;

    // symmetrize and floor tiny negative eigenvalues at zero
    SymMatrix sym = SymMatrix::from_full(cov);
    num::SymEig eig = num::sym_eig(sym);
    if (eig.eigenvalues.minCoeff() < 0.0) {
        VectorXd floored = eig.eigenvalues.cwiseMax(0.0);
        cov = eig.eigenvectors * floored.asDiagonal() * eig.eigenvectors.transpose();
        sym = SymMatrix::from_full(cov);
    }
    out.covariance = sym;
    return out;
}

// ============================================================================
// Marginal likelihood and hyperparameter fitting
// ============================================================================

namespace detail {

// parameter vector layout: [log sigma_eta^2, log l_1..log l_nz, (log sigma_n^2)]
struct LogParams {
    VectorXd v;
    bool fit_noise = true;
    Eigen::Index nz = 0;

    double output_variance() const { return std::exp(v(0)); }
    VectorXd lengthscales() const { return v.segment(1, nz).array().exp(); }
    double noise_variance(double fixed) const {
        return fit_noise ? std::exp(v(1 + nz)) : fixed;
    }

    void apply_floors() {
        v(0) = std::max(v(0), std::log(kMinOutputVariance));
        for (Eigen::Index j = 0; j < nz; ++j)
            v(1 + j) = std::max(v(1 + j), std::log(kMinLengthscale));
        if (fit_noise) v(1 + nz) = std::max(v(1 + nz), std::log(kMinNoiseVariance));
    }
};

struct LikelihoodEval {
    double value = -std::numeric_limits<double>::infinity();
    VectorXd gradient;
    bool ok = false;
};

// L(theta) = -1/2 y^T Kb^-1 y - 1/2 log det Kb - N/2 log 2pi,
// dL/dtheta_j = 1/2 tr((alpha alpha^T - Kb^-1) dKb/dtheta_j)
inline LikelihoodEval eval_likelihood(const MatrixXd& x, const VectorXd& y, const LogParams& p,
                                      double fixed_noise_var, bool want_gradient) {
    const Eigen::Index n = x.rows();
    const Eigen::Index nz = x.cols();
    LikelihoodEval out;

    double sf2 = p.output_variance();
    VectorXd ls = p.lengthscales();
    double sn2 = p.noise_variance(fixed_noise_var);

    MatrixXd kb(n, n);
    for (Eigen::Index i = 0; i < n; ++i) {
        kb(i, i) = sf2 + sn2;
        for (Eigen::Index j = 0; j < i; ++j) {
            double q = 0.0;
            for (Eigen::Index t = 0; t < nz; ++t) {
                double dd = (x(i, t) - x(j, t)) / ls(t);
                q += dd * dd;
            }
            double v = sf2 * std::exp(-0.5 * q);
            kb(i, j) = v;
            kb(j, i) = v;
        }
    }

    Eigen::LLT<MatrixXd> llt(kb);
    if (llt.info() != Eigen::Success) return out;
    MatrixXd l = llt.matrixL();
    if (l.diagonal().minCoeff() <= 0.0) return out;

    VectorXd alpha = llt.solve(y);
    double log_det = 2.0 * l.diagonal().array().log().sum();
    out.value = -0.5 * y.dot(alpha) - 0.5 * log_det -
                0.5 * static_cast<double>(n) * std::log(2.0 * M_PI);
    out.ok = true;
    if (!want_gradient) return out;

    MatrixXd kinv = llt.solve(MatrixXd::Identity(n, n));
    MatrixXd g = alpha * alpha.transpose() - kinv;  // dL/dKb = g/2

    const Eigen::Index np = p.v.size();
    out.gradient = VectorXd::Zero(np);
    // d Kb / d log sf2 = K (noise-free part)
    double acc = 0.0;
    for (Eigen::Index i = 0; i < n; ++i)
        for (Eigen::Index j = 0; j < n; ++j) {
            double kf = kb(i, j) - ((i == j) ? sn2 : 0.0);
            acc += g(i, j) * kf;
        }
    out.gradient(0) = 0.5 * acc;
    // d Kb / d log l_t = K o (d_t^2 / l_t^2)
    for (Eigen::Index t = 0; t < nz; ++t) {
        double a = 0.0;
        for (Eigen::Index i = 0; i < n; ++i)
            for (Eigen::Index j = 0; j < n; ++j) {
                if (i == j) continue;
                double kf = kb(i, j);
                double dd = (x(i, t) - x(j, t)) / ls(t);
                a += g(i, j) * kf * dd * dd;
            }
        out.gradient(1 + t) = 0.5 * a;
    }
    if (p.fit_noise) out.gradient(1 + nz) = 0.5 * sn2 * g.trace();
    return out;
}

} // namespace detail

// Gradient-based ascent of the marginal log-likelihood over log-parameters
// with Armijo backtracking and multi-starts; the first start is a data-scale
// heuristic, the rest draw log-uniformly around the data scales.
inline GpModel fit_hyperparameters(const Dataset& data, Eigen::Index output_index,
                                   const FitConfig& config = {}) {
    data.validate();
    if (output_index < 0 || output_index >= data.output_dim())
        throw std::invalid_argument("fit_hyperparameters: output index out of range");
    if (data.size() < 2) throw std::invalid_argument("fit_hyperparameters: need at least 2 points");

    const MatrixXd& x = data.inputs;
    VectorXd y = data.targets.col(output_index);
    const Eigen::Index nz = x.cols();

    const bool fit_noise = !config.fixed_noise_stddev.has_value();
    double fixed_noise_var = fit_noise ? 0.0
                                       : config.fixed_noise_stddev.value() *
                                             config.fixed_noise_stddev.value();

    double y_var = (y.array() - y.mean()).square().sum() / std::max<double>(1, y.size() - 1);
    if (y_var == 0.0 && fit_noise)
        throw DegenerateData("fit_hyperparameters: constant targets with free noise");

    VectorXd x_scale(nz);
    for (Eigen::Index j = 0; j < nz; ++j) {
        double mu = x.col(j).mean();
        double sd = std::sqrt((x.col(j).array() - mu).square().sum() /
                              std::max<double>(1, x.rows() - 1));
        x_scale(j) = std::max(sd, 1e-2);
    }
    double y_scale = std::max(y_var, 1e-6);

    Rng rng(config.seed ^ 0x5dc0f17ULL);

    detail::LogParams best;
    double best_value = -std::numeric_limits<double>::infinity();
    FitReport best_report;

    const int starts = std::max(1, config.multistarts);
    for (int s = 0; s < starts; ++s) {
        detail::LogParams p;
        p.fit_noise = fit_noise;
        p.nz = nz;
        p.v.resize(1 + nz + (fit_noise ? 1 : 0));
        if (s == 0) {
            p.v(0) = std::log(y_scale);
            for (Eigen::Index j = 0; j < nz; ++j) p.v(1 + j) = std::log(x_scale(j));
            if (fit_noise) p.v(1 + nz) = std::log(0.1 * y_scale + 1e-12);
        } else {
            p.v(0) = std::log(y_scale * rng.log_uniform(1e-2, 1e2));
            for (Eigen::Index j = 0; j < nz; ++j)
                p.v(1 + j) = std::log(x_scale(j) * rng.log_uniform(1e-2, 1e2));
            if (fit_noise) p.v(1 + nz) = std::log(y_scale * rng.log_uniform(1e-4, 1.0));
        }
        p.apply_floors();

        detail::LikelihoodEval cur = detail::eval_likelihood(x, y, p, fixed_noise_var, true);
        if (!cur.ok) continue;

        FitReport report;
        int it = 0;
        bool stalled = false;
        double step0 = 1.0;  // grows on acceptance so poorly scaled modes still move
        for (; it < config.max_iterations && !stalled; ++it) {
            report.gradient_norm = cur.gradient.norm();
            if (report.gradient_norm <= config.gradient_tolerance) {
                report.converged = true;
                break;
            }
            // Armijo backtracking along the gradient
            double step = step0;
            bool accepted = false;
            double g2 = cur.gradient.squaredNorm();
            for (int ls = 0; ls < 40; ++ls) {
                detail::LogParams trial = p;
                trial.v += step * cur.gradient;
                trial.apply_floors();
                detail::LikelihoodEval ev =
                    detail::eval_likelihood(x, y, trial, fixed_noise_var, false);
                if (ev.ok && ev.value >= cur.value + 1e-4 * step * g2) {
                    double rel_gain = (ev.value - cur.value) / (1.0 + std::abs(cur.value));
                    p = trial;
                    cur = detail::eval_likelihood(x, y, p, fixed_noise_var, true);
                    accepted = true;
                    stalled = rel_gain < config.stagnation_tolerance;
                    step0 = std::min(step * 2.0, 1e4);
                    break;
                }
                step *= 0.5;
            }
            if (!accepted) break;  // no ascent direction progress at the floors
        }
        report.iterations = it;
        report.gradient_norm = cur.gradient.norm();
        report.log_marginal_likelihood = cur.value;

        if (cur.value > best_value) {
            best_value = cur.value;
            best = p;
            best_report = report;
        }
    }

    if (!std::isfinite(best_value))
        throw NoConvergence("fit_hyperparameters: likelihood evaluation failed for all starts");

    SeKernel kernel;
    kernel.output_variance = best.output_variance();
    kernel.lengthscales = best.lengthscales();
    double noise_var = best.noise_variance(fixed_noise_var);

    auto inputs = std::make_shared<MatrixXd>(x);
    GpModel model = GpModel::condition(std::move(kernel), noise_var, inputs, y);
    model.fit_report = best_report;
    return model;
}

} // namespace sdc::gp
