#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <stdexcept>
#include <string>

namespace rsc {

enum class Method { Ols, Ridge, Lasso };

inline std::string method_name(Method m) {
  switch (m) {
    case Method::Ols: return "ols";
    case Method::Ridge: return "ridge";
    default: return "lasso";
  }
}

struct LassoOptions {
  int max_iters = 100000;
  double tol = 1e-10;  // stop when the largest coordinate change falls below
};

struct RegressionConfig {
  Method method = Method::Ols;
  double eta = 0.0;               // ignored for OLS
  double pinv_tolerance = 1e-10;  // relative singular-value cutoff
  LassoOptions lasso;
};

/// Donor coefficients from one regression fit.
struct Weights {
  Eigen::VectorXd beta;
  Method method = Method::Ols;
  double eta = 0.0;
  bool converged = true;  // only lasso can fail to converge
  int iterations = 0;
};

namespace detail {
inline void check_fit_shapes(const Eigen::MatrixXd& m_hat_pre, const Eigen::VectorXd& y1_pre) {
  if (m_hat_pre.cols() != y1_pre.size())
    throw std::invalid_argument("design columns must match target length");
  if (m_hat_pre.rows() < 1 || m_hat_pre.cols() < 1)
    throw std::invalid_argument("empty regression system");
}
}  // namespace detail

/// Minimum-norm least squares: beta = pinv(m_hat_pre^T) * y1_pre, dropping
/// singular values below pinv_tolerance * s_max.
inline Weights fit_ols(const Eigen::MatrixXd& m_hat_pre, const Eigen::VectorXd& y1_pre,
                       double pinv_tolerance = 1e-10) {
  detail::check_fit_shapes(m_hat_pre, y1_pre);
  Eigen::BDCSVD<Eigen::MatrixXd> svd(m_hat_pre.transpose(),
                                     Eigen::ComputeThinU | Eigen::ComputeThinV);
  svd.setThreshold(pinv_tolerance);
  Weights w;
  w.beta = svd.solve(y1_pre);
  w.method = Method::Ols;
  return w;
}

/// Closed-form ridge solution (gram + eta*I)^-1 * m_hat_pre * y1_pre.
/// eta = 0 with a singular gram matrix falls back to fit_ols.
inline Weights fit_ridge(const Eigen::MatrixXd& m_hat_pre, const Eigen::VectorXd& y1_pre,
                         double eta, double pinv_tolerance = 1e-10) {
  detail::check_fit_shapes(m_hat_pre, y1_pre);
  if (eta < 0.0) throw std::invalid_argument("ridge eta must be nonnegative");
  const Eigen::MatrixXd gram = m_hat_pre * m_hat_pre.transpose();
  const Eigen::VectorXd rhs = m_hat_pre * y1_pre;
  Weights w;
  w.method = Method::Ridge;
  w.eta = eta;
  if (eta == 0.0) {
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(gram);
    const double lmax = es.eigenvalues().cwiseAbs().maxCoeff();
    if (lmax <= 0.0 || es.eigenvalues().minCoeff() <= 1e-12 * lmax) {
      Weights fallback = fit_ols(m_hat_pre, y1_pre, pinv_tolerance);
      w.beta = std::move(fallback.beta);
      return w;
    }
  }
  Eigen::MatrixXd reg = gram;
  reg.diagonal().array() += eta;
  w.beta = Eigen::LLT<Eigen::MatrixXd>(reg).solve(rhs);
  return w;
}

/// Cyclic coordinate descent for ||y - m_hat_pre^T v||^2 + eta * ||v||_1.
/// The penalty is unscaled (no 1/2 factor), so each coordinate update
/// soft-thresholds at eta / 2.
inline Weights fit_lasso(const Eigen::MatrixXd& m_hat_pre, const Eigen::VectorXd& y1_pre,
                         double eta, const RegressionConfig& cfg = {}) {
  detail::check_fit_shapes(m_hat_pre, y1_pre);
  if (eta <= 0.0) throw std::invalid_argument("lasso eta must be positive");
  const Eigen::Index d = m_hat_pre.rows();
  Eigen::VectorXd col_sq(d);
  for (Eigen::Index j = 0; j < d; ++j) col_sq(j) = m_hat_pre.row(j).squaredNorm();

  Weights w;
  w.method = Method::Lasso;
  w.eta = eta;
  w.beta = Eigen::VectorXd::Zero(d);
  Eigen::VectorXd residual = y1_pre;

  const double lambda = 0.5 * eta;
  int sweep = 0;
  for (; sweep < cfg.lasso.max_iters; ++sweep) {
    double max_change = 0.0;
    for (Eigen::Index j = 0; j < d; ++j) {
      if (col_sq(j) == 0.0) continue;
      const double old = w.beta(j);
      const double rho = m_hat_pre.row(j).dot(residual) + col_sq(j) * old;
      double next = 0.0;
      if (rho > lambda)
        next = (rho - lambda) / col_sq(j);
      else if (rho < -lambda)
        next = (rho + lambda) / col_sq(j);
      if (next != old) {
        residual -= (next - old) * m_hat_pre.row(j).transpose();
        w.beta(j) = next;
        max_change = std::max(max_change, std::abs(next - old));
      }
    }
    if (max_change < cfg.lasso.tol) {
      w.iterations = sweep + 1;
      return w;
    }
  }
  w.iterations = sweep;
  w.converged = false;  // reported, not fatal
  return w;
}

inline Weights fit_with(const Eigen::MatrixXd& m_hat_pre, const Eigen::VectorXd& y1_pre,
                        const RegressionConfig& cfg) {
  switch (cfg.method) {
    case Method::Ols: return fit_ols(m_hat_pre, y1_pre, cfg.pinv_tolerance);
    case Method::Ridge: return fit_ridge(m_hat_pre, y1_pre, cfg.eta, cfg.pinv_tolerance);
    default: return fit_lasso(m_hat_pre, y1_pre, cfg.eta, cfg);
  }
}

namespace detail {

// Fits using the factored design W = V S / p for a de-noised matrix
// M = U S V^T / p with orthonormal U. Predictions agree exactly with the
// dense OLS/ridge fits because the design's column space is unchanged:
//   ols:   pinv(W_t U^T) = U pinv(W_t)
//   ridge: (U W_t^T W_t U^T + eta I)^-1 U = U (W_t^T W_t + eta I)^-1
inline double forward_chain_mse_factored(const Eigen::MatrixXd& w_factor,
                                         const Eigen::VectorXd& y1_pre,
                                         const RegressionConfig& cfg, Eigen::Index min_train) {
  const Eigen::Index pre_len = w_factor.rows();
  double total = 0.0;
  Eigen::Index folds = 0;
  for (Eigen::Index t = min_train; t < pre_len; ++t) {
    const auto design = w_factor.topRows(t);
    Eigen::VectorXd gamma;
    if (cfg.method == Method::Ridge && cfg.eta > 0.0) {
      Eigen::MatrixXd gram = design.transpose() * design;
      gram.diagonal().array() += cfg.eta;
      gamma = Eigen::LLT<Eigen::MatrixXd>(gram).solve(design.transpose() * y1_pre.head(t));
    } else {
      Eigen::BDCSVD<Eigen::MatrixXd> svd(design, Eigen::ComputeThinU | Eigen::ComputeThinV);
      svd.setThreshold(cfg.pinv_tolerance);
      gamma = svd.solve(y1_pre.head(t));
    }
    const double err = w_factor.row(t).dot(gamma) - y1_pre(t);
    total += err * err;
    ++folds;
  }
  return total / static_cast<double>(folds);
}

}  // namespace detail

/// Forward-chaining validation error: for each t past min_train, fit on
/// columns [0, t) and score the squared error predicting y at t. Training
/// always precedes validation in time.
inline double forward_chain_mse(const Eigen::MatrixXd& m_hat_pre, const Eigen::VectorXd& y1_pre,
                                const RegressionConfig& cfg, Eigen::Index min_train) {
  detail::check_fit_shapes(m_hat_pre, y1_pre);
  const Eigen::Index pre_len = m_hat_pre.cols();
  if (min_train < 1 || min_train >= pre_len)
    throw std::invalid_argument("min_train must satisfy 1 <= min_train < T0");
  double total = 0.0;
  Eigen::Index folds = 0;
  for (Eigen::Index t = min_train; t < pre_len; ++t) {
    const Weights w = fit_with(m_hat_pre.leftCols(t), y1_pre.head(t), cfg);
    const double pred = m_hat_pre.col(t).dot(w.beta);
    const double err = pred - y1_pre(t);
    total += err * err;
    ++folds;
  }
  return total / static_cast<double>(folds);
}

}  // namespace rsc
