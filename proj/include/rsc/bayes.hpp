#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <stdexcept>

#include "rsc/learners.hpp"

namespace rsc {

/// Zero-mean isotropic Gaussian prior on the donor weights: beta ~ N(0, I/alpha).
struct GaussianPrior {
  double alpha = 1.0;
  bool flagged_degenerate_eta = false;  // set when alpha had to be floored
};

struct Posterior {
  Eigen::VectorXd mean;  // beta_D
  Eigen::MatrixXd cov;   // Sigma_D, symmetric positive definite
  double sigma2_hat = 0.0;
  bool sigma2_floored = false;
};

struct PredictivePoint {
  double mean;
  double variance;  // always >= sigma2_hat
};

namespace detail {

// SPD inverse via Cholesky; eigendecomposition with a 1e-12 eigenvalue floor
// if the factorization fails.
inline Eigen::MatrixXd spd_inverse(const Eigen::MatrixXd& a) {
  const Eigen::Index n = a.rows();
  Eigen::LLT<Eigen::MatrixXd> llt(a);
  Eigen::MatrixXd inv;
  if (llt.info() == Eigen::Success) {
    inv = llt.solve(Eigen::MatrixXd::Identity(n, n));
  } else {
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(a);
    const Eigen::VectorXd floored = es.eigenvalues().cwiseMax(1e-12);
    inv = es.eigenvectors() * floored.cwiseInverse().asDiagonal() *
          es.eigenvectors().transpose();
  }
  return 0.5 * (inv + inv.transpose());
}

inline double floor_sigma2(double sigma2_hat, bool* floored) {
  if (sigma2_hat > 0.0 && std::isfinite(sigma2_hat)) return sigma2_hat;
  if (floored) *floored = true;
  return 1e-12;
}

}  // namespace detail

/// Posterior over the donor weights given the de-noised pre-intervention
/// block: Sigma_D = ((1/s2) M M^T + alpha I)^-1, beta_D = (1/s2) Sigma_D M y.
inline Posterior fit_posterior(const Eigen::MatrixXd& m_hat_pre, const Eigen::VectorXd& y1_pre,
                               const GaussianPrior& prior, double sigma2_hat) {
  detail::check_fit_shapes(m_hat_pre, y1_pre);
  if (prior.alpha <= 0.0) throw std::invalid_argument("prior alpha must be positive");
  if (!m_hat_pre.allFinite() || !y1_pre.allFinite())
    throw std::invalid_argument("non-finite inputs to fit_posterior");

  Posterior post;
  post.sigma2_hat = detail::floor_sigma2(sigma2_hat, &post.sigma2_floored);
  Eigen::MatrixXd precision = m_hat_pre * m_hat_pre.transpose() / post.sigma2_hat;
  precision.diagonal().array() += prior.alpha;
  post.cov = detail::spd_inverse(precision);
  post.mean = post.cov * (m_hat_pre * y1_pre) / post.sigma2_hat;
  return post;
}

/// MAP point estimate; coincides with ridge regression at eta = alpha * sigma2.
inline Weights map_estimate(const Eigen::MatrixXd& m_hat_pre, const Eigen::VectorXd& y1_pre,
                            const GaussianPrior& prior, double sigma2_hat) {
  const Posterior post = fit_posterior(m_hat_pre, y1_pre, prior, sigma2_hat);
  Weights w;
  w.beta = post.mean;
  w.method = Method::Ridge;
  w.eta = prior.alpha * post.sigma2_hat;
  return w;
}

/// Predictive distribution at one time instance given the de-noised donor
/// column there.
inline PredictivePoint predictive(const Eigen::VectorXd& m_hat_col, const Posterior& post) {
  if (m_hat_col.size() != post.mean.size())
    throw std::invalid_argument("column length does not match posterior dimension");
  PredictivePoint p;
  p.mean = m_hat_col.dot(post.mean);
  p.variance = post.sigma2_hat + m_hat_col.dot(post.cov * m_hat_col);
  return p;
}

/// alpha = eta / sigma2, the prior matching a forward-chained ridge eta.
/// eta <= 0 yields an improper prior; substitute a tiny alpha and flag it.
inline GaussianPrior choose_alpha_from_cv(double eta_cv, double sigma2_hat) {
  if (sigma2_hat <= 0.0) throw std::invalid_argument("sigma2_hat must be positive");
  GaussianPrior prior;
  if (eta_cv <= 0.0) {
    prior.alpha = 1e-8;
    prior.flagged_degenerate_eta = true;
  } else {
    prior.alpha = eta_cv / sigma2_hat;
  }
  return prior;
}

}  // namespace rsc
