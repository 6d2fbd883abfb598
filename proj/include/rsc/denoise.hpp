#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <limits>
#include <stdexcept>
#include <vector>

#include "rsc/learners.hpp"
#include "rsc/panel.hpp"

namespace rsc {

/// How the singular value threshold mu is picked.
struct ThresholdRule {
  enum class Kind { FixedRank, FixedValue, Universal, ForwardChainCV };

  Kind kind = Kind::Universal;
  int rank = 0;        // FixedRank
  double mu = 0.0;     // FixedValue
  double omega = 0.5;  // Universal, must lie in (0.1, 1)
  std::vector<int> rank_candidates;  // ForwardChainCV
  RegressionConfig learner;          // ForwardChainCV downstream fit
  Eigen::Index min_train = 5;        // ForwardChainCV

  static ThresholdRule fixed_rank(int k) {
    ThresholdRule r;
    r.kind = Kind::FixedRank;
    r.rank = k;
    return r;
  }
  static ThresholdRule fixed_value(double mu) {
    ThresholdRule r;
    r.kind = Kind::FixedValue;
    r.mu = mu;
    return r;
  }
  static ThresholdRule universal(double omega) {
    ThresholdRule r;
    r.kind = Kind::Universal;
    r.omega = omega;
    return r;
  }
  static ThresholdRule forward_chain(std::vector<int> candidates, RegressionConfig learner = {},
                                     Eigen::Index min_train = 5) {
    ThresholdRule r;
    r.kind = Kind::ForwardChainCV;
    r.rank_candidates = std::move(candidates);
    r.learner = learner;
    r.min_train = min_train;
    return r;
  }
};

struct KeptSingular {
  int index;     // 0-based position in the descending spectrum
  double value;  // singular value of Y, before the 1/p_hat rescale
};

/// Low-rank estimate of the donor mean matrix plus the quantities that
/// produced it.
struct DenoisedMatrix {
  Eigen::MatrixXd m_hat;  // (N-1) x T
  std::vector<KeptSingular> kept;
  double p_hat = 1.0;
  double sigma2_hat = std::numeric_limits<double>::quiet_NaN();  // NaN when T0 < 2
  double mu_used = 0.0;
  bool empty_set = false;  // mu exceeded every singular value
};

/// Observed fraction of the donor block, floored at 1/((N-1)*T).
inline double estimate_p_hat(const PanelMatrix& panel) {
  const auto total = static_cast<double>(panel.donors.size());
  const double observed = static_cast<double>(panel.mask.count());
  return std::max(observed / total, 1.0 / total);
}

/// Bias-corrected sample variance of the treated unit's pre-intervention row.
inline double estimate_sigma2_hat(const PanelMatrix& panel) {
  if (panel.t0 < 2)
    throw std::invalid_argument("sigma2 estimate needs at least 2 pre-intervention periods");
  const auto pre = panel.treated.head(panel.t0);
  const double mean = pre.mean();
  return (pre.array() - mean).square().sum() / static_cast<double>(panel.t0 - 1);
}

/// mu = (2 + omega) * sqrt(horizon * (sigma2 * p + p * (1 - p))).
inline double universal_threshold(double sigma2_hat, double p_hat, double horizon, double omega) {
  if (omega <= 0.1 || omega >= 1.0)
    throw std::invalid_argument("omega must lie in (0.1, 1)");
  if (p_hat <= 0.0 || p_hat > 1.0) throw std::invalid_argument("p_hat must lie in (0, 1]");
  return (2.0 + omega) * std::sqrt(horizon * (sigma2_hat * p_hat + p_hat * (1.0 - p_hat)));
}

/// Mean squared entrywise difference.
inline double matrix_mse(const Eigen::MatrixXd& m_hat, const Eigen::MatrixXd& m_true) {
  if (m_hat.rows() != m_true.rows() || m_hat.cols() != m_true.cols())
    throw std::invalid_argument("matrix_mse: shape mismatch");
  return (m_hat - m_true).squaredNorm() / static_cast<double>(m_hat.size());
}

namespace detail {

struct Spectrum {
  Eigen::MatrixXd u;
  Eigen::VectorXd s;  // descending
  Eigen::MatrixXd v;
};

inline Spectrum decompose(const Eigen::MatrixXd& y) {
  Eigen::BDCSVD<Eigen::MatrixXd> svd(y, Eigen::ComputeThinU | Eigen::ComputeThinV);
  Spectrum sp{svd.matrixU(), svd.singularValues(), svd.matrixV()};
  // Deterministic orientation: first nonzero left component nonnegative.
  for (Eigen::Index i = 0; i < sp.u.cols(); ++i) {
    for (Eigen::Index r = 0; r < sp.u.rows(); ++r) {
      if (sp.u(r, i) == 0.0) continue;
      if (sp.u(r, i) < 0.0) {
        sp.u.col(i) = -sp.u.col(i);
        sp.v.col(i) = -sp.v.col(i);
      }
      break;
    }
  }
  return sp;
}

// Threshold sitting between the k-th singular value and the next one so that
// S = {i : s_i >= mu} keeps exactly the top k (ties at the boundary stay in).
inline double mu_below_rank(const Eigen::VectorXd& s, int k) {
  int nonzero = 0;
  for (Eigen::Index i = 0; i < s.size(); ++i)
    if (s(i) > 0.0) ++nonzero;
  const int kk = std::min(k, nonzero);  // oversized k keeps all nonzero values
  if (kk == 0) return s.size() > 0 ? s(0) + 1.0 : 1.0;
  const double at_k = s(kk - 1);
  const double below = kk < s.size() ? s(kk) : 0.0;
  return below < at_k ? 0.5 * (at_k + below) : at_k;
}

inline Eigen::MatrixXd reconstruct(const Spectrum& sp, double mu, double p_hat,
                                   std::vector<KeptSingular>* kept) {
  Eigen::MatrixXd m_hat = Eigen::MatrixXd::Zero(sp.u.rows(), sp.v.rows());
  for (Eigen::Index i = 0; i < sp.s.size(); ++i) {
    if (sp.s(i) < mu) continue;
    m_hat.noalias() += (sp.s(i) / p_hat) * sp.u.col(i) * sp.v.col(i).transpose();
    if (kept) kept->push_back({static_cast<int>(i), sp.s(i)});
  }
  return m_hat;
}

// Resolves the threshold for the non-search rules given a spectrum.
inline double resolve_mu(const ThresholdRule& rule, const Eigen::VectorXd& s, double p_hat,
                         double sigma2_hat, double horizon) {
  switch (rule.kind) {
    case ThresholdRule::Kind::FixedValue:
      if (rule.mu < 0.0) throw std::invalid_argument("mu must be nonnegative");
      return rule.mu;
    case ThresholdRule::Kind::FixedRank:
      if (rule.rank < 1) throw std::invalid_argument("rank must be positive");
      return mu_below_rank(s, rule.rank);
    case ThresholdRule::Kind::Universal:
      return universal_threshold(sigma2_hat, p_hat, horizon, rule.omega);
    default:
      throw std::invalid_argument("forward-chain rule needs the panel overload");
  }
}

}  // namespace detail

/// De-noise a bare zero-filled matrix with externally supplied p_hat and
/// sigma2_hat. Universal rules use the matrix's own column count as the
/// horizon; ForwardChainCV needs the treated series and is only available
/// through the panel overload.
inline DenoisedMatrix svt_denoise(const Eigen::MatrixXd& y, const ThresholdRule& rule,
                                  double p_hat,
                                  double sigma2_hat = std::numeric_limits<double>::quiet_NaN()) {
  const detail::Spectrum sp = detail::decompose(y);
  DenoisedMatrix out;
  out.p_hat = p_hat;
  out.sigma2_hat = sigma2_hat;
  out.mu_used =
      detail::resolve_mu(rule, sp.s, p_hat, sigma2_hat, static_cast<double>(y.cols()));
  out.m_hat = detail::reconstruct(sp, out.mu_used, p_hat, &out.kept);
  out.empty_set = out.kept.empty();
  return out;
}

/// Algorithm step one: SVD of the zero-filled donor matrix, keep singular
/// values at or above the resolved threshold, rescale by 1/p_hat. Values are
/// not clamped. An empty kept set yields the zero matrix, flagged.
inline DenoisedMatrix svt_denoise(const PanelMatrix& panel, const ThresholdRule& rule) {
  const double p_hat = estimate_p_hat(panel);
  const double sigma2_hat = panel.t0 >= 2 ? estimate_sigma2_hat(panel)
                                          : std::numeric_limits<double>::quiet_NaN();
  if (rule.kind != ThresholdRule::Kind::ForwardChainCV)
    return svt_denoise(panel.donors, rule, p_hat, sigma2_hat);

  if (panel.t0 < 3)
    throw std::invalid_argument("forward-chain threshold selection needs T0 >= 3");
  if (rule.rank_candidates.empty()) throw std::invalid_argument("no rank candidates given");

  const detail::Spectrum sp = detail::decompose(panel.donors);
  const Eigen::Index min_train = std::min<Eigen::Index>(rule.min_train, panel.t0 - 1);
  const Eigen::VectorXd y_pre = panel.treated.head(panel.t0);
  const bool factorable =
      rule.learner.method == Method::Ols || rule.learner.method == Method::Ridge;
  double best_err = std::numeric_limits<double>::infinity();
  int best_rank = rule.rank_candidates.front();
  for (int k : rule.rank_candidates) {
    if (k < 1) throw std::invalid_argument("rank candidates must be positive");
    const double mu_k = detail::mu_below_rank(sp.s, k);
    Eigen::Index kept_k = 0;
    while (kept_k < sp.s.size() && sp.s(kept_k) >= mu_k) ++kept_k;
    double err;
    if (factorable && kept_k > 0) {
      const Eigen::MatrixXd w_factor = sp.v.topRows(panel.t0).leftCols(kept_k) *
                                       (sp.s.head(kept_k) / p_hat).asDiagonal();
      err = detail::forward_chain_mse_factored(w_factor, y_pre, rule.learner, min_train);
    } else {
      const Eigen::MatrixXd m_k = detail::reconstruct(sp, mu_k, p_hat, nullptr);
      err = forward_chain_mse(m_k.leftCols(panel.t0), y_pre, rule.learner, min_train);
    }
    // Ties favor the smaller rank, i.e. the larger threshold.
    if (err < best_err || (err == best_err && k < best_rank)) {
      best_err = err;
      best_rank = k;
    }
  }

  DenoisedMatrix out;
  out.p_hat = p_hat;
  out.sigma2_hat = sigma2_hat;
  out.mu_used = detail::mu_below_rank(sp.s, best_rank);
  out.m_hat = detail::reconstruct(sp, out.mu_used, p_hat, &out.kept);
  out.empty_set = out.kept.empty();
  return out;
}

}  // namespace rsc
