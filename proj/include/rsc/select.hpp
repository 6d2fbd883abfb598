#pragma once

#include <Eigen/Dense>

#include <limits>
#include <stdexcept>
#include <vector>

#include "rsc/denoise.hpp"
#include "rsc/learners.hpp"
#include "rsc/panel.hpp"

namespace rsc {

struct SelectionCell {
  ThresholdRule mu_rule;
  double mu_resolved;
  double eta;
  double mean_error;
};

struct SelectionResult {
  ThresholdRule rule;
  RegressionConfig config;
  std::vector<SelectionCell> table;
};

/// Joint grid search over (mu, eta) by forward chaining on the treated
/// pre-intervention series. Each mu candidate de-noises the pre-period donor
/// block once; every step refits only the regression. Ties break toward the
/// smaller eta, then the larger resolved mu.
inline SelectionResult forward_chain_select(const PanelMatrix& panel,
                                            const std::vector<ThresholdRule>& mu_candidates,
                                            const std::vector<double>& eta_candidates,
                                            Method method, Eigen::Index min_train = 5,
                                            double pinv_tolerance = 1e-10,
                                            LassoOptions lasso = {}) {
  if (mu_candidates.empty()) throw std::invalid_argument("no mu candidates given");
  if (min_train < 2) throw std::invalid_argument("min_train must be at least 2");
  if (panel.t0 <= min_train)
    throw std::invalid_argument("forward chaining needs T0 > min_train");

  std::vector<double> etas = eta_candidates;
  if (method == Method::Ols)
    etas.assign(1, 0.0);  // eta has no effect on plain least squares
  else if (etas.empty())
    throw std::invalid_argument("no eta candidates given");
  for (double e : etas) {
    if (e < 0.0) throw std::invalid_argument("eta candidates must be nonnegative");
    if (method == Method::Lasso && e <= 0.0)
      throw std::invalid_argument("lasso eta candidates must be positive");
  }

  const Eigen::MatrixXd donors_pre = panel.donors.leftCols(panel.t0);
  const auto pre_cells = static_cast<double>(donors_pre.size());
  const double p_hat_pre =
      std::max(static_cast<double>(panel.mask.leftCols(panel.t0).count()) / pre_cells,
               1.0 / pre_cells);
  const double sigma2_hat = estimate_sigma2_hat(panel);
  const Eigen::VectorXd y_pre = panel.treated.head(panel.t0);

  // One decomposition of the pre-period block serves every candidate.
  const detail::Spectrum sp = detail::decompose(donors_pre);
  const bool factorable = method == Method::Ols || method == Method::Ridge;

  SelectionResult result;
  double best_err = std::numeric_limits<double>::infinity();
  double best_eta = 0.0;
  double best_mu = -1.0;
  for (const ThresholdRule& mu_rule : mu_candidates) {
    if (mu_rule.kind == ThresholdRule::Kind::ForwardChainCV)
      throw std::invalid_argument("mu candidates cannot themselves be forward-chain rules");
    const double mu = detail::resolve_mu(mu_rule, sp.s, p_hat_pre, sigma2_hat,
                                         static_cast<double>(panel.t0));
    Eigen::Index kept = 0;
    while (kept < sp.s.size() && sp.s(kept) >= mu) ++kept;
    Eigen::MatrixXd w_factor;
    Eigen::MatrixXd m_hat_dense;
    if (factorable && kept > 0)
      w_factor = sp.v.leftCols(kept) * (sp.s.head(kept) / p_hat_pre).asDiagonal();
    else
      m_hat_dense = detail::reconstruct(sp, mu, p_hat_pre, nullptr);
    for (double eta : etas) {
      RegressionConfig cfg;
      cfg.method = method;
      cfg.eta = eta;
      cfg.pinv_tolerance = pinv_tolerance;
      cfg.lasso = lasso;
      const double err =
          factorable && kept > 0
              ? detail::forward_chain_mse_factored(w_factor, y_pre, cfg, min_train)
              : forward_chain_mse(m_hat_dense, y_pre, cfg, min_train);
      result.table.push_back({mu_rule, mu, eta, err});
      const bool better =
          err < best_err ||
          (err == best_err && (eta < best_eta || (eta == best_eta && mu > best_mu)));
      if (better) {
        best_err = err;
        best_eta = eta;
        best_mu = mu;
        result.rule = mu_rule;
        result.config = cfg;
      }
    }
  }
  return result;
}

}  // namespace rsc
