#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <optional>
#include <stdexcept>
#include <utility>
#include <vector>

#include "rsc/denoise.hpp"
#include "rsc/learners.hpp"
#include "rsc/panel.hpp"

namespace rsc {

/// Column-aggregation settings: the pre-period is cut into
/// delta = ceil(T0^(1/2 + gamma)) blocks of width tau = floor(T0 / delta).
struct AggregationConfig {
  double gamma = 0.25;  // in (0, 1/2)
  bool include_partial_last_block = true;
  std::optional<double> known_p;  // use the estimated p_hat when absent
};

struct AggregatedPanel {
  Eigen::MatrixXd donors;   // (N-1) x delta, fully observed by construction
  Eigen::VectorXd treated;  // length delta, scaled by p
  std::vector<Eigen::Index> block_widths;
  std::vector<std::pair<Eigen::Index, Eigen::Index>> empty_cells;  // (donor, block) with no data
  bool partial_last_block = false;
  double p_used = 1.0;
  Eigen::Index delta = 0;
  Eigen::Index tau = 0;
};

namespace detail {
inline Eigen::Index aggregation_delta(Eigen::Index t0, double gamma) {
  if (gamma <= 0.0 || gamma >= 0.5)
    throw std::invalid_argument("gamma must lie in (0, 1/2)");
  return static_cast<Eigen::Index>(std::ceil(std::pow(static_cast<double>(t0), 0.5 + gamma)));
}
}  // namespace detail

/// Replaces the pre-intervention columns by block averages. Donor entries
/// average the observed (zero-filled) values over each block; the treated row
/// is additionally scaled by p so both sides estimate the same p-weighted
/// block means. Blocks with no observed donor data yield a flagged 0.
inline AggregatedPanel aggregate_columns(const PanelMatrix& panel, const AggregationConfig& cfg) {
  AggregatedPanel out;
  out.delta = detail::aggregation_delta(panel.t0, cfg.gamma);
  if (out.delta > panel.t0) throw std::invalid_argument("delta exceeds T0");
  out.tau = panel.t0 / out.delta;
  out.p_used = cfg.known_p ? *cfg.known_p : estimate_p_hat(panel);
  if (out.p_used <= 0.0 || out.p_used > 1.0)
    throw std::invalid_argument("observation probability must lie in (0, 1]");

  const Eigen::Index n_donors = panel.num_donors();
  out.donors = Eigen::MatrixXd::Zero(n_donors, out.delta);
  out.treated = Eigen::VectorXd::Zero(out.delta);
  out.block_widths.reserve(out.delta);

  for (Eigen::Index j = 0; j < out.delta; ++j) {
    const Eigen::Index start = j * out.tau;
    Eigen::Index width = out.tau;
    if (j == out.delta - 1 && cfg.include_partial_last_block) {
      width = panel.t0 - start;  // leftover columns land in the last block
      out.partial_last_block = width != out.tau;
    }
    out.block_widths.push_back(width);
    const double inv_w = 1.0 / static_cast<double>(width);
    for (Eigen::Index i = 0; i < n_donors; ++i) {
      // donors are zero-filled, so the plain sum is the masked sum
      out.donors(i, j) = panel.donors.row(i).segment(start, width).sum() * inv_w;
      if (!panel.mask.row(i).segment(start, width).any()) out.empty_cells.emplace_back(i, j);
    }
    out.treated(j) = out.p_used * panel.treated.segment(start, width).sum() * inv_w;
  }
  return out;
}

struct ConsistentEstimate {
  Weights weights;
  Eigen::MatrixXd m_hat_agg;  // de-noised aggregated donor block
  Eigen::VectorXd fitted;     // m_hat_agg^T beta, length delta
  Eigen::VectorXd treated_agg;
  AggregatedPanel aggregation;
  double mu_used = 0.0;
  double pre_mse = 0.0;  // against the aggregated treated series
};

/// Variance-reduced estimation on the block-averaged pre-period: de-noise the
/// aggregated donor block with mu = (2+omega) * sqrt(T0^(2 gamma) * (s2 p + p(1-p)))
/// and fit the weights on the aggregated system. Operates on the panel as
/// given; callers wanting the bounded-entries transform apply it first.
inline ConsistentEstimate consistent_estimate(const PanelMatrix& panel,
                                              const AggregationConfig& cfg,
                                              const RegressionConfig& reg, double omega) {
  ConsistentEstimate est;
  est.aggregation = aggregate_columns(panel, cfg);
  const double sigma2_hat = estimate_sigma2_hat(panel);
  const double p_hat = est.aggregation.p_used;
  const double horizon = std::pow(static_cast<double>(panel.t0), 2.0 * cfg.gamma);
  est.mu_used = universal_threshold(sigma2_hat, p_hat, horizon, omega);

  // The aggregated block is fully observed by construction, so no 1/p rescale.
  const DenoisedMatrix den =
      svt_denoise(est.aggregation.donors, ThresholdRule::fixed_value(est.mu_used),
                  /*p_hat=*/1.0, sigma2_hat);
  est.m_hat_agg = den.m_hat;
  est.treated_agg = est.aggregation.treated;
  est.weights = fit_with(est.m_hat_agg, est.treated_agg, reg);
  est.fitted = est.m_hat_agg.transpose() * est.weights.beta;
  est.pre_mse = (est.fitted - est.treated_agg).squaredNorm() /
                static_cast<double>(est.aggregation.delta);
  return est;
}

}  // namespace rsc
