#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <atomic>
#include <cmath>
#include <optional>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

#include "rsc/bayes.hpp"
#include "rsc/denoise.hpp"
#include "rsc/learners.hpp"
#include "rsc/panel.hpp"

namespace rsc {

enum class Projection { Denoised, Raw };

struct GapPoint {
  Eigen::Index t;
  double value;  // observed minus counterfactual
};

struct BayesBand {
  Eigen::VectorXd mean;    // length T, original units
  Eigen::VectorXd stddev;  // length T, original units
  Posterior posterior;     // in transformed units
};

struct CounterfactualResult {
  Eigen::VectorXd m1_hat;      // length T, original units
  std::vector<GapPoint> gaps;  // at observed treated times only
  double pre_mse = 0.0;
  Weights weights;
  DenoisedMatrix denoise_report;  // in transformed units
  std::optional<BayesBand> bayes_band;
  BoundsTransform bounds;
};

/// Post-intervention projection: beta against either the raw observed donor
/// columns or their de-noised counterparts.
inline Eigen::VectorXd project_post(const Weights& weights, const Eigen::MatrixXd& donors_post,
                                    bool use_denoised, const Eigen::MatrixXd& m_hat_post) {
  const Eigen::MatrixXd& source = use_denoised ? m_hat_post : donors_post;
  if (source.rows() != weights.beta.size())
    throw std::invalid_argument("projection source rows must match weight count");
  return source.transpose() * weights.beta;
}

/// Full run: bounded-entries transform, de-noise the whole donor horizon, fit
/// the weights on the pre-period, project the counterfactual over [T], and
/// map everything back to original units. With a prior, also computes the
/// posterior predictive band.
inline CounterfactualResult estimate_counterfactual(
    const PanelMatrix& panel, const ThresholdRule& rule, const RegressionConfig& reg,
    const std::optional<GaussianPrior>& prior = std::nullopt,
    Projection projection = Projection::Denoised) {
  validate_panel(panel);
  CounterfactualResult result;
  result.bounds = fit_bounds(panel);
  const PanelMatrix tp = apply_bounds(panel, result.bounds, MapDirection::Forward);

  result.denoise_report = svt_denoise(tp, rule);
  const Eigen::MatrixXd& m_hat = result.denoise_report.m_hat;
  const Eigen::Index t0 = panel.t0;
  const Eigen::Index horizon = panel.num_periods();
  const Eigen::VectorXd y_pre = tp.treated.head(t0);

  result.weights = fit_with(m_hat.leftCols(t0), y_pre, reg);

  Eigen::VectorXd m1(horizon);
  m1.head(t0) = m_hat.leftCols(t0).transpose() * result.weights.beta;
  m1.tail(horizon - t0) =
      project_post(result.weights, tp.donors.rightCols(horizon - t0),
                   projection == Projection::Denoised, m_hat.rightCols(horizon - t0));

  result.m1_hat.resize(horizon);
  for (Eigen::Index t = 0; t < horizon; ++t) result.m1_hat(t) = result.bounds.inverse(m1(t));

  double pre_sq = 0.0;
  for (Eigen::Index t = 0; t < horizon; ++t) {
    if (!panel.treated_mask(t)) continue;
    const double gap = panel.treated(t) - result.m1_hat(t);
    result.gaps.push_back({t, gap});
    if (t < t0) pre_sq += gap * gap;
  }
  result.pre_mse = pre_sq / static_cast<double>(t0);

  if (prior) {
    const Posterior post =
        fit_posterior(m_hat.leftCols(t0), y_pre, *prior, result.denoise_report.sigma2_hat);
    BayesBand band;
    band.mean.resize(horizon);
    band.stddev.resize(horizon);
    for (Eigen::Index t = 0; t < horizon; ++t) {
      const PredictivePoint p = predictive(m_hat.col(t), post);
      band.mean(t) = result.bounds.inverse(p.mean);
      band.stddev(t) = std::sqrt(p.variance) * result.bounds.half();
    }
    band.posterior = post;
    result.bayes_band = std::move(band);
  }
  return result;
}

/// Gaps at every time where the treated value was observed.
inline std::vector<GapPoint> gap_series(const CounterfactualResult& result,
                                        const PanelMatrix& panel) {
  std::vector<GapPoint> gaps;
  for (Eigen::Index t = 0; t < panel.num_periods(); ++t)
    if (panel.treated_mask(t)) gaps.push_back({t, panel.treated(t) - result.m1_hat(t)});
  return gaps;
}

struct PlaceboEntry {
  std::string label;
  bool is_treated = false;
  double pre_rmse = 0.0;
  double mean_abs_post_gap = 0.0;
  double ratio = 0.0;  // mean |post gap| / pre RMSE
  std::vector<GapPoint> gaps;
  std::string error;  // per-unit failures are recorded, not fatal
};

struct PlaceboReport {
  std::vector<PlaceboEntry> entries;  // treated first, then donors in row order
  int treated_rank = 0;               // 1 = most extreme post divergence
};

struct PlaceboOptions {
  bool include_original_treated = false;  // keep the treated unit in placebo donor pools
  unsigned jobs = 0;                      // 0 = hardware concurrency
};

namespace detail {

inline PanelMatrix placebo_panel(const PanelMatrix& panel, Eigen::Index donor_index,
                                 bool include_original_treated) {
  const Eigen::Index n_donors = panel.num_donors();
  const Eigen::Index horizon = panel.num_periods();
  const Eigen::Index rows = n_donors - 1 + (include_original_treated ? 1 : 0);
  PanelMatrix p;
  p.donors.resize(rows, horizon);
  p.mask.resize(rows, horizon);
  p.unit_labels.reserve(rows);
  Eigen::Index r = 0;
  for (Eigen::Index i = 0; i < n_donors; ++i) {
    if (i == donor_index) continue;
    p.donors.row(r) = panel.donors.row(i);
    p.mask.row(r) = panel.mask.row(i);
    p.unit_labels.push_back(panel.unit_labels.empty() ? "" : panel.unit_labels[i]);
    ++r;
  }
  if (include_original_treated) {
    p.donors.row(r) = panel.treated.transpose();
    p.mask.row(r) = panel.treated_mask.transpose();
    p.unit_labels.push_back(panel.treated_label);
  }
  p.treated = panel.donors.row(donor_index).transpose();
  p.treated_mask = panel.mask.row(donor_index).transpose();
  p.treated_label = panel.unit_labels.empty() ? "" : panel.unit_labels[donor_index];
  p.t0 = panel.t0;
  p.time_labels = panel.time_labels;
  return p;
}

inline void score_placebo_entry(PlaceboEntry& e, const CounterfactualResult& res,
                                Eigen::Index t0) {
  e.gaps = res.gaps;
  e.pre_rmse = std::sqrt(res.pre_mse);
  double post_abs = 0.0;
  Eigen::Index post_n = 0;
  for (const GapPoint& g : res.gaps) {
    if (g.t < t0) continue;
    post_abs += std::abs(g.value);
    ++post_n;
  }
  e.mean_abs_post_gap = post_n > 0 ? post_abs / static_cast<double>(post_n) : 0.0;
  e.ratio = e.mean_abs_post_gap / std::max(e.pre_rmse, 1e-12);
}

}  // namespace detail

/// Runs the estimator with every unit treated in turn (intervention time held
/// fixed) and ranks units by post-period divergence normalized by the
/// pre-period fit quality.
inline PlaceboReport placebo_study(const PanelMatrix& panel, const ThresholdRule& rule,
                                   const RegressionConfig& reg, PlaceboOptions opts = {}) {
  validate_panel(panel);
  if (panel.num_units() < 3) throw std::invalid_argument("placebo study needs at least 3 units");

  const Eigen::Index n_units = panel.num_units();
  PlaceboReport report;
  report.entries.resize(n_units);

  auto run_unit = [&](Eigen::Index u) {
    PlaceboEntry& e = report.entries[u];
    if (u == 0) {
      e.label = panel.treated_label;
      e.is_treated = true;
    } else {
      e.label = panel.unit_labels.empty() ? "donor" + std::to_string(u)
                                          : panel.unit_labels[u - 1];
    }
    try {
      const PanelMatrix p =
          u == 0 ? panel : detail::placebo_panel(panel, u - 1, opts.include_original_treated);
      validate_panel(p);
      const CounterfactualResult res = estimate_counterfactual(p, rule, reg);
      detail::score_placebo_entry(e, res, panel.t0);
    } catch (const std::exception& ex) {
      e.error = ex.what();
    }
  };

  unsigned jobs = opts.jobs == 0 ? std::max(1u, std::thread::hardware_concurrency()) : opts.jobs;
  jobs = std::min<unsigned>(jobs, static_cast<unsigned>(n_units));
  if (jobs <= 1) {
    for (Eigen::Index u = 0; u < n_units; ++u) run_unit(u);
  } else {
    std::atomic<Eigen::Index> next{0};
    std::vector<std::thread> workers;
    workers.reserve(jobs);
    for (unsigned w = 0; w < jobs; ++w)
      workers.emplace_back([&] {
        for (Eigen::Index u = next.fetch_add(1); u < n_units; u = next.fetch_add(1)) run_unit(u);
      });
    for (auto& t : workers) t.join();
  }

  // Rank successful units by ratio, most extreme first; ties keep panel order.
  std::vector<Eigen::Index> order;
  for (Eigen::Index u = 0; u < n_units; ++u)
    if (report.entries[u].error.empty()) order.push_back(u);
  std::stable_sort(order.begin(), order.end(), [&](Eigen::Index a, Eigen::Index b) {
    return report.entries[a].ratio > report.entries[b].ratio;
  });
  for (std::size_t pos = 0; pos < order.size(); ++pos)
    if (order[pos] == 0) report.treated_rank = static_cast<int>(pos) + 1;
  return report;
}

}  // namespace rsc
