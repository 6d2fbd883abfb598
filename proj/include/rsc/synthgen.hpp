#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

#include "rsc/panel.hpp"
#include "rsc/pipeline.hpp"
#include "rsc/rng.hpp"

namespace rsc {

/// Generative latent variable model for the synthetic benchmarks. PaperF uses
/// the fixed mixed-periodicity mean function; LowRank draws Gaussian factors
/// of the given rank from `coef_seed` so the signal can stay fixed while the
/// noise seed varies.
struct LatentModelSpec {
  enum class Model { PaperF, LowRank };

  int n_units = 100;
  int t_len = 2000;
  int t0 = 1600;
  double noise_sigma = 0.1;
  double p_observe = 1.0;
  std::uint64_t seed = 0;
  Model model = Model::PaperF;
  int rank = 2;                 // LowRank only
  std::uint64_t coef_seed = 0;  // LowRank only
};

inline void validate_spec(const LatentModelSpec& spec) {
  if (spec.n_units < 2) throw std::invalid_argument("need at least 2 units");
  if (spec.t_len < 2) throw std::invalid_argument("need at least 2 periods");
  if (spec.t0 < 1 || spec.t0 >= spec.t_len)
    throw std::invalid_argument("t0 must satisfy 1 <= t0 < T");
  if (spec.noise_sigma < 0.0) throw std::invalid_argument("noise sigma must be nonnegative");
  if (spec.p_observe <= 0.0 || spec.p_observe > 1.0)
    throw std::invalid_argument("p_observe must lie in (0, 1]");
  if (spec.model == LatentModelSpec::Model::LowRank && spec.rank < 1)
    throw std::invalid_argument("rank must be positive");
}

/// Mean function of the PaperF model: a unit trend plus four fixed
/// periodicities of the time index.
inline double latent_mean(double theta, double rho, double horizon) {
  const double f1 = std::fmod(rho, 360.0);
  const double f2 = std::fmod(rho, 180.0);
  const double f3 = std::fmod(2.0 * rho, 360.0);
  const double f4 = std::fmod(2.0 * rho, 180.0);
  const double deg = M_PI / 180.0;
  return theta + 0.3 * theta * (rho / horizon) * std::exp(rho / horizon) + std::cos(f1 * deg) +
         0.5 * std::sin(f2 * deg) + 1.5 * std::cos(f3 * deg) - 0.5 * std::sin(f4 * deg);
}

struct GeneratedPanel {
  PanelMatrix panel;
  Eigen::MatrixXd donor_means;   // (N-1) x T, the true M rows for the donors
  Eigen::VectorXd treated_means;  // length T
};

/// Draws a panel from the latent model: build the mean matrix, normalize it
/// into [-1, 1], add Gaussian noise, then Bernoulli-mask the donor rows. Unit
/// one is the treated row and stays fully observed. The draw order (latents,
/// then noise row-major, then mask row-major) is part of the reproducibility
/// contract.
inline GeneratedPanel generate_panel(const LatentModelSpec& spec) {
  validate_spec(spec);
  const Eigen::Index n = spec.n_units;
  const Eigen::Index horizon = spec.t_len;

  Eigen::MatrixXd means(n, horizon);
  if (spec.model == LatentModelSpec::Model::PaperF) {
    Sampler rng(spec.seed);
    Eigen::VectorXd theta(n);
    for (Eigen::Index i = 0; i < n; ++i) theta(i) = rng.uniform();
    for (Eigen::Index i = 0; i < n; ++i)
      for (Eigen::Index t = 0; t < horizon; ++t)
        means(i, t) = latent_mean(theta(i), static_cast<double>(t + 1),
                                  static_cast<double>(horizon));
  } else {
    Sampler coef(spec.coef_seed);
    Eigen::MatrixXd a(n, spec.rank), b(horizon, spec.rank);
    for (Eigen::Index i = 0; i < n; ++i)
      for (int k = 0; k < spec.rank; ++k) a(i, k) = coef.normal();
    for (Eigen::Index t = 0; t < horizon; ++t)
      for (int k = 0; k < spec.rank; ++k) b(t, k) = coef.normal();
    means = a * b.transpose();
  }

  const double lo = means.minCoeff();
  const double hi = means.maxCoeff();
  const double half = hi > lo ? 0.5 * (hi - lo) : 1.0;
  const double mid = 0.5 * (hi + lo);
  means = (means.array() - mid) / half;

  Sampler rng(spec.seed + 0x9E3779B97F4A7C15ull);  // independent noise/mask stream
  GeneratedPanel out;
  out.treated_means = means.row(0).transpose();
  out.donor_means = means.bottomRows(n - 1);

  Eigen::MatrixXd x = means;
  if (spec.noise_sigma > 0.0)
    for (Eigen::Index i = 0; i < n; ++i)
      for (Eigen::Index t = 0; t < horizon; ++t) x(i, t) += rng.normal(0.0, spec.noise_sigma);

  PanelMatrix& p = out.panel;
  p.donors = x.bottomRows(n - 1);
  p.mask = BoolMatrix::Constant(n - 1, horizon, true);
  if (spec.p_observe < 1.0) {
    for (Eigen::Index i = 0; i < n - 1; ++i)
      for (Eigen::Index t = 0; t < horizon; ++t)
        if (!rng.bernoulli(spec.p_observe)) {
          p.mask(i, t) = false;
          p.donors(i, t) = 0.0;
        }
  }
  p.treated = x.row(0).transpose();
  p.treated_mask = BoolVector::Constant(horizon, true);
  p.t0 = spec.t0;
  p.treated_label = "u1";
  p.unit_labels.reserve(n - 1);
  for (Eigen::Index i = 1; i < n; ++i) p.unit_labels.push_back("u" + std::to_string(i + 1));
  p.time_labels.reserve(horizon);
  for (Eigen::Index t = 0; t < horizon; ++t) p.time_labels.push_back("t" + std::to_string(t + 1));
  return out;
}

struct BenchmarkRow {
  double noise;
  double pre_mse;   // training error against the true means
  double post_mse;  // generalization error against the true means
};

struct BenchmarkOptions {
  int n_seeds = 20;
  ThresholdRule rule = ThresholdRule::universal(0.5);
  RegressionConfig reg;
  unsigned jobs = 0;  // 0 = hardware concurrency
};

/// Seed-averaged pre/post MSE of the counterfactual against the true treated
/// means, per noise level. with_denoising = false bypasses the thresholding
/// (mu = 0, so m_hat = Y / p_hat).
inline std::vector<BenchmarkRow> run_benchmark(const std::vector<double>& noise_grid,
                                               const LatentModelSpec& spec_template,
                                               bool with_denoising,
                                               const BenchmarkOptions& opts = {}) {
  if (noise_grid.empty()) throw std::invalid_argument("empty noise grid");
  if (opts.n_seeds < 1) throw std::invalid_argument("need at least one seed");
  validate_spec(spec_template);

  const ThresholdRule rule = with_denoising ? opts.rule : ThresholdRule::fixed_value(0.0);
  const std::size_t n_tasks = noise_grid.size() * static_cast<std::size_t>(opts.n_seeds);
  std::vector<double> pre(n_tasks, 0.0), post(n_tasks, 0.0);

  auto run_task = [&](std::size_t task) {
    const std::size_t g = task / static_cast<std::size_t>(opts.n_seeds);
    const std::size_t s = task % static_cast<std::size_t>(opts.n_seeds);
    LatentModelSpec spec = spec_template;
    spec.noise_sigma = noise_grid[g];
    spec.seed = spec_template.seed + s;
    const GeneratedPanel gen = generate_panel(spec);
    const CounterfactualResult res = estimate_counterfactual(gen.panel, rule, opts.reg);
    const Eigen::Index t0 = gen.panel.t0;
    const Eigen::Index horizon = gen.panel.num_periods();
    pre[task] = (res.m1_hat.head(t0) - gen.treated_means.head(t0)).squaredNorm() /
                static_cast<double>(t0);
    post[task] = (res.m1_hat.tail(horizon - t0) - gen.treated_means.tail(horizon - t0))
                     .squaredNorm() /
                 static_cast<double>(horizon - t0);
  };

  unsigned jobs = opts.jobs == 0 ? std::max(1u, std::thread::hardware_concurrency()) : opts.jobs;
  jobs = std::min<unsigned>(jobs, static_cast<unsigned>(n_tasks));
  if (jobs <= 1) {
    for (std::size_t task = 0; task < n_tasks; ++task) run_task(task);
  } else {
    std::atomic<std::size_t> next{0};
    std::vector<std::thread> workers;
    workers.reserve(jobs);
    for (unsigned w = 0; w < jobs; ++w)
      workers.emplace_back([&] {
        for (std::size_t t = next.fetch_add(1); t < n_tasks; t = next.fetch_add(1)) run_task(t);
      });
    for (auto& t : workers) t.join();
  }

  std::vector<BenchmarkRow> rows;
  rows.reserve(noise_grid.size());
  for (std::size_t g = 0; g < noise_grid.size(); ++g) {
    BenchmarkRow row{noise_grid[g], 0.0, 0.0};
    for (int s = 0; s < opts.n_seeds; ++s) {
      const std::size_t task = g * static_cast<std::size_t>(opts.n_seeds) + s;
      row.pre_mse += pre[task];
      row.post_mse += post[task];
    }
    row.pre_mse /= opts.n_seeds;
    row.post_mse /= opts.n_seeds;
    rows.push_back(row);
  }
  return rows;
}

}  // namespace rsc
