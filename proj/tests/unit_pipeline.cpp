#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "helpers.hpp"
#include "rsc/pipeline.hpp"
#include "rsc/synthgen.hpp"

using namespace rsc;

namespace {

// Noiseless panel whose rows are distinct multiples of one pattern; the
// treated unit is exactly twice the first donor.
PanelMatrix rank_one_panel(Eigen::Index horizon, Eigen::Index t0) {
  Eigen::VectorXd pattern(horizon);
  for (Eigen::Index t = 0; t < horizon; ++t)
    pattern(t) = 1.0 + 0.4 * std::sin(0.5 * static_cast<double>(t)) +
                 0.05 * static_cast<double>(t);
  Eigen::MatrixXd donors(3, horizon);
  donors.row(0) = pattern.transpose();
  donors.row(1) = 0.5 * pattern.transpose();
  donors.row(2) = -0.3 * pattern.transpose();
  return testutil::make_panel(donors, 2.0 * pattern, t0);
}

}  // namespace

TEST_CASE("noiseless linear panel is projected exactly") {
  const PanelMatrix p = rank_one_panel(24, 16);
  const CounterfactualResult res =
      estimate_counterfactual(p, ThresholdRule::fixed_value(0.0), RegressionConfig{});
  for (Eigen::Index t = 0; t < 24; ++t)
    REQUIRE(res.m1_hat(t) == Catch::Approx(2.0 * p.donors(0, t)).margin(1e-8));
  REQUIRE(res.pre_mse < 1e-16);
}

TEST_CASE("post-period span recovery on random low-rank constructions") {
  // Smoke version of the exactness criterion; the acceptance suite runs 100.
  for (int trial = 0; trial < 10; ++trial) {
    LatentModelSpec spec;
    spec.model = LatentModelSpec::Model::LowRank;
    spec.rank = 3;
    spec.coef_seed = 100 + trial;
    spec.seed = 100 + trial;
    spec.n_units = 12;
    spec.t_len = 30;
    spec.t0 = 20;
    spec.noise_sigma = 0.0;
    const GeneratedPanel gen = generate_panel(spec);
    const CounterfactualResult res =
        estimate_counterfactual(gen.panel, ThresholdRule::fixed_value(0.0), RegressionConfig{});
    const double rel = (res.m1_hat.tail(10) - gen.treated_means.tail(10)).norm() /
                       gen.treated_means.tail(10).norm();
    REQUIRE(rel < 1e-6);
  }
}

TEST_CASE("project_post source selection") {
  Sampler rng(3);
  const Eigen::MatrixXd raw = testutil::random_matrix(rng, 3, 5);
  const Eigen::MatrixXd den = testutil::random_matrix(rng, 3, 5);
  Weights w;
  SECTION("unit vector picks one donor row") {
    w.beta = Eigen::Vector3d(0, 1, 0);
    REQUIRE(project_post(w, raw, false, den).isApprox(raw.row(1).transpose(), 1e-15));
    REQUIRE(project_post(w, raw, true, den).isApprox(den.row(1).transpose(), 1e-15));
  }
  SECTION("zero weights give the zero series") {
    w.beta = Eigen::Vector3d::Zero();
    REQUIRE(project_post(w, raw, false, den).isZero(0.0));
  }
  SECTION("equal sources agree regardless of the flag") {
    w.beta = testutil::random_vector(rng, 3);
    REQUIRE(project_post(w, raw, false, raw).isApprox(project_post(w, raw, true, raw), 0.0));
  }
  SECTION("shape mismatch") {
    w.beta = Eigen::Vector2d(1, 1);
    REQUIRE_THROWS_AS(project_post(w, raw, false, den), std::invalid_argument);
  }
}

TEST_CASE("gap_series mechanics") {
  const PanelMatrix p = rank_one_panel(20, 14);
  const CounterfactualResult res =
      estimate_counterfactual(p, ThresholdRule::fixed_value(0.0), RegressionConfig{});
  SECTION("exact fit gives zero gaps") {
    for (const GapPoint& g : gap_series(res, p)) REQUIRE(std::abs(g.value) < 1e-8);
  }
  SECTION("constant offset shows up as constant gaps") {
    PanelMatrix shifted = p;
    shifted.treated = res.m1_hat.array() + 2.5;
    const auto gaps = gap_series(res, shifted);
    REQUIRE(gaps.size() == 20);
    for (const GapPoint& g : gaps) REQUIRE(g.value == Catch::Approx(2.5).margin(1e-12));
  }
  SECTION("pre mse matches the mean squared pre gap") {
    LatentModelSpec spec;
    spec.n_units = 10;
    spec.t_len = 40;
    spec.t0 = 30;
    spec.noise_sigma = 0.5;
    spec.seed = 77;
    const GeneratedPanel gen = generate_panel(spec);
    const CounterfactualResult noisy =
        estimate_counterfactual(gen.panel, ThresholdRule::universal(0.5), RegressionConfig{});
    double sum = 0.0;
    for (const GapPoint& g : gap_series(noisy, gen.panel))
      if (g.t < gen.panel.t0) sum += g.value * g.value;
    REQUIRE(noisy.pre_mse == Catch::Approx(sum / 30.0).epsilon(1e-12));
  }
}

TEST_CASE("estimates are deterministic") {
  LatentModelSpec spec;
  spec.n_units = 15;
  spec.t_len = 60;
  spec.t0 = 45;
  spec.noise_sigma = 0.8;
  spec.p_observe = 0.8;
  spec.seed = 5;
  const GeneratedPanel gen = generate_panel(spec);
  const auto a = estimate_counterfactual(gen.panel, ThresholdRule::universal(0.5),
                                         RegressionConfig{});
  const auto b = estimate_counterfactual(gen.panel, ThresholdRule::universal(0.5),
                                         RegressionConfig{});
  REQUIRE(a.m1_hat == b.m1_hat);
  REQUIRE(a.pre_mse == b.pre_mse);
}

TEST_CASE("bayes band rides along the counterfactual") {
  LatentModelSpec spec;
  spec.n_units = 12;
  spec.t_len = 50;
  spec.t0 = 40;
  spec.noise_sigma = 0.4;
  spec.seed = 9;
  const GeneratedPanel gen = generate_panel(spec);
  const auto res = estimate_counterfactual(gen.panel, ThresholdRule::fixed_rank(2),
                                           RegressionConfig{}, GaussianPrior{1.0});
  REQUIRE(res.bayes_band.has_value());
  const double sigma2 = res.denoise_report.sigma2_hat;
  const double half = res.bounds.half();
  for (Eigen::Index t = 0; t < 50; ++t) {
    REQUIRE(res.bayes_band->stddev(t) > 0.0);
    // predictive variance >= sigma2 in transformed units
    const double var_t = std::pow(res.bayes_band->stddev(t) / half, 2);
    REQUIRE(var_t >= sigma2 - 1e-12);
  }
}

TEST_CASE("placebo study on near-identical units") {
  Sampler rng(41);
  const Eigen::Index horizon = 40, t0 = 28;
  Eigen::VectorXd base(horizon);
  for (Eigen::Index t = 0; t < horizon; ++t)
    base(t) = 2.0 + std::sin(0.3 * static_cast<double>(t));
  Eigen::MatrixXd donors(5, horizon);
  for (Eigen::Index i = 0; i < 5; ++i)
    for (Eigen::Index t = 0; t < horizon; ++t) donors(i, t) = base(t) + 0.01 * rng.normal();
  Eigen::VectorXd treated(horizon);
  for (Eigen::Index t = 0; t < horizon; ++t) treated(t) = base(t) + 0.01 * rng.normal();
  const PanelMatrix p = testutil::make_panel(donors, treated, t0);

  const PlaceboReport report =
      placebo_study(p, ThresholdRule::fixed_rank(1), RegressionConfig{});
  REQUIRE(report.entries.size() == 6);
  REQUIRE(report.entries[0].is_treated);
  for (const auto& e : report.entries) {
    REQUIRE(e.error.empty());
    REQUIRE(e.mean_abs_post_gap < 0.05);  // all gaps at the noise scale
  }
  REQUIRE(report.treated_rank >= 1);
  REQUIRE(report.treated_rank <= 6);
}

TEST_CASE("placebo study flags the unit with an injected effect") {
  LatentModelSpec spec;
  spec.model = LatentModelSpec::Model::LowRank;
  spec.rank = 2;
  spec.coef_seed = 3;
  spec.seed = 3;
  spec.n_units = 10;
  spec.t_len = 60;
  spec.t0 = 40;
  spec.noise_sigma = 0.3;
  GeneratedPanel gen = generate_panel(spec);
  gen.panel.treated.tail(20).array() += 1.5;  // 5 sigma shift
  const PlaceboReport report =
      placebo_study(gen.panel, ThresholdRule::fixed_rank(2), RegressionConfig{});
  REQUIRE(report.treated_rank == 1);
}

TEST_CASE("placebo study records unit failures instead of dying") {
  Eigen::MatrixXd donors = Eigen::MatrixXd::Ones(3, 10);
  donors.row(1) = Eigen::RowVectorXd::LinSpaced(10, 1.0, 2.0);
  donors.row(2) = Eigen::RowVectorXd::LinSpaced(10, 2.0, 1.0);
  PanelMatrix p = testutil::make_panel(donors, Eigen::VectorXd::Ones(10), 6);
  // donor 0 has a missing pre-intervention cell, so it cannot act as treated
  p.mask(0, 2) = false;
  p.donors(0, 2) = 0.0;
  const PlaceboReport report =
      placebo_study(p, ThresholdRule::fixed_value(0.0), RegressionConfig{});
  REQUIRE(report.entries.size() == 4);
  REQUIRE_FALSE(report.entries[1].error.empty());
  REQUIRE(report.entries[0].error.empty());
  REQUIRE(report.treated_rank >= 1);
}

TEST_CASE("placebo runs are identical across worker counts") {
  LatentModelSpec spec;
  spec.n_units = 8;
  spec.t_len = 40;
  spec.t0 = 30;
  spec.noise_sigma = 0.5;
  spec.seed = 21;
  const GeneratedPanel gen = generate_panel(spec);
  PlaceboOptions serial;
  serial.jobs = 1;
  PlaceboOptions parallel;
  parallel.jobs = 4;
  const auto a = placebo_study(gen.panel, ThresholdRule::fixed_rank(2), RegressionConfig{}, serial);
  const auto b =
      placebo_study(gen.panel, ThresholdRule::fixed_rank(2), RegressionConfig{}, parallel);
  REQUIRE(a.treated_rank == b.treated_rank);
  for (std::size_t i = 0; i < a.entries.size(); ++i)
    REQUIRE(a.entries[i].ratio == b.entries[i].ratio);
}

TEST_CASE("basque-style fixture shows the post-intervention divergence") {
  const PanelMatrix p = load_csv(std::string(RSC_DATA_DIR) + "/basque_style.csv",
                                 "Basque Country", "1970");
  REQUIRE(p.num_units() == 17);
  REQUIRE(p.t0 == 16);
  const CounterfactualResult res =
      estimate_counterfactual(p, ThresholdRule::fixed_rank(2), RegressionConfig{});

  // average gap after 1975 is negative: the treated series underperforms
  double post75 = 0.0;
  int n = 0;
  for (const GapPoint& g : res.gaps) {
    if (p.time_labels[g.t] >= std::string("1975")) {
      post75 += g.value;
      ++n;
    }
  }
  REQUIRE(n > 0);
  REQUIRE(post75 / n < 0.0);

  const PlaceboReport report =
      placebo_study(p, ThresholdRule::fixed_rank(2), RegressionConfig{});
  REQUIRE(report.treated_rank == 1);
}
