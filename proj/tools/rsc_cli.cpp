// Command line front end: denoise | estimate | placebo | bayes | simulate | bench.
// Results go to --output (or stdout), diagnostics to stderr. Exit codes:
// 0 success, 1 validation error, 2 runtime error.

#include <CLI11.hpp>
#include <json.hpp>

#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "rsc/rsc.hpp"

namespace {

using json = nlohmann::ordered_json;

constexpr const char* kVersion = "0.1.0";

struct UsageError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> parts;
  std::stringstream ss(s);
  std::string cur;
  while (std::getline(ss, cur, sep)) parts.push_back(cur);
  return parts;
}

double to_double(const std::string& s, const std::string& what) {
  std::size_t used = 0;
  double v = 0.0;
  try {
    v = std::stod(s, &used);
  } catch (const std::exception&) {
    throw UsageError("invalid " + what + ": '" + s + "'");
  }
  if (used != s.size()) throw UsageError("invalid " + what + ": '" + s + "'");
  return v;
}

int to_int(const std::string& s, const std::string& what) {
  const double v = to_double(s, what);
  const int i = static_cast<int>(v);
  if (static_cast<double>(i) != v) throw UsageError(what + " must be an integer: '" + s + "'");
  return i;
}

// --mu / --rule grammar: universal:<omega> | rank:<k> | value:<mu> | cv:<k1,k2,...>
struct MuSpec {
  bool is_cv = false;
  std::vector<int> cv_ranks;
  rsc::ThresholdRule rule = rsc::ThresholdRule::universal(0.5);
  std::string text = "universal:0.5";
};

MuSpec parse_mu(const std::string& s, bool allow_cv) {
  MuSpec spec;
  spec.text = s;
  const auto colon = s.find(':');
  const std::string head = s.substr(0, colon);
  const std::string tail = colon == std::string::npos ? "" : s.substr(colon + 1);
  if (head == "universal") {
    spec.rule = rsc::ThresholdRule::universal(to_double(tail, "omega"));
  } else if (head == "rank") {
    spec.rule = rsc::ThresholdRule::fixed_rank(to_int(tail, "rank"));
  } else if (head == "value") {
    spec.rule = rsc::ThresholdRule::fixed_value(to_double(tail, "mu"));
  } else if (head == "cv" && allow_cv) {
    spec.is_cv = true;
    for (const auto& tok : split(tail, ','))
      spec.cv_ranks.push_back(to_int(tok, "rank candidate"));
    if (spec.cv_ranks.empty()) throw UsageError("empty cv rank list");
  } else {
    throw UsageError("unrecognized threshold rule: '" + s + "'");
  }
  return spec;
}

// --eta grammar: <value> | cv:<v1,v2,...>
struct EtaSpec {
  bool is_cv = false;
  std::vector<double> candidates;
  double value = 0.0;
  std::string text = "0";
};

EtaSpec parse_eta(const std::string& s) {
  EtaSpec spec;
  spec.text = s;
  if (s.rfind("cv:", 0) == 0) {
    spec.is_cv = true;
    for (const auto& tok : split(s.substr(3), ','))
      spec.candidates.push_back(to_double(tok, "eta candidate"));
    if (spec.candidates.empty()) throw UsageError("empty cv eta list");
  } else {
    spec.value = to_double(s, "eta");
  }
  return spec;
}

rsc::Method parse_method(const std::string& s) {
  if (s == "ols") return rsc::Method::Ols;
  if (s == "ridge") return rsc::Method::Ridge;
  if (s == "lasso") return rsc::Method::Lasso;
  throw UsageError("unrecognized method: '" + s + "' (expected ols|ridge|lasso)");
}

std::uint64_t seed_fallback(const std::optional<std::uint64_t>& flag_seed,
                            std::uint64_t default_seed = 42) {
  if (flag_seed) return *flag_seed;
  if (const char* env = std::getenv("RSC_SEED")) return std::strtoull(env, nullptr, 10);
  return default_seed;
}

json load_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw UsageError("cannot open file: " + path);
  json j;
  try {
    in >> j;
  } catch (const std::exception& e) {
    throw UsageError("malformed JSON in " + path + ": " + e.what());
  }
  return j;
}

// A config file holds the same keys as the long flags; its values win.
struct ConfigField {
  std::string name;
  std::function<void(const json&)> apply;
};

void apply_config(const std::string& path, const std::vector<ConfigField>& fields) {
  const json j = load_json_file(path);
  if (!j.is_object()) throw UsageError("config file must hold a JSON object");
  for (const auto& [key, value] : j.items()) {
    bool known = false;
    for (const auto& f : fields) {
      if (f.name != key) continue;
      f.apply(value);
      known = true;
      break;
    }
    if (!known) throw UsageError("unknown config key: '" + key + "'");
  }
}

void write_text(const std::optional<std::string>& path, const std::string& text) {
  if (!path) {
    std::cout << text;
    return;
  }
  std::ofstream out(*path);
  if (!out) throw std::runtime_error("cannot write output file: " + *path);
  out << text;
}

void write_json(const std::optional<std::string>& path, const json& j) {
  write_text(path, j.dump(2) + "\n");
}

json gaps_to_json(const rsc::PanelMatrix& panel, const std::vector<rsc::GapPoint>& gaps) {
  json arr = json::array();
  for (const auto& g : gaps)
    arr.push_back({{"t_label", panel.time_labels[g.t]}, {"gap", g.value}});
  return arr;
}

std::string sidecar_path(const std::string& output) {
  if (output.size() > 4 && output.substr(output.size() - 4) == ".csv")
    return output.substr(0, output.size() - 4) + ".json";
  return output + ".json";
}

// Shared ingestion flags.
struct InputArgs {
  std::string input;
  std::string treated;
  std::string t0;
  std::string config;

  void attach(CLI::App* cmd) {
    cmd->add_option("--input", input, "panel CSV (units x time)")->required();
    cmd->add_option("--treated", treated, "treated unit label")->required();
    cmd->add_option("--t0", t0, "label of the last pre-intervention period")->required();
    cmd->add_option("--config", config, "JSON file overriding flags");
  }
  std::vector<ConfigField> fields() {
    return {{"input", [this](const json& v) { input = v.get<std::string>(); }},
            {"treated", [this](const json& v) { treated = v.get<std::string>(); }},
            {"t0", [this](const json& v) { t0 = v.get<std::string>(); }}};
  }
};

// ---------------------------------------------------------------------------
// denoise

struct DenoiseArgs {
  InputArgs in;
  std::string rule_text = "universal:0.5";
  std::string output;
};

int run_denoise(DenoiseArgs& a) {
  if (!a.in.config.empty()) {
    auto fields = a.in.fields();
    fields.push_back({"rule", [&](const json& v) { a.rule_text = v.get<std::string>(); }});
    fields.push_back({"output", [&](const json& v) { a.output = v.get<std::string>(); }});
    apply_config(a.in.config, fields);
  }
  const MuSpec mu = parse_mu(a.rule_text, /*allow_cv=*/false);
  const rsc::PanelMatrix panel = rsc::load_csv(a.in.input, a.in.treated, a.in.t0);
  const rsc::BoundsTransform bounds = rsc::fit_bounds(panel);
  const rsc::PanelMatrix tp = rsc::apply_bounds(panel, bounds, rsc::MapDirection::Forward);
  const rsc::DenoisedMatrix den = rsc::svt_denoise(tp, mu.rule);

  Eigen::MatrixXd m_hat = den.m_hat;
  for (Eigen::Index i = 0; i < m_hat.rows(); ++i)
    for (Eigen::Index j = 0; j < m_hat.cols(); ++j) m_hat(i, j) = bounds.inverse(m_hat(i, j));
  rsc::write_matrix_csv(m_hat, panel.unit_labels, panel.time_labels, a.output);

  json side;
  side["p_hat"] = den.p_hat;
  side["sigma2_hat"] = den.sigma2_hat;  // in transformed units
  side["mu_used"] = den.mu_used;
  json kept = json::array();
  for (const auto& k : den.kept) kept.push_back(k.value);
  side["kept_singular_values"] = kept;
  side["empty_set"] = den.empty_set;
  side["bounds"] = {{"a", bounds.a}, {"b", bounds.b}};
  write_json(sidecar_path(a.output), side);
  return 0;
}

// ---------------------------------------------------------------------------
// estimate

struct EstimateArgs {
  InputArgs in;
  std::string method = "ols";
  std::string eta_text = "0";
  std::string mu_text = "universal:0.5";
  int min_train = 5;
  std::string aggregate;  // "gamma:<g>" enables the aggregated path
  std::string bayes;      // "alpha:<v>" or "from-cv"
  std::string project = "denoised";
  std::optional<std::string> output;
};

struct ResolvedEstimate {
  rsc::ThresholdRule rule;
  rsc::RegressionConfig reg;
  std::string mu_desc;
};

// Resolves cv grids through forward chaining; plain values pass through.
ResolvedEstimate resolve_hyperparameters(const rsc::PanelMatrix& panel, const MuSpec& mu,
                                         const EtaSpec& eta, rsc::Method method, int min_train) {
  ResolvedEstimate r;
  r.reg.method = method;
  if (!mu.is_cv && !eta.is_cv) {
    r.rule = mu.rule;
    r.reg.eta = eta.value;
    r.mu_desc = mu.text;
    return r;
  }
  std::vector<rsc::ThresholdRule> mu_rules;
  if (mu.is_cv)
    for (int k : mu.cv_ranks) mu_rules.push_back(rsc::ThresholdRule::fixed_rank(k));
  else
    mu_rules.push_back(mu.rule);
  std::vector<double> etas = eta.is_cv ? eta.candidates : std::vector<double>{eta.value};
  const rsc::SelectionResult sel =
      rsc::forward_chain_select(panel, mu_rules, etas, method, min_train);
  r.rule = sel.rule;
  r.reg = sel.config;
  if (sel.rule.kind == rsc::ThresholdRule::Kind::FixedRank)
    r.mu_desc = "rank:" + std::to_string(sel.rule.rank);
  else
    r.mu_desc = mu.text;
  return r;
}

std::optional<rsc::GaussianPrior> resolve_prior(const std::string& bayes_text,
                                                const rsc::PanelMatrix& panel,
                                                const ResolvedEstimate& resolved,
                                                const EtaSpec& eta, int min_train) {
  if (bayes_text.empty()) return std::nullopt;
  const double sigma2 = std::max(rsc::estimate_sigma2_hat(panel), 1e-12);
  if (bayes_text.rfind("alpha:", 0) == 0)
    return rsc::GaussianPrior{to_double(bayes_text.substr(6), "alpha"), false};
  if (bayes_text != "from-cv")
    throw UsageError("unrecognized --bayes value: '" + bayes_text + "'");
  // from-cv: take the forward-chained ridge eta, defaulting to a small grid.
  double eta_cv;
  if (resolved.reg.method == rsc::Method::Ridge && eta.is_cv) {
    eta_cv = resolved.reg.eta;
  } else {
    const std::vector<double> grid =
        eta.is_cv ? eta.candidates : std::vector<double>{1e-3, 1e-2, 0.1, 1.0, 10.0, 100.0};
    const rsc::SelectionResult sel = rsc::forward_chain_select(
        panel, {resolved.rule}, grid, rsc::Method::Ridge, min_train);
    eta_cv = sel.config.eta;
  }
  return rsc::choose_alpha_from_cv(eta_cv, sigma2);
}

int run_estimate(EstimateArgs& a) {
  if (!a.in.config.empty()) {
    auto fields = a.in.fields();
    fields.push_back({"method", [&](const json& v) { a.method = v.get<std::string>(); }});
    fields.push_back({"eta", [&](const json& v) { a.eta_text = v.get<std::string>(); }});
    fields.push_back({"mu", [&](const json& v) { a.mu_text = v.get<std::string>(); }});
    fields.push_back({"min-train", [&](const json& v) { a.min_train = v.get<int>(); }});
    fields.push_back({"aggregate", [&](const json& v) { a.aggregate = v.get<std::string>(); }});
    fields.push_back({"bayes", [&](const json& v) { a.bayes = v.get<std::string>(); }});
    fields.push_back({"project", [&](const json& v) { a.project = v.get<std::string>(); }});
    fields.push_back({"output", [&](const json& v) { a.output = v.get<std::string>(); }});
    apply_config(a.in.config, fields);
  }
  const rsc::Method method = parse_method(a.method);
  const MuSpec mu = parse_mu(a.mu_text, /*allow_cv=*/true);
  const EtaSpec eta = parse_eta(a.eta_text);
  if (a.project != "denoised" && a.project != "raw")
    throw UsageError("--project must be denoised or raw");
  const rsc::Projection projection =
      a.project == "raw" ? rsc::Projection::Raw : rsc::Projection::Denoised;

  const rsc::PanelMatrix panel = rsc::load_csv(a.in.input, a.in.treated, a.in.t0);
  const ResolvedEstimate resolved =
      resolve_hyperparameters(panel, mu, eta, method, a.min_train);

  json out;
  out["config_echo"] = {{"input", a.in.input},     {"treated", a.in.treated},
                        {"t0", a.in.t0},           {"method", a.method},
                        {"mu", resolved.mu_desc},  {"eta", resolved.reg.eta},
                        {"min_train", a.min_train}, {"project", a.project}};

  if (!a.aggregate.empty()) {
    if (!a.bayes.empty())
      throw UsageError("--bayes is not available together with --aggregate");
    if (a.aggregate.rfind("gamma:", 0) != 0)
      throw UsageError("--aggregate expects gamma:<g>");
    rsc::AggregationConfig cfg;
    cfg.gamma = to_double(a.aggregate.substr(6), "gamma");
    const double omega =
        resolved.rule.kind == rsc::ThresholdRule::Kind::Universal ? resolved.rule.omega : 0.5;

    const rsc::BoundsTransform bounds = rsc::fit_bounds(panel);
    const rsc::PanelMatrix tp = rsc::apply_bounds(panel, bounds, rsc::MapDirection::Forward);
    const rsc::ConsistentEstimate est = rsc::consistent_estimate(tp, cfg, resolved.reg, omega);

    const Eigen::Index t0 = panel.t0;
    const Eigen::Index horizon = panel.num_periods();
    Eigen::VectorXd post;
    if (projection == rsc::Projection::Denoised) {
      const rsc::DenoisedMatrix den_full = rsc::svt_denoise(tp, resolved.rule);
      post = rsc::project_post(est.weights, tp.donors.rightCols(horizon - t0), true,
                               den_full.m_hat.rightCols(horizon - t0));
    } else {
      post = rsc::project_post(est.weights, tp.donors.rightCols(horizon - t0), false,
                               Eigen::MatrixXd());
    }

    out["config_echo"]["aggregate"] = a.aggregate;
    json weights = json::array();
    for (Eigen::Index i = 0; i < est.weights.beta.size(); ++i)
      weights.push_back({{"unit", panel.unit_labels[i]}, {"beta", est.weights.beta(i)}});
    out["weights"] = weights;
    json series = json::array();
    for (Eigen::Index t = t0; t < horizon; ++t) {
      json row;
      row["t_label"] = panel.time_labels[t];
      row["observed"] = panel.treated_mask(t) ? json(panel.treated(t)) : json(nullptr);
      const double cf = bounds.inverse(post(t - t0));
      row["counterfactual"] = cf;
      row["gap"] = panel.treated_mask(t) ? json(panel.treated(t) - cf) : json(nullptr);
      series.push_back(row);
    }
    out["series"] = series;
    out["pre_mse"] = est.pre_mse;  // on the aggregated blocks, transformed units
    out["aggregate"] = {{"gamma", cfg.gamma},
                        {"delta", est.aggregation.delta},
                        {"tau", est.aggregation.tau},
                        {"partial_last_block", est.aggregation.partial_last_block},
                        {"empty_cells", est.aggregation.empty_cells.size()},
                        {"mu_used", est.mu_used}};
    write_json(a.output, out);
    return 0;
  }

  const std::optional<rsc::GaussianPrior> prior =
      resolve_prior(a.bayes, panel, resolved, eta, a.min_train);
  if (prior) out["config_echo"]["alpha"] = prior->alpha;

  const rsc::CounterfactualResult res =
      rsc::estimate_counterfactual(panel, resolved.rule, resolved.reg, prior, projection);

  json weights = json::array();
  for (Eigen::Index i = 0; i < res.weights.beta.size(); ++i)
    weights.push_back({{"unit", panel.unit_labels[i]}, {"beta", res.weights.beta(i)}});
  out["weights"] = weights;
  if (!res.weights.converged) out["lasso_converged"] = false;

  json series = json::array();
  for (Eigen::Index t = 0; t < panel.num_periods(); ++t) {
    json row;
    row["t_label"] = panel.time_labels[t];
    row["observed"] = panel.treated_mask(t) ? json(panel.treated(t)) : json(nullptr);
    row["counterfactual"] = res.m1_hat(t);
    row["gap"] =
        panel.treated_mask(t) ? json(panel.treated(t) - res.m1_hat(t)) : json(nullptr);
    if (res.bayes_band) row["std"] = res.bayes_band->stddev(t);
    series.push_back(row);
  }
  out["series"] = series;
  out["pre_mse"] = res.pre_mse;
  out["denoise"] = {{"p_hat", res.denoise_report.p_hat},
                    {"sigma2_hat", res.denoise_report.sigma2_hat},
                    {"mu_used", res.denoise_report.mu_used},
                    {"kept", res.denoise_report.kept.size()}};
  write_json(a.output, out);
  return 0;
}

// ---------------------------------------------------------------------------
// placebo

struct PlaceboArgs {
  InputArgs in;
  std::string method = "ols";
  std::string eta_text = "0";
  std::string mu_text = "universal:0.5";
  bool include_treated = false;
  unsigned jobs = 0;
  std::optional<std::string> output;
};

int run_placebo(PlaceboArgs& a) {
  if (!a.in.config.empty()) {
    auto fields = a.in.fields();
    fields.push_back({"method", [&](const json& v) { a.method = v.get<std::string>(); }});
    fields.push_back({"eta", [&](const json& v) { a.eta_text = v.get<std::string>(); }});
    fields.push_back({"mu", [&](const json& v) { a.mu_text = v.get<std::string>(); }});
    fields.push_back(
        {"include-treated", [&](const json& v) { a.include_treated = v.get<bool>(); }});
    fields.push_back({"jobs", [&](const json& v) { a.jobs = v.get<unsigned>(); }});
    fields.push_back({"output", [&](const json& v) { a.output = v.get<std::string>(); }});
    apply_config(a.in.config, fields);
  }
  const MuSpec mu = parse_mu(a.mu_text, /*allow_cv=*/false);
  const EtaSpec eta = parse_eta(a.eta_text);
  if (eta.is_cv) throw UsageError("placebo expects a fixed eta");
  rsc::RegressionConfig reg;
  reg.method = parse_method(a.method);
  reg.eta = eta.value;

  const rsc::PanelMatrix panel = rsc::load_csv(a.in.input, a.in.treated, a.in.t0);
  rsc::PlaceboOptions opts;
  opts.include_original_treated = a.include_treated;
  opts.jobs = a.jobs;
  const rsc::PlaceboReport report = rsc::placebo_study(panel, mu.rule, reg, opts);

  // Per-unit ranks: most extreme ratio first, failures unranked.
  std::vector<int> rank(report.entries.size(), 0);
  {
    std::vector<std::size_t> order;
    for (std::size_t u = 0; u < report.entries.size(); ++u)
      if (report.entries[u].error.empty()) order.push_back(u);
    std::stable_sort(order.begin(), order.end(), [&](std::size_t x, std::size_t y) {
      return report.entries[x].ratio > report.entries[y].ratio;
    });
    for (std::size_t pos = 0; pos < order.size(); ++pos)
      rank[order[pos]] = static_cast<int>(pos) + 1;
  }

  json out;
  out["config_echo"] = {{"input", a.in.input}, {"treated", a.in.treated},
                        {"t0", a.in.t0},       {"method", a.method},
                        {"mu", a.mu_text},     {"eta", eta.value},
                        {"include_treated", a.include_treated}};
  out["treated_rank"] = report.treated_rank;
  json units = json::array();
  for (std::size_t u = 0; u < report.entries.size(); ++u) {
    const auto& e = report.entries[u];
    json row;
    row["label"] = e.label;
    row["is_treated"] = e.is_treated;
    if (!e.error.empty()) {
      row["error"] = e.error;
    } else {
      row["pre_rmse"] = e.pre_rmse;
      row["mean_abs_post_gap"] = e.mean_abs_post_gap;
      row["ratio"] = e.ratio;
      row["rank"] = rank[u];
      row["gaps"] = gaps_to_json(panel, e.gaps);
    }
    units.push_back(row);
  }
  out["units"] = units;
  write_json(a.output, out);
  return 0;
}

// ---------------------------------------------------------------------------
// bayes

struct BayesArgs {
  InputArgs in;
  std::string alpha_text = "1";
  int rank = 2;
  int min_train = 5;
  std::optional<std::string> output;
};

int run_bayes(BayesArgs& a) {
  if (!a.in.config.empty()) {
    auto fields = a.in.fields();
    fields.push_back({"alpha", [&](const json& v) { a.alpha_text = v.get<std::string>(); }});
    fields.push_back({"rank", [&](const json& v) { a.rank = v.get<int>(); }});
    fields.push_back({"min-train", [&](const json& v) { a.min_train = v.get<int>(); }});
    fields.push_back({"output", [&](const json& v) { a.output = v.get<std::string>(); }});
    apply_config(a.in.config, fields);
  }
  const rsc::PanelMatrix panel = rsc::load_csv(a.in.input, a.in.treated, a.in.t0);
  const rsc::ThresholdRule rule = rsc::ThresholdRule::fixed_rank(a.rank);

  rsc::GaussianPrior prior;
  const double sigma2 = std::max(rsc::estimate_sigma2_hat(panel), 1e-12);
  if (a.alpha_text == "from-cv") {
    const rsc::SelectionResult sel = rsc::forward_chain_select(
        panel, {rule}, {1e-3, 1e-2, 0.1, 1.0, 10.0, 100.0}, rsc::Method::Ridge, a.min_train);
    prior = rsc::choose_alpha_from_cv(sel.config.eta, sigma2);
  } else {
    prior.alpha = to_double(a.alpha_text, "alpha");
  }

  rsc::RegressionConfig reg;  // point estimate unused below; band carries the result
  const rsc::CounterfactualResult res =
      rsc::estimate_counterfactual(panel, rule, reg, prior);
  const rsc::BayesBand& band = *res.bayes_band;

  json out;
  out["config_echo"] = {{"input", a.in.input},
                        {"treated", a.in.treated},
                        {"t0", a.in.t0},
                        {"alpha", prior.alpha},
                        {"rank", a.rank}};
  json mean = json::array();
  for (Eigen::Index i = 0; i < band.posterior.mean.size(); ++i)
    mean.push_back(band.posterior.mean(i));
  out["posterior_mean"] = mean;
  json cov = json::array();
  for (Eigen::Index i = 0; i < band.posterior.cov.rows(); ++i) {
    json row = json::array();
    for (Eigen::Index j = 0; j < band.posterior.cov.cols(); ++j)
      row.push_back(band.posterior.cov(i, j));
    cov.push_back(row);
  }
  out["posterior_cov"] = cov;
  json series = json::array();
  for (Eigen::Index t = 0; t < panel.num_periods(); ++t)
    series.push_back({{"t", panel.time_labels[t]},
                      {"mean", band.mean(t)},
                      {"std", band.stddev(t)}});
  out["series"] = series;
  write_json(a.output, out);
  return 0;
}

// ---------------------------------------------------------------------------
// simulate

struct SimulateArgs {
  std::string spec_path;
  std::string output;
  std::string config;
  std::optional<std::uint64_t> seed;
};

rsc::LatentModelSpec spec_from_json(const json& j, const std::optional<std::uint64_t>& seed) {
  rsc::LatentModelSpec spec;
  bool seed_in_file = false;
  for (const auto& [key, value] : j.items()) {
    if (key == "n_units")
      spec.n_units = value.get<int>();
    else if (key == "t_len")
      spec.t_len = value.get<int>();
    else if (key == "t0")
      spec.t0 = value.get<int>();
    else if (key == "noise_sigma")
      spec.noise_sigma = value.get<double>();
    else if (key == "p_observe")
      spec.p_observe = value.get<double>();
    else if (key == "seed") {
      spec.seed = value.get<std::uint64_t>();
      seed_in_file = true;
    } else if (key == "model") {
      const std::string m = value.get<std::string>();
      if (m == "paper-f")
        spec.model = rsc::LatentModelSpec::Model::PaperF;
      else if (m == "low-rank")
        spec.model = rsc::LatentModelSpec::Model::LowRank;
      else
        throw UsageError("unknown model: '" + m + "' (expected paper-f|low-rank)");
    } else if (key == "rank")
      spec.rank = value.get<int>();
    else if (key == "coef_seed")
      spec.coef_seed = value.get<std::uint64_t>();
    else
      throw UsageError("unknown spec key: '" + key + "'");
  }
  if (seed)
    spec.seed = *seed;  // flag wins over the file
  else if (!seed_in_file)
    spec.seed = seed_fallback(std::nullopt);
  rsc::validate_spec(spec);
  return spec;
}

int run_simulate(SimulateArgs& a) {
  if (!a.config.empty()) {
    std::vector<ConfigField> fields;
    fields.push_back({"spec", [&](const json& v) { a.spec_path = v.get<std::string>(); }});
    fields.push_back({"output", [&](const json& v) { a.output = v.get<std::string>(); }});
    fields.push_back({"seed", [&](const json& v) { a.seed = v.get<std::uint64_t>(); }});
    apply_config(a.config, fields);
  }
  const auto outputs = split(a.output, ',');
  if (outputs.empty() || outputs.size() > 2)
    throw UsageError("--output expects panel.csv[,truth.csv]");

  const rsc::LatentModelSpec spec = spec_from_json(load_json_file(a.spec_path), a.seed);
  const rsc::GeneratedPanel gen = rsc::generate_panel(spec);
  rsc::write_csv(gen.panel, outputs[0]);
  if (outputs.size() == 2) {
    Eigen::MatrixXd truth(gen.donor_means.rows() + 1, gen.donor_means.cols());
    truth.row(0) = gen.treated_means.transpose();
    truth.bottomRows(gen.donor_means.rows()) = gen.donor_means;
    std::vector<std::string> labels;
    labels.push_back(gen.panel.treated_label);
    labels.insert(labels.end(), gen.panel.unit_labels.begin(), gen.panel.unit_labels.end());
    rsc::write_matrix_csv(truth, labels, gen.panel.time_labels, outputs[1]);
  }
  std::cerr << "simulate: wrote " << gen.panel.num_units() << " units x "
            << gen.panel.num_periods() << " periods, t0 label "
            << gen.panel.time_labels[gen.panel.t0 - 1] << "\n";
  return 0;
}

// ---------------------------------------------------------------------------
// bench

struct BenchArgs {
  std::string grid_text = "0.1,0.4,0.7,1.3,1.9,2.5,3.1";
  int seeds = 20;
  int n_units = 100;
  int t_len = 2000;
  int t0 = 1600;
  double p_observe = 1.0;
  std::string rule_text = "cv:1,2,3,4,5,6,7,8";
  bool fast = false;
  bool baseline = false;
  unsigned jobs = 0;
  std::string config;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> output;
};

int run_bench(BenchArgs& a) {
  if (!a.config.empty()) {
    std::vector<ConfigField> fields;
    fields.push_back({"grid", [&](const json& v) { a.grid_text = v.get<std::string>(); }});
    fields.push_back({"seeds", [&](const json& v) { a.seeds = v.get<int>(); }});
    fields.push_back({"n-units", [&](const json& v) { a.n_units = v.get<int>(); }});
    fields.push_back({"t-len", [&](const json& v) { a.t_len = v.get<int>(); }});
    fields.push_back({"t0", [&](const json& v) { a.t0 = v.get<int>(); }});
    fields.push_back({"p", [&](const json& v) { a.p_observe = v.get<double>(); }});
    fields.push_back({"rule", [&](const json& v) { a.rule_text = v.get<std::string>(); }});
    fields.push_back({"fast", [&](const json& v) { a.fast = v.get<bool>(); }});
    fields.push_back({"baseline", [&](const json& v) { a.baseline = v.get<bool>(); }});
    fields.push_back({"jobs", [&](const json& v) { a.jobs = v.get<unsigned>(); }});
    fields.push_back({"seed", [&](const json& v) { a.seed = v.get<std::uint64_t>(); }});
    fields.push_back({"output", [&](const json& v) { a.output = v.get<std::string>(); }});
    apply_config(a.config, fields);
  }
  rsc::LatentModelSpec spec;
  spec.n_units = a.fast ? 50 : a.n_units;
  spec.t_len = a.fast ? 500 : a.t_len;
  spec.t0 = a.fast ? 400 : a.t0;
  spec.p_observe = a.p_observe;
  spec.seed = seed_fallback(a.seed);

  std::vector<double> grid;
  for (const auto& tok : split(a.grid_text, ',')) grid.push_back(to_double(tok, "noise level"));

  rsc::BenchmarkOptions opts;
  opts.n_seeds = a.seeds;
  const MuSpec mu = parse_mu(a.rule_text, /*allow_cv=*/true);
  if (mu.is_cv) {
    // rank chosen per panel by forward chaining on the tail of the pre-period
    const Eigen::Index min_train = std::max<Eigen::Index>(2, spec.t0 - 50);
    opts.rule = rsc::ThresholdRule::forward_chain(mu.cv_ranks, {}, min_train);
  } else {
    opts.rule = mu.rule;
  }
  opts.jobs = a.jobs;

  const auto rows = rsc::run_benchmark(grid, spec, /*with_denoising=*/true, opts);
  std::vector<rsc::BenchmarkRow> raw_rows;
  if (a.baseline) raw_rows = rsc::run_benchmark(grid, spec, /*with_denoising=*/false, opts);

  std::ostringstream csv;
  csv << "noise,pre_mse,post_mse";
  if (a.baseline) csv << ",pre_mse_nodenoise,post_mse_nodenoise";
  csv << "\n";
  char buf[64];
  const auto fmt = [&](double v) {
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return std::string(buf);
  };
  for (std::size_t i = 0; i < rows.size(); ++i) {
    csv << fmt(rows[i].noise) << ',' << fmt(rows[i].pre_mse) << ',' << fmt(rows[i].post_mse);
    if (a.baseline) csv << ',' << fmt(raw_rows[i].pre_mse) << ',' << fmt(raw_rows[i].post_mse);
    csv << "\n";
  }
  write_text(a.output, csv.str());
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"robust synthetic control toolkit"};
  app.set_version_flag("--version", std::string("rsc ") + kVersion);
  app.require_subcommand(1);

  DenoiseArgs den;
  auto* den_cmd = app.add_subcommand("denoise", "de-noise a panel by singular value thresholding");
  den.in.attach(den_cmd);
  den_cmd->add_option("--rule", den.rule_text, "universal:<omega>|rank:<k>|value:<mu>");
  den_cmd->add_option("--output", den.output, "CSV for the de-noised matrix")->required();

  EstimateArgs est;
  auto* est_cmd = app.add_subcommand("estimate", "estimate the counterfactual for the treated unit");
  est.in.attach(est_cmd);
  est_cmd->add_option("--method", est.method, "ols|ridge|lasso");
  est_cmd->add_option("--eta", est.eta_text, "<value>|cv:<comma list>");
  est_cmd->add_option("--mu", est.mu_text, "rank:<k>|universal:<omega>|value:<mu>|cv:<rank list>");
  est_cmd->add_option("--min-train", est.min_train, "forward chaining training prefix");
  est_cmd->add_option("--aggregate", est.aggregate, "gamma:<g> enables column aggregation");
  est_cmd->add_option("--bayes", est.bayes, "alpha:<v>|from-cv adds a predictive band");
  est_cmd->add_option("--project", est.project, "denoised|raw post-period projection");
  std::string est_out;
  est_cmd->add_option("--output", est_out, "result JSON (stdout when omitted)");

  PlaceboArgs pla;
  auto* pla_cmd = app.add_subcommand("placebo", "treat every unit in turn and rank divergences");
  pla.in.attach(pla_cmd);
  pla_cmd->add_option("--method", pla.method, "ols|ridge|lasso");
  pla_cmd->add_option("--eta", pla.eta_text, "regularization strength");
  pla_cmd->add_option("--mu", pla.mu_text, "rank:<k>|universal:<omega>|value:<mu>");
  pla_cmd->add_flag("--include-treated", pla.include_treated,
                    "keep the treated unit in placebo donor pools");
  pla_cmd->add_option("--jobs", pla.jobs, "worker threads");
  std::string pla_out;
  pla_cmd->add_option("--output", pla_out, "report JSON (stdout when omitted)");

  BayesArgs bay;
  auto* bay_cmd = app.add_subcommand("bayes", "posterior weights and predictive band");
  bay.in.attach(bay_cmd);
  bay_cmd->add_option("--alpha", bay.alpha_text, "<value>|from-cv");
  bay_cmd->add_option("--rank", bay.rank, "kept singular values");
  bay_cmd->add_option("--min-train", bay.min_train, "forward chaining training prefix");
  std::string bay_out;
  bay_cmd->add_option("--output", bay_out, "result JSON (stdout when omitted)");

  SimulateArgs sim;
  auto* sim_cmd = app.add_subcommand("simulate", "draw a synthetic panel from a latent model");
  sim_cmd->add_option("--spec", sim.spec_path, "JSON latent model spec")->required();
  sim_cmd->add_option("--output", sim.output, "panel.csv[,truth.csv]")->required();
  sim_cmd->add_option("--config", sim.config, "JSON file overriding flags");
  std::uint64_t sim_seed = 0;
  auto* sim_seed_opt = sim_cmd->add_option("--seed", sim_seed, "seed override");

  BenchArgs ben;
  auto* ben_cmd = app.add_subcommand("bench", "training vs generalization error sweep");
  ben_cmd->add_option("--grid", ben.grid_text, "comma list of noise levels");
  ben_cmd->add_option("--seeds", ben.seeds, "seeds per noise level");
  ben_cmd->add_option("--n-units", ben.n_units, "units");
  ben_cmd->add_option("--t-len", ben.t_len, "periods");
  ben_cmd->add_option("--t0", ben.t0, "pre-intervention periods");
  ben_cmd->add_option("--p", ben.p_observe, "observation probability");
  ben_cmd->add_option("--rule", ben.rule_text,
                      "threshold rule for the de-noised run (cv:<ranks>|universal:<w>|rank:<k>)");
  ben_cmd->add_flag("--fast", ben.fast, "N=50, T=500, t0=400 preset");
  ben_cmd->add_flag("--baseline", ben.baseline, "also run without thresholding");
  ben_cmd->add_option("--jobs", ben.jobs, "worker threads");
  ben_cmd->add_option("--config", ben.config, "JSON file overriding flags");
  std::uint64_t ben_seed = 0;
  auto* ben_seed_opt = ben_cmd->add_option("--seed", ben_seed, "base seed");
  std::string ben_out;
  ben_cmd->add_option("--output", ben_out, "CSV output (stdout when omitted)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);  // prints message and usage hint to stderr
    return 1;
  }

  try {
    if (*den_cmd) return run_denoise(den);
    if (*est_cmd) {
      if (est_cmd->count("--output")) est.output = est_out;
      return run_estimate(est);
    }
    if (*pla_cmd) {
      if (pla_cmd->count("--output")) pla.output = pla_out;
      return run_placebo(pla);
    }
    if (*bay_cmd) {
      if (bay_cmd->count("--output")) bay.output = bay_out;
      return run_bayes(bay);
    }
    if (*sim_cmd) {
      if (sim_seed_opt->count()) sim.seed = sim_seed;
      return run_simulate(sim);
    }
    if (*ben_cmd) {
      if (ben_seed_opt->count()) ben.seed = ben_seed;
      if (ben_cmd->count("--output")) ben.output = ben_out;
      return run_bench(ben);
    }
  } catch (const UsageError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "runtime error: " << e.what() << "\n";
    return 2;
  }
  return 0;
}
