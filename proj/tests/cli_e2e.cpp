#include <catch2/catch_amalgamated.hpp>

#include <json.hpp>
#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <string>

#include "helpers.hpp"

using json = nlohmann::json;
using testutil::read_file;
using testutil::write_file;

namespace {

const std::string kCli = RSC_CLI_PATH;
const std::string kData = RSC_DATA_DIR;

struct RunResult {
  int code;
  std::string out;
  std::string err;
};

RunResult run(const std::string& args, const std::string& env = "") {
  const std::string out_path =
      (std::filesystem::temp_directory_path() / "rsc_cli_stdout.txt").string();
  const std::string err_path =
      (std::filesystem::temp_directory_path() / "rsc_cli_stderr.txt").string();
  const std::string cmd =
      env + (env.empty() ? "" : " ") + kCli + " " + args + " >" + out_path + " 2>" + err_path;
  const int status = std::system(cmd.c_str());
  RunResult r;
  r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  r.out = read_file(out_path);
  r.err = read_file(err_path);
  return r;
}

std::string tmp(const std::string& name) {
  return (std::filesystem::temp_directory_path() / name).string();
}

}  // namespace

TEST_CASE("estimate on the bundled noiseless linear fixture") {
  const RunResult r = run("estimate --input " + kData +
                          "/linear_fixture.csv --treated treated --t0 y8 --mu value:0");
  INFO(r.err);
  REQUIRE(r.code == 0);
  const json out = json::parse(r.out);
  REQUIRE(out["pre_mse"].get<double>() < 1e-16);
  REQUIRE(out["series"].size() == 12);
  REQUIRE(out["weights"].size() == 4);
}

TEST_CASE("missing required flag exits 1 with usage text") {
  const RunResult r = run("estimate --input " + kData + "/linear_fixture.csv --t0 y8");
  REQUIRE(r.code == 1);
  REQUIRE(r.err.find("--treated") != std::string::npos);
}

TEST_CASE("unknown subcommand exits 1") {
  const RunResult r = run("frobnicate");
  REQUIRE(r.code == 1);
}

TEST_CASE("--version exits 0") {
  const RunResult r = run("--version");
  REQUIRE(r.code == 0);
  REQUIRE(r.out.find("rsc") != std::string::npos);
}

TEST_CASE("denoise writes the matrix and a JSON sidecar") {
  const std::string out = tmp("rsc_mhat.csv");
  const RunResult r = run("denoise --input " + kData +
                          "/basque_style.csv --treated 'Basque Country' --t0 1970 "
                          "--rule rank:2 --output " +
                          out);
  INFO(r.err);
  REQUIRE(r.code == 0);
  REQUIRE(std::filesystem::exists(out));
  const json side = json::parse(read_file(tmp("rsc_mhat.json")));
  REQUIRE(side["p_hat"].get<double>() == 1.0);
  REQUIRE(side["kept_singular_values"].size() == 2);
  REQUIRE(side["mu_used"].get<double>() > 0.0);
  // the de-noised file loads as a dense matrix with the donor labels
  const auto lines = read_file(out);
  REQUIRE(lines.find("Cataluna") != std::string::npos);
}

TEST_CASE("placebo ranks the basque-style treated region first") {
  const std::string out = tmp("rsc_placebo.json");
  const RunResult r = run("placebo --input " + kData +
                          "/basque_style.csv --treated 'Basque Country' --t0 1970 "
                          "--mu rank:2 --output " +
                          out);
  INFO(r.err);
  REQUIRE(r.code == 0);
  const json report = json::parse(read_file(out));
  REQUIRE(report["treated_rank"].get<int>() == 1);
  REQUIRE(report["units"].size() == 17);
}

TEST_CASE("bayes emits posterior parameters and a band") {
  const RunResult r = run("bayes --input " + kData +
                          "/basque_style.csv --treated 'Basque Country' --t0 1970 "
                          "--rank 2 --alpha from-cv");
  INFO(r.err);
  REQUIRE(r.code == 0);
  const json out = json::parse(r.out);
  REQUIRE(out["posterior_mean"].size() == 16);
  REQUIRE(out["posterior_cov"].size() == 16);
  REQUIRE(out["series"].size() == 43);
  for (const auto& row : out["series"]) REQUIRE(row["std"].get<double>() > 0.0);
}

TEST_CASE("simulate then estimate end to end") {
  const std::string spec_path = tmp("rsc_sim_spec.json");
  write_file(spec_path, R"({"n_units": 12, "t_len": 60, "t0": 45,
                            "noise_sigma": 0.3, "p_observe": 0.9, "seed": 5})");
  const std::string panel_path = tmp("rsc_sim_panel.csv");
  const std::string truth_path = tmp("rsc_sim_truth.csv");
  const RunResult sim =
      run("simulate --spec " + spec_path + " --output " + panel_path + "," + truth_path);
  INFO(sim.err);
  REQUIRE(sim.code == 0);
  REQUIRE(std::filesystem::exists(panel_path));
  REQUIRE(std::filesystem::exists(truth_path));

  const RunResult est =
      run("estimate --input " + panel_path + " --treated u1 --t0 t45 --mu rank:2");
  INFO(est.err);
  REQUIRE(est.code == 0);
  const json out = json::parse(est.out);
  REQUIRE(out["pre_mse"].get<double>() < 1.0);
}

TEST_CASE("simulate falls back to the RSC_SEED environment variable") {
  const std::string spec_path = tmp("rsc_env_spec.json");
  write_file(spec_path, R"({"n_units": 6, "t_len": 20, "t0": 15, "noise_sigma": 0.5})");
  const std::string a = tmp("rsc_env_a.csv");
  const std::string b = tmp("rsc_env_b.csv");
  REQUIRE(run("simulate --spec " + spec_path + " --output " + a, "RSC_SEED=123").code == 0);
  REQUIRE(run("simulate --spec " + spec_path + " --output " + b, "RSC_SEED=123").code == 0);
  REQUIRE(read_file(a) == read_file(b));
  const std::string c = tmp("rsc_env_c.csv");
  REQUIRE(run("simulate --spec " + spec_path + " --output " + c, "RSC_SEED=124").code == 0);
  REQUIRE(read_file(a) != read_file(c));
}

TEST_CASE("rerunning a config produces byte-identical output") {
  const std::string out1 = tmp("rsc_idem_1.json");
  const std::string out2 = tmp("rsc_idem_2.json");
  const std::string base = "estimate --input " + kData +
                           "/basque_style.csv --treated 'Basque Country' --t0 1970 "
                           "--method ridge --eta 0.5 --mu rank:2 --output ";
  REQUIRE(run(base + out1).code == 0);
  REQUIRE(run(base + out2).code == 0);
  REQUIRE(read_file(out1) == read_file(out2));
}

TEST_CASE("config file overrides flags") {
  const std::string cfg = tmp("rsc_cfg.json");
  write_file(cfg, R"({"method": "ridge", "eta": "2.5"})");
  const RunResult r = run("estimate --input " + kData +
                          "/linear_fixture.csv --treated treated --t0 y8 --mu value:0 "
                          "--method ols --config " +
                          cfg);
  INFO(r.err);
  REQUIRE(r.code == 0);
  const json out = json::parse(r.out);
  REQUIRE(out["config_echo"]["method"] == "ridge");
  REQUIRE(out["config_echo"]["eta"].get<double>() == 2.5);
}

TEST_CASE("unknown config keys are rejected") {
  const std::string cfg = tmp("rsc_cfg_bad.json");
  write_file(cfg, R"({"metod": "ridge"})");
  const RunResult r = run("estimate --input " + kData +
                          "/linear_fixture.csv --treated treated --t0 y8 --config " + cfg);
  REQUIRE(r.code == 1);
  REQUIRE(r.err.find("metod") != std::string::npos);
}

TEST_CASE("bench smoke grid") {
  const std::string out = tmp("rsc_bench.csv");
  const RunResult r = run(
      "bench --grid 0.5 --seeds 2 --n-units 30 --t-len 200 --t0 160 --baseline --output " + out);
  INFO(r.err);
  REQUIRE(r.code == 0);
  const std::string csv = read_file(out);
  REQUIRE(csv.find("noise,pre_mse,post_mse,pre_mse_nodenoise,post_mse_nodenoise") == 0);
  REQUIRE(csv.find("0.5,") != std::string::npos);
}

TEST_CASE("estimate with cv grids and a bayes band") {
  const RunResult r = run("estimate --input " + kData +
                          "/basque_style.csv --treated 'Basque Country' --t0 1970 "
                          "--method ridge --eta cv:0.01,0.1,1 --mu cv:1,2,3 "
                          "--bayes from-cv --min-train 8");
  INFO(r.err);
  REQUIRE(r.code == 0);
  const json out = json::parse(r.out);
  REQUIRE(out["config_echo"]["mu"].get<std::string>().rfind("rank:", 0) == 0);
  REQUIRE(out["config_echo"].contains("alpha"));
  for (const auto& row : out["series"]) REQUIRE(row.contains("std"));
}

TEST_CASE("estimate with aggregation") {
  const RunResult r = run("estimate --input " + kData +
                          "/basque_style.csv --treated 'Basque Country' --t0 1970 "
                          "--aggregate gamma:0.25");
  INFO(r.err);
  REQUIRE(r.code == 0);
  const json out = json::parse(r.out);
  REQUIRE(out["aggregate"]["delta"].get<int>() >= 1);
  REQUIRE(out["series"].size() == 43 - 16);  // post periods only
}
