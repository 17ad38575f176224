#include <chrono>
#include <cstdlib>
#include <filesystem>
#include <map>
#include <fstream>
#include <sstream>

#include "doctest.h"
#include "expreg/error.hpp"
#include "expreg/harness.hpp"
#include "expreg/io.hpp"

using namespace expreg;
using namespace expreg::harness;
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

fs::path scratch(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / ("expreg_harness_" + name);
  fs::remove_all(dir);
  return dir;
}

int run(const std::string& args) {
  const std::string cmd = std::string(EXPREG_BINARY) + " " + args + " >/dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::string desk() { return std::string(EXPREG_SOURCE_DIR) + "/configs/desk.json"; }

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

json read_json(const fs::path& p) { return json::parse(slurp(p)); }

}  // namespace

TEST_CASE("overrides parse as JSON and fall back to strings") {
  json doc = apply_overrides(json{{"m", 10}}, {{"m", "40"}, {"init_mode", "standard"}, {"seeds", "[1,2]"},
                                               {"early_stop", "false"}});
  CHECK(doc["m"] == 40);
  CHECK(doc["init_mode"] == "standard");
  CHECK(doc["seeds"] == json::array({1, 2}));
  CHECK(doc["early_stop"] == false);
}

TEST_CASE("config parsing and validation") {
  ExperimentConfig cfg = ExperimentConfig::from_json({{"m", 20}, {"sigma", 0.5}, {"out", "x"}});
  CHECK(cfg.m == 20);
  CHECK(cfg.eta_source == EtaSource::paper_formula);
  CHECK_NOTHROW(cfg.validate());

  const ExperimentConfig with_eta = ExperimentConfig::from_json({{"eta", 0.1}, {"out", "x"}});
  CHECK(with_eta.eta_source == EtaSource::override_value);
  CHECK_THROWS_AS(ExperimentConfig::from_json({{"eta", 0.1}, {"eta_source", "paper-formula"}, {"out", "x"}}).validate(),
                  ParameterDomainError);
  CHECK_THROWS_AS(ExperimentConfig::from_json({{"colour", 1}}), ParameterDomainError);
  CHECK_THROWS_AS(ExperimentConfig::from_json({{"m", "many"}}), ParameterDomainError);
  CHECK_THROWS_AS(ExperimentConfig::from_json({{"seeds", json::array()}, {"out", "x"}}).validate(),
                  ParameterDomainError);
  CHECK_THROWS_AS(ExperimentConfig::from_json({{"m", 7}, {"out", "x"}}).validate(), ParameterDomainError);
  CHECK_THROWS_AS(ExperimentConfig::from_json({{"m", 8}}).validate(), ParameterDomainError);

  // Round trip through JSON.
  const ExperimentConfig back = ExperimentConfig::from_json(cfg.to_json());
  CHECK(back.to_json() == cfg.to_json());
}

TEST_CASE("train writes traces and a summary consistent with them") {
  const fs::path out = scratch("train");
  REQUIRE(run("train --config " + desk() + " --T 40 --seeds [0,3] --out " + out.string()) == 0);
  const json summary = read_json(out / "summary.json");
  REQUIRE(summary["runs"].size() == 2);
  for (const auto& r : summary["runs"]) {
    std::ifstream in(out / ("trace_seed" + std::to_string(r["seed"].get<int>()) + ".csv"));
    const auto records = io::read_trace_csv(in);
    REQUIRE(records.size() == 41);
    CHECK(records.back().loss == r["final_loss"].get<double>());
    CHECK(records.front().loss == r["initial_loss"].get<double>());
    CHECK(records.back().t == r["steps_run"].get<std::int64_t>());
    CHECK(r["reached_epsilon"] == (records.back().loss <= 0.01));
  }
}

TEST_CASE("train with T = 0 records only the initial state") {
  const fs::path out = scratch("t0");
  REQUIRE(run("train --config " + desk() + " --T 0 --seeds 2 --out " + out.string()) == 0);
  std::ifstream in(out / "trace_seed2.csv");
  CHECK(io::read_trace_csv(in).size() == 1);
}

TEST_CASE("identical runs produce identical files, regardless of threads") {
  const fs::path a = scratch("det_a");
  const fs::path b = scratch("det_b");
  REQUIRE(run("train --config " + desk() + " --T 30 --out " + a.string()) == 0);
  REQUIRE(run("train --config " + desk() + " --T 30 --out " + b.string()) == 0);
  CHECK(slurp(a / "trace_seed0.csv") == slurp(b / "trace_seed0.csv"));
  CHECK(slurp(a / "trace_seed2.csv") == slurp(b / "trace_seed2.csv"));
  setenv("EXPREG_THREADS", "3", 1);
  const fs::path threaded = scratch("det_threads");
  REQUIRE(run("train --config " + desk() + " --T 30 --out " + threaded.string()) == 0);
  unsetenv("EXPREG_THREADS");
  CHECK(slurp(a / "trace_seed1.csv") == slurp(threaded / "trace_seed1.csv"));
}

TEST_CASE("failures exit nonzero without partial output") {
  CHECK(run("train --config " + desk() + " --out /proc/expreg_denied") != 0);
  CHECK_FALSE(fs::exists("/proc/expreg_denied"));

  const fs::path out = scratch("bad");
  CHECK(run("train --config " + desk() + " --m 3 --out " + out.string()) != 0);
  CHECK(run("train --config /nonexistent.json --out " + out.string()) != 0);
  CHECK(run("train --config " + desk() + " --colour 1 --out " + out.string()) != 0);
  CHECK(run("ntk --config " + desk() + " --dataset_file /nonexistent.txt --out " + out.string()) != 0);
  CHECK(run("sweep --config " + desk() + " --m_grid [] --out " + out.string()) != 0);
  CHECK((!fs::exists(out) || fs::is_empty(out)));

  // A tiny σ gives an empirical B below R: the precondition R < B fails.
  const fs::path adversarial = scratch("r_gt_b");
  CHECK(run("verify --config " + desk() + " --sigma 0.00001 --out " + adversarial.string()) != 0);
  CHECK_FALSE(fs::exists(adversarial / "verdict.json"));
}

TEST_CASE("ntk on an orthonormal dataset has zero off-diagonals") {
  const fs::path dir = scratch("ntk_orth");
  fs::create_directories(dir);
  {
    std::ofstream f(dir / "data.txt");
    f << "3 3\n1 0 0 0.5\n0 1 0 -0.5\n0 0 1 0.25\n";
  }
  const fs::path out = dir / "out";
  REQUIRE(run("ntk --config " + desk() + " --dataset_file " + (dir / "data.txt").string() +
              " --mc_samples 1000 --seeds 0 --out " + out.string()) == 0);
  std::ifstream in(out / "kernel_cts_closed.csv");
  const KernelMatrix k = io::read_kernel_csv(in);
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j)
      if (i != j) CHECK(k.h(i, j) == 0.0);

  const json spectral = read_json(out / "spectral.json");
  const auto& grid = spectral["m_grid"];
  REQUIRE(grid.size() == 3);
}

TEST_CASE("ntk gap shrinks as the width grows") {
  const fs::path out = scratch("ntk_grid");
  REQUIRE(run("ntk --config " + desk() + " --mc_samples 1000 --seeds [0,1,2,3,4,5,6,7,8,9] --out " +
              out.string()) == 0);
  const json grid = read_json(out / "spectral.json")["m_grid"];
  CHECK(grid[0]["median_fro_gap"].get<double>() > grid[1]["median_fro_gap"].get<double>());
  CHECK(grid[1]["median_fro_gap"].get<double>() > grid[2]["median_fro_gap"].get<double>());
}

TEST_CASE("a single-point sweep matches train and ntk") {
  const std::string common = "--config " + desk() + " --T 25 --seeds 1 --m 400 --m_grid [400] --mc_samples 10 ";
  const fs::path sweep_out = scratch("sweep");
  const fs::path train_out = scratch("sweep_train");
  const fs::path ntk_out = scratch("sweep_ntk");
  REQUIRE(run("sweep " + common + "--out " + sweep_out.string()) == 0);
  REQUIRE(run("train " + common + "--out " + train_out.string()) == 0);
  REQUIRE(run("ntk " + common + "--out " + ntk_out.string()) == 0);

  std::map<std::string, std::string> metrics;
  std::ifstream in(sweep_out / "sweep.csv");
  std::string line;
  std::getline(in, line);
  CHECK(line == "m,sigma,seed,metric,value");
  while (std::getline(in, line)) {
    std::vector<std::string> cells;
    std::stringstream row(line);
    std::string cell;
    while (std::getline(row, cell, ',')) cells.push_back(cell);
    if (line.back() == ',') cells.emplace_back();  // empty value (NaN)
    REQUIRE(cells.size() == 5);
    CHECK(cells[0] == "400");
    metrics[cells[3]] = cells[4];
  }
  const json run0 = read_json(train_out / "summary.json")["runs"][0];
  CHECK(std::stod(metrics["final_loss"]) == run0["final_loss"].get<double>());
  CHECK(std::stod(metrics["lambda"]) == run0["lambda"].get<double>());
  const json dis0 = read_json(ntk_out / "spectral.json")["dis"][0];
  CHECK(std::stod(metrics["fro_gap"]) == dis0["fro_gap_to_cts"].get<double>());
  CHECK(std::stod(metrics["lambda_dis"]) == dis0["lambda_min"].get<double>());
}

TEST_CASE("sweep pass rate of the concentration lemma rises with width") {
  const fs::path out = scratch("sweep_rate");
  REQUIRE(run("sweep --config " + desk() + " --T 1 --seeds [0,1,2,3,4,5] --m_grid [100,200000] --out " +
              out.string()) == 0);
  std::ifstream in(out / "sweep.csv");
  std::string line;
  std::map<std::string, double> pass;
  while (std::getline(in, line)) {
    if (line.find("lemma31_part1_pass") == std::string::npos) continue;
    const auto m = line.substr(0, line.find(','));
    pass[m] += std::stod(line.substr(line.rfind(',') + 1));
  }
  CHECK(pass["200000"] > pass["100"]);
}

TEST_CASE("verify on the desk config passes, and a one-trial run is quick") {
  const fs::path out = scratch("verify");
  REQUIRE(run("verify --config " + desk() + " --T 100 --out " + out.string()) == 0);
  const json verdict = read_json(out / "verdict.json");
  CHECK(verdict["all_pass"] == true);
  for (const char* key : {"B", "eta", "lambda", "D", "R"}) CHECK(verdict.contains(key));
  for (const auto& c : verdict["checks"]) {
    for (const char* key : {"name", "lhs", "rhs", "holds", "trials", "violation_rate", "allowed_failure"})
      CHECK(c.contains(key));
  }

  const auto start = std::chrono::steady_clock::now();
  const fs::path quick = scratch("verify_quick");
  CHECK(run("verify --config " + desk() + " --trials 1 --out " + quick.string()) <= 1);
  const double seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  CHECK(seconds < 60.0);
  CHECK(fs::exists(quick / "verdict.json"));
}
