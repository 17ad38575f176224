// Acceptance suite: one PASS/FAIL line per criterion.
//
//   acceptance <id>    ids: 01 02 03 04 05 06_08 09 10, or "all"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "expreg/harness.hpp"
#include "expreg/kernel.hpp"
#include "expreg/rng.hpp"
#include "expreg/theory.hpp"
#include "expreg/training.hpp"

using namespace expreg;
namespace fs = std::filesystem;

namespace {

struct Verdict {
  std::string id;
  std::string title;
  bool pass = false;
  std::string detail;
};

class Stopwatch {
 public:
  [[nodiscard]] double seconds() const {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
  }

 private:
  std::chrono::steady_clock::time_point start_ = std::chrono::steady_clock::now();
};

std::string fmt(const char* pattern, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, pattern, args...);
  return buf;
}

void report(const Verdict& v) {
  std::printf("[%s] criterion %s: %s -- %s\n", v.pass ? "PASS" : "FAIL", v.id.c_str(), v.title.c_str(),
              v.detail.c_str());
  std::fflush(stdout);
}

/// ‖v‖² accumulated in index order, the order loss() sums in.
double squared_norm_in_order(const Eigen::VectorXd& v) {
  double acc = 0.0;
  for (Eigen::Index i = 0; i < v.size(); ++i) acc += v(i) * v(i);
  return acc;
}

int uniform_int(Rng& rng, int lo, int hi) {
  return lo + static_cast<int>(rng.uniform() * (hi - lo + 1));
}

// ---------------------------------------------------------------------------

Verdict zero_initial_loss() {
  const Stopwatch clock;
  Rng pick(20251);
  int exact = 0;
  const int configs = 100;
  for (int k = 0; k < configs; ++k) {
    const int n = uniform_int(pick, 1, 16);
    const int d = uniform_int(pick, 1, 16);
    const int m = 2 * uniform_int(pick, 1, 2048);
    const auto kind = k % 2 == 0 ? DatasetKind::sphere_interior : DatasetKind::normalized_gaussian;
    const Dataset ds = gen_dataset(n, d, 1000 + k, kind);
    const NetworkState s = init_paired(d, m, 1.0, 5000 + k);
    const Eigen::VectorXd f = forward(s, ds);
    RunSettings settings;
    settings.m = m;
    settings.steps = 0;
    settings.eta_source = EtaSource::override_value;
    settings.eta = 1e-3;
    const TrainTrace trace = train(resolve_hyperparams(settings, ds, s), ds, s, {});
    const double y2 = squared_norm_in_order(ds.labels());
    const bool ok = (f.array() == 0.0).all() && loss(f, ds.labels()) == y2 && trace.records[0].loss == y2;
    exact += ok ? 1 : 0;
  }
  const double secs = clock.seconds();
  return {"01", "paired init gives F(0) = 0 and loss(0) = ||y||^2 bit-exactly",
          exact == configs && secs < 10.0,
          fmt("%d/%d configurations exact (n,d <= 16, m <= 4096); %.2f s (limit 10 s)", exact, configs, secs)};
}

Verdict gradient_oracle() {
  const Stopwatch clock;
  const double h = 1e-5;
  double worst = 0.0;
  Rng pick(777);
  for (int k = 0; k < 50; ++k) {
    const int n = uniform_int(pick, 1, 5);
    const int m = uniform_int(pick, 1, 8);
    const int d = uniform_int(pick, 1, 4);
    const Dataset ds = gen_dataset(n, d, 300 + k, DatasetKind::sphere_interior);
    const NetworkState s = init_standard(d, m, 1.0, 600 + k);
    const GradientMatrix g = gradient(s, ds);
    Eigen::MatrixXd fd(d, m);
    for (int r = 0; r < m; ++r) {
      for (int c = 0; c < d; ++c) {
        Eigen::MatrixXd plus = s.weights();
        Eigen::MatrixXd minus = s.weights();
        plus(c, r) += h;
        minus(c, r) -= h;
        fd(c, r) = (half_loss(forward(s.with_weights(plus), ds), ds.labels()) -
                    half_loss(forward(s.with_weights(minus), ds), ds.labels())) /
                   (2 * h);
      }
    }
    worst = std::max(worst, (g.dw - fd).norm() / std::max(fd.norm(), 1e-300));
  }
  const double secs = clock.seconds();
  return {"02", "analytic gradient matches central finite differences", worst <= 1e-5 && secs < 10.0,
          fmt("worst relative error %.3e over 50 instances (limit 1e-5); %.2f s (limit 10 s)", worst, secs)};
}

Verdict closed_vs_monte_carlo() {
  const Stopwatch clock;
  const Dataset ds = gen_dataset(6, 8, 0, DatasetKind::sphere_interior);
  const KernelMatrix closed = h_cts_closed(ds, 0.5);
  const MonteCarloKernel mc = h_cts_mc_with_error(ds, 0.5, 1000000, 1);
  int within = 0;
  int total = 0;
  double worst_z = 0.0;
  for (int i = 0; i < 6; ++i) {
    for (int j = 0; j < 6; ++j) {
      ++total;
      const double diff = std::abs(mc.kernel.h(i, j) - closed.h(i, j));
      const double se = mc.std_error(i, j);
      if (diff <= 3.0 * se) ++within;
      if (se > 0.0) worst_z = std::max(worst_z, diff / se);
    }
  }
  const double secs = clock.seconds();
  const double frac = static_cast<double>(within) / total;
  return {"03", "closed-form H^cts agrees with Monte Carlo (1e6 samples)", frac >= 0.95 && secs < 60.0,
          fmt("%d/%d entries within 3 SE (%.1f%%, need 95%%), max |z| = %.2f; %.2f s (limit 60 s)", within,
              total, 100 * frac, worst_z, secs)};
}

Verdict concentration_rate() {
  const Stopwatch clock;
  const Dataset ds = gen_dataset(8, 8, 7, DatasetKind::normalized_gaussian);
  const double sigma = 0.25;
  const double lambda = lambda_min(h_cts_closed(ds, sigma)).lambda_min;
  const ConcentrationReport rep = check_kernel_concentration(ds, sigma, {100, 400, 1600}, 20, 11, lambda, 0.05);
  const double secs = clock.seconds();
  std::string medians;
  for (const auto& p : rep.points) medians += fmt("m=%d: %.4f ", p.m, p.median_fro_error);
  return {"04", "median ||H^dis - H^cts||_F decays like m^-1/2",
          rep.slope >= -0.65 && rep.slope <= -0.35 && secs < 120.0,
          fmt("slope %.3f (need [-0.65, -0.35]); medians %s; %.2f s (limit 120 s)", rep.slope, medians.c_str(), secs)};
}

Verdict decomposition_identity() {
  const Stopwatch clock;
  const Dataset ds = gen_dataset(8, 8, 7, DatasetKind::normalized_gaussian);
  RunSettings s;
  s.m = 4000;
  s.sigma = 0.25;
  s.steps = 500;
  TrainOptions opts;
  opts.early_stop = false;
  // One run with a step size large enough to move the loss, one with the formula step size.
  double worst = 0.0;
  double moved = 0.0;
  for (auto source : {EtaSource::override_value, EtaSource::paper_formula}) {
    s.eta_source = source;
    s.eta = 2e-5;
    const TrainTrace trace = train(s, ds, InitMode::paired, 0, opts);
    for (std::size_t t = 1; t < trace.records.size(); ++t) {
      worst = std::max(worst, std::abs(trace.records[t].residual) / std::max(1.0, trace.records[t - 1].loss));
    }
    if (source == EtaSource::override_value) moved = trace.final_loss() / trace.records[0].loss;
  }
  const double secs = clock.seconds();
  return {"05", "loss decomposition residual is an identity over 500 steps", worst <= 1e-8 && secs < 60.0,
          fmt("max |resid|/max(1,loss) = %.3e (limit 1e-8) over 2 x 500 steps (override eta 2e-5, "
              "final/initial loss %.3g; formula eta); %.2f s (limit 60 s)",
              worst, moved, secs)};
}

std::vector<Verdict> convergence_suite() {
  // Desk scale with the formula step size. The theorem's T is ~1e8-1e9 steps here;
  // we run a fixed budget per seed, check every step, and project the rest.
  constexpr std::int64_t kStepsPerSeed = 2500;
  constexpr int kSeeds = 20;
  const Stopwatch clock;
  const Dataset ds = gen_dataset(8, 8, 7, DatasetKind::normalized_gaussian);
  RunSettings s;
  s.m = 4000;
  s.sigma = 0.25;
  s.epsilon = 0.01;

  struct Run {
    TrainTrace trace;
    double theorem_t = 0.0;
  };
  std::vector<Run> runs(kSeeds);
  harness::parallel_for(kSeeds, [&](std::size_t k) {
    const NetworkState init = init_paired(8, s.m, s.sigma, k);
    RunSettings local = s;
    HyperParams probe = resolve_hyperparams([&] {
      RunSettings t0 = local;
      t0.steps = 0;
      return t0;
    }(), ds, init);
    const double t_formula = theorem_steps(probe.n, probe.m, probe.eta, probe.lambda, probe.epsilon);
    local.steps = std::min<std::int64_t>(kStepsPerSeed, static_cast<std::int64_t>(std::ceil(t_formula)));
    runs[k].trace = train(resolve_hyperparams(local, ds, init), ds, init, {});
    runs[k].theorem_t = t_formula;
  });

  int ratio_ok = 0;
  int reached = 0;
  double worst_ratio_margin = -1.0;
  double max_projected = 0.0;
  double max_theorem_t = 0.0;
  double min_theorem_t = INFINITY;
  bool projections_within_t = true;
  int drift_ok = 0;
  int grad_ok = 0;
  double worst_drift_frac = 0.0;
  double worst_grad = 0.0;
  int c1_ok = 0;
  int c2_ok = 0;
  int c3_ok = 0;
  double worst_c1 = -INFINITY;
  double worst_c2 = 0.0;
  double worst_c3 = 0.0;
  std::int64_t steps_checked = 0;

  for (const auto& run : runs) {
    const TrainTrace& tr = run.trace;
    const HyperParams& hp = tr.params;
    const double rate = static_cast<double>(hp.m) * hp.eta * hp.lambda;
    const double ratio_bound = 1.0 - rate / 4.0;
    const double d_bound = drift_radius(hp.lambda, hp.b, hp.radius, hp.n, hp.m, tr.initial_residual_norm);
    bool r_ok = true;
    bool d_ok = true;
    bool g_ok = true;
    bool k1 = true;
    bool k2 = true;
    bool k3 = true;
    for (std::size_t t = 0; t < tr.records.size(); ++t) {
      const TraceRecord& rec = tr.records[t];
      d_ok = d_ok && rec.max_drift <= d_bound;
      g_ok = g_ok && hp.eta * rec.max_grad <= 0.01;
      worst_drift_frac = std::max(worst_drift_frac, rec.max_drift / d_bound);
      worst_grad = std::max(worst_grad, hp.eta * rec.max_grad);
      if (t == 0) continue;
      ++steps_checked;
      const double prev = tr.records[t - 1].loss;
      r_ok = r_ok && rec.ratio <= ratio_bound;
      // Margin in units of the guaranteed decrease rate/4: 1 means right at the bound.
      worst_ratio_margin = std::max(worst_ratio_margin, (1.0 - rec.ratio) > 0 ? (rate / 4.0) / (1.0 - rec.ratio) : INFINITY);
      const double c1_bound = -rate * prev;
      const double c2_bound = 2.0 * hp.m * hp.eta * hp.eta * hp.n * std::exp(4.0 * hp.b) * prev;
      const double c3_bound = 4.0 * std::pow(hp.m * hp.eta * hp.n, 2) * std::exp(8.0 * hp.b) * prev;
      k1 = k1 && rec.c1 <= c1_bound;
      k2 = k2 && std::abs(rec.c2) <= c2_bound;
      k3 = k3 && rec.c3 <= c3_bound;
      worst_c1 = std::max(worst_c1, rec.c1 / std::abs(c1_bound));
      worst_c2 = std::max(worst_c2, std::abs(rec.c2) / c2_bound);
      worst_c3 = std::max(worst_c3, rec.c3 / c3_bound);
    }
    ratio_ok += r_ok;
    drift_ok += d_ok;
    grad_ok += g_ok;
    c1_ok += k1;
    c2_ok += k2;
    c3_ok += k3;
    const bool hit = tr.stop_step.has_value();
    reached += hit;
    // Geometric projection from the observed average contraction.
    const double steps_run = static_cast<double>(tr.records.back().t);
    const double mean_log_ratio = std::log(tr.final_loss() / tr.records.front().loss) / steps_run;
    const double projected = std::log(hp.epsilon / tr.records.front().loss) / mean_log_ratio;
    max_projected = std::max(max_projected, projected);
    max_theorem_t = std::max(max_theorem_t, run.theorem_t);
    min_theorem_t = std::min(min_theorem_t, run.theorem_t);
    projections_within_t = projections_within_t && projected <= run.theorem_t;
  }
  const double secs = clock.seconds();
  const double per_step = secs / static_cast<double>(steps_checked);

  std::vector<Verdict> out;
  out.push_back({"06", "linear convergence at desk scale (20 seeds, formula eta)",
                 ratio_ok == kSeeds && reached == kSeeds && secs < 300.0,
                 fmt("contraction ratio <= 1 - m*eta*lambda/4 at every step: %d/%d seeds (worst step used "
                     "%.3f of the allowed gap); loss <= eps reached: %d/%d seeds within the %lld-step budget. "
                     "Theorem T = %.3g..%.3g steps; projected steps to eps from observed contraction <= %.3g "
                     "(%s T), i.e. ~%.3g h for 20 seeds at %.2g ms/step (full T: ~%.3g h). %.1f s",
                     ratio_ok, kSeeds, worst_ratio_margin, reached, kSeeds, static_cast<long long>(kStepsPerSeed),
                     min_theorem_t, max_theorem_t, max_projected, projections_within_t ? "within" : "beyond",
                     kSeeds * max_projected * per_step / 3600.0, 1e3 * per_step,
                     kSeeds * max_theorem_t * per_step / 3600.0, secs)});
  out.push_back({"07", "induction bounds on the criterion-6 runs",
                 drift_ok == kSeeds && grad_ok == kSeeds,
                 fmt("drift <= D every step: %d/%d seeds (max drift/D %.3e); eta*||dw_r|| <= 0.01: %d/%d seeds "
                     "(max %.3e)",
                     drift_ok, kSeeds, worst_drift_frac, grad_ok, kSeeds, worst_grad)});
  out.push_back({"08", "claim bounds C1, C2, C3 on the criterion-6 runs",
                 c1_ok == kSeeds && c2_ok == kSeeds && c3_ok == kSeeds,
                 fmt("C1: %d/%d seeds (max C1/|bound| %.3f, needs <= -1); |C2|: %d/%d (max ratio %.3e); "
                     "C3 with 4x constant: %d/%d (max ratio %.3e); %lld steps checked",
                     c1_ok, kSeeds, worst_c1, c2_ok, kSeeds, worst_c2, c3_ok, kSeeds, worst_c3,
                     static_cast<long long>(steps_checked))});
  return out;
}

Verdict psd_invariant() {
  const Stopwatch clock;
  Rng pick(99);
  int ok = 0;
  double worst = INFINITY;
  for (int k = 0; k < 100; ++k) {
    const int n = uniform_int(pick, 1, 16);
    const int d = uniform_int(pick, 1, 16);
    const int m = 2 * uniform_int(pick, 1, 500);
    const double sigma = 0.05 + 1.95 * pick.uniform();
    const auto kind = k % 2 == 0 ? DatasetKind::sphere_interior : DatasetKind::normalized_gaussian;
    const Dataset ds = gen_dataset(n, d, 40 + k, kind);
    const auto mode = k % 3 == 0 ? InitMode::paired : InitMode::standard;
    const KernelMatrix h = h_dis(ds, init_network(mode, d, m, sigma, 80 + k));
    const double fro = fro_norm(h);
    const double lam = lambda_min(h).lambda_min;
    ok += lam >= -1e-10 * fro;
    worst = std::min(worst, lam / fro);
  }
  return {"09", "h_dis is positive semidefinite", ok == 100,
          fmt("%d/100 draws with lambda_min >= -1e-10 ||H||_F (min lambda_min/||H||_F = %.3e); %.2f s", ok, worst,
              clock.seconds())};
}

Verdict determinism() {
  const fs::path base = fs::temp_directory_path() / "expreg_acceptance_determinism";
  fs::remove_all(base);
  const std::string config = (base / "config.json").string();
  fs::create_directories(base);
  {
    std::ofstream f(config);
    f << R"({"n": 8, "d": 8, "m": 4000, "sigma": 0.25, "T": 300, "seeds": [0, 1, 2]})";
  }
  auto run = [&](const std::string& out) {
    const std::string cmd = std::string(EXPREG_BINARY) + " train --config " + config + " --out " +
                            (base / out).string() + " >/dev/null 2>&1";
    return std::system(cmd.c_str()) == 0;
  };
  if (!run("a") || !run("b")) return {"10", "identical train runs give bit-identical CSVs", false, "expreg train failed"};
  auto slurp = [](const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
  };
  int files = 0;
  int same = 0;
  for (const auto& entry : fs::directory_iterator(base / "a")) {
    if (entry.path().extension() != ".csv") continue;
    ++files;
    same += slurp(entry.path()) == slurp(base / "b" / entry.path().filename());
  }
  return {"10", "identical train runs give bit-identical CSVs", files == 3 && same == files,
          fmt("%d/%d trace files identical", same, files)};
}

}  // namespace

int main(int argc, char** argv) {
  const std::string which = argc > 1 ? argv[1] : "all";
  const std::map<std::string, std::function<std::vector<Verdict>()>> suite{
      {"01", [] { return std::vector<Verdict>{zero_initial_loss()}; }},
      {"02", [] { return std::vector<Verdict>{gradient_oracle()}; }},
      {"03", [] { return std::vector<Verdict>{closed_vs_monte_carlo()}; }},
      {"04", [] { return std::vector<Verdict>{concentration_rate()}; }},
      {"05", [] { return std::vector<Verdict>{decomposition_identity()}; }},
      {"06_08", convergence_suite},
      {"09", [] { return std::vector<Verdict>{psd_invariant()}; }},
      {"10", [] { return std::vector<Verdict>{determinism()}; }},
  };
  bool all_pass = true;
  bool matched = false;
  for (const auto& [id, fn] : suite) {
    if (which != "all" && which != id) continue;
    matched = true;
    try {
      for (const auto& v : fn()) {
        report(v);
        all_pass = all_pass && v.pass;
      }
    } catch (const std::exception& e) {
      report({id, "error", false, e.what()});
      all_pass = false;
    }
  }
  if (!matched) {
    std::fprintf(stderr, "unknown criterion '%s'\n", which.c_str());
    return 2;
  }
  return all_pass ? 0 : 1;
}
