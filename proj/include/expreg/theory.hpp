#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <variant>
#include <vector>

#include "expreg/datamodel.hpp"
#include "expreg/training.hpp"

#include "json.hpp"

namespace expreg {

/// Verdict for one inequality. Single evaluations have trials = 1 and
/// allowed_failure = 0; statistical checks pass when violation_rate ≤ allowed_failure.
struct BoundCheck {
  std::string name;
  double lhs = 0.0;
  double rhs = 0.0;
  bool holds = false;
  int trials = 1;
  double violation_rate = 0.0;
  double allowed_failure = 0.0;
  /// Reported but never decides a verdict.
  bool diagnostic = false;
  std::string note;
};

/// lhs ≤ rhs evaluated once.
BoundCheck single_check(std::string name, double lhs, double rhs);

/// The six parts of the inner-product/exponential bounds for initial weights w and
/// perturbed weights v with max_r ‖v_r − w_r‖₂ ≤ R. Throws PreconditionError otherwise.
std::vector<BoundCheck> check_exp_bounds(const NetworkState& initial, const NetworkState& perturbed,
                                         const Dataset& ds, double b, double radius);

/// Repeats check_exp_bounds over `trials` fresh standard draws (each perturbed within R);
/// each part passes when its violation frequency is at most delta.
std::vector<BoundCheck> audit_exp_bounds(const Dataset& ds, double sigma, int m, double b,
                                         double radius, double delta, int trials,
                                         std::uint64_t seed);

struct ConcentrationPoint {
  int m = 0;
  double median_fro_error = 0.0;
  BoundCheck fro_check;     // ‖H^dis − H^cts‖_F ≤ λ/4
  BoundCheck lambda_check;  // λ_min(H^dis) ≥ 3λ/4
};

struct ConcentrationReport {
  std::vector<ConcentrationPoint> points;
  /// Least-squares slope of log(median error) against log(m); NaN with fewer than 2 points.
  double slope = 0.0;
  std::vector<std::string> warnings;

  [[nodiscard]] std::vector<BoundCheck> checks() const;
};

/// H^dis vs H^cts over `trials` standard initializations per width in m_grid.
ConcentrationReport check_kernel_concentration(const Dataset& ds, double sigma,
                                               const std::vector<int>& m_grid, int trials,
                                               std::uint64_t seed, double lambda, double delta);

/// Width at which the concentration lemma's condition holds with unit constant:
/// λ⁻²·n²·exp(2B)·√log(n/δ).
double concentration_width(double lambda, int n, double b, double delta);

/// ‖H(w) − H(w̃)‖_F with H(w)_ij = (1/m)·⟨x_i,x_j⟩·Σ_r exp(⟨w_r,x_i⟩)exp(⟨w_r,x_j⟩).
double perturbation_gap(const Dataset& ds, const NetworkState& reference,
                        const NetworkState& perturbed);

/// Gap vs 3nR·exp(2B) over `trials` Gaussian draws w̃, each probed with a random
/// perturbation (uniform direction, radius R·u) and with R·x_k/‖x_k‖. Without `b`
/// the realized max |⟨w̃_r, x_i⟩| of each draw is used. Budget n²·exp(−mR/10) + δ.
BoundCheck check_perturbation(const Dataset& ds, double sigma, int m, double radius,
                              std::optional<double> b, double delta, int trials,
                              std::uint64_t seed);

/// Decomposition of one GD step. Throws StructuralError unless
/// after == gd_step(before, eta, gradient(before)) bit for bit.
LossDecomposition decompose_loss_step(const NetworkState& before, const NetworkState& after,
                                      const Dataset& ds, double eta);

/// C1 ≤ −mηλ·loss, |C2| ≤ 2mη²n·exp(4B)·loss, C3 ≤ m²η²n²·exp(8B)·loss, plus a
/// diagnostic C3 slack ratio. `loss_before` is ‖F(t) − y‖².
std::vector<BoundCheck> check_claims_c1_c2_c3(double loss_before, const LossDecomposition& parts,
                                              const HyperParams& hp, double lambda);

/// The claims at every step of a trace, aggregated (violation_rate over steps).
std::vector<BoundCheck> check_claims_over_trace(const TrainTrace& trace, double lambda);

/// Per-step drift ≤ D, loss(t) ≤ loss(0)·(1 − mηλ/2)^t, η·max_r‖Δw_r(t)‖ ≤ 0.01,
/// and the D < R audit (diagnostic).
std::vector<BoundCheck> check_induction(const TrainTrace& trace, const HyperParams& hp,
                                        double lambda, double drift_bound);

/// max_ij |H_asy(s)_ij| with p ≡ 1 against exp(2(B + R)).
BoundCheck check_h_asy_inf(const Dataset& ds, const NetworkState& state,
                           const NetworkState& initial, double b, double radius);

/// max_r ‖Δw_r(s)‖₂ against exp(B + R)·√n·‖y − F(s)‖₂.
BoundCheck check_gradient_norm_bound(const NetworkState& state, const NetworkState& initial,
                                     const Dataset& ds, double b, double radius);

// ---------------------------------------------------------------------------
// Tail bounds

struct HoeffdingParams {
  double t = 0.0;
  /// [α_i, β_i] for each summand.
  std::vector<std::pair<double, double>> ranges;
};

struct BernsteinParams {
  double t = 0.0;
  double variance = 0.0;
  /// Almost-sure bound M on |Z_i|.
  double max_abs = 0.0;
};

/// Upper tail of a chi-square: Pr[X − kσ² ≥ (2√(kt) + 2t)σ²] ≤ exp(−t).
struct ChiSquareParams {
  double t = 0.0;
};

using TailParams = std::variant<HoeffdingParams, BernsteinParams, ChiSquareParams>;

/// Hoeffding: 2·exp(−2t²/Σ(β_i − α_i)²). Bernstein: exp(−(t²/2)/(Var + Mt/3)).
/// Chi-square: exp(−t). Throws ParameterDomainError on invalid parameters.
double tail_bound(const TailParams& params);

/// Threshold (2√(kt) + 2t)σ² above kσ² for the chi-square upper tail.
double chi_square_upper_deviation(double k, double t, double sigma2);
/// Threshold 2√(kt)σ² below kσ² for the lower tail.
double chi_square_lower_deviation(double k, double t, double sigma2);
/// Pr[|X − k| ≥ εk] for X ~ χ²_k, bounded by exp(−t_up) + exp(−t_lo) where the two
/// thresholds above equal εk.
double chi_square_two_sided(double k, double eps);

// ---------------------------------------------------------------------------
// Verdict report

struct VerdictContext {
  double b = 0.0;
  double eta = 0.0;
  double lambda = 0.0;
  double drift_bound = 0.0;
  double radius = 0.0;
};

nlohmann::json to_json(const BoundCheck& check);
nlohmann::json verdict_json(const std::vector<BoundCheck>& checks, const VerdictContext& ctx);
/// True when every non-diagnostic check holds.
bool all_hold(const std::vector<BoundCheck>& checks);

}  // namespace expreg
