#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <functional>
#include <optional>

#include "expreg/datamodel.hpp"

namespace expreg {

/// ΔW(t): column r is Δw_r = Σ_i (F_i − y_i)·a_r·x_i·exp(⟨w_r, x_i⟩).
struct GradientMatrix {
  Eigen::MatrixXd dw;

  [[nodiscard]] double max_column_norm() const;
};

/// F_i = Σ_r a_r·exp(⟨w_r, x_i⟩). Neurons are summed pair-locally, (a_1e_1 + a_2e_2) +
/// (a_3e_3 + a_4e_4) + ..., so a paired initialization cancels exactly.
Eigen::VectorXd forward(const NetworkState& state, const Dataset& ds);
/// Same summation from precomputed activations E (m×n).
Eigen::VectorXd forward_from_activations(const Eigen::VectorXd& signs, const Eigen::MatrixXd& act);

/// ‖F − y‖₂². The objective L = ½‖F − y‖₂² is half of this.
double loss(const Eigen::VectorXd& f, const Eigen::VectorXd& y);
inline double half_loss(const Eigen::VectorXd& f, const Eigen::VectorXd& y) { return 0.5 * loss(f, y); }

GradientMatrix gradient(const NetworkState& state, const Dataset& ds);
/// Gradient from activations and predictions already computed for `state`.
GradientMatrix gradient_from(const NetworkState& state, const Dataset& ds,
                             const Eigen::MatrixXd& act, const Eigen::VectorXd& f);

/// W' = W − η·ΔW, signs unchanged, step + 1.
NetworkState gd_step(const NetworkState& state, double eta, const GradientMatrix& g);

/// Terms of ‖F(t+1) − y‖² = ‖F(t) − y‖² + C1 + C2 + C3 (+ residual).
struct LossDecomposition {
  double c1 = 0.0;
  double c2 = 0.0;
  double c3 = 0.0;
  double residual = 0.0;
};

/// C1 = −2mη·eᵀH e with e = F(t) − y; v1 = −mη·H e; v2 = (F(t+1) − F(t)) − v1;
/// C2 = 2·eᵀv2; C3 = ‖F(t+1) − F(t)‖².
LossDecomposition decompose_predictions(const Eigen::VectorXd& f_before,
                                        const Eigen::VectorXd& f_after, const Eigen::VectorXd& y,
                                        const Eigen::MatrixXd& h, int m, double eta);

/// Same terms for the exact step W − η·ΔW, free of cancellation: with
/// q_ri = −η⟨Δw_r, x_i⟩, F(t+1) − F(t) = Σ_r a_r e^{⟨w_r,x_i⟩}·expm1(q_ri) and
/// v2_i = Σ_r a_r e^{⟨w_r,x_i⟩}·(e^{q_ri} − 1 − q_ri), whose linear part is v1 exactly.
/// The residual compares against the realized loss ‖f_after − y‖², so it carries
/// only the rounding of the weight update.
LossDecomposition decompose_gd_step(const NetworkState& before, const Eigen::MatrixXd& act,
                                    const GradientMatrix& grad, const Dataset& ds,
                                    const Eigen::MatrixXd& h, const Eigen::VectorXd& f_before,
                                    const Eigen::VectorXd& f_after, double eta);

/// User-facing run parameters before B, η and λ are resolved.
struct RunSettings {
  int m = 0;
  double sigma = 1.0;
  double c = 11.0;
  double delta = 0.05;
  double epsilon = 0.01;
  double radius = 0.005;
  std::int64_t steps = 0;
  BSource b_source = BSource::empirical;
  EtaSource eta_source = EtaSource::paper_formula;
  /// Used when eta_source = override.
  double eta = 0.0;
};

/// λ = λ_min(H^cts) for the dataset, B from the chosen source (the empirical one is
/// measured on `initial`), η from the formula or the override. Validates the result.
HyperParams resolve_hyperparams(const RunSettings& settings, const Dataset& ds,
                                const NetworkState& initial);

/// Called after every step with the new state.
using StepObserver = std::function<void(const NetworkState& state, const TraceRecord& record)>;

struct TrainOptions {
  /// Sample λ_min(H(t)) every k steps; 0 disables.
  int record_kernel_every = 0;
  /// Stop at the first step with loss ≤ ε; otherwise run all T steps.
  bool early_stop = true;
  StepObserver observer;
};

/// Full-batch gradient descent from `initial` for hp.steps steps.
TrainTrace train(const HyperParams& hp, const Dataset& ds, const NetworkState& initial,
                 const TrainOptions& options = {});

TrainTrace train(const RunSettings& settings, const Dataset& ds, InitMode init_mode,
                 std::uint64_t seed, const TrainOptions& options = {});

/// The drift radius D = 8·λ⁻¹·exp(B + R)·(√n / m)·‖y − F(0)‖₂.
double drift_radius(double lambda, double b, double radius, int n, int m,
                    double initial_residual_norm);

/// T = log(n/ε) / (m·η·λ), the step count of the convergence theorem with unit constant.
double theorem_steps(int n, int m, double eta, double lambda, double epsilon);

}  // namespace expreg
