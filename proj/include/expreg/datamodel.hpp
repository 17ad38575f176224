#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace expreg {

/// Training inputs. Column i of `inputs()` is x_i; every ‖x_i‖₂ ≤ 1 and |y_i| ≤ 1.
class Dataset {
 public:
  /// Norms are accepted up to 1 + kNormSlack to absorb rounding in x / ‖x‖.
  static constexpr double kNormSlack = 1e-12;

  /// `inputs` is d×n. Throws ParameterDomainError if an invariant fails.
  Dataset(Eigen::MatrixXd inputs, Eigen::VectorXd labels);

  [[nodiscard]] int n() const { return static_cast<int>(inputs_.cols()); }
  [[nodiscard]] int d() const { return static_cast<int>(inputs_.rows()); }
  [[nodiscard]] const Eigen::MatrixXd& inputs() const { return inputs_; }
  [[nodiscard]] const Eigen::VectorXd& labels() const { return labels_; }
  [[nodiscard]] auto x(int i) const { return inputs_.col(i); }
  [[nodiscard]] double y(int i) const { return labels_(i); }

  /// Same inputs, new labels (validated).
  [[nodiscard]] Dataset with_labels(Eigen::VectorXd labels) const;

  friend bool operator==(const Dataset& a, const Dataset& b) {
    return a.inputs_ == b.inputs_ && a.labels_ == b.labels_;
  }

 private:
  Eigen::MatrixXd inputs_;
  Eigen::VectorXd labels_;
};

/// First-layer weights W (d×m, column r is w_r), fixed output signs a ∈ {−1,+1}^m
/// and the step counter. Only W changes during training; a new state is produced
/// for every step.
class NetworkState {
 public:
  NetworkState(Eigen::MatrixXd weights, Eigen::VectorXd signs, std::int64_t step = 0);

  [[nodiscard]] int d() const { return static_cast<int>(weights_.rows()); }
  [[nodiscard]] int m() const { return static_cast<int>(weights_.cols()); }
  [[nodiscard]] std::int64_t step() const { return step_; }
  [[nodiscard]] const Eigen::MatrixXd& weights() const { return weights_; }
  [[nodiscard]] const Eigen::VectorXd& signs() const { return signs_; }
  [[nodiscard]] auto w(int r) const { return weights_.col(r); }
  [[nodiscard]] double a(int r) const { return signs_(r); }

  /// Next state: replaced weights, same signs, step + 1.
  [[nodiscard]] NetworkState advanced(Eigen::MatrixXd weights) const;
  /// Same signs and step, different weights (perturbation experiments).
  [[nodiscard]] NetworkState with_weights(Eigen::MatrixXd weights) const;

  friend bool operator==(const NetworkState& a, const NetworkState& b) {
    return a.step_ == b.step_ && a.weights_ == b.weights_ && a.signs_ == b.signs_;
  }

 private:
  Eigen::MatrixXd weights_;
  Eigen::VectorXd signs_;
  std::int64_t step_;
};

enum class BSource { theory, empirical };
enum class EtaSource { paper_formula, override_value };

std::string_view to_string(BSource s);
std::string_view to_string(EtaSource s);
BSource parse_b_source(std::string_view s);
EtaSource parse_eta_source(std::string_view s);

/// B = C·σ·√log(n/δ).
double theoretical_b(double c, double sigma, int n, double delta);
/// Realized bound max_{r,i} |⟨w_r, x_i⟩| for a concrete draw.
double empirical_b(const NetworkState& state, const Dataset& ds);
/// η = 0.01·λ / (m·n²·exp(4B)).
double paper_eta(double lambda, int m, int n, double b);

/// Every scalar of a run, after B and η have been resolved.
struct HyperParams {
  int n = 0;
  int d = 0;
  int m = 0;
  double sigma = 1.0;
  double c = 11.0;
  double delta = 0.05;
  double epsilon = 0.01;
  double radius = 0.005;  // R
  double eta = 0.0;
  std::int64_t steps = 0;  // T
  double b = 0.0;
  double lambda = 0.0;  // λ_min(H^cts) used for the formula η
  BSource b_source = BSource::empirical;
  EtaSource eta_source = EtaSource::paper_formula;

  /// Throws ParameterDomainError naming the first broken invariant.
  void validate() const;
};

enum class KernelKind { cts_closed, cts_mc, dis, at_time };

std::string_view to_string(KernelKind k);
KernelKind parse_kernel_kind(std::string_view s);

struct KernelMatrix {
  Eigen::MatrixXd h;
  KernelKind kind = KernelKind::cts_closed;

  [[nodiscard]] int n() const { return static_cast<int>(h.rows()); }
};

/// One row of a training trace. Step-quantities (ratio, C1..C3, residual) describe
/// the transition (t−1) → t and are NaN at t = 0; lambda_min is NaN when not sampled.
struct TraceRecord {
  std::int64_t t = 0;
  double loss = 0.0;
  double ratio = 0.0;
  double max_drift = 0.0;
  double max_grad = 0.0;
  double c1 = 0.0;
  double c2 = 0.0;
  double c3 = 0.0;
  double residual = 0.0;
  double lambda_min = 0.0;
};

struct TrainTrace {
  std::vector<TraceRecord> records;
  HyperParams params;
  /// First step with loss ≤ ε, if reached.
  std::optional<std::int64_t> stop_step;
  /// ‖y − F(0)‖₂, needed for the drift radius D.
  double initial_residual_norm = 0.0;

  /// Nonnegative finite losses, t strictly increasing from 0 without gaps.
  void validate() const;
  [[nodiscard]] double final_loss() const { return records.back().loss; }
};

enum class DatasetKind { sphere_interior, normalized_gaussian };

std::string_view to_string(DatasetKind k);
DatasetKind parse_dataset_kind(std::string_view s);

/// n Gaussian directions rescaled to norm u ~ U(0,1] (sphere_interior) or to 1,
/// labels uniform in [−1, 1].
Dataset gen_dataset(int n, int d, std::uint64_t seed, DatasetKind kind);

/// w_r ~ N(0, σ²I_d), a_r uniform on {−1, +1}.
NetworkState init_standard(int d, int m, double sigma, std::uint64_t seed);

/// Pairs (2r−1, 2r) share one Gaussian draw and carry opposite signs.
NetworkState init_paired(int d, int m, double sigma, std::uint64_t seed);

enum class InitMode { standard, paired };

std::string_view to_string(InitMode k);
InitMode parse_init_mode(std::string_view s);

NetworkState init_network(InitMode mode, int d, int m, double sigma, std::uint64_t seed);

}  // namespace expreg
