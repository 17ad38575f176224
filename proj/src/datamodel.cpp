#include "expreg/datamodel.hpp"

#include <cmath>
#include <string>

#include "expreg/error.hpp"
#include "expreg/rng.hpp"

namespace expreg {

namespace {

[[noreturn]] void domain_error(const std::string& what) {
  throw ParameterDomainError(what);
}

template <typename Enum, std::size_t N>
Enum parse_enum(std::string_view s, const std::pair<std::string_view, Enum> (&table)[N],
                std::string_view what) {
  for (const auto& [name, value] : table) {
    if (name == s) return value;
  }
  domain_error("unknown " + std::string(what) + " '" + std::string(s) + "'");
}

constexpr std::pair<std::string_view, BSource> kBSources[] = {
    {"theory", BSource::theory}, {"empirical", BSource::empirical}};
constexpr std::pair<std::string_view, EtaSource> kEtaSources[] = {
    {"paper-formula", EtaSource::paper_formula}, {"override", EtaSource::override_value}};
constexpr std::pair<std::string_view, KernelKind> kKernelKinds[] = {
    {"cts_closed", KernelKind::cts_closed},
    {"cts_mc", KernelKind::cts_mc},
    {"dis", KernelKind::dis},
    {"at_time", KernelKind::at_time}};
constexpr std::pair<std::string_view, DatasetKind> kDatasetKinds[] = {
    {"sphere_interior", DatasetKind::sphere_interior},
    {"normalized_gaussian", DatasetKind::normalized_gaussian}};
constexpr std::pair<std::string_view, InitMode> kInitModes[] = {
    {"standard", InitMode::standard}, {"paired", InitMode::paired}};

template <typename Enum, std::size_t N>
std::string_view enum_name(Enum v, const std::pair<std::string_view, Enum> (&table)[N]) {
  for (const auto& [name, value] : table) {
    if (value == v) return name;
  }
  return "?";
}

}  // namespace

std::string_view to_string(BSource s) { return enum_name(s, kBSources); }
std::string_view to_string(EtaSource s) { return enum_name(s, kEtaSources); }
std::string_view to_string(KernelKind k) { return enum_name(k, kKernelKinds); }
std::string_view to_string(DatasetKind k) { return enum_name(k, kDatasetKinds); }
std::string_view to_string(InitMode k) { return enum_name(k, kInitModes); }
BSource parse_b_source(std::string_view s) { return parse_enum(s, kBSources, "b_source"); }
EtaSource parse_eta_source(std::string_view s) {
  return parse_enum(s, kEtaSources, "eta_source");
}
KernelKind parse_kernel_kind(std::string_view s) {
  return parse_enum(s, kKernelKinds, "kernel kind");
}
DatasetKind parse_dataset_kind(std::string_view s) {
  return parse_enum(s, kDatasetKinds, "dataset kind");
}
InitMode parse_init_mode(std::string_view s) { return parse_enum(s, kInitModes, "init_mode"); }

// ---------------------------------------------------------------------------
// Dataset

Dataset::Dataset(Eigen::MatrixXd inputs, Eigen::VectorXd labels)
    : inputs_(std::move(inputs)), labels_(std::move(labels)) {
  if (inputs_.cols() == 0 || inputs_.rows() == 0) domain_error("dataset needs n >= 1 and d >= 1");
  if (labels_.size() != inputs_.cols()) {
    throw StructuralError("dataset has " + std::to_string(inputs_.cols()) + " inputs but " +
                          std::to_string(labels_.size()) + " labels");
  }
  for (int i = 0; i < n(); ++i) {
    const double norm = inputs_.col(i).norm();
    if (!(norm <= 1.0 + kNormSlack)) {
      domain_error("input " + std::to_string(i) + " has norm " + std::to_string(norm) + " > 1");
    }
    if (!(std::abs(labels_(i)) <= 1.0)) {
      domain_error("label " + std::to_string(i) + " outside [-1, 1]");
    }
  }
}

Dataset Dataset::with_labels(Eigen::VectorXd labels) const {
  return Dataset(inputs_, std::move(labels));
}

// ---------------------------------------------------------------------------
// NetworkState

NetworkState::NetworkState(Eigen::MatrixXd weights, Eigen::VectorXd signs, std::int64_t step)
    : weights_(std::move(weights)), signs_(std::move(signs)), step_(step) {
  if (weights_.cols() == 0 || weights_.rows() == 0) domain_error("network needs d >= 1, m >= 1");
  if (signs_.size() != weights_.cols()) {
    throw StructuralError("sign vector length " + std::to_string(signs_.size()) +
                          " does not match m = " + std::to_string(weights_.cols()));
  }
  for (int r = 0; r < m(); ++r) {
    if (signs_(r) != 1.0 && signs_(r) != -1.0) {
      domain_error("a_" + std::to_string(r) + " is not +1 or -1");
    }
  }
  if (step_ < 0) domain_error("negative timestep");
}

NetworkState NetworkState::advanced(Eigen::MatrixXd weights) const {
  if (weights.rows() != weights_.rows() || weights.cols() != weights_.cols()) {
    throw StructuralError("weight update changes the shape of W");
  }
  NetworkState next = *this;
  next.weights_ = std::move(weights);
  ++next.step_;
  return next;
}

NetworkState NetworkState::with_weights(Eigen::MatrixXd weights) const {
  if (weights.rows() != weights_.rows() || weights.cols() != weights_.cols()) {
    throw StructuralError("replacement weights change the shape of W");
  }
  NetworkState next = *this;
  next.weights_ = std::move(weights);
  return next;
}

// ---------------------------------------------------------------------------
// Scalars

double theoretical_b(double c, double sigma, int n, double delta) {
  return c * sigma * std::sqrt(std::log(static_cast<double>(n) / delta));
}

double empirical_b(const NetworkState& state, const Dataset& ds) {
  if (state.d() != ds.d()) throw StructuralError("network and dataset dimensions differ");
  const Eigen::MatrixXd z = state.weights().transpose() * ds.inputs();
  return z.cwiseAbs().maxCoeff();
}

double paper_eta(double lambda, int m, int n, double b) {
  const double nn = static_cast<double>(n);
  return 0.01 * lambda / (static_cast<double>(m) * nn * nn * std::exp(4.0 * b));
}

void HyperParams::validate() const {
  if (n < 1 || d < 1 || m < 1) domain_error("n, d, m must be positive");
  if (m % 2 != 0) domain_error("m must be even, got " + std::to_string(m));
  if (!(sigma > 0.0)) domain_error("sigma must be positive");
  if (!(c > 10.0)) domain_error("C must exceed 10");
  if (!(delta > 0.0 && delta < 0.1)) domain_error("delta must lie in (0, 0.1)");
  if (!(epsilon > 0.0 && epsilon < 0.1)) domain_error("epsilon must lie in (0, 0.1)");
  if (!(radius > 0.0 && radius < 0.01)) domain_error("R must lie in (0, 0.01)");
  if (!(eta > 0.0) || !std::isfinite(eta)) domain_error("eta must be positive and finite");
  if (steps < 0) domain_error("T must be nonnegative");
  if (!(b > 0.0) || !std::isfinite(b)) domain_error("B must be positive and finite");
  if (b_source == BSource::theory && b != theoretical_b(c, sigma, n, delta)) {
    domain_error("b_source = theory but B != C*sigma*sqrt(log(n/delta))");
  }
  if (eta_source == EtaSource::paper_formula) {
    if (!(lambda > 0.0)) domain_error("paper-formula eta needs lambda > 0");
    if (eta != paper_eta(lambda, m, n, b)) {
      domain_error("eta_source = paper-formula but eta != 0.01*lambda/(m*n^2*exp(4B))");
    }
  }
  if (!(radius < b)) domain_error("R must be smaller than B");
}

void TrainTrace::validate() const {
  if (records.empty()) throw StructuralError("empty trace");
  for (std::size_t k = 0; k < records.size(); ++k) {
    const auto& rec = records[k];
    if (rec.t != static_cast<std::int64_t>(k)) {
      throw StructuralError("trace records are not consecutive at index " + std::to_string(k));
    }
    if (!(rec.loss >= 0.0) || !std::isfinite(rec.loss)) {
      throw RangeError("loss at step " + std::to_string(rec.t) + " is negative or non-finite");
    }
  }
}

// ---------------------------------------------------------------------------
// Generation

Dataset gen_dataset(int n, int d, std::uint64_t seed, DatasetKind kind) {
  if (n < 1 || d < 1) domain_error("gen_dataset needs n >= 1 and d >= 1");
  Rng rng(derive_seed(seed, Stream::dataset));
  Eigen::MatrixXd x(d, n);
  for (int i = 0; i < n; ++i) {
    double norm = 0.0;
    do {
      for (int k = 0; k < d; ++k) x(k, i) = rng.normal();
      norm = x.col(i).norm();
    } while (norm == 0.0);
    const double target = kind == DatasetKind::sphere_interior ? rng.uniform_open_closed() : 1.0;
    x.col(i) *= target / norm;
  }
  Rng label_rng(derive_seed(seed, Stream::labels));
  Eigen::VectorXd y(n);
  for (int i = 0; i < n; ++i) y(i) = label_rng.uniform(-1.0, 1.0);
  return Dataset(std::move(x), std::move(y));
}

NetworkState init_standard(int d, int m, double sigma, std::uint64_t seed) {
  if (d < 1 || m < 1) domain_error("init_standard needs d >= 1 and m >= 1");
  if (!(sigma >= 0.0)) domain_error("sigma must be nonnegative");
  Rng rng(derive_seed(seed, Stream::init));
  Eigen::MatrixXd w(d, m);
  Eigen::VectorXd a(m);
  for (int r = 0; r < m; ++r) {
    for (int k = 0; k < d; ++k) w(k, r) = sigma * rng.normal();
    a(r) = rng.sign();
  }
  return NetworkState(std::move(w), std::move(a));
}

NetworkState init_paired(int d, int m, double sigma, std::uint64_t seed) {
  if (d < 1) domain_error("init_paired needs d >= 1");
  if (m < 2 || m % 2 != 0) domain_error("init_paired needs an even m >= 2, got " + std::to_string(m));
  if (!(sigma >= 0.0)) domain_error("sigma must be nonnegative");
  Rng rng(derive_seed(seed, Stream::init));
  Eigen::MatrixXd w(d, m);
  Eigen::VectorXd a(m);
  for (int r = 0; r < m; r += 2) {
    for (int k = 0; k < d; ++k) w(k, r) = sigma * rng.normal();
    w.col(r + 1) = w.col(r);
    a(r) = rng.sign();
    a(r + 1) = -a(r);
  }
  return NetworkState(std::move(w), std::move(a));
}

NetworkState init_network(InitMode mode, int d, int m, double sigma, std::uint64_t seed) {
  return mode == InitMode::paired ? init_paired(d, m, sigma, seed)
                                  : init_standard(d, m, sigma, seed);
}

}  // namespace expreg
