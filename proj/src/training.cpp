#include "expreg/training.hpp"

#include <cmath>
#include <limits>
#include <string>

#include "expreg/error.hpp"
#include "expreg/kernel.hpp"

namespace expreg {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

double max_drift(const NetworkState& state, const NetworkState& initial) {
  return (state.weights() - initial.weights()).colwise().norm().maxCoeff();
}

}  // namespace

double GradientMatrix::max_column_norm() const {
  return dw.size() == 0 ? 0.0 : dw.colwise().norm().maxCoeff();
}

Eigen::VectorXd forward_from_activations(const Eigen::VectorXd& signs, const Eigen::MatrixXd& act) {
  const int m = static_cast<int>(act.rows());
  const int n = static_cast<int>(act.cols());
  if (signs.size() != m) throw StructuralError("sign vector does not match activations");
  Eigen::VectorXd f(n);
  for (int i = 0; i < n; ++i) {
    double acc = 0.0;
    int r = 0;
    for (; r + 1 < m; r += 2) acc += signs(r) * act(r, i) + signs(r + 1) * act(r + 1, i);
    if (r < m) acc += signs(r) * act(r, i);
    f(i) = acc;
  }
  return f;
}

Eigen::VectorXd forward(const NetworkState& state, const Dataset& ds) {
  return forward_from_activations(state.signs(), exp_activations(state, ds));
}

double loss(const Eigen::VectorXd& f, const Eigen::VectorXd& y) {
  if (f.size() != y.size()) {
    throw StructuralError("prediction length " + std::to_string(f.size()) +
                          " differs from label length " + std::to_string(y.size()));
  }
  double acc = 0.0;
  for (Eigen::Index i = 0; i < f.size(); ++i) {
    const double diff = f(i) - y(i);
    acc += diff * diff;
  }
  return acc;
}

GradientMatrix gradient_from(const NetworkState& state, const Dataset& ds,
                             const Eigen::MatrixXd& act, const Eigen::VectorXd& f) {
  const int m = state.m();
  const int n = ds.n();
  const int d = ds.d();
  if (act.rows() != m || act.cols() != n || f.size() != n) {
    throw StructuralError("activations/predictions do not match the network and dataset");
  }
  const Eigen::MatrixXd& x = ds.inputs();
  GradientMatrix g{Eigen::MatrixXd::Zero(d, m)};
  for (int r = 0; r < m; ++r) {
    for (int i = 0; i < n; ++i) {
      const double coef = (f(i) - ds.y(i)) * state.a(r) * act(r, i);
      for (int k = 0; k < d; ++k) g.dw(k, r) += coef * x(k, i);
    }
  }
  return g;
}

GradientMatrix gradient(const NetworkState& state, const Dataset& ds) {
  const Eigen::MatrixXd act = exp_activations(state, ds);
  return gradient_from(state, ds, act, forward_from_activations(state.signs(), act));
}

NetworkState gd_step(const NetworkState& state, double eta, const GradientMatrix& g) {
  if (!(eta >= 0.0)) throw ParameterDomainError("learning rate must be nonnegative");
  if (g.dw.rows() != state.d() || g.dw.cols() != state.m()) {
    throw StructuralError("gradient shape does not match the network");
  }
  return state.advanced(state.weights() - eta * g.dw);
}

LossDecomposition decompose_predictions(const Eigen::VectorXd& f_before,
                                        const Eigen::VectorXd& f_after, const Eigen::VectorXd& y,
                                        const Eigen::MatrixXd& h, int m, double eta) {
  const Eigen::VectorXd e = f_before - y;
  const Eigen::VectorXd he = h * e;
  const double m_eta = static_cast<double>(m) * eta;
  const Eigen::VectorXd v1 = -m_eta * he;
  const Eigen::VectorXd step = f_after - f_before;
  const Eigen::VectorXd v2 = step - v1;
  LossDecomposition out;
  out.c1 = -2.0 * m_eta * e.dot(he);
  out.c2 = 2.0 * e.dot(v2);
  out.c3 = step.squaredNorm();
  out.residual = loss(f_after, y) - (loss(f_before, y) + out.c1 + out.c2 + out.c3);
  return out;
}

namespace {

/// e^q − 1 − q without cancellation for small |q|.
double exp_remainder(double q) {
  if (std::abs(q) >= 1e-2) return std::expm1(q) - q;
  // q²/2·(1 + q/3·(1 + q/4·(...))), truncated after q⁹/9!.
  double nested = 1.0;
  for (int k = 9; k >= 3; --k) nested = 1.0 + nested * q / k;
  return 0.5 * q * q * nested;
}

}  // namespace

LossDecomposition decompose_gd_step(const NetworkState& before, const Eigen::MatrixXd& act,
                                    const GradientMatrix& grad, const Dataset& ds,
                                    const Eigen::MatrixXd& h, const Eigen::VectorXd& f_before,
                                    const Eigen::VectorXd& f_after, double eta) {
  const int m = before.m();
  const int n = ds.n();
  const Eigen::VectorXd& y = ds.labels();
  const Eigen::VectorXd e = f_before - y;
  const Eigen::VectorXd he = h * e;
  const double m_eta = static_cast<double>(m) * eta;
  Eigen::VectorXd step = Eigen::VectorXd::Zero(n);
  Eigen::VectorXd v2 = Eigen::VectorXd::Zero(n);
  for (int i = 0; i < n; ++i) {
    for (int r = 0; r < m; ++r) {
      const double q = -eta * grad.dw.col(r).dot(ds.x(i));
      const double scale = before.a(r) * act(r, i);
      step(i) += scale * std::expm1(q);
      v2(i) += scale * exp_remainder(q);
    }
  }
  LossDecomposition out;
  out.c1 = -2.0 * m_eta * e.dot(he);
  out.c2 = 2.0 * e.dot(v2);
  out.c3 = step.squaredNorm();
  out.residual = loss(f_after, y) - (loss(f_before, y) + out.c1 + out.c2 + out.c3);
  return out;
}

HyperParams resolve_hyperparams(const RunSettings& settings, const Dataset& ds,
                                const NetworkState& initial) {
  if (initial.m() != settings.m) throw StructuralError("initial network width differs from m");
  HyperParams hp;
  hp.n = ds.n();
  hp.d = ds.d();
  hp.m = settings.m;
  hp.sigma = settings.sigma;
  hp.c = settings.c;
  hp.delta = settings.delta;
  hp.epsilon = settings.epsilon;
  hp.radius = settings.radius;
  hp.steps = settings.steps;
  hp.b_source = settings.b_source;
  hp.eta_source = settings.eta_source;
  if (!(settings.sigma > 0.0)) throw ParameterDomainError("sigma must be positive");
  hp.lambda = lambda_min(h_cts_closed(ds, settings.sigma)).lambda_min;
  hp.b = settings.b_source == BSource::theory
             ? theoretical_b(settings.c, settings.sigma, hp.n, settings.delta)
             : empirical_b(initial, ds);
  hp.eta = settings.eta_source == EtaSource::paper_formula ? paper_eta(hp.lambda, hp.m, hp.n, hp.b)
                                                           : settings.eta;
  hp.validate();
  return hp;
}

TrainTrace train(const HyperParams& hp, const Dataset& ds, const NetworkState& initial,
                 const TrainOptions& options) {
  hp.validate();
  if (hp.n != ds.n() || hp.d != ds.d() || hp.m != initial.m() || initial.d() != ds.d()) {
    throw StructuralError("hyperparameters, dataset and network disagree on n, d or m");
  }
  const Eigen::MatrixXd g = gram_matrix(ds);
  const Eigen::VectorXd& y = ds.labels();

  TrainTrace trace;
  trace.params = hp;
  trace.records.reserve(static_cast<std::size_t>(hp.steps) + 1);

  NetworkState state = initial;
  std::int64_t t = 0;
  try {
    Eigen::MatrixXd act = exp_activations(state, ds);
    Eigen::VectorXd f = forward_from_activations(state.signs(), act);
    GradientMatrix grad = gradient_from(state, ds, act, f);
    trace.initial_residual_norm = (y - f).norm();

    TraceRecord rec;
    rec.t = 0;
    rec.loss = loss(f, y);
    rec.ratio = kNaN;
    rec.max_drift = 0.0;
    rec.max_grad = grad.max_column_norm();
    rec.c1 = rec.c2 = rec.c3 = rec.residual = kNaN;
    const bool sample0 = options.record_kernel_every > 0;
    rec.lambda_min = sample0 ? lambda_min(h_dis_from_activations(g, act)).lambda_min : kNaN;
    trace.records.push_back(rec);
    if (options.observer) options.observer(state, rec);
    if (rec.loss <= hp.epsilon) trace.stop_step = 0;

    while (t < hp.steps && !(options.early_stop && trace.stop_step)) {
      const Eigen::MatrixXd h = h_dis_from_activations(g, act);
      NetworkState next = gd_step(state, hp.eta, grad);
      ++t;
      Eigen::MatrixXd next_act = exp_activations(next, ds);
      Eigen::VectorXd next_f = forward_from_activations(next.signs(), next_act);
      const LossDecomposition parts =
          decompose_gd_step(state, act, grad, ds, h, f, next_f, hp.eta);
      grad = gradient_from(next, ds, next_act, next_f);

      TraceRecord step;
      step.t = t;
      step.loss = loss(next_f, y);
      step.ratio = rec.loss > 0.0 ? step.loss / rec.loss : kNaN;
      step.max_drift = max_drift(next, initial);
      step.max_grad = grad.max_column_norm();
      step.c1 = parts.c1;
      step.c2 = parts.c2;
      step.c3 = parts.c3;
      step.residual = parts.residual;
      const bool sample = options.record_kernel_every > 0 && t % options.record_kernel_every == 0;
      step.lambda_min = sample ? lambda_min(h_dis_from_activations(g, next_act)).lambda_min : kNaN;
      if (!std::isfinite(step.loss)) throw RangeError("loss became non-finite");

      trace.records.push_back(step);
      if (options.observer) options.observer(next, step);
      if (!trace.stop_step && step.loss <= hp.epsilon) trace.stop_step = t;

      state = std::move(next);
      act = std::move(next_act);
      f = std::move(next_f);
      rec = step;
    }
  } catch (const RangeError& e) {
    throw RangeError("at step " + std::to_string(t) + ": " + e.what());
  }
  return trace;
}

TrainTrace train(const RunSettings& settings, const Dataset& ds, InitMode init_mode,
                 std::uint64_t seed, const TrainOptions& options) {
  const NetworkState initial = init_network(init_mode, ds.d(), settings.m, settings.sigma, seed);
  const HyperParams hp = resolve_hyperparams(settings, ds, initial);
  return train(hp, ds, initial, options);
}

double drift_radius(double lambda, double b, double radius, int n, int m,
                    double initial_residual_norm) {
  return 8.0 / lambda * std::exp(b + radius) * std::sqrt(static_cast<double>(n)) /
         static_cast<double>(m) * initial_residual_norm;
}

double theorem_steps(int n, int m, double eta, double lambda, double epsilon) {
  return std::log(static_cast<double>(n) / epsilon) / (static_cast<double>(m) * eta * lambda);
}

}  // namespace expreg
