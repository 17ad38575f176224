#include "expreg/kernel.hpp"

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include "expreg/error.hpp"
#include "expreg/rng.hpp"

namespace expreg {

namespace {

void require_compatible(const NetworkState& state, const Dataset& ds) {
  if (state.d() != ds.d()) {
    throw StructuralError("network dimension " + std::to_string(state.d()) +
                          " does not match dataset dimension " + std::to_string(ds.d()));
  }
}

void guard_exponent(double z, int r, int i) {
  if (!(std::abs(z) <= kMaxExponent)) {
    throw RangeError("exponent <w_" + std::to_string(r) + ", x_" + std::to_string(i) +
                     "> = " + std::to_string(z) + " exceeds the range guard of 700");
  }
}

}  // namespace

Eigen::MatrixXd gram_matrix(const Dataset& ds) {
  const int n = ds.n();
  Eigen::MatrixXd g(n, n);
  for (int i = 0; i < n; ++i) {
    for (int j = i; j < n; ++j) {
      g(i, j) = ds.x(i).dot(ds.x(j));
      g(j, i) = g(i, j);
    }
  }
  return g;
}

namespace {

struct JacobiResult {
  Eigen::VectorXd values;
  Eigen::MatrixXd vectors;
  int sweeps = 0;
};

// Cyclic Jacobi with the Rutishauser rotation update.
JacobiResult jacobi_eigen(Eigen::MatrixXd a) {
  const int n = static_cast<int>(a.rows());
  JacobiResult out;
  out.vectors = Eigen::MatrixXd::Identity(n, n);
  const double scale = a.norm();
  constexpr int kMaxSweeps = 100;
  for (int sweep = 0; sweep < kMaxSweeps; ++sweep) {
    double off = 0.0;
    for (int p = 0; p < n; ++p) {
      for (int q = p + 1; q < n; ++q) off += a(p, q) * a(p, q);
    }
    if (std::sqrt(off) <= 1e-15 * scale) break;
    ++out.sweeps;
    for (int p = 0; p < n - 1; ++p) {
      for (int q = p + 1; q < n; ++q) {
        const double apq = a(p, q);
        if (apq == 0.0) continue;
        const double theta = (a(q, q) - a(p, p)) / (2.0 * apq);
        const double t = std::copysign(1.0, theta) / (std::abs(theta) + std::hypot(theta, 1.0));
        const double c = 1.0 / std::sqrt(t * t + 1.0);
        const double s = t * c;
        for (int k = 0; k < n; ++k) {
          const double akp = a(k, p);
          const double akq = a(k, q);
          a(k, p) = c * akp - s * akq;
          a(k, q) = s * akp + c * akq;
        }
        for (int k = 0; k < n; ++k) {
          const double apk = a(p, k);
          const double aqk = a(q, k);
          a(p, k) = c * apk - s * aqk;
          a(q, k) = s * apk + c * aqk;
        }
        for (int k = 0; k < n; ++k) {
          const double vkp = out.vectors(k, p);
          const double vkq = out.vectors(k, q);
          out.vectors(k, p) = c * vkp - s * vkq;
          out.vectors(k, q) = s * vkp + c * vkq;
        }
      }
    }
  }
  out.values = a.diagonal();
  return out;
}

Eigen::MatrixXd checked_symmetric(const Eigen::MatrixXd& h) {
  if (h.rows() != h.cols() || h.rows() == 0) throw StructuralError("expected a nonempty square matrix");
  const double scale = h.cwiseAbs().maxCoeff();
  const double asym = (h - h.transpose()).cwiseAbs().maxCoeff();
  if (asym > 1e-12 * scale) {
    throw StructuralError("matrix is not symmetric (max |H - H^T| = " + std::to_string(asym) + ")");
  }
  return 0.5 * (h + h.transpose());
}

}  // namespace

Eigen::MatrixXd preactivations(const NetworkState& state, const Dataset& ds) {
  require_compatible(state, ds);
  const int m = state.m();
  const int n = ds.n();
  const int d = ds.d();
  const Eigen::MatrixXd& w = state.weights();
  const Eigen::MatrixXd& x = ds.inputs();
  Eigen::MatrixXd z(m, n);
  for (int i = 0; i < n; ++i) {
    for (int r = 0; r < m; ++r) {
      double acc = 0.0;
      for (int k = 0; k < d; ++k) acc += w(k, r) * x(k, i);
      guard_exponent(acc, r, i);
      z(r, i) = acc;
    }
  }
  return z;
}

Eigen::MatrixXd exp_activations(const NetworkState& state, const Dataset& ds) {
  return preactivations(state, ds).array().exp().matrix();
}

KernelMatrix h_cts_closed(const Dataset& ds, double sigma) {
  if (!(sigma > 0.0)) throw ParameterDomainError("sigma must be positive");
  const int n = ds.n();
  const double s2 = sigma * sigma;
  KernelMatrix k{Eigen::MatrixXd(n, n), KernelKind::cts_closed};
  for (int i = 0; i < n; ++i) {
    for (int j = i; j < n; ++j) {
      const double inner = ds.x(i).dot(ds.x(j));
      const double sum_sq = (ds.x(i) + ds.x(j)).squaredNorm();
      k.h(i, j) = inner * std::exp(0.5 * s2 * sum_sq);
      k.h(j, i) = k.h(i, j);
    }
  }
  return k;
}

MonteCarloKernel h_cts_mc_with_error(const Dataset& ds, double sigma, std::int64_t samples,
                                     std::uint64_t seed) {
  if (samples < 1) throw ParameterDomainError("Monte Carlo needs at least one sample");
  if (!(sigma >= 0.0)) throw ParameterDomainError("sigma must be nonnegative");
  const int n = ds.n();
  const int d = ds.d();
  const Eigen::MatrixXd g = gram_matrix(ds);
  Eigen::MatrixXd sum = Eigen::MatrixXd::Zero(n, n);
  Eigen::MatrixXd sum_sq = Eigen::MatrixXd::Zero(n, n);
  Eigen::VectorXd w(d);
  Eigen::VectorXd e(n);
  Rng rng(derive_seed(seed, Stream::monte_carlo));
  for (std::int64_t s = 0; s < samples; ++s) {
    for (int k = 0; k < d; ++k) w(k) = sigma * rng.normal();
    for (int i = 0; i < n; ++i) {
      const double z = w.dot(ds.x(i));
      guard_exponent(z, 0, i);
      e(i) = std::exp(z);
    }
    for (int i = 0; i < n; ++i) {
      for (int j = i; j < n; ++j) {
        const double f = g(i, j) * e(i) * e(j);
        sum(i, j) += f;
        sum_sq(i, j) += f * f;
      }
    }
  }
  const double count = static_cast<double>(samples);
  MonteCarloKernel out{{Eigen::MatrixXd(n, n), KernelKind::cts_mc}, Eigen::MatrixXd::Zero(n, n)};
  for (int i = 0; i < n; ++i) {
    for (int j = i; j < n; ++j) {
      const double mean = sum(i, j) / count;
      out.kernel.h(i, j) = mean;
      out.kernel.h(j, i) = mean;
      if (samples > 1) {
        const double var = std::max(0.0, (sum_sq(i, j) - count * mean * mean) / (count - 1.0));
        out.std_error(i, j) = std::sqrt(var / count);
        out.std_error(j, i) = out.std_error(i, j);
      }
    }
  }
  return out;
}

KernelMatrix h_cts_mc(const Dataset& ds, double sigma, std::int64_t samples, std::uint64_t seed) {
  return h_cts_mc_with_error(ds, sigma, samples, seed).kernel;
}

Eigen::MatrixXd h_dis_from_activations(const Eigen::MatrixXd& gram, const Eigen::MatrixXd& act) {
  const int n = static_cast<int>(act.cols());
  const int m = static_cast<int>(act.rows());
  Eigen::MatrixXd h(n, n);
  for (int i = 0; i < n; ++i) {
    for (int j = i; j < n; ++j) {
      double acc = 0.0;
      for (int r = 0; r < m; ++r) acc += act(r, i) * act(r, j);
      h(i, j) = gram(i, j) * acc / static_cast<double>(m);
      h(j, i) = h(i, j);
    }
  }
  return h;
}

KernelMatrix h_dis(const Dataset& ds, const NetworkState& state) {
  const Eigen::MatrixXd act = exp_activations(state, ds);
  return {h_dis_from_activations(gram_matrix(ds), act),
          state.step() == 0 ? KernelKind::dis : KernelKind::at_time};
}

SpectralReport lambda_min(const Eigen::MatrixXd& h) {
  const Eigen::MatrixXd sym = checked_symmetric(h);
  const JacobiResult eig = jacobi_eigen(sym);
  Eigen::Index idx = 0;
  eig.values.minCoeff(&idx);
  SpectralReport rep;
  rep.lambda_min = eig.values(idx);
  rep.iterations = eig.sweeps;
  rep.eigenvector = eig.vectors.col(idx).normalized();
  rep.residual = (sym * rep.eigenvector - rep.lambda_min * rep.eigenvector).norm();
  return rep;
}

Eigen::VectorXd symmetric_eigenvalues(const Eigen::MatrixXd& h) {
  Eigen::VectorXd values = jacobi_eigen(checked_symmetric(h)).values;
  std::sort(values.data(), values.data() + values.size());
  return values;
}

double fro_norm(const Eigen::MatrixXd& h) { return h.norm(); }

double inf_norm(const Eigen::MatrixXd& h) {
  return h.size() == 0 ? 0.0 : h.cwiseAbs().maxCoeff();
}

double spectral_norm(const Eigen::MatrixXd& h) {
  if (h.size() == 0 || inf_norm(h) == 0.0) return 0.0;
  const Eigen::MatrixXd ata = h.transpose() * h;
  const int n = static_cast<int>(ata.rows());
  Eigen::VectorXd v(n);
  for (int k = 0; k < n; ++k) v(k) = 1.0 + 0.5 * static_cast<double>(k) / n;
  v.normalize();
  constexpr int kMaxIterations = 10000;
  for (int it = 0; it < kMaxIterations; ++it) {
    const Eigen::VectorXd av = ata * v;
    const double rayleigh = v.dot(av);
    if (rayleigh > 0.0 && (av - rayleigh * v).norm() <= 1e-10 * rayleigh) {
      return std::sqrt(rayleigh);
    }
    const double len = av.norm();
    if (len == 0.0) break;
    v = av / len;
  }
  // Nearly degenerate top singular values; fall back to a direct SVD.
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(h);
  return svd.singularValues()(0);
}

}  // namespace expreg
