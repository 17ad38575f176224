#pragma once

#include <cstdint>

#include <Eigen/Dense>

#include "expreg/datamodel.hpp"
#include "expreg/rng.hpp"

namespace expreg::testing {

/// Dataset from explicit columns; labels default to zero.
inline Dataset columns(const Eigen::MatrixXd& x, Eigen::VectorXd y = {}) {
  if (y.size() == 0) y = Eigen::VectorXd::Zero(x.cols());
  return Dataset(x, y);
}

/// Small random state with arbitrary signs, independent of init_* (for oracles).
inline NetworkState random_state(int d, int m, double sigma, std::uint64_t seed) {
  Rng rng(seed);
  Eigen::MatrixXd w(d, m);
  Eigen::VectorXd a(m);
  for (int r = 0; r < m; ++r) {
    for (int k = 0; k < d; ++k) w(k, r) = sigma * rng.normal();
    a(r) = rng.sign();
  }
  return NetworkState(w, a);
}

/// Σ v_i² accumulated in index order (the order loss() uses).
inline double squared_norm_in_order(const Eigen::VectorXd& v) {
  double acc = 0.0;
  for (Eigen::Index i = 0; i < v.size(); ++i) acc += v(i) * v(i);
  return acc;
}

inline double rel_diff(double a, double b) {
  const double scale = std::max({std::abs(a), std::abs(b), 1e-300});
  return std::abs(a - b) / scale;
}

}  // namespace expreg::testing
