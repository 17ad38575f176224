#pragma once

#include <Eigen/Dense>

#include <cstdint>

#include "expreg/datamodel.hpp"

namespace expreg {

/// Largest admissible |⟨w_r, x_i⟩| before exp() is considered to overflow.
inline constexpr double kMaxExponent = 700.0;

/// Z(r, i) = ⟨w_r, x_i⟩ as an m×n matrix. Throws RangeError when |Z| > 700 anywhere.
Eigen::MatrixXd preactivations(const NetworkState& state, const Dataset& ds);

/// G_ij = ⟨x_i, x_j⟩, computed once per pair and mirrored.
Eigen::MatrixXd gram_matrix(const Dataset& ds);

/// E(r, i) = exp(⟨w_r, x_i⟩), same guard as preactivations().
Eigen::MatrixXd exp_activations(const NetworkState& state, const Dataset& ds);

/// H_ij = ⟨x_i, x_j⟩·exp(σ²‖x_i + x_j‖²/2), the Gaussian-MGF evaluation of E_w[...].
KernelMatrix h_cts_closed(const Dataset& ds, double sigma);

struct MonteCarloKernel {
  KernelMatrix kernel;
  /// Per-entry standard error of the sample mean (sample std / √samples).
  Eigen::MatrixXd std_error;
};

/// Sample mean of ⟨x_i,x_j⟩·exp(⟨w,x_i⟩)·exp(⟨w,x_j⟩) over `samples` shared draws w ~ N(0, σ²I).
MonteCarloKernel h_cts_mc_with_error(const Dataset& ds, double sigma, std::int64_t samples,
                                     std::uint64_t seed);
KernelMatrix h_cts_mc(const Dataset& ds, double sigma, std::int64_t samples, std::uint64_t seed);

/// H_ij = (1/m)·⟨x_i,x_j⟩·Σ_r exp(⟨w_r,x_i⟩)·exp(⟨w_r,x_j⟩). Kind is `dis` at step 0 and
/// `at_time` afterwards.
KernelMatrix h_dis(const Dataset& ds, const NetworkState& state);

/// Same formula from precomputed activations (m×n); r is summed in ascending order.
Eigen::MatrixXd h_dis_from_activations(const Eigen::MatrixXd& gram, const Eigen::MatrixXd& act);

struct SpectralReport {
  double lambda_min = 0.0;
  int iterations = 0;
  /// ‖Hv − λv‖₂ for the returned unit eigenvector.
  double residual = 0.0;
  Eigen::VectorXd eigenvector;
};

/// Smallest eigenvalue by cyclic Jacobi rotations. Throws StructuralError when
/// max|H − Hᵀ| exceeds 1e-12 of max|H|.
SpectralReport lambda_min(const Eigen::MatrixXd& h);
inline SpectralReport lambda_min(const KernelMatrix& k) { return lambda_min(k.h); }

/// All eigenvalues (ascending) of a symmetric matrix, same solver as lambda_min().
Eigen::VectorXd symmetric_eigenvalues(const Eigen::MatrixXd& h);

double fro_norm(const Eigen::MatrixXd& h);
/// Largest singular value, power iteration on HᵀH to relative tolerance 1e-10.
double spectral_norm(const Eigen::MatrixXd& h);
/// max_{i,j} |H_ij|.
double inf_norm(const Eigen::MatrixXd& h);

inline double fro_norm(const KernelMatrix& k) { return fro_norm(k.h); }
inline double spectral_norm(const KernelMatrix& k) { return spectral_norm(k.h); }
inline double inf_norm(const KernelMatrix& k) { return inf_norm(k.h); }

}  // namespace expreg
