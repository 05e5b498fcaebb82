#pragma once

// Single-output Gaussian process machinery: squared-exponential kernel,
// jittered Cholesky factorization, posterior moments, log evidence and
// maximum-likelihood hyperparameter search. The multifidelity model is
// assembled from these pieces.

#include <Eigen/Dense>

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "mfbo/types.hpp"

namespace mfbo {

struct KernelParams {
  double signal_variance = 1.0;
  Eigen::VectorXd length_scales;

  KernelParams() = default;
  KernelParams(double sv, Eigen::VectorXd ls);

  Eigen::Index dimension() const { return length_scales.size(); }
  /// Throws ContractViolation unless every entry is strictly positive.
  void validate() const;
};

struct NoiseParams {
  double noise_std = 0.0;
  /// Starting diagonal jitter; escalated by factorize() on failure.
  double jitter = 1e-10;

  void validate() const;
};

struct PosteriorMoments {
  double mean = 0.0;
  double variance = 0.0;

  double stddev() const;
};

/// signal_variance * exp(-0.5 * sum_d ((x_d - x2_d) / l_d)^2)
double kernel_se(const Eigen::Ref<const Eigen::VectorXd>& x,
                 const Eigen::Ref<const Eigen::VectorXd>& x2, const KernelParams& params);

/// Lower Cholesky factor of K + jitter * I together with the jitter that was
/// actually needed.
struct Cholesky {
  Eigen::MatrixXd lower;
  double jitter = 0.0;

  Eigen::Index size() const { return lower.rows(); }
  /// L^{-1} b
  Eigen::VectorXd solve_lower(const Eigen::VectorXd& b) const;
  Eigen::MatrixXd solve_lower(const Eigen::MatrixXd& b) const;
  /// (L L^T)^{-1} b
  Eigen::VectorXd solve(const Eigen::VectorXd& b) const;
  double log_determinant() const;
};

/// Factorizes K + jitter * I. If that fails the jitter is escalated by x10,
/// starting from max(jitter, 1e-10 * mean diagonal), until it exceeds
/// 1e-4 * mean diagonal; then a NumericalError naming the last jitter tried
/// is thrown.
Cholesky factorize(const Eigen::MatrixXd& K, double jitter);

/// (K + jitter I)^{-1} y from the factor of K + jitter I, plus one step of
/// iterative refinement with the residual accumulated in long double. `K` is
/// the matrix that was passed to factorize().
Eigen::VectorXd refined_solve(const Cholesky& chol, const Eigen::MatrixXd& K, const Eigen::VectorXd& y);

/// Affine maps between the caller's coordinates and the model's internal
/// ones: inputs to the unit hypercube, outputs to zero mean / unit variance.
struct Standardization {
  Eigen::VectorXd input_offset;
  Eigen::VectorXd input_scale;
  double output_mean = 0.0;
  double output_scale = 1.0;

  static Standardization identity(Eigen::Index dimension);
  static Standardization from_data(const Bounds& bounds, const Eigen::VectorXd& y);

  Eigen::VectorXd to_unit(const Eigen::VectorXd& x) const;
  Eigen::MatrixXd to_unit_columns(const Eigen::MatrixXd& X) const;
  double standardize(double y) const { return (y - output_mean) / output_scale; }
  Eigen::VectorXd standardize(const Eigen::VectorXd& y) const;
  double destandardize(double y) const { return output_mean + output_scale * y; }
  PosteriorMoments destandardize(const PosteriorMoments& m) const;
};

/// Single-fidelity observations; inputs stored one per column.
struct Dataset {
  Eigen::MatrixXd X;
  Eigen::VectorXd y;

  Eigen::Index size() const { return y.size(); }
  Eigen::Index dimension() const { return X.rows(); }
};

/// Gram matrix k(x_i, x_j) + (noise^2) I, without jitter.
Eigen::MatrixXd kernel_matrix(const Eigen::MatrixXd& X, const KernelParams& kernel,
                              const NoiseParams& noise);

/// -0.5 y^T K^{-1} y - 0.5 log det K - n/2 log 2 pi for a factorized K.
double gaussian_log_evidence(const Cholesky& chol, const Eigen::VectorXd& y);

/// Log marginal likelihood of `data` in its own coordinates.
double log_marginal_likelihood(const Dataset& data, const KernelParams& kernel,
                               const NoiseParams& noise);

/// Posterior mean and variance from a factorized covariance, the weight
/// vector alpha = K^{-1} y, the cross-covariance vector and the prior
/// variance at the query. Shared by the single- and multi-fidelity models.
PosteriorMoments posterior_from_factor(const Cholesky& chol, const Eigen::VectorXd& alpha,
                                       const Eigen::VectorXd& cross_cov, double prior_variance);

/// Zero-mean GP conditioned on a dataset with fixed hyperparameters.
/// Immutable once constructed.
class GaussianProcess {
 public:
  GaussianProcess(Dataset data, KernelParams kernel, NoiseParams noise,
                  std::optional<Standardization> scaling = std::nullopt);

  /// Posterior moments of f(x) in the caller's coordinates. With no data,
  /// returns the prior (mean 0, variance k(x, x)) mapped back through the
  /// output scaling.
  PosteriorMoments posterior(const Eigen::VectorXd& x) const;
  /// Same, in standardized output units.
  PosteriorMoments posterior_standardized(const Eigen::VectorXd& x) const;

  const KernelParams& kernel() const { return kernel_; }
  const NoiseParams& noise() const { return noise_; }
  const Standardization& scaling() const { return scaling_; }
  const Cholesky& factor() const { return chol_; }
  Eigen::Index size() const { return unit_X_.cols(); }

 private:
  KernelParams kernel_;
  NoiseParams noise_;
  Standardization scaling_;
  Eigen::MatrixXd unit_X_;
  Cholesky chol_;
  Eigen::VectorXd alpha_;
};

/// Search box and effort for maximum-likelihood fitting. All scale-like
/// hyperparameters are searched in log space; bounds are relative to the
/// standardized data (unit cube inputs, unit-variance outputs).
struct SearchConfig {
  std::size_t starts = 8;
  std::size_t max_evaluations_per_start = 300;
  double initial_step = 1.0;
  double min_step = 1e-3;
  double scale_lower = 1e-3;
  double scale_upper = 1e3;
  /// Random starts are drawn from this narrower box (log-uniform).
  double start_signal_lower = 0.05, start_signal_upper = 5.0;
  double start_length_lower = 0.05, start_length_upper = 2.0;
  /// Autoregressive scaling factors are searched on [-rho_bound, rho_bound].
  double rho_bound = 10.0;
  bool fit_noise = false;
  double noise_lower = 1e-6, noise_upper = 10.0;
  /// Per-level noise when not fitted (standardized units); one entry is
  /// broadcast to every level.
  std::vector<double> fixed_noise_std{0.0};
  double jitter = 1e-10;
  std::uint64_t seed = 0;
};

struct GpFit {
  KernelParams kernel;
  NoiseParams noise;
  Standardization scaling;
  double log_likelihood = 0.0;
  std::size_t evaluations = 0;
};

/// Multi-start derivative-free maximum-likelihood search on log parameters.
/// `warm_start`, when given, is tried as an extra first start. Throws
/// NumericalError when every start fails to factorize.
GpFit fit_mle(const Dataset& data, const Bounds& bounds, const SearchConfig& config,
              const std::optional<GpFit>& warm_start = std::nullopt);

}  // namespace mfbo
