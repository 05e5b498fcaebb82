#pragma once

// Autoregressive multifidelity Gaussian process:
//   f_1 = delta_1,  f_l = rho_l * f_{l-1} + delta_l   (l = 2..L)
// with independent zero-mean squared-exponential GPs delta_l. All samples at
// all levels are conditioned on jointly through one covariance matrix.

#include <Eigen/Dense>

#include <optional>
#include <vector>

#include "mfbo/gp_core.hpp"
#include "mfbo/types.hpp"

namespace mfbo {

struct Sample {
  Eigen::VectorXd x;
  FidelityLevel level;
  double y = 0.0;
  double cost = 0.0;
};

/// Observed samples in insertion order plus the best level-L value.
class TrainingSet {
 public:
  TrainingSet(Bounds bounds, int num_levels, std::vector<double> costs = {});

  /// Validates bounds, level and (when costs were given) the sample cost.
  void add(Sample sample);

  const std::vector<Sample>& samples() const { return samples_; }
  std::size_t size() const { return samples_.size(); }
  bool empty() const { return samples_.empty(); }
  int num_levels() const { return num_levels_; }
  const Bounds& bounds() const { return bounds_; }
  Eigen::Index dimension() const { return bounds_.dimension(); }
  std::size_t count_at(FidelityLevel level) const;
  /// Cost of one evaluation at `level`; 0 when no costs were given.
  double cost(FidelityLevel level) const;

  /// Minimum y over level-L samples; empty until one exists.
  std::optional<double> incumbent() const { return incumbent_; }
  std::optional<std::size_t> incumbent_index() const { return incumbent_index_; }

 private:
  Bounds bounds_;
  int num_levels_;
  std::vector<double> costs_;
  std::vector<Sample> samples_;
  std::optional<double> incumbent_;
  std::optional<std::size_t> incumbent_index_;
};

/// One kernel per level (f_1, then each discrepancy), one scaling factor per
/// level transition, one noise std per level. Kernel and noise values are in
/// the model's standardized coordinates.
struct MfHyperparameters {
  std::vector<KernelParams> kernels;
  std::vector<double> rho;
  std::vector<double> noise_std;
  double jitter = 1e-10;

  int num_levels() const { return static_cast<int>(kernels.size()); }
  void validate(Eigen::Index dimension) const;
};

struct MfFitInfo {
  double log_likelihood = 0.0;
  std::size_t evaluations = 0;
  /// Levels with no observations; their discrepancy parameters were left at
  /// the search defaults.
  std::vector<int> missing_levels;
};

class MfGpModel {
 public:
  /// Conditions on `train` with fixed hyperparameters. When `scaling` is not
  /// given it is derived from the training bounds and all observed y.
  MfGpModel(TrainingSet train, MfHyperparameters hyper,
            std::optional<Standardization> scaling = std::nullopt);

  int num_levels() const { return hyper_.num_levels(); }
  FidelityLevel top_level() const { return FidelityLevel(num_levels()); }
  Eigen::Index dimension() const { return train_.dimension(); }
  const TrainingSet& training_set() const { return train_; }
  const MfHyperparameters& hyperparameters() const { return hyper_; }
  const Standardization& scaling() const { return scaling_; }
  const Cholesky& factor() const { return chol_; }
  const Eigen::VectorXd& weights() const { return alpha_; }
  std::optional<double> incumbent() const { return train_.incumbent(); }
  const MfFitInfo& fit_info() const { return fit_info_; }
  void set_fit_info(MfFitInfo info) { fit_info_ = std::move(info); }
  /// Noise std at `level` in standardized units.
  double noise_std(FidelityLevel level) const;

  /// Prior covariance between (u, l) and (u2, l2) for unit-cube inputs.
  double prior_covariance_unit(const Eigen::Ref<const Eigen::VectorXd>& u, FidelityLevel l,
                               const Eigen::Ref<const Eigen::VectorXd>& u2,
                               FidelityLevel l2) const;
  /// Vector of prior covariances between every training sample and (u, l).
  Eigen::VectorXd cross_covariance_unit(const Eigen::VectorXd& u, FidelityLevel l) const;

  /// Posterior moments of f_l(x) in the caller's units.
  PosteriorMoments posterior(const Eigen::VectorXd& x, FidelityLevel l) const;
  /// Same, in standardized output units.
  PosteriorMoments posterior_standardized(const Eigen::VectorXd& x, FidelityLevel l) const;

  struct PairPosterior {
    PosteriorMoments first;
    PosteriorMoments second;
    double covariance = 0.0;
  };
  /// Joint posterior of f_l(x) and f_l2(x) (standardized units).
  PairPosterior joint_posterior(const Eigen::VectorXd& x, FidelityLevel l,
                                FidelityLevel l2) const;

  /// Model conditioned on one more sample with the same hyperparameters and
  /// scaling, via an appended Cholesky row. Falls back to a full
  /// refactorization if the appended pivot breaks down.
  MfGpModel condition(const Sample& sample) const;
  /// Whether the most recent condition() needed the fallback.
  bool refactorized() const { return refactorized_; }

 private:
  MfGpModel() = default;
  void build();

  TrainingSet train_{Bounds::unit(1), 1};
  MfHyperparameters hyper_;
  Standardization scaling_;
  MfFitInfo fit_info_;
  Eigen::MatrixXd unit_X_;
  std::vector<FidelityLevel> levels_;
  Eigen::VectorXd y_std_;
  Eigen::MatrixXd gram_;
  Cholesky chol_;
  Eigen::VectorXd alpha_;
  bool refactorized_ = false;
};

/// Prior covariance between (x, l) and (x2, l2), inputs in the caller's
/// coordinates, value in the model's standardized output units.
double mf_cov(const Eigen::VectorXd& x, FidelityLevel l, const Eigen::VectorXd& x2,
              FidelityLevel l2, const MfGpModel& model);

PosteriorMoments mf_posterior(const MfGpModel& model, const Eigen::VectorXd& x,
                              FidelityLevel l);

/// Posterior variances below this (standardized) are treated as zero:
/// max(1e-12, twice the diagonal jitter of the model's factorization). At a
/// noiseless training input the exact variance is at most the jitter, so
/// anything at that level reflects the regularization, not the data.
double degenerate_variance(const MfGpModel& model);

/// corr[f_l(x), f_L(x)] under the joint posterior. 1 when l = L; when
/// either posterior variance is below degenerate_variance(model) returns 1
/// for l = L and 0 otherwise.
double posterior_fidelity_correlation(const MfGpModel& model, const Eigen::VectorXd& x,
                                      FidelityLevel l);

/// Jointly fits every kernel, the scaling factors and (optionally) the
/// noise by maximizing the joint log marginal likelihood. With one level
/// the search space, starts and objective coincide with fit_mle.
MfGpModel fit_mf(const TrainingSet& train, const SearchConfig& config,
                 const std::optional<MfHyperparameters>& warm_start = std::nullopt);

}  // namespace mfbo
