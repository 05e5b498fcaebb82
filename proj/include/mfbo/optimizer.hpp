#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "mfbo/acquisition.hpp"
#include "mfbo/benchmarks.hpp"
#include "mfbo/doe.hpp"
#include "mfbo/gp_core.hpp"
#include "mfbo/mf_gp.hpp"

namespace mfbo {

enum class AcquisitionKind { MfeiBaseline, TwoStepLookahead };

std::string to_string(AcquisitionKind kind);
AcquisitionKind acquisition_from_string(const std::string& name);

struct OptimizerConfig {
  /// Initial LHS sizes, one per level in level order (level 1 first).
  std::vector<std::size_t> n0_per_level;
  double budget_max = 0.0;
  AcquisitionKind acquisition = AcquisitionKind::TwoStepLookahead;
  /// n_mc and inner pool size; the seed is re-derived every iteration.
  /// inner_candidates = 0 means 128 * d.
  McConfig mc{64, 0, 0, {}};
  /// Outer pool size per level; 0 means 64 * d (at most 512).
  std::size_t outer_candidates = 0;
  /// Coordinate-search evaluations spent refining the best pool point of
  /// each level.
  std::size_t refine_evaluations = 40;
  /// Hyperparameter search for the initial fit.
  SearchConfig fit;
  /// Random starts added to the warm start when refitting inside the loop.
  std::size_t refit_starts = 1;
  /// Refit every k-th iteration; in between (or always, with
  /// recondition_only) the model is only conditioned on the new sample.
  std::size_t refit_interval = 1;
  bool recondition_only = false;
  /// Allow one final evaluation that crosses budget_max.
  bool allow_overshoot = false;
  std::uint64_t seed = 0;

  void validate(const BenchmarkProblem& problem) const;
  std::size_t resolved_outer(Eigen::Index d) const;
  std::size_t resolved_inner(Eigen::Index d) const;
};

/// Cumulative evaluation cost.
class BudgetTracker {
 public:
  explicit BudgetTracker(double budget_max) : budget_max_(budget_max) {}

  void charge(double cost);
  double spent() const { return spent_; }
  double remaining() const { return budget_max_ - spent_; }
  /// True when another evaluation of `cost` stays within budget_max (up to
  /// rounding of the running sum).
  bool fits(double cost) const;

 private:
  double budget_max_;
  double spent_ = 0.0;
};

struct HistoryEntry {
  /// 0 for the initial design, then 1, 2, ... per loop iteration.
  std::size_t iteration = 0;
  Eigen::VectorXd x;
  FidelityLevel level;
  double y = 0.0;
  double budget = 0.0;
  double incumbent = 0.0;
  double delta_f = 0.0;
  /// The acquisition was zero over the whole pool and the exploration
  /// fallback chose this point.
  bool fallback = false;
};

struct TrialRecord {
  std::string problem;
  std::string arm;
  std::uint64_t seed = 0;
  std::vector<HistoryEntry> history;
  Eigen::VectorXd x_star;
  double initial_cost = 0.0;
  bool aborted = false;
  std::string abort_reason;

  double final_delta_f() const;
  /// First cumulative budget at which delta_f <= threshold (infinity if
  /// never).
  double budget_to_reach(double threshold) const;
};

using AcquisitionFn = std::function<AcquisitionValue(const Eigen::VectorXd&, FidelityLevel)>;

struct Selection {
  Eigen::VectorXd x;
  FidelityLevel level;
  AcquisitionValue value;
  bool fallback = false;
};

struct MaximizeOptions {
  int num_levels = 1;
  std::size_t refine_evaluations = 40;
};

/// Scores every (pool point, level) pair, refines the best point of each
/// level by coordinate search, and returns the overall argmax. Ties go to
/// the higher level, then the lower pool index. If the acquisition is zero
/// on the whole pool, returns the pool point with the largest
/// `top_variance` at level L, flagged as a fallback.
Selection maximize_acquisition(const AcquisitionFn& acquisition,
                               const std::function<double(const Eigen::VectorXd&)>& top_variance,
                               const DesignSpec& pool_spec, const MaximizeOptions& options);

Selection maximize_acquisition(const MfGpModel& model, const AcquisitionFn& acquisition,
                               const DesignSpec& pool_spec, const MaximizeOptions& options);

/// Budget-tracked multifidelity Bayesian optimization loop.
TrialRecord run(const BenchmarkProblem& problem, const OptimizerConfig& cfg);

/// Plain single-fidelity EI loop on the top level of `problem`, built
/// directly on GaussianProcess / fit_mle. Uses the same seed streams as run().
TrialRecord run_single_fidelity_ei(const BenchmarkProblem& problem, const OptimizerConfig& cfg);

/// The top fidelity of `problem` as a standalone one-level problem.
BenchmarkProblem top_level_only(const BenchmarkProblem& problem);

}  // namespace mfbo
