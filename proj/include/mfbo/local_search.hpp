#pragma once

#include <Eigen/Dense>

#include <functional>
#include <string>
#include <vector>

namespace mfbo {

using Objective = std::function<double(const Eigen::VectorXd&)>;

struct CoordinateSearchOptions {
  /// Step per coordinate, as a fraction of the coordinate's search width
  /// when `relative_steps` is set, otherwise in absolute units.
  double initial_step = 1.0;
  double min_step = 1e-3;
  std::size_t max_evaluations = 300;
  bool relative_steps = false;
};

struct SearchResult {
  Eigen::VectorXd argmax;
  double value = 0.0;
  std::size_t evaluations = 0;
};

/// Compass search maximizing `f` inside [lower, upper]. Accepts any strict
/// improvement along +/- each axis, halves the step after a sweep with no
/// improvement. Non-finite values and exceptions from `f` count as -inf.
/// The returned value is never below f(start).
SearchResult coordinate_search(const Objective& f, const Eigen::VectorXd& start,
                               const Eigen::VectorXd& lower, const Eigen::VectorXd& upper,
                               const CoordinateSearchOptions& options);

/// Runs coordinate_search from each start and keeps the best (earliest on
/// ties). Throws std::runtime_error listing the failures if no start yields
/// a finite value.
SearchResult multistart_search(const Objective& f, const std::vector<Eigen::VectorXd>& starts,
                               const Eigen::VectorXd& lower, const Eigen::VectorXd& upper,
                               const CoordinateSearchOptions& options);

}  // namespace mfbo
