#include "mfbo/local_search.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace mfbo {
namespace {

double safe_eval(const Objective& f, const Eigen::VectorXd& x, std::string* failure) {
  try {
    const double v = f(x);
    return std::isfinite(v) ? v : -std::numeric_limits<double>::infinity();
  } catch (const std::exception& e) {
    if (failure != nullptr && failure->empty()) *failure = e.what();
    return -std::numeric_limits<double>::infinity();
  }
}

SearchResult search_impl(const Objective& f, const Eigen::VectorXd& start,
                         const Eigen::VectorXd& lower, const Eigen::VectorXd& upper,
                         const CoordinateSearchOptions& options, std::string* failure) {
  SearchResult best;
  best.argmax = start.cwiseMax(lower).cwiseMin(upper);
  best.value = safe_eval(f, best.argmax, failure);
  best.evaluations = 1;

  const Eigen::VectorXd unit_step =
      options.relative_steps ? Eigen::VectorXd(upper - lower)
                             : Eigen::VectorXd::Ones(start.size());
  double step = options.initial_step;
  while (step >= options.min_step && best.evaluations < options.max_evaluations) {
    bool improved = false;
    for (Eigen::Index i = 0; i < start.size(); ++i) {
      if (upper[i] <= lower[i]) continue;
      for (const double sign : {1.0, -1.0}) {
        if (best.evaluations >= options.max_evaluations) break;
        Eigen::VectorXd trial = best.argmax;
        trial[i] = std::clamp(trial[i] + sign * step * unit_step[i], lower[i], upper[i]);
        if (trial[i] == best.argmax[i]) continue;
        const double v = safe_eval(f, trial, failure);
        ++best.evaluations;
        if (v > best.value) {
          best.value = v;
          best.argmax = std::move(trial);
          improved = true;
          break;
        }
      }
    }
    if (!improved) step *= 0.5;
  }
  return best;
}

}  // namespace

SearchResult coordinate_search(const Objective& f, const Eigen::VectorXd& start,
                               const Eigen::VectorXd& lower, const Eigen::VectorXd& upper,
                               const CoordinateSearchOptions& options) {
  return search_impl(f, start, lower, upper, options, nullptr);
}

SearchResult multistart_search(const Objective& f, const std::vector<Eigen::VectorXd>& starts,
                               const Eigen::VectorXd& lower, const Eigen::VectorXd& upper,
                               const CoordinateSearchOptions& options) {
  SearchResult best;
  best.value = -std::numeric_limits<double>::infinity();
  std::size_t total = 0;
  std::string failure;
  for (const auto& s : starts) {
    SearchResult r = search_impl(f, s, lower, upper, options, &failure);
    total += r.evaluations;
    if (best.argmax.size() == 0 || r.value > best.value) best = std::move(r);
  }
  best.evaluations = total;
  if (!std::isfinite(best.value)) {
    throw std::runtime_error("all " + std::to_string(starts.size()) +
                             " search starts failed; first failure: " +
                             (failure.empty() ? std::string("non-finite objective") : failure));
  }
  return best;
}

}  // namespace mfbo
