#pragma once

// Flat hyperparameter vectors used by the likelihood searches. Scale-like
// quantities live in log space; autoregressive factors are linear.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <random>
#include <vector>

namespace mfbo::detail {

class ParameterSpace {
 public:
  void add_log(double default_value, double lower, double upper, double start_lower,
               double start_upper) {
    push(std::log(default_value), std::log(lower), std::log(upper), std::log(start_lower),
         std::log(start_upper));
  }

  void add_linear(double default_value, double lower, double upper, double start_lower,
                  double start_upper) {
    push(default_value, lower, upper, start_lower, start_upper);
  }

  Eigen::Index size() const { return static_cast<Eigen::Index>(defaults_.size()); }

  Eigen::VectorXd lower() const { return to_vector(lower_); }
  Eigen::VectorXd upper() const { return to_vector(upper_); }
  Eigen::VectorXd defaults() const { return to_vector(defaults_); }

  /// The default point followed by `count - 1` random points drawn from the
  /// start boxes, parameter by parameter, in declaration order.
  std::vector<Eigen::VectorXd> starts(std::size_t count, std::mt19937_64& rng) const {
    std::vector<Eigen::VectorXd> out;
    if (count == 0) return out;
    out.push_back(defaults());
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    for (std::size_t s = 1; s < count; ++s) {
      Eigen::VectorXd p(size());
      for (Eigen::Index i = 0; i < size(); ++i) {
        const auto k = static_cast<std::size_t>(i);
        p[i] = start_lower_[k] + unit(rng) * (start_upper_[k] - start_lower_[k]);
      }
      out.push_back(std::move(p));
    }
    return out;
  }

 private:
  void push(double d, double lo, double hi, double slo, double shi) {
    defaults_.push_back(std::clamp(d, lo, hi));
    lower_.push_back(lo);
    upper_.push_back(hi);
    start_lower_.push_back(std::max(slo, lo));
    start_upper_.push_back(std::min(shi, hi));
  }

  static Eigen::VectorXd to_vector(const std::vector<double>& v) {
    return Eigen::Map<const Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(v.size()));
  }

  std::vector<double> defaults_, lower_, upper_, start_lower_, start_upper_;
};

}  // namespace mfbo::detail
