#pragma once

// Multifidelity benchmark problems. Level 1 is the cheapest representation,
// level L the ground truth; costs are normalized so that lambda_L = 1.
//
// Implemented forms:
//   forrester      f2 = (6x-2)^2 sin(12x-4) on [0,1], f1 = 0.5 f2 + 10(x-0.5) - 5
//                  (Forrester, Sobester & Keane, "Engineering design via
//                  surrogate modelling", 2008).
//   rosenbrockNd   f2 = sum_{i<d} 100(x_{i+1}-x_i^2)^2 + (1-x_i)^2 on [-2,2]^d,
//                  f1 = sum_{i<d} 50(x_{i+1}-x_i^2)^2 + (1-x_i)^2 - sum_i 0.5 x_i.
//   borehole       8-d water flow; f2 uses the 2*pi numerator, f1 the 5 / 1.5
//                  variant (Xiong, Qian & Wu, Technometrics 2013).
// The shifted/rotated Rastrigin and mass-spring problems are not built in;
// they are registered at runtime from a problem file.

#include <Eigen/Dense>

#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "mfbo/types.hpp"

namespace mfbo {

using Evaluator = std::function<double(const Eigen::VectorXd&)>;

struct BenchmarkProblem {
  std::string name;
  Bounds bounds;
  /// evaluators[l - 1] evaluates fidelity l.
  std::vector<Evaluator> evaluators;
  std::vector<double> costs;
  double f_star = 0.0;
  double f_max = 1.0;
  std::optional<Eigen::VectorXd> x_star;
  /// How f_star / f_max were obtained (oracle and resolution).
  std::string reference_provenance;
  /// Reference experiment setup: initial samples per level (level order)
  /// and maximum budget.
  std::vector<std::size_t> default_n0;
  double default_budget = 0.0;
  std::string source;

  Eigen::Index dimension() const { return bounds.dimension(); }
  int num_levels() const { return static_cast<int>(evaluators.size()); }
  FidelityLevel top_level() const { return FidelityLevel(num_levels()); }
  double cost(FidelityLevel l) const;
  /// Throws EvaluationError on a non-finite result or evaluator failure.
  double evaluate(const Eigen::VectorXd& x, FidelityLevel l) const;
  void validate() const;
};

double forrester(const Eigen::VectorXd& x, FidelityLevel level);
double rosenbrock_mf(const Eigen::VectorXd& x, FidelityLevel level);
double borehole(const Eigen::VectorXd& x, FidelityLevel level);

BenchmarkProblem make_forrester();
BenchmarkProblem make_rosenbrock(int dimension);
BenchmarkProblem make_borehole();

/// (f_incumbent - f_star) / (f_max - f_star)
double normalized_error(const BenchmarkProblem& problem, double f_incumbent);

/// Evaluator that runs `command` through /bin/sh once per point, writes the
/// d coordinates as one whitespace-separated line to its stdin and reads a
/// single number from its stdout.
Evaluator external_command_evaluator(std::string command);

class ProblemRegistry {
 public:
  /// Registry holding the built-in problems.
  static ProblemRegistry with_builtins();

  /// Rejects duplicate names.
  void add(BenchmarkProblem problem);
  /// Throws ConfigError naming the available problems for unknown names.
  const BenchmarkProblem& get(const std::string& name) const;
  bool contains(const std::string& name) const { return problems_.count(name) != 0; }
  std::vector<std::string> names() const;

  /// Reads a JSON problem definition and registers it; returns its name.
  std::string load_file(const std::string& path);

  /// Names reserved for problems that must be supplied from a file.
  static const std::vector<std::string>& external_slots();

 private:
  std::map<std::string, BenchmarkProblem> problems_;
};

}  // namespace mfbo
