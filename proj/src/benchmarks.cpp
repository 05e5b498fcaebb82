#include "mfbo/benchmarks.hpp"

#include <sys/wait.h>
#include <unistd.h>

#include <cerrno>
#include <cmath>
#include <csignal>
#include <cstring>
#include <fstream>
#include <numbers>
#include <sstream>

#include <json.hpp>

#include "mfbo/errors.hpp"

namespace mfbo {

double BenchmarkProblem::cost(FidelityLevel l) const {
  l.check(num_levels());
  return costs[l.slot()];
}

double BenchmarkProblem::evaluate(const Eigen::VectorXd& x, FidelityLevel l) const {
  l.check(num_levels());
  if (x.size() != dimension()) throw ContractViolation(name + ": input dimension mismatch");
  double y = 0.0;
  try {
    y = evaluators[l.slot()](x);
  } catch (const EvaluationError&) {
    throw;
  } catch (const std::exception& e) {
    throw EvaluationError(name + " level " + std::to_string(l.index()) + ": " + e.what());
  }
  if (!std::isfinite(y)) {
    throw EvaluationError(name + " level " + std::to_string(l.index()) + " returned a non-finite value");
  }
  return y;
}

void BenchmarkProblem::validate() const {
  if (name.empty()) throw ConfigError("problem needs a name");
  if (evaluators.empty()) throw ConfigError(name + ": at least one fidelity evaluator required");
  if (costs.size() != evaluators.size()) throw ConfigError(name + ": one cost per fidelity required");
  for (double c : costs) {
    if (!(c > 0.0)) throw ConfigError(name + ": costs must be positive");
  }
  if (!(f_star < f_max)) throw ConfigError(name + ": f_star must be below f_max");
  if (!default_n0.empty() && default_n0.size() != evaluators.size()) {
    throw ConfigError(name + ": n0_per_level must have one entry per fidelity");
  }
}

// ---------------------------------------------------------------------------
// built-in forms

double forrester(const Eigen::VectorXd& x, FidelityLevel level) {
  if (x.size() != 1) throw ContractViolation("forrester is one-dimensional");
  level.check(2);
  const double t = x[0];
  const double high = (6.0 * t - 2.0) * (6.0 * t - 2.0) * std::sin(12.0 * t - 4.0);
  if (level.index() == 2) return high;
  return 0.5 * high + 10.0 * (t - 0.5) - 5.0;
}

double rosenbrock_mf(const Eigen::VectorXd& x, FidelityLevel level) {
  if (x.size() < 2) throw ContractViolation("rosenbrock needs dimension >= 2");
  level.check(2);
  const double curvature = level.index() == 2 ? 100.0 : 50.0;
  double total = 0.0;
  for (Eigen::Index i = 0; i + 1 < x.size(); ++i) {
    const double a = x[i + 1] - x[i] * x[i];
    const double b = 1.0 - x[i];
    total += curvature * a * a + b * b;
  }
  if (level.index() == 1) total -= 0.5 * x.sum();
  return total;
}

double borehole(const Eigen::VectorXd& x, FidelityLevel level) {
  if (x.size() != 8) throw ContractViolation("borehole is eight-dimensional");
  level.check(2);
  const double rw = x[0], r = x[1], Tu = x[2], Hu = x[3], Tl = x[4], Hl = x[5], L = x[6], Kw = x[7];
  const double log_ratio = std::log(r / rw);
  const double leak = 2.0 * L * Tu / (log_ratio * rw * rw * Kw);
  if (level.index() == 2) {
    return 2.0 * std::numbers::pi * Tu * (Hu - Hl) / (log_ratio * (1.0 + leak + Tu / Tl));
  }
  return 5.0 * Tu * (Hu - Hl) / (log_ratio * (1.5 + leak + Tu / Tl));
}

BenchmarkProblem make_forrester() {
  BenchmarkProblem p;
  p.name = "forrester";
  p.bounds = Bounds::unit(1);
  p.evaluators = {[](const Eigen::VectorXd& x) { return forrester(x, FidelityLevel(1)); },
                  [](const Eigen::VectorXd& x) { return forrester(x, FidelityLevel(2)); }};
  p.costs = {0.05, 1.0};
  p.f_star = -6.0207400557670825;
  p.f_max = 15.829731945974109;
  p.x_star = Eigen::VectorXd::Constant(1, 0.7572487585232999);
  p.reference_provenance =
      "f_star: bounded scalar minimization (xatol 1e-14) seeded by a 1e6+1 point grid; "
      "f_max: same grid, attained at x = 1";
  p.default_n0 = {5, 2};
  p.default_budget = 100.0;
  p.source = "Forrester et al. 2008";
  return p;
}

BenchmarkProblem make_rosenbrock(int dimension) {
  if (dimension < 2) throw ContractViolation("rosenbrock needs dimension >= 2");
  BenchmarkProblem p;
  p.name = "rosenbrock" + std::to_string(dimension) + "d";
  p.bounds = Bounds(Eigen::VectorXd::Constant(dimension, -2.0), Eigen::VectorXd::Constant(dimension, 2.0));
  p.evaluators = {[](const Eigen::VectorXd& x) { return rosenbrock_mf(x, FidelityLevel(1)); },
                  [](const Eigen::VectorXd& x) { return rosenbrock_mf(x, FidelityLevel(2)); }};
  p.costs = {0.5, 1.0};
  p.f_star = 0.0;
  p.f_max = 3609.0 * (dimension - 1);
  p.x_star = Eigen::VectorXd::Ones(dimension);
  p.reference_provenance =
      "f_star: analytic optimum at all-ones; f_max: corner enumeration cross-checked by a "
      "2001^2 grid for d = 2, attained at all(-2)";
  switch (dimension) {
    case 2: p.default_n0 = {10, 5}; p.default_budget = 200.0; break;
    case 5: p.default_n0 = {30, 15}; p.default_budget = 500.0; break;
    case 10: p.default_n0 = {250, 50}; p.default_budget = 1000.0; break;
    default: p.default_n0 = {static_cast<std::size_t>(4 * dimension), static_cast<std::size_t>(2 * dimension)};
             p.default_budget = 100.0 * dimension;
  }
  p.source = "Rosenbrock 1960; low fidelity: halved curvature plus linear drift";
  return p;
}

BenchmarkProblem make_borehole() {
  BenchmarkProblem p;
  p.name = "borehole";
  Eigen::VectorXd lo(8), hi(8);
  lo << 0.05, 100.0, 63070.0, 990.0, 63.1, 700.0, 1120.0, 9855.0;
  hi << 0.15, 50000.0, 115600.0, 1110.0, 116.0, 820.0, 1680.0, 12045.0;
  p.bounds = Bounds(lo, hi);
  p.evaluators = {[](const Eigen::VectorXd& x) { return borehole(x, FidelityLevel(1)); },
                  [](const Eigen::VectorXd& x) { return borehole(x, FidelityLevel(2)); }};
  p.costs = {0.5, 1.0};
  // Monotone in every coordinate, so both extremes sit on corners.
  p.f_star = 7.819676328755232;
  p.f_max = 309.5755876604079;
  Eigen::VectorXd xs(8);
  xs << 0.05, 50000.0, 63070.0, 990.0, 63.1, 820.0, 1680.0, 9855.0;
  p.x_star = xs;
  p.reference_provenance = "f_star / f_max: enumeration of all 256 corners (coordinatewise monotone)";
  p.default_n0 = {500, 100};
  p.default_budget = 800.0;
  p.source = "Xiong, Qian & Wu 2013";
  return p;
}

double normalized_error(const BenchmarkProblem& problem, double f_incumbent) {
  if (!(problem.f_max > problem.f_star)) {
    throw ContractViolation("normalized_error: f_max must exceed f_star");
  }
  return (f_incumbent - problem.f_star) / (problem.f_max - problem.f_star);
}

// ---------------------------------------------------------------------------
// external evaluators

namespace {

double run_command(const std::string& command, const Eigen::VectorXd& x) {
  int to_child[2];
  int from_child[2];
  if (pipe(to_child) != 0) throw EvaluationError("pipe failed: " + std::string(std::strerror(errno)));
  if (pipe(from_child) != 0) {
    close(to_child[0]);
    close(to_child[1]);
    throw EvaluationError("pipe failed: " + std::string(std::strerror(errno)));
  }
  const pid_t pid = fork();
  if (pid < 0) throw EvaluationError("fork failed: " + std::string(std::strerror(errno)));
  if (pid == 0) {
    dup2(to_child[0], STDIN_FILENO);
    dup2(from_child[1], STDOUT_FILENO);
    close(to_child[0]);
    close(to_child[1]);
    close(from_child[0]);
    close(from_child[1]);
    execl("/bin/sh", "sh", "-c", command.c_str(), static_cast<char*>(nullptr));
    _exit(127);
  }
  close(to_child[0]);
  close(from_child[1]);

  std::ostringstream line;
  line.precision(17);
  for (Eigen::Index i = 0; i < x.size(); ++i) line << (i ? " " : "") << x[i];
  line << '\n';
  const std::string payload = line.str();
  // The child may exit without reading; do not die on SIGPIPE.
  auto* previous = std::signal(SIGPIPE, SIG_IGN);
  std::size_t written = 0;
  while (written < payload.size()) {
    const ssize_t w = write(to_child[1], payload.data() + written, payload.size() - written);
    if (w <= 0) break;
    written += static_cast<std::size_t>(w);
  }
  close(to_child[1]);
  std::signal(SIGPIPE, previous);

  std::string output;
  char buf[256];
  ssize_t r;
  while ((r = read(from_child[0], buf, sizeof buf)) > 0) output.append(buf, static_cast<std::size_t>(r));
  close(from_child[0]);
  int status = 0;
  waitpid(pid, &status, 0);
  if (!WIFEXITED(status) || WEXITSTATUS(status) != 0) {
    throw EvaluationError("command '" + command + "' exited abnormally");
  }
  std::istringstream in(output);
  double y;
  if (!(in >> y)) throw EvaluationError("command '" + command + "' printed no number");
  return y;
}

Evaluator builtin_evaluator(const std::string& form, int level) {
  const FidelityLevel l(level);
  if (form == "forrester") return [l](const Eigen::VectorXd& x) { return forrester(x, l); };
  if (form == "rosenbrock") return [l](const Eigen::VectorXd& x) { return rosenbrock_mf(x, l); };
  if (form == "borehole") return [l](const Eigen::VectorXd& x) { return borehole(x, l); };
  throw ConfigError("unknown built-in form '" + form + "' (forrester, rosenbrock, borehole)");
}

}  // namespace

Evaluator external_command_evaluator(std::string command) {
  return [command = std::move(command)](const Eigen::VectorXd& x) { return run_command(command, x); };
}

// ---------------------------------------------------------------------------
// registry

ProblemRegistry ProblemRegistry::with_builtins() {
  ProblemRegistry r;
  r.add(make_forrester());
  r.add(make_rosenbrock(2));
  r.add(make_rosenbrock(5));
  r.add(make_rosenbrock(10));
  r.add(make_borehole());
  return r;
}

const std::vector<std::string>& ProblemRegistry::external_slots() {
  static const std::vector<std::string> slots{"rastrigin", "mass_spring"};
  return slots;
}

void ProblemRegistry::add(BenchmarkProblem problem) {
  problem.validate();
  if (contains(problem.name)) throw ConfigError("problem '" + problem.name + "' is already registered");
  const std::string name = problem.name;
  problems_.emplace(name, std::move(problem));
}

const BenchmarkProblem& ProblemRegistry::get(const std::string& name) const {
  const auto it = problems_.find(name);
  if (it != problems_.end()) return it->second;
  std::string msg = "unknown problem '" + name + "'; available:";
  for (const auto& n : names()) msg += " " + n;
  for (const auto& slot : external_slots()) {
    if (slot == name) msg += " ('" + name + "' must be registered from a problem file)";
  }
  throw ConfigError(msg);
}

std::vector<std::string> ProblemRegistry::names() const {
  std::vector<std::string> out;
  for (const auto& [name, _] : problems_) out.push_back(name);
  return out;
}

std::string ProblemRegistry::load_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open problem file " + path);
  nlohmann::json j;
  try {
    in >> j;
    BenchmarkProblem p;
    p.name = j.at("name").get<std::string>();
    const auto& b = j.at("bounds");
    Eigen::VectorXd lo(static_cast<Eigen::Index>(b.size())), hi(static_cast<Eigen::Index>(b.size()));
    for (std::size_t i = 0; i < b.size(); ++i) {
      lo[static_cast<Eigen::Index>(i)] = b[i].at(0).get<double>();
      hi[static_cast<Eigen::Index>(i)] = b[i].at(1).get<double>();
    }
    p.bounds = Bounds(lo, hi);
    if (j.contains("dimension") && j["dimension"].get<Eigen::Index>() != p.bounds.dimension()) {
      throw ConfigError("dimension does not match bounds");
    }
    p.costs = j.at("costs").get<std::vector<double>>();
    p.f_star = j.at("f_star").get<double>();
    p.f_max = j.at("f_max").get<double>();
    if (j.contains("x_star")) {
      const auto xs = j["x_star"].get<std::vector<double>>();
      p.x_star = Eigen::Map<const Eigen::VectorXd>(xs.data(), static_cast<Eigen::Index>(xs.size()));
    }
    p.reference_provenance = j.value("reference_provenance", std::string("supplied by problem file"));
    p.default_n0 = j.value("n0_per_level", std::vector<std::size_t>{});
    p.default_budget = j.value("budget_max", 0.0);
    p.source = path;
    const auto& fids = j.at("fidelities");
    for (std::size_t l = 0; l < fids.size(); ++l) {
      const auto& f = fids[l];
      if (f.contains("command")) {
        p.evaluators.push_back(external_command_evaluator(f["command"].get<std::string>()));
      } else if (f.contains("builtin")) {
        p.evaluators.push_back(builtin_evaluator(f["builtin"].get<std::string>(),
                                                 f.value("level", static_cast<int>(l) + 1)));
      } else {
        throw ConfigError("fidelity entry needs 'command' or 'builtin'");
      }
    }
    const std::string name = p.name;
    add(std::move(p));
    return name;
  } catch (const ConfigError& e) {
    throw ConfigError(path + ": " + e.what());
  } catch (const std::exception& e) {
    throw ConfigError(path + ": " + e.what());
  }
}

}  // namespace mfbo
