#include "mfbo/optimizer.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <memory>

#include "mfbo/local_search.hpp"

namespace mfbo {
namespace {

// Seed streams.
constexpr std::uint64_t kDesignStream = 1;
constexpr std::uint64_t kFitStream = 2;
constexpr std::uint64_t kOuterPoolStream = 3;
constexpr std::uint64_t kInnerPoolStream = 4;
constexpr std::uint64_t kDrawStream = 5;

}  // namespace

std::string to_string(AcquisitionKind kind) {
  return kind == AcquisitionKind::MfeiBaseline ? "baseline" : "non_myopic";
}

AcquisitionKind acquisition_from_string(const std::string& name) {
  if (name == "baseline" || name == "mfei") return AcquisitionKind::MfeiBaseline;
  if (name == "non_myopic" || name == "two_step") return AcquisitionKind::TwoStepLookahead;
  throw ContractViolation("unknown acquisition '" + name + "' (baseline, non_myopic)");
}

// ---------------------------------------------------------------------------
// configuration and bookkeeping

void OptimizerConfig::validate(const BenchmarkProblem& problem) const {
  const auto L = static_cast<std::size_t>(problem.num_levels());
  if (n0_per_level.size() != L) {
    throw ContractViolation("n0_per_level needs " + std::to_string(L) + " entries");
  }
  if (n0_per_level.back() < 1) {
    throw ContractViolation("initial design needs at least one highest-fidelity sample");
  }
  if (!(budget_max > 0.0)) throw ContractViolation("budget_max must be positive");
  double initial = 0.0;
  for (std::size_t l = 0; l < L; ++l) initial += static_cast<double>(n0_per_level[l]) * problem.costs[l];
  if (budget_max < initial * (1.0 - 1e-12)) {
    throw ContractViolation("budget_max is below the cost of the initial design");
  }
  if (refit_interval < 1) throw ContractViolation("refit_interval must be >= 1");
  McConfig probe = mc;
  probe.inner_candidates = resolved_inner(problem.dimension());
  probe.validate();
}

std::size_t OptimizerConfig::resolved_outer(Eigen::Index d) const {
  if (outer_candidates > 0) return outer_candidates;
  return std::min<std::size_t>(64 * static_cast<std::size_t>(d), 512);
}

std::size_t OptimizerConfig::resolved_inner(Eigen::Index d) const {
  if (mc.inner_candidates > 0) return mc.inner_candidates;
  return 128 * static_cast<std::size_t>(d);
}

void BudgetTracker::charge(double cost) {
  if (!(cost >= 0.0)) throw ContractViolation("evaluation cost must be nonnegative");
  spent_ += cost;
}

bool BudgetTracker::fits(double cost) const {
  return spent_ + cost <= budget_max_ + 1e-9 * std::max(1.0, budget_max_);
}

double TrialRecord::final_delta_f() const {
  return history.empty() ? std::numeric_limits<double>::quiet_NaN() : history.back().delta_f;
}

double TrialRecord::budget_to_reach(double threshold) const {
  for (const auto& h : history) {
    if (h.delta_f <= threshold) return h.budget;
  }
  return std::numeric_limits<double>::infinity();
}

// ---------------------------------------------------------------------------
// acquisition maximization

Selection maximize_acquisition(const AcquisitionFn& acquisition,
                               const std::function<double(const Eigen::VectorXd&)>& top_variance,
                               const DesignSpec& pool_spec, const MaximizeOptions& options) {
  const auto pool = uniform_pool(pool_spec);
  const int L = options.num_levels;

  struct Best {
    std::size_t index = 0;
    AcquisitionValue value;
    bool set = false;
  };
  std::vector<Best> per_level(static_cast<std::size_t>(L));
  double overall = -std::numeric_limits<double>::infinity();
  for (int l = L; l >= 1; --l) {
    auto& best = per_level[static_cast<std::size_t>(l - 1)];
    for (std::size_t i = 0; i < pool.size(); ++i) {
      const AcquisitionValue v = acquisition(pool[i], FidelityLevel(l));
      if (!best.set || v.total > best.value.total) {
        best = {i, v, true};
      }
    }
    overall = std::max(overall, best.value.total);
  }

  if (!(overall > 0.0)) {
    std::size_t arg = 0;
    double var_best = -std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < pool.size(); ++i) {
      const double v = top_variance(pool[i]);
      if (v > var_best) {
        var_best = v;
        arg = i;
      }
    }
    return {pool[arg], FidelityLevel(L), acquisition(pool[arg], FidelityLevel(L)), true};
  }

  Selection out;
  bool have = false;
  for (int l = L; l >= 1; --l) {
    const auto& best = per_level[static_cast<std::size_t>(l - 1)];
    Eigen::VectorXd x = pool[best.index];
    AcquisitionValue value = best.value;
    if (options.refine_evaluations > 0 && best.value.total > 0.0) {
      CoordinateSearchOptions opts;
      opts.initial_step = 0.05;
      opts.min_step = 1e-4;
      opts.relative_steps = true;
      opts.max_evaluations = options.refine_evaluations;
      const FidelityLevel level(l);
      const auto refined = coordinate_search(
          [&](const Eigen::VectorXd& p) { return acquisition(p, level).total; }, x,
          pool_spec.bounds.lower, pool_spec.bounds.upper, opts);
      if (refined.value > value.total) {
        x = refined.argmax;
        value = acquisition(x, level);
      }
    }
    if (!have || value.total > out.value.total) {
      out = {x, FidelityLevel(l), value, false};
      have = true;
    }
  }
  return out;
}

Selection maximize_acquisition(const MfGpModel& model, const AcquisitionFn& acquisition,
                               const DesignSpec& pool_spec, const MaximizeOptions& options) {
  const FidelityLevel top = model.top_level();
  return maximize_acquisition(
      acquisition,
      [&](const Eigen::VectorXd& x) { return model.posterior_standardized(x, top).variance; },
      pool_spec, options);
}

// ---------------------------------------------------------------------------
// loops

namespace {

HistoryEntry make_entry(const BenchmarkProblem& problem, std::size_t iteration, const Sample& s,
                        double budget, double incumbent, bool fallback) {
  HistoryEntry e;
  e.iteration = iteration;
  e.x = s.x;
  e.level = s.level;
  e.y = s.y;
  e.budget = budget;
  e.incumbent = incumbent;
  e.delta_f = normalized_error(problem, incumbent);
  e.fallback = fallback;
  return e;
}

std::vector<Candidate> inner_pool(const BenchmarkProblem& problem, const OptimizerConfig& cfg,
                                  std::size_t iteration) {
  DesignSpec spec;
  spec.n_points = cfg.resolved_inner(problem.dimension());
  spec.bounds = problem.bounds;
  spec.seed = derive_seed(cfg.seed, kInnerPoolStream, iteration);
  std::vector<Candidate> pool;
  for (auto& x : uniform_pool(spec)) {
    for (int l = problem.num_levels(); l >= 1; --l) pool.push_back({x, FidelityLevel(l)});
  }
  return pool;
}

DesignSpec outer_pool_spec(const BenchmarkProblem& problem, const OptimizerConfig& cfg,
                           std::size_t iteration) {
  DesignSpec spec;
  spec.n_points = cfg.resolved_outer(problem.dimension());
  spec.bounds = problem.bounds;
  spec.seed = derive_seed(cfg.seed, kOuterPoolStream, iteration);
  return spec;
}

SearchConfig fit_config(const OptimizerConfig& cfg, std::size_t iteration) {
  SearchConfig fc = cfg.fit;
  fc.seed = derive_seed(cfg.seed, kFitStream, iteration);
  if (iteration > 0) fc.starts = cfg.refit_starts;
  return fc;
}

/// Evaluates the initial LHS designs (highest level first so the incumbent
/// exists from the first record) and charges their cost.
template <typename OnSample>
void initial_design(const BenchmarkProblem& problem, const OptimizerConfig& cfg,
                    int first_level, OnSample&& on_sample) {
  for (int l = problem.num_levels(); l >= first_level; --l) {
    const std::size_t n = cfg.n0_per_level[static_cast<std::size_t>(l - 1)];
    if (n == 0) continue;
    DesignSpec spec;
    spec.n_points = n;
    spec.bounds = problem.bounds;
    spec.seed = derive_seed(cfg.seed, kDesignStream, static_cast<std::uint64_t>(l));
    for (const auto& x : latin_hypercube(spec)) {
      const FidelityLevel level(l);
      on_sample(Sample{x, level, problem.evaluate(x, level), problem.cost(level)});
    }
  }
}

double min_cost(const BenchmarkProblem& problem) {
  return *std::min_element(problem.costs.begin(), problem.costs.end());
}

}  // namespace

TrialRecord run(const BenchmarkProblem& problem, const OptimizerConfig& cfg) {
  cfg.validate(problem);
  const int L = problem.num_levels();
  TrialRecord record;
  record.problem = problem.name;
  record.arm = to_string(cfg.acquisition);
  record.seed = cfg.seed;

  TrainingSet train(problem.bounds, L, problem.costs);
  BudgetTracker budget(cfg.budget_max);
  try {
    initial_design(problem, cfg, 1, [&](Sample s) {
      train.add(s);
      budget.charge(s.cost);
      record.history.push_back(make_entry(problem, 0, s, budget.spent(), *train.incumbent(), false));
    });
  } catch (const EvaluationError& e) {
    record.aborted = true;
    record.abort_reason = e.what();
    return record;
  }
  record.initial_cost = budget.spent();

  MfGpModel model = fit_mf(train, fit_config(cfg, 0));
  bool overshot = false;
  for (std::size_t iteration = 1;; ++iteration) {
    if (overshot || budget.remaining() <= 0.0) break;
    if (!cfg.allow_overshoot && !budget.fits(min_cost(problem))) break;

    McConfig mc = cfg.mc;
    mc.inner_candidates = cfg.resolved_inner(problem.dimension());
    mc.seed = derive_seed(cfg.seed, kDrawStream, iteration);
    std::optional<TwoStepLookahead> lookahead;
    AcquisitionFn acquisition;
    if (cfg.acquisition == AcquisitionKind::TwoStepLookahead) {
      lookahead.emplace(model, problem.costs, inner_pool(problem, cfg, iteration), mc);
      acquisition = [&](const Eigen::VectorXd& x, FidelityLevel l) { return lookahead->evaluate(x, l); };
    } else {
      acquisition = [&](const Eigen::VectorXd& x, FidelityLevel l) {
        const double v = mfei(model, x, l, problem.costs);
        return AcquisitionValue{v, v, 0.0, 0.0};
      };
    }
    const Selection next = maximize_acquisition(model, acquisition,
                                                outer_pool_spec(problem, cfg, iteration),
                                                {L, cfg.refine_evaluations});
    const double cost = problem.cost(next.level);
    if (!budget.fits(cost)) {
      if (!cfg.allow_overshoot) break;
      overshot = true;
    }

    Sample s{next.x, next.level, 0.0, cost};
    try {
      s.y = problem.evaluate(next.x, next.level);
    } catch (const EvaluationError& e) {
      record.aborted = true;
      record.abort_reason = e.what();
      break;
    }
    train.add(s);
    budget.charge(cost);
    record.history.push_back(
        make_entry(problem, iteration, s, budget.spent(), *train.incumbent(), next.fallback));

    if (!cfg.recondition_only && iteration % cfg.refit_interval == 0) {
      model = fit_mf(train, fit_config(cfg, iteration), model.hyperparameters());
    } else {
      model = model.condition(s);
    }
  }
  record.x_star = train.samples()[*train.incumbent_index()].x;
  return record;
}

TrialRecord run_single_fidelity_ei(const BenchmarkProblem& problem, const OptimizerConfig& cfg) {
  const BenchmarkProblem single = top_level_only(problem);
  OptimizerConfig sc = cfg;
  sc.n0_per_level = {cfg.n0_per_level.back()};
  sc.validate(single);
  const FidelityLevel level(1);

  TrialRecord record;
  record.problem = single.name;
  record.arm = "single_fidelity_ei";
  record.seed = cfg.seed;

  Dataset data{Eigen::MatrixXd(single.dimension(), 0), Eigen::VectorXd(0)};
  BudgetTracker budget(cfg.budget_max);
  double incumbent = std::numeric_limits<double>::infinity();
  Eigen::VectorXd best_x;
  auto observe = [&](const Sample& s, std::size_t iteration, bool fallback) {
    const auto n = data.X.cols();
    data.X.conservativeResize(Eigen::NoChange, n + 1);
    data.X.col(n) = s.x;
    data.y.conservativeResize(n + 1);
    data.y[n] = s.y;
    if (s.y < incumbent) {
      incumbent = s.y;
      best_x = s.x;
    }
    budget.charge(s.cost);
    record.history.push_back(make_entry(single, iteration, s, budget.spent(), incumbent, fallback));
  };
  try {
    initial_design(single, sc, 1, [&](Sample s) { observe(s, 0, false); });
  } catch (const EvaluationError& e) {
    record.aborted = true;
    record.abort_reason = e.what();
    return record;
  }
  record.initial_cost = budget.spent();

  GpFit fit = fit_mle(data, single.bounds, fit_config(sc, 0));
  auto gp = std::make_unique<GaussianProcess>(data, fit.kernel, fit.noise, fit.scaling);
  const double cost = single.cost(level);
  for (std::size_t iteration = 1;; ++iteration) {
    if (budget.remaining() <= 0.0 || !budget.fits(cost)) break;
    const AcquisitionFn acquisition = [&](const Eigen::VectorXd& x, FidelityLevel) {
      PosteriorMoments m = gp->posterior_standardized(x);
      if (m.variance < std::max(1e-12, 2.0 * gp->factor().jitter)) m.variance = 0.0;
      m = gp->scaling().destandardize(m);
      const double v = expected_improvement(m.mean, m.stddev(), incumbent);
      return AcquisitionValue{v, v, 0.0, 0.0};
    };
    const auto variance = [&](const Eigen::VectorXd& x) {
      return gp->posterior_standardized(x).variance;
    };
    const Selection next = maximize_acquisition(acquisition, variance,
                                                outer_pool_spec(single, sc, iteration),
                                                {1, sc.refine_evaluations});
    Sample s{next.x, level, 0.0, cost};
    try {
      s.y = single.evaluate(next.x, level);
    } catch (const EvaluationError& e) {
      record.aborted = true;
      record.abort_reason = e.what();
      break;
    }
    observe(s, iteration, next.fallback);
    fit = fit_mle(data, single.bounds, fit_config(sc, iteration), fit);
    gp = std::make_unique<GaussianProcess>(data, fit.kernel, fit.noise, fit.scaling);
  }
  record.x_star = best_x;
  return record;
}

BenchmarkProblem top_level_only(const BenchmarkProblem& problem) {
  BenchmarkProblem p = problem;
  p.name = problem.name + "_top";
  p.evaluators = {problem.evaluators.back()};
  p.costs = {problem.costs.back()};
  if (!problem.default_n0.empty()) p.default_n0 = {problem.default_n0.back()};
  return p;
}

}  // namespace mfbo
