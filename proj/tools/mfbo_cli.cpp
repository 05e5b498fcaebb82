// mfbo: run paired multifidelity BO experiments, list problems, re-aggregate.
//
// Exit codes: 0 success, 1 config error, 2 runtime abort, 3 partial results.

#include <CLI11.hpp>

#include <cstdio>
#include <iostream>
#include <optional>
#include <string>

#include "mfbo/harness.hpp"

namespace {

constexpr int kOk = 0;
constexpr int kConfigError = 1;
constexpr int kRuntimeAbort = 2;
constexpr int kPartial = 3;

struct RunOptions {
  std::string config;
  std::optional<std::size_t> trials;
  std::optional<std::string> out;
  std::optional<std::string> arm;
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> n_mc;
  std::optional<std::size_t> jobs;
};

int run_command(const RunOptions& opt) {
  mfbo::ProblemRegistry registry = mfbo::ProblemRegistry::with_builtins();
  mfbo::ExperimentConfig cfg;
  try {
    cfg = mfbo::load_experiment_config(opt.config);
    if (opt.seed) {
      cfg.base_seed = *opt.seed;
      cfg.seeds.clear();
    }
    if (opt.trials) {
      if (*opt.trials != cfg.trials) cfg.seeds.clear();
      cfg.trials = *opt.trials;
    }
    if (opt.out) cfg.output_dir = *opt.out;
    if (opt.n_mc) cfg.optimizer.mc.n_mc = *opt.n_mc;
    if (opt.jobs) cfg.jobs = *opt.jobs;
    if (opt.arm) {
      if (*opt.arm == "both") {
        cfg.arms = {mfbo::AcquisitionKind::MfeiBaseline, mfbo::AcquisitionKind::TwoStepLookahead};
      } else {
        cfg.arms = {mfbo::acquisition_from_string(*opt.arm)};
      }
    }
    cfg = mfbo::resolve(cfg, registry);
  } catch (const std::exception& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kConfigError;
  }

  try {
    mfbo::prepare_output_dir(cfg.output_dir);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kRuntimeAbort;
  }

  const mfbo::BenchmarkProblem& problem = registry.get(cfg.problem);
  std::cerr << "running " << cfg.problem << ": " << cfg.trials << " seed(s) x " << cfg.arms.size()
            << " arm(s), budget " << cfg.optimizer.budget_max << '\n';
  mfbo::ExperimentResult result;
  try {
    result = mfbo::run_experiment(cfg, registry);
    mfbo::emit_outputs(result, problem, cfg.output_dir);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kRuntimeAbort;
  }

  for (const auto& t : result.trials) {
    std::printf("%-10s seed %-6llu evals %-4zu final delta_f %s%s\n", t.arm.c_str(),
                static_cast<unsigned long long>(t.seed), t.history.size(),
                t.history.empty() ? "-" : mfbo::format_double(t.final_delta_f()).c_str(),
                t.aborted ? ("  ABORTED: " + t.abort_reason).c_str() : "");
  }
  std::printf("results written to %s\n", cfg.output_dir.c_str());
  return result.partial ? kPartial : kOk;
}

int list_command() {
  const auto registry = mfbo::ProblemRegistry::with_builtins();
  std::printf("%-14s %3s %3s  %-12s %s\n", "name", "d", "L", "costs", "n0 / budget");
  for (const auto& name : registry.names()) {
    const auto& p = registry.get(name);
    std::string costs;
    for (std::size_t i = 0; i < p.costs.size(); ++i) costs += (i ? "," : "") + mfbo::format_double(p.costs[i]);
    std::string n0;
    for (std::size_t i = 0; i < p.default_n0.size(); ++i) n0 += (i ? "," : "") + std::to_string(p.default_n0[i]);
    std::printf("%-14s %3lld %3d  %-12s (%s) / %s\n", name.c_str(), static_cast<long long>(p.dimension()),
                p.num_levels(), costs.c_str(), n0.c_str(), mfbo::format_double(p.default_budget).c_str());
  }
  for (const auto& slot : mfbo::ProblemRegistry::external_slots()) {
    std::printf("%-14s (slot: register from a problem file)\n", slot.c_str());
  }
  return kOk;
}

int aggregate_command(const std::string& dir) {
  try {
    const auto curve = mfbo::aggregate_directory(dir);
    std::printf("aggregate.csv rewritten: %zu budgets x %zu arms\n", curve.grid.size(), curve.arms.size());
    return curve.partial ? kPartial : kOk;
  } catch (const mfbo::ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kConfigError;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kRuntimeAbort;
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Non-myopic multifidelity Bayesian optimization experiments"};
  app.require_subcommand(1);

  RunOptions run_opt;
  auto* run = app.add_subcommand("run", "run an experiment from a JSON config");
  run->add_option("--config", run_opt.config, "experiment config file")->required();
  run->add_option("--trials", run_opt.trials, "number of paired seeds");
  run->add_option("--out", run_opt.out, "output directory");
  run->add_option("--arm", run_opt.arm, "baseline, non_myopic or both")
      ->check(CLI::IsMember({"baseline", "non_myopic", "both"}));
  run->add_option("--seed", run_opt.seed, "base seed; seeds are S, S+1, ...");
  run->add_option("--n-mc", run_opt.n_mc, "Monte Carlo draws for the lookahead");
  run->add_option("--jobs", run_opt.jobs, "worker threads (0 = all cores)");

  app.add_subcommand("list-problems", "list registered benchmark problems");

  std::string agg_dir;
  auto* agg = app.add_subcommand("aggregate", "recompute aggregate.csv from a results directory");
  agg->add_option("--in", agg_dir, "results directory")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kConfigError;
  }

  if (*run) return run_command(run_opt);
  if (*agg) return aggregate_command(agg_dir);
  return list_command();
}
