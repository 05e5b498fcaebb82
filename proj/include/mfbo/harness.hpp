#pragma once

// Experiment driver: paired-seed trials of the baseline and non-myopic arms,
// percentile aggregation of the normalized-error curves on a shared budget
// grid, and the on-disk result format.
//
// Output directory layout:
//   trial_<arm>_seed<seed>.csv  iteration,x1..xd,level,y,budget,incumbent,delta_f
//   aggregate.csv               budget,arm,p25,median,p75
//   manifest.json               resolved config, seeds, versions, problem references
//   plot.gp                     gnuplot script over aggregate.csv

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "mfbo/benchmarks.hpp"
#include "mfbo/optimizer.hpp"

namespace mfbo {

struct ExperimentConfig {
  std::string problem;
  std::vector<std::string> problem_files;
  std::size_t trials = 5;
  /// Explicit seeds; when empty they are base_seed, base_seed + 1, ...
  std::vector<std::uint64_t> seeds;
  std::uint64_t base_seed = 1;
  std::vector<AcquisitionKind> arms{AcquisitionKind::MfeiBaseline, AcquisitionKind::TwoStepLookahead};
  /// Shared by every arm; only the acquisition differs. Empty n0 / zero
  /// budget are filled from the problem's reference setup.
  OptimizerConfig optimizer;
  std::string output_dir = "results";
  std::size_t grid_points = 200;
  /// Worker threads for trials; 0 means hardware concurrency.
  std::size_t jobs = 1;

  bool operator==(const ExperimentConfig&) const;
};

/// Parses the JSON form; unknown keys are rejected. Throws ConfigError.
ExperimentConfig parse_experiment_config(const nlohmann::json& j);
/// Relative problem_files are taken relative to the config file.
ExperimentConfig load_experiment_config(const std::string& path);
nlohmann::json to_json(const ExperimentConfig& cfg);

/// Registers problem files, fills defaults from the problem and derives the
/// seed list. Throws ConfigError when the result is inconsistent.
ExperimentConfig resolve(ExperimentConfig cfg, ProblemRegistry& registry);

struct ArmCurve {
  std::string arm;
  std::vector<double> p25;
  std::vector<double> median;
  std::vector<double> p75;
};

struct AggregateCurve {
  std::vector<double> grid;
  std::vector<ArmCurve> arms;
  bool partial = false;
};

struct ExperimentResult {
  ExperimentConfig config;
  std::vector<TrialRecord> trials;
  AggregateCurve aggregate;
  bool partial = false;
};

/// Evenly spaced budgets from `start` to `stop` inclusive.
std::vector<double> budget_grid(double start, double stop, std::size_t points);

/// Previous-value interpolation of a trial's delta_f onto `grid`.
std::vector<double> step_curve(const TrialRecord& trial, const std::vector<double>& grid);

/// Linear-interpolation percentile (p in [0, 1]) of unsorted values.
double percentile(std::vector<double> values, double p);

/// Pointwise 25/50/75 percentiles per arm, arms in `arm_order`.
AggregateCurve aggregate(const std::vector<double>& grid, const std::vector<std::string>& arm_order,
                         const std::vector<TrialRecord>& trials);

/// Runs every (arm, seed) pair; the arms of one seed share the initial
/// design. Aborted trials are kept and mark the result partial.
ExperimentResult run_experiment(const ExperimentConfig& cfg, const ProblemRegistry& registry);

/// Creates `dir` and checks it is writable; throws std::runtime_error.
void prepare_output_dir(const std::string& dir);

std::string trial_file_name(const TrialRecord& trial);

/// Writes the layout described above. Byte-identical for identical inputs.
void emit_outputs(const ExperimentResult& result, const BenchmarkProblem& problem,
                  const std::string& dir);

void write_trial_csv(const TrialRecord& trial, Eigen::Index dimension, const std::string& path);
/// Reads a trial CSV written by write_trial_csv.
TrialRecord read_trial_csv(const std::string& path);
void write_aggregate_csv(const AggregateCurve& curve, const std::string& path);

/// Recomputes aggregate.csv in `dir` from its manifest and trial files.
AggregateCurve aggregate_directory(const std::string& dir);

/// Shortest round-trip decimal representation.
std::string format_double(double v);

}  // namespace mfbo
