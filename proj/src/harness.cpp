#include "mfbo/harness.hpp"

#include <algorithm>
#include <atomic>
#include <charconv>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>
#include <mutex>
#include <set>
#include <sstream>
#include <thread>

namespace mfbo {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr const char* kVersion = "0.1.0";

void reject_unknown(const json& j, const std::set<std::string>& allowed, const std::string& where) {
  if (!j.is_object()) throw ConfigError(where + " must be an object");
  for (const auto& [key, _] : j.items()) {
    if (!allowed.count(key)) throw ConfigError("unknown key '" + key + "' in " + where);
  }
}

template <typename T>
void read_if(const json& j, const char* key, T& out) {
  if (j.contains(key)) out = j.at(key).get<T>();
}

SearchConfig parse_search(const json& j) {
  reject_unknown(j,
                 {"starts", "max_evaluations_per_start", "initial_step", "min_step", "scale_lower",
                  "scale_upper", "start_signal_lower", "start_signal_upper", "start_length_lower",
                  "start_length_upper", "rho_bound", "fit_noise", "noise_lower", "noise_upper",
                  "fixed_noise_std", "jitter"},
                 "optimizer.fit");
  SearchConfig s;
  read_if(j, "starts", s.starts);
  read_if(j, "max_evaluations_per_start", s.max_evaluations_per_start);
  read_if(j, "initial_step", s.initial_step);
  read_if(j, "min_step", s.min_step);
  read_if(j, "scale_lower", s.scale_lower);
  read_if(j, "scale_upper", s.scale_upper);
  read_if(j, "start_signal_lower", s.start_signal_lower);
  read_if(j, "start_signal_upper", s.start_signal_upper);
  read_if(j, "start_length_lower", s.start_length_lower);
  read_if(j, "start_length_upper", s.start_length_upper);
  read_if(j, "rho_bound", s.rho_bound);
  read_if(j, "fit_noise", s.fit_noise);
  read_if(j, "noise_lower", s.noise_lower);
  read_if(j, "noise_upper", s.noise_upper);
  read_if(j, "fixed_noise_std", s.fixed_noise_std);
  read_if(j, "jitter", s.jitter);
  return s;
}

json search_to_json(const SearchConfig& s) {
  return {{"starts", s.starts},
          {"max_evaluations_per_start", s.max_evaluations_per_start},
          {"initial_step", s.initial_step},
          {"min_step", s.min_step},
          {"scale_lower", s.scale_lower},
          {"scale_upper", s.scale_upper},
          {"start_signal_lower", s.start_signal_lower},
          {"start_signal_upper", s.start_signal_upper},
          {"start_length_lower", s.start_length_lower},
          {"start_length_upper", s.start_length_upper},
          {"rho_bound", s.rho_bound},
          {"fit_noise", s.fit_noise},
          {"noise_lower", s.noise_lower},
          {"noise_upper", s.noise_upper},
          {"fixed_noise_std", s.fixed_noise_std},
          {"jitter", s.jitter}};
}

OptimizerConfig parse_optimizer(const json& j) {
  reject_unknown(j,
                 {"n0_per_level", "budget_max", "outer_candidates", "refine_evaluations",
                  "refit_starts", "refit_interval", "recondition_only", "allow_overshoot", "mc",
                  "fit"},
                 "optimizer");
  OptimizerConfig o;
  read_if(j, "n0_per_level", o.n0_per_level);
  read_if(j, "budget_max", o.budget_max);
  read_if(j, "outer_candidates", o.outer_candidates);
  read_if(j, "refine_evaluations", o.refine_evaluations);
  read_if(j, "refit_starts", o.refit_starts);
  read_if(j, "refit_interval", o.refit_interval);
  read_if(j, "recondition_only", o.recondition_only);
  read_if(j, "allow_overshoot", o.allow_overshoot);
  if (j.contains("mc")) {
    const auto& m = j.at("mc");
    reject_unknown(m, {"n_mc", "inner_candidates"}, "optimizer.mc");
    read_if(m, "n_mc", o.mc.n_mc);
    read_if(m, "inner_candidates", o.mc.inner_candidates);
  }
  if (j.contains("fit")) o.fit = parse_search(j.at("fit"));
  return o;
}

json optimizer_to_json(const OptimizerConfig& o) {
  return {{"n0_per_level", o.n0_per_level},
          {"budget_max", o.budget_max},
          {"outer_candidates", o.outer_candidates},
          {"refine_evaluations", o.refine_evaluations},
          {"refit_starts", o.refit_starts},
          {"refit_interval", o.refit_interval},
          {"recondition_only", o.recondition_only},
          {"allow_overshoot", o.allow_overshoot},
          {"mc", {{"n_mc", o.mc.n_mc}, {"inner_candidates", o.mc.inner_candidates}}},
          {"fit", search_to_json(o.fit)}};
}

}  // namespace

// ---------------------------------------------------------------------------
// configuration

bool ExperimentConfig::operator==(const ExperimentConfig& other) const {
  return to_json(*this) == to_json(other);
}

ExperimentConfig parse_experiment_config(const json& j) {
  try {
    reject_unknown(j,
                   {"problem", "problem_files", "trials", "seeds", "base_seed", "arms", "optimizer",
                    "output_dir", "budget_grid_points", "jobs"},
                   "experiment config");
    ExperimentConfig c;
    c.problem = j.at("problem").get<std::string>();
    read_if(j, "problem_files", c.problem_files);
    read_if(j, "trials", c.trials);
    read_if(j, "seeds", c.seeds);
    read_if(j, "base_seed", c.base_seed);
    if (j.contains("arms")) {
      c.arms.clear();
      for (const auto& a : j.at("arms")) c.arms.push_back(acquisition_from_string(a.get<std::string>()));
    }
    if (j.contains("optimizer")) c.optimizer = parse_optimizer(j.at("optimizer"));
    read_if(j, "output_dir", c.output_dir);
    read_if(j, "budget_grid_points", c.grid_points);
    read_if(j, "jobs", c.jobs);
    if (c.trials < 1) throw ConfigError("trials must be >= 1");
    if (c.arms.empty()) throw ConfigError("at least one arm required");
    if (std::set<AcquisitionKind>(c.arms.begin(), c.arms.end()).size() != c.arms.size()) {
      throw ConfigError("arms must be distinct");
    }
    if (c.grid_points < 2) throw ConfigError("budget_grid_points must be >= 2");
    return c;
  } catch (const ConfigError&) {
    throw;
  } catch (const std::exception& e) {
    throw ConfigError(std::string("invalid experiment config: ") + e.what());
  }
}

ExperimentConfig load_experiment_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file " + path);
  json j;
  try {
    in >> j;
  } catch (const std::exception& e) {
    throw ConfigError(path + ": " + e.what());
  }
  ExperimentConfig c = parse_experiment_config(j);
  // problem files are relative to the config file
  for (auto& f : c.problem_files) {
    if (fs::path(f).is_relative()) f = (fs::path(path).parent_path() / f).lexically_normal().string();
  }
  return c;
}

json to_json(const ExperimentConfig& c) {
  json arms = json::array();
  for (auto a : c.arms) arms.push_back(to_string(a));
  return {{"problem", c.problem},
          {"problem_files", c.problem_files},
          {"trials", c.trials},
          {"seeds", c.seeds},
          {"base_seed", c.base_seed},
          {"arms", arms},
          {"optimizer", optimizer_to_json(c.optimizer)},
          {"output_dir", c.output_dir},
          {"budget_grid_points", c.grid_points},
          {"jobs", c.jobs}};
}

ExperimentConfig resolve(ExperimentConfig cfg, ProblemRegistry& registry) {
  for (const auto& f : cfg.problem_files) {
    try {
      registry.load_file(f);
    } catch (const ConfigError& e) {
      // Resolving twice against one registry is harmless.
      if (std::string(e.what()).find("already registered") == std::string::npos) throw;
    }
  }
  const BenchmarkProblem& problem = registry.get(cfg.problem);
  if (cfg.optimizer.n0_per_level.empty()) cfg.optimizer.n0_per_level = problem.default_n0;
  if (cfg.optimizer.budget_max <= 0.0) cfg.optimizer.budget_max = problem.default_budget;
  if (cfg.seeds.empty()) {
    for (std::size_t t = 0; t < cfg.trials; ++t) cfg.seeds.push_back(cfg.base_seed + t);
  }
  if (cfg.seeds.size() != cfg.trials) {
    throw ConfigError("trials (" + std::to_string(cfg.trials) + ") must equal the number of seeds (" +
                      std::to_string(cfg.seeds.size()) + ")");
  }
  try {
    cfg.optimizer.validate(problem);
  } catch (const ContractViolation& e) {
    throw ConfigError(std::string("optimizer config: ") + e.what());
  }
  return cfg;
}

// ---------------------------------------------------------------------------
// aggregation

std::vector<double> budget_grid(double start, double stop, std::size_t points) {
  if (points < 2) throw ContractViolation("budget grid needs at least two points");
  std::vector<double> grid(points);
  for (std::size_t i = 0; i < points; ++i) {
    grid[i] = start + (stop - start) * static_cast<double>(i) / static_cast<double>(points - 1);
  }
  grid.back() = stop;
  return grid;
}

std::vector<double> step_curve(const TrialRecord& trial, const std::vector<double>& grid) {
  std::vector<double> out(grid.size(), std::numeric_limits<double>::quiet_NaN());
  std::size_t k = 0;
  double current = std::numeric_limits<double>::quiet_NaN();
  for (std::size_t i = 0; i < grid.size(); ++i) {
    const double tol = 1e-9 * std::max(1.0, std::abs(grid[i]));
    while (k < trial.history.size() && trial.history[k].budget <= grid[i] + tol) {
      current = trial.history[k].delta_f;
      ++k;
    }
    out[i] = current;
  }
  return out;
}

double percentile(std::vector<double> values, double p) {
  if (values.empty()) return std::numeric_limits<double>::quiet_NaN();
  std::sort(values.begin(), values.end());
  const double h = p * static_cast<double>(values.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(h));
  const std::size_t hi = std::min(lo + 1, values.size() - 1);
  return values[lo] + (h - static_cast<double>(lo)) * (values[hi] - values[lo]);
}

AggregateCurve aggregate(const std::vector<double>& grid, const std::vector<std::string>& arm_order,
                         const std::vector<TrialRecord>& trials) {
  AggregateCurve out;
  out.grid = grid;
  for (const auto& arm : arm_order) {
    std::vector<std::vector<double>> curves;
    for (const auto& t : trials) {
      if (t.arm != arm) continue;
      if (t.aborted) out.partial = true;
      if (!t.history.empty()) curves.push_back(step_curve(t, grid));
    }
    if (curves.empty()) continue;
    ArmCurve c;
    c.arm = arm;
    for (std::size_t i = 0; i < grid.size(); ++i) {
      std::vector<double> column;
      for (const auto& curve : curves) {
        if (!std::isnan(curve[i])) column.push_back(curve[i]);
      }
      c.p25.push_back(percentile(column, 0.25));
      c.median.push_back(percentile(column, 0.5));
      c.p75.push_back(percentile(column, 0.75));
    }
    out.arms.push_back(std::move(c));
  }
  return out;
}

// ---------------------------------------------------------------------------
// experiment

ExperimentResult run_experiment(const ExperimentConfig& cfg, const ProblemRegistry& registry) {
  const BenchmarkProblem& problem = registry.get(cfg.problem);
  if (cfg.seeds.size() != cfg.trials) throw ConfigError("config is not resolved: seeds != trials");
  cfg.optimizer.validate(problem);

  struct Task {
    AcquisitionKind arm;
    std::uint64_t seed;
  };
  std::vector<Task> tasks;
  for (const auto seed : cfg.seeds) {
    for (const auto arm : cfg.arms) tasks.push_back({arm, seed});
  }

  ExperimentResult result;
  result.config = cfg;
  result.trials.resize(tasks.size());
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i = next++; i < tasks.size(); i = next++) {
      OptimizerConfig oc = cfg.optimizer;
      oc.acquisition = tasks[i].arm;
      oc.seed = tasks[i].seed;
      try {
        result.trials[i] = run(problem, oc);
      } catch (const std::exception& e) {
        TrialRecord failed;
        failed.problem = problem.name;
        failed.arm = to_string(tasks[i].arm);
        failed.seed = tasks[i].seed;
        failed.aborted = true;
        failed.abort_reason = e.what();
        result.trials[i] = std::move(failed);
      }
    }
  };
  std::size_t jobs = cfg.jobs == 0 ? std::max(1u, std::thread::hardware_concurrency()) : cfg.jobs;
  jobs = std::min(jobs, tasks.size());
  if (jobs <= 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (std::size_t t = 0; t < jobs; ++t) pool.emplace_back(worker);
    for (auto& th : pool) th.join();
  }

  double initial = 0.0;
  for (std::size_t l = 0; l < problem.costs.size(); ++l) {
    initial += static_cast<double>(cfg.optimizer.n0_per_level[l]) * problem.costs[l];
  }
  std::vector<std::string> arm_names;
  for (auto a : cfg.arms) arm_names.push_back(to_string(a));
  result.aggregate = aggregate(budget_grid(initial, cfg.optimizer.budget_max, cfg.grid_points),
                               arm_names, result.trials);
  result.partial = result.aggregate.partial;
  return result;
}

// ---------------------------------------------------------------------------
// files

std::string format_double(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

namespace {

double parse_double(const std::string& s) {
  if (s == "nan") return std::numeric_limits<double>::quiet_NaN();
  if (s == "inf") return std::numeric_limits<double>::infinity();
  if (s == "-inf") return -std::numeric_limits<double>::infinity();
  double v = 0.0;
  const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (res.ec != std::errc() || res.ptr != s.data() + s.size()) {
    throw std::runtime_error("malformed number '" + s + "'");
  }
  return v;
}

std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> out;
  std::stringstream ss(line);
  std::string cell;
  while (std::getline(ss, cell, ',')) out.push_back(cell);
  return out;
}

void write_file(const fs::path& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << content;
  if (!out) throw std::runtime_error("write failed for " + path.string());
}

std::string gnuplot_script(const AggregateCurve& curve, const std::string& problem) {
  std::ostringstream s;
  s << "# gnuplot -p plot.gp\n"
    << "set datafile separator ','\n"
    << "set title 'normalized error, " << problem << "'\n"
    << "set xlabel 'budget'\nset ylabel 'delta f'\nset logscale y\nset key top right\n"
    << "plot";
  for (std::size_t i = 0; i < curve.arms.size(); ++i) {
    const auto& arm = curve.arms[i];
    const std::string filter = "(strcol(2) eq '" + arm.arm + "' ? ";
    s << (i ? ", \\\n    " : " ") << "'aggregate.csv' skip 1 using 1:" << filter
      << "$3 : 1/0):" << filter << "$5 : 1/0) with filledcurves fs transparent solid 0.2 title '"
      << arm.arm << " p25-p75', \\\n    'aggregate.csv' skip 1 using 1:" << filter
      << "$4 : 1/0) with lines lw 2 title '" << arm.arm << " median'";
  }
  s << "\n";
  return s.str();
}

}  // namespace

void prepare_output_dir(const std::string& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw std::runtime_error("cannot create output directory " + dir + ": " + ec.message());
  const fs::path probe = fs::path(dir) / ".write_probe";
  {
    std::ofstream out(probe);
    if (!out || !(out << "ok")) throw std::runtime_error("output directory " + dir + " is not writable");
  }
  fs::remove(probe, ec);
}

std::string trial_file_name(const TrialRecord& trial) {
  return "trial_" + trial.arm + "_seed" + std::to_string(trial.seed) + ".csv";
}

void write_trial_csv(const TrialRecord& trial, Eigen::Index dimension, const std::string& path) {
  std::ostringstream s;
  s << "iteration";
  for (Eigen::Index i = 0; i < dimension; ++i) s << ",x" << (i + 1);
  s << ",level,y,budget,incumbent,delta_f\n";
  for (const auto& h : trial.history) {
    s << h.iteration;
    for (Eigen::Index i = 0; i < dimension; ++i) s << ',' << format_double(h.x[i]);
    s << ',' << h.level.index() << ',' << format_double(h.y) << ',' << format_double(h.budget) << ','
      << format_double(h.incumbent) << ',' << format_double(h.delta_f) << '\n';
  }
  write_file(path, s.str());
}

TrialRecord read_trial_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path);
  std::string line;
  if (!std::getline(in, line)) throw std::runtime_error(path + ": missing header");
  const auto header = split_csv(line);
  if (header.size() < 6 || header.front() != "iteration" || header.back() != "delta_f") {
    throw std::runtime_error(path + ": unexpected header");
  }
  const auto d = static_cast<Eigen::Index>(header.size() - 6);
  TrialRecord t;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto cells = split_csv(line);
    if (cells.size() != header.size()) throw std::runtime_error(path + ": ragged row");
    HistoryEntry h;
    h.iteration = static_cast<std::size_t>(std::stoull(cells[0]));
    h.x.resize(d);
    for (Eigen::Index i = 0; i < d; ++i) h.x[i] = parse_double(cells[static_cast<std::size_t>(1 + i)]);
    const auto base = static_cast<std::size_t>(1 + d);
    h.level = FidelityLevel(std::stoi(cells[base]));
    h.y = parse_double(cells[base + 1]);
    h.budget = parse_double(cells[base + 2]);
    h.incumbent = parse_double(cells[base + 3]);
    h.delta_f = parse_double(cells[base + 4]);
    t.history.push_back(std::move(h));
  }
  return t;
}

void write_aggregate_csv(const AggregateCurve& curve, const std::string& path) {
  std::ostringstream s;
  s << "budget,arm,p25,median,p75\n";
  for (const auto& arm : curve.arms) {
    for (std::size_t i = 0; i < curve.grid.size(); ++i) {
      s << format_double(curve.grid[i]) << ',' << arm.arm << ',' << format_double(arm.p25[i]) << ','
        << format_double(arm.median[i]) << ',' << format_double(arm.p75[i]) << '\n';
    }
  }
  write_file(path, s.str());
}

void emit_outputs(const ExperimentResult& result, const BenchmarkProblem& problem,
                  const std::string& dir) {
  prepare_output_dir(dir);
  const fs::path root(dir);
  json files = json::array();
  for (const auto& t : result.trials) {
    const std::string name = trial_file_name(t);
    write_trial_csv(t, problem.dimension(), (root / name).string());
    files.push_back({{"arm", t.arm},
                     {"seed", t.seed},
                     {"file", name},
                     {"aborted", t.aborted},
                     {"abort_reason", t.abort_reason},
                     {"evaluations", t.history.size()}});
  }
  write_aggregate_csv(result.aggregate, (root / "aggregate.csv").string());
  write_file(root / "plot.gp", gnuplot_script(result.aggregate, problem.name));

  json grid = json::array();
  for (double g : result.aggregate.grid) grid.push_back(g);
  json manifest = {
      {"config", to_json(result.config)},
      {"seeds", result.config.seeds},
      {"versions",
       {{"mfbo", kVersion},
        {"eigen", std::to_string(EIGEN_WORLD_VERSION) + "." + std::to_string(EIGEN_MAJOR_VERSION) + "." +
                      std::to_string(EIGEN_MINOR_VERSION)},
        {"compiler", __VERSION__}}},
      {"problem",
       {{"name", problem.name},
        {"dimension", problem.dimension()},
        {"levels", problem.num_levels()},
        {"costs", problem.costs},
        {"f_star", problem.f_star},
        {"f_max", problem.f_max},
        {"reference_provenance", problem.reference_provenance},
        {"source", problem.source}}},
      {"budget_grid", grid},
      {"trial_files", files},
      {"partial", result.partial}};
  write_file(root / "manifest.json", manifest.dump(2) + "\n");
}

AggregateCurve aggregate_directory(const std::string& dir) {
  const fs::path root(dir);
  std::ifstream in(root / "manifest.json");
  if (!in) throw ConfigError("no manifest.json in " + dir);
  json manifest;
  try {
    in >> manifest;
  } catch (const std::exception& e) {
    throw ConfigError(std::string("manifest.json: ") + e.what());
  }
  const ExperimentConfig cfg = parse_experiment_config(manifest.at("config"));
  const auto grid = manifest.at("budget_grid").get<std::vector<double>>();
  std::vector<TrialRecord> trials;
  for (const auto& f : manifest.at("trial_files")) {
    TrialRecord t = read_trial_csv((root / f.at("file").get<std::string>()).string());
    t.arm = f.at("arm").get<std::string>();
    t.seed = f.at("seed").get<std::uint64_t>();
    t.aborted = f.at("aborted").get<bool>();
    trials.push_back(std::move(t));
  }
  std::vector<std::string> arms;
  for (auto a : cfg.arms) arms.push_back(to_string(a));
  AggregateCurve curve = aggregate(grid, arms, trials);
  write_aggregate_csv(curve, (root / "aggregate.csv").string());
  return curve;
}

}  // namespace mfbo
