// Acceptance checks. One PASS/FAIL line per criterion; nonzero exit if any
// criterion fails.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include "mfbo/acquisition.hpp"
#include "mfbo/doe.hpp"
#include "mfbo/harness.hpp"
#include "mfbo/optimizer.hpp"
#include "oracles.hpp"

using namespace mfbo;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* f, double a) {
  char buf[128];
  std::snprintf(buf, sizeof buf, f, a);
  return buf;
}

double median(std::vector<double> v) { return percentile(std::move(v), 0.5); }

// ---- 1: cached posterior vs dense solve

Outcome gp_oracle() {
  std::mt19937_64 rng(1001);
  std::uniform_int_distribution<int> dim(1, 5), size(1, 50), lv(2, 3);
  double worst = 0.0;
  for (int inst = 0; inst < 50; ++inst) {
    const Eigen::Index d = dim(rng);
    const auto n = static_cast<std::size_t>(size(rng));
    const int levels = inst % 2 == 0 ? 1 : lv(rng);
    const double noise = inst % 3 == 0 ? 0.05 : 0.0;
    const MfHyperparameters h = oracle::random_hyper(rng, levels, d, noise);
    const TrainingSet t = oracle::random_training(rng, levels, d, std::max<std::size_t>(n, levels));

    std::vector<oracle::Point> q;
    for (int i = 0; i < 10; ++i)
      for (int l = 1; l <= levels; ++l) q.push_back({oracle::random_point(rng, d), l});
    for (std::size_t i = 0; i < std::min<std::size_t>(t.size(), 5); ++i)
      q.push_back({t.samples()[i].x, t.samples()[i].level.index()});

    if (levels == 1) {
      Dataset data{Eigen::MatrixXd(d, static_cast<Eigen::Index>(t.size())),
                   Eigen::VectorXd(static_cast<Eigen::Index>(t.size()))};
      for (std::size_t i = 0; i < t.size(); ++i) {
        data.X.col(static_cast<Eigen::Index>(i)) = t.samples()[i].x;
        data.y[static_cast<Eigen::Index>(i)] = t.samples()[i].y;
      }
      const GaussianProcess gp(data, h.kernels[0], NoiseParams{noise, 1e-10});
      oracle::DenseGp g;
      g.h = h;
      g.extra_diag = gp.factor().jitter;
      g.y = gp.scaling().standardize(data.y);
      for (const auto& s : t.samples()) g.train.push_back({gp.scaling().to_unit(s.x), 1});
      for (const auto& p : q) {
        const auto [mu, cov] = g.joint({{gp.scaling().to_unit(p.x), 1}});
        const auto got = gp.posterior_standardized(p.x);
        worst = std::max({worst, std::abs(got.mean - mu[0]), std::abs(got.variance - cov(0, 0))});
      }
    } else {
      const MfGpModel m(t, h);
      const oracle::DenseGp g = oracle::dense_from(m);
      for (const auto& p : q) {
        const auto [mu, cov] = g.joint({{m.scaling().to_unit(p.x), p.level}});
        const auto got = m.posterior_standardized(p.x, FidelityLevel(p.level));
        worst = std::max({worst, std::abs(got.mean - mu[0]), std::abs(got.variance - cov(0, 0))});
      }
    }
  }
  return {worst <= 1e-10, fmt("max abs error %.3g", worst)};
}

// ---- 2: EI closed form vs Monte Carlo

Outcome ei_vs_mc() {
  std::mt19937_64 rng(2002);
  std::uniform_real_distribution<double> mu(-2.0, 2.0), sigma(0.1, 3.0), fs(-2.0, 2.0);
  double worst = 0.0;
  for (int i = 0; i < 20; ++i) {
    const double m = mu(rng), s = sigma(rng), f = fs(rng);
    const auto [mean, se] = oracle::mc_improvement(m, s, f, 1000000, 3000 + static_cast<std::uint64_t>(i));
    worst = std::max(worst, std::abs(expected_improvement(m, s, f) - mean) / se);
  }
  return {worst < 4.0, fmt("max |closed - mc| = %.2f SE", worst)};
}

// ---- 3: fantasy update vs rebuild, tower property

Outcome fantasy() {
  std::mt19937_64 rng(3003);
  std::uniform_int_distribution<int> dim(1, 3), size(5, 20), lv(2, 3);
  std::normal_distribution<double> normal;
  double worst = 0.0, worst_tower = 0.0;
  for (int inst = 0; inst < 20; ++inst) {
    const Eigen::Index d = dim(rng);
    const int levels = lv(rng);
    const double noise = inst % 2 == 0 ? 0.0 : 0.05;
    const MfGpModel m(oracle::random_training(rng, levels, d, static_cast<std::size_t>(size(rng))),
                      oracle::random_hyper(rng, levels, d, noise));
    const Eigen::VectorXd xn = oracle::random_point(rng, d);
    const FidelityLevel ln(std::uniform_int_distribution<int>(1, levels)(rng));
    std::vector<oracle::Point> q;
    for (int i = 0; i < 10; ++i)
      q.push_back({oracle::random_point(rng, d), std::uniform_int_distribution<int>(1, levels)(rng)});

    for (int k = 0; k < 10; ++k) {
      const double z = normal(rng);
      const MfGpModel f = fantasize(m, xn, ln, z);
      oracle::DenseGp g = oracle::dense_from(m);
      g.extra_diag = f.factor().jitter;
      g.train.push_back({m.scaling().to_unit(xn), ln.index()});
      g.y.conservativeResize(g.y.size() + 1);
      g.y[g.y.size() - 1] = m.posterior_standardized(xn, ln).mean + fantasy_std(m, xn, ln) * z;
      for (const auto& p : q) {
        const auto [mu, cov] = g.joint({{m.scaling().to_unit(p.x), p.level}});
        const auto got = f.posterior_standardized(p.x, FidelityLevel(p.level));
        worst = std::max({worst, std::abs(got.mean - mu[0]), std::abs(got.variance - cov(0, 0))});
      }
    }

    const auto& p = q.front();
    const int n = 10000;
    double s = 0.0, s2 = 0.0;
    for (int i = 0; i < n; ++i) {
      const double v = fantasize(m, xn, ln, normal(rng)).posterior(p.x, FidelityLevel(p.level)).mean;
      s += v;
      s2 += v * v;
    }
    const double mean = s / n;
    const double se = std::sqrt(std::max(s2 / n - mean * mean, 0.0) / (n - 1));
    const double dev = std::abs(mean - m.posterior(p.x, FidelityLevel(p.level)).mean);
    worst_tower = std::max(worst_tower, se > 0.0 ? dev / se : (dev > 1e-12 ? INFINITY : 0.0));
  }
  return {worst <= 1e-8 && worst_tower < 3.0,
          fmt("max abs error %.3g", worst) + fmt(", tower max %.2f SE", worst_tower)};
}

// ---- 4: two-step acquisition

MfGpModel forrester_model() {
  const BenchmarkProblem p = make_forrester();
  TrainingSet t(p.bounds, 2, p.costs);
  for (int l = 1; l <= 2; ++l) {
    for (const auto& x : latin_hypercube({l == 1 ? 6u : 3u, p.bounds, 40 + static_cast<std::uint64_t>(l)}))
      t.add({x, FidelityLevel(l), p.evaluate(x, FidelityLevel(l)), p.cost(FidelityLevel(l))});
  }
  return fit_mf(t, SearchConfig{});
}

Outcome two_step() {
  const BenchmarkProblem p = make_forrester();
  const MfGpModel m = forrester_model();
  std::vector<Candidate> pool;
  for (const auto& x : uniform_pool({128, p.bounds, 5}))
    for (int l = 1; l <= 2; ++l) pool.push_back({x, FidelityLevel(l)});

  const McConfig cfg{64, pool.size(), 17, {}};
  const TwoStepLookahead a(m, p.costs, pool, cfg);
  const TwoStepLookahead b(m, p.costs, pool, cfg);
  std::mt19937_64 rng(4004);
  std::uniform_int_distribution<int> lv(1, 2);
  std::size_t below = 0, impure = 0;
  for (int i = 0; i < 1000; ++i) {
    const Eigen::VectorXd x = oracle::random_point(rng, 1);
    const FidelityLevel l(lv(rng));
    const AcquisitionValue va = a.evaluate(x, l);
    const AcquisitionValue vb = b.evaluate(x, l);
    below += !(va.total >= va.immediate);
    impure += va.total != vb.total || va.lookahead != vb.lookahead || va.immediate != vb.immediate;
  }

  double worst_gate = 0.0;
  for (double x : {0.15, 0.45, 0.75}) {
    for (int l = 1; l <= 2; ++l) {
      const auto lo = two_step_acquisition(m, Eigen::VectorXd::Constant(1, x), FidelityLevel(l),
                                           p.costs, pool, McConfig{1024, pool.size(), 101, {}});
      const auto hi = two_step_acquisition(m, Eigen::VectorXd::Constant(1, x), FidelityLevel(l), p.costs,
                                           pool, McConfig{4096, pool.size(), 202, {}});
      const double pooled = std::hypot(lo.mc_std_error, hi.mc_std_error);
      const double dev = std::abs(lo.lookahead - hi.lookahead);
      worst_gate = std::max(worst_gate, pooled > 0.0 ? dev / pooled : (dev > 0.0 ? INFINITY : 0.0));
    }
  }
  const bool pass = below == 0 && impure == 0 && worst_gate < 4.0;
  return {pass, "total<immediate " + std::to_string(below) + "/1000, impure " + std::to_string(impure) +
                    fmt(", mc gate %.2f pooled SE", worst_gate)};
}

// ---- 5: Latin hypercube bins

Outcome lhs_bins() {
  std::size_t bad = 0, cases = 0;
  for (std::size_t n : {2u, 7u, 16u, 101u}) {
    for (Eigen::Index d : {1, 3, 8}) {
      for (std::uint64_t seed = 0; seed < 5; ++seed) {
        ++cases;
        const auto pts = latin_hypercube({n, Bounds::unit(d), seed});
        bool ok = pts.size() == n;
        for (Eigen::Index k = 0; k < d && ok; ++k) {
          std::vector<int> hits(n, 0);
          for (const auto& x : pts) {
            const auto bin = static_cast<std::size_t>(std::floor(x[k] * static_cast<double>(n)));
            if (bin >= n) ok = false;
            else ++hits[bin];
          }
          ok = ok && std::all_of(hits.begin(), hits.end(), [](int h) { return h == 1; });
        }
        bad += !ok;
      }
    }
  }
  return {bad == 0, std::to_string(cases - bad) + "/" + std::to_string(cases) + " designs valid"};
}

// ---- 6, 7: benchmark reproductions

ExperimentResult experiment(const std::string& problem) {
  ProblemRegistry registry = ProblemRegistry::with_builtins();
  ExperimentConfig cfg;
  cfg.problem = problem;
  cfg.trials = 5;
  cfg.base_seed = 1;
  cfg.jobs = 1;
  return run_experiment(resolve(cfg, registry), registry);
}

std::vector<const TrialRecord*> arm(const ExperimentResult& r, AcquisitionKind kind) {
  std::vector<const TrialRecord*> out;
  for (const auto& t : r.trials)
    if (t.arm == to_string(kind)) out.push_back(&t);
  return out;
}

std::vector<double> finals(const std::vector<const TrialRecord*>& ts) {
  std::vector<double> v;
  for (const auto* t : ts) v.push_back(t->final_delta_f());
  return v;
}

Outcome forrester_repro(const ExperimentResult& r) {
  const auto base = arm(r, AcquisitionKind::MfeiBaseline);
  const auto nm = arm(r, AcquisitionKind::TwoStepLookahead);
  std::vector<double> reach_b, reach_n;
  for (const auto* t : base) reach_b.push_back(t->budget_to_reach(0.05));
  for (const auto* t : nm) reach_n.push_back(t->budget_to_reach(0.05));
  const double fin = median(finals(nm));
  const double rb = median(reach_b), rn = median(reach_n);
  const bool pass = !r.partial && nm.size() == 5 && fin <= 0.01 && rn <= rb;
  return {pass, fmt("non-myopic median final df %.3g", fin) + fmt(", median reach %.3g", rn) +
                    fmt(" vs baseline %.3g", rb)};
}

Outcome rosenbrock_repro(const ExperimentResult& r) {
  const double fb = median(finals(arm(r, AcquisitionKind::MfeiBaseline)));
  const double fn = median(finals(arm(r, AcquisitionKind::TwoStepLookahead)));
  return {!r.partial && fn <= fb, fmt("median final df non-myopic %.3g", fn) + fmt(" vs baseline %.3g", fb)};
}

// ---- 8: monotonicity, ledger, L = 1 reduction

Outcome accounting(const std::vector<const ExperimentResult*>& results, ProblemRegistry& registry) {
  std::size_t bad_mono = 0, bad_ledger = 0, trials = 0;
  for (const auto* r : results) {
    const BenchmarkProblem& p = registry.get(r->config.problem);
    for (const auto& t : r->trials) {
      ++trials;
      double spent = 0.0, best = INFINITY;
      bool mono = true, ledger = true;
      for (std::size_t i = 0; i < t.history.size(); ++i) {
        const auto& h = t.history[i];
        spent += p.cost(h.level);
        if (h.level == p.top_level()) best = std::min(best, h.y);
        ledger = ledger && std::abs(h.budget - spent) <= 1e-12 && h.incumbent == best;
        if (i > 0) mono = mono && h.incumbent <= t.history[i - 1].incumbent;
      }
      ledger = ledger && spent <= r->config.optimizer.budget_max + 1e-12;
      bad_mono += !mono;
      bad_ledger += !ledger;
    }
  }

  std::size_t mismatched = 0, runs = 0;
  for (const auto& name : {std::string("forrester"), std::string("rosenbrock2d")}) {
    const BenchmarkProblem p = top_level_only(registry.get(name));
    OptimizerConfig cfg;
    cfg.n0_per_level = {static_cast<std::size_t>(3 * p.dimension())};
    cfg.budget_max = 12.0;
    cfg.acquisition = AcquisitionKind::MfeiBaseline;
    for (std::uint64_t seed = 1; seed <= 5; ++seed) {
      ++runs;
      cfg.seed = seed;
      const TrialRecord a = run(p, cfg);
      const TrialRecord b = run_single_fidelity_ei(p, cfg);
      bool same = a.history.size() == b.history.size() && a.history.size() > cfg.n0_per_level[0];
      for (std::size_t i = 0; same && i < a.history.size(); ++i) {
        same = a.history[i].x == b.history[i].x && a.history[i].incumbent == b.history[i].incumbent &&
               a.history[i].budget == b.history[i].budget;
      }
      mismatched += !same;
    }
  }
  const bool pass = trials > 0 && bad_mono == 0 && bad_ledger == 0 && mismatched == 0;
  return {pass, std::to_string(trials) + " trials: nonmonotone " + std::to_string(bad_mono) + ", ledger errors " +
                    std::to_string(bad_ledger) + "; L=1 mismatches " + std::to_string(mismatched) + "/" +
                    std::to_string(runs)};
}

// `limit` is the allowed runtime in seconds.
bool report(int id, const char* name, double limit, const std::function<Outcome()>& check) {
  const auto t0 = std::chrono::steady_clock::now();
  Outcome o;
  try {
    o = check();
  } catch (const std::exception& e) {
    o = {false, std::string("exception: ") + e.what()};
  }
  const double s = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  if (s > limit) {
    o.pass = false;
    o.detail += fmt(", over the %.0f s limit", limit);
  }
  std::printf("criterion %d %s: %s (%s; %.1f s)\n", id, name, o.pass ? "PASS" : "FAIL", o.detail.c_str(), s);
  std::fflush(stdout);
  return o.pass;
}

}  // namespace

int main() {
  bool ok = true;
  ok &= report(1, "gp oracle", 60, gp_oracle);
  ok &= report(2, "ei vs monte carlo", 60, ei_vs_mc);
  ok &= report(3, "fantasy update", 120, fantasy);
  ok &= report(4, "two-step acquisition", 300, two_step);
  ok &= report(5, "latin hypercube", 60, lhs_bins);

  ExperimentResult forrester, rosenbrock;
  ok &= report(6, "forrester reproduction", 600, [&] {
    forrester = experiment("forrester");
    return forrester_repro(forrester);
  });
  ok &= report(7, "rosenbrock2d reproduction", 1800, [&] {
    rosenbrock = experiment("rosenbrock2d");
    return rosenbrock_repro(rosenbrock);
  });
  ok &= report(8, "monotonicity and accounting", 600, [&] {
    ProblemRegistry registry = ProblemRegistry::with_builtins();
    return accounting({&forrester, &rosenbrock}, registry);
  });
  return ok ? 0 : 1;
}
