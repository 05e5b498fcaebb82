#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <numbers>

#include "mfbo/benchmarks.hpp"
#include "mfbo/doe.hpp"

using namespace mfbo;

namespace {

Eigen::VectorXd vec(std::initializer_list<double> v) {
  Eigen::VectorXd out(static_cast<Eigen::Index>(v.size()));
  Eigen::Index i = 0;
  for (double x : v) out[i++] = x;
  return out;
}

const FidelityLevel L1{1}, L2{2};

std::vector<double> ranks(const std::vector<double>& v) {
  std::vector<std::size_t> idx(v.size());
  for (std::size_t i = 0; i < v.size(); ++i) idx[i] = i;
  std::sort(idx.begin(), idx.end(), [&](auto a, auto b) { return v[a] < v[b]; });
  std::vector<double> r(v.size());
  for (std::size_t i = 0; i < v.size(); ++i) r[idx[i]] = static_cast<double>(i);
  return r;
}

double pearson(const std::vector<double>& a, const std::vector<double>& b) {
  const auto n = static_cast<double>(a.size());
  double ma = 0, mb = 0;
  for (std::size_t i = 0; i < a.size(); ++i) ma += a[i], mb += b[i];
  ma /= n, mb /= n;
  double sab = 0, saa = 0, sbb = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    sab += (a[i] - ma) * (b[i] - mb);
    saa += (a[i] - ma) * (a[i] - ma);
    sbb += (b[i] - mb) * (b[i] - mb);
  }
  return sab / std::sqrt(saa * sbb);
}

std::pair<std::vector<double>, std::vector<double>> sample_levels(const BenchmarkProblem& p, std::size_t n) {
  std::vector<double> lo, hi;
  for (const auto& x : latin_hypercube({n, p.bounds, 17})) {
    lo.push_back(p.evaluate(x, L1));
    hi.push_back(p.evaluate(x, L2));
  }
  return {lo, hi};
}

}  // namespace

TEST_CASE("forrester values") {
  CHECK(forrester(vec({0.0}), L2) == doctest::Approx(3.027209981231713).epsilon(1e-13));
  CHECK(forrester(vec({1.0}), L2) == doctest::Approx(15.829731945974109).epsilon(1e-13));
  CHECK(forrester(vec({1.0}), L1) == doctest::Approx(7.914865972987055).epsilon(1e-13));

  const auto p = make_forrester();
  CHECK(p.f_star == doctest::Approx(-6.020740055767083).epsilon(1e-12));
  CHECK(p.f_max == doctest::Approx(15.829731945974109).epsilon(1e-12));
  REQUIRE(p.x_star.has_value());
  CHECK((*p.x_star)[0] == doctest::Approx(0.7572487585).epsilon(1e-8));

  // Dense grid: nothing below f_star, nothing above f_max.
  double lo = 1e300, hi = -1e300;
  for (int i = 0; i <= 1000000; ++i) {
    const double v = forrester(vec({i / 1e6}), L2);
    lo = std::min(lo, v);
    hi = std::max(hi, v);
  }
  CHECK(lo >= p.f_star - 1e-12);
  CHECK(lo - p.f_star < 1e-9);
  CHECK(hi == doctest::Approx(p.f_max).epsilon(1e-12));
}

TEST_CASE("rosenbrock values") {
  for (int d : {2, 5, 10}) {
    CHECK(rosenbrock_mf(Eigen::VectorXd::Ones(d), L2) == 0.0);
    const auto p = make_rosenbrock(d);
    CHECK(p.f_star == 0.0);
    CHECK(p.f_max == doctest::Approx(3609.0 * (d - 1)).epsilon(1e-12));
    CHECK(p.costs == std::vector<double>{0.5, 1.0});
    // corner enumeration
    if (d <= 5) {
      double best = -1e300;
      for (int mask = 0; mask < (1 << d); ++mask) {
        Eigen::VectorXd x(d);
        for (int k = 0; k < d; ++k) x[k] = (mask >> k) & 1 ? 2.0 : -2.0;
        best = std::max(best, rosenbrock_mf(x, L2));
      }
      CHECK(best == doctest::Approx(p.f_max).epsilon(1e-12));
    }
  }
  CHECK(rosenbrock_mf(vec({0.0, 0.0}), L2) == 1.0);
  CHECK(rosenbrock_mf(vec({0.0, 0.0}), L1) == 1.0);
  // 50 (x2 - x1^2)^2 + (1 - x1)^2 - 0.5 (x1 + x2) at (1, 2): 50 + 0 - 1.5
  CHECK(rosenbrock_mf(vec({1.0, 2.0}), L1) == doctest::Approx(48.5).epsilon(1e-14));
  CHECK_THROWS_AS(rosenbrock_mf(vec({1.0}), L2), ContractViolation);
}

TEST_CASE("rosenbrock 2d maximum from a dense grid") {
  const auto p = make_rosenbrock(2);
  double hi = -1e300;
  for (int i = 0; i <= 400; ++i)
    for (int j = 0; j <= 400; ++j) hi = std::max(hi, rosenbrock_mf(vec({-2.0 + i / 100.0, -2.0 + j / 100.0}), L2));
  CHECK(hi == doctest::Approx(p.f_max).epsilon(1e-12));
}

TEST_CASE("borehole values") {
  const auto p = make_borehole();
  const Eigen::VectorXd mid = (p.bounds.lower + p.bounds.upper) / 2;
  auto direct = [](const Eigen::VectorXd& x, double num, double a) {
    const double lr = std::log(x[1] / x[0]);
    return num * x[2] * (x[3] - x[5]) / (lr * (a + 2 * x[6] * x[2] / (lr * x[0] * x[0] * x[7]) + x[2] / x[4]));
  };
  CHECK(borehole(mid, L2) == doctest::Approx(direct(mid, 2 * std::numbers::pi, 1.0)).epsilon(1e-13));
  CHECK(borehole(mid, L2) == doctest::Approx(70.87291263681897).epsilon(1e-12));
  CHECK(borehole(mid, L1) == doctest::Approx(direct(mid, 5.0, 1.5)).epsilon(1e-13));
  CHECK(borehole(mid, L1) == doctest::Approx(56.398719259575394).epsilon(1e-12));

  const auto [lo, hi] = sample_levels(p, 10000);
  CHECK(*std::min_element(lo.begin(), lo.end()) > 0.0);
  CHECK(*std::min_element(hi.begin(), hi.end()) > 0.0);
  CHECK(*std::min_element(hi.begin(), hi.end()) >= p.f_star);
  CHECK(*std::max_element(hi.begin(), hi.end()) <= p.f_max);
  CHECK(pearson(lo, hi) > 0.9);
  REQUIRE(p.x_star.has_value());
  CHECK(borehole(*p.x_star, L2) == doctest::Approx(p.f_star).epsilon(1e-12));
  CHECK_THROWS_AS(borehole(vec({1.0, 2.0}), L2), ContractViolation);
}

TEST_CASE("fidelities are rank correlated") {
  for (const auto& p : {make_rosenbrock(2), make_rosenbrock(5), make_rosenbrock(10), make_borehole()}) {
    const auto [lo, hi] = sample_levels(p, 10000);
    CHECK_MESSAGE(pearson(ranks(lo), ranks(hi)) > 0.5, p.name);
  }
  // The canonical Forrester pair is only weakly rank correlated (the linear
  // drift dominates the low fidelity); reference values from scipy on 10^4
  // LHS points: Spearman 0.324, Pearson 0.736.
  const auto [lo, hi] = sample_levels(make_forrester(), 10000);
  CHECK(pearson(ranks(lo), ranks(hi)) == doctest::Approx(0.324).epsilon(0.05));
  CHECK(pearson(lo, hi) == doctest::Approx(0.736).epsilon(0.02));
}

TEST_CASE("evaluators are deterministic") {
  const auto reg = ProblemRegistry::with_builtins();
  for (const auto& name : reg.names()) {
    const auto& p = reg.get(name);
    const auto x = latin_hypercube({1, p.bounds, 3})[0];
    for (int l = 1; l <= p.num_levels(); ++l) CHECK(p.evaluate(x, FidelityLevel(l)) == p.evaluate(x, FidelityLevel(l)));
  }
}

TEST_CASE("normalized error") {
  const auto p = make_forrester();
  CHECK(normalized_error(p, p.f_star) == 0.0);
  CHECK(normalized_error(p, p.f_max) == 1.0);
  CHECK(normalized_error(p, 0.5 * (p.f_star + p.f_max)) == doctest::Approx(0.5).epsilon(1e-14));

  BenchmarkProblem shifted = p;
  shifted.f_star += 7.5;
  shifted.f_max += 7.5;
  for (double v : {-5.0, 0.0, 3.3}) {
    CHECK(normalized_error(shifted, v + 7.5) == doctest::Approx(normalized_error(p, v)).epsilon(1e-13));
  }
}

TEST_CASE("registry") {
  auto reg = ProblemRegistry::with_builtins();
  const auto& f = reg.get("forrester");
  CHECK(f.dimension() == 1);
  CHECK(f.num_levels() == 2);
  CHECK(f.costs == std::vector<double>{0.05, 1.0});
  CHECK(f.default_n0 == std::vector<std::size_t>{5, 2});
  CHECK(f.default_budget == 100.0);
  CHECK(reg.get("rosenbrock2d").default_n0 == std::vector<std::size_t>{10, 5});
  CHECK(reg.get("rosenbrock2d").default_budget == 200.0);

  try {
    reg.get("rastrigin");
    FAIL("expected ConfigError");
  } catch (const ConfigError& e) {
    const std::string msg = e.what();
    CHECK(msg.find("forrester") != std::string::npos);
    CHECK(msg.find("rosenbrock2d") != std::string::npos);
  }
  CHECK_THROWS_WITH(reg.add(make_forrester()), doctest::Contains("already registered"));

  BenchmarkProblem bad = make_forrester();
  bad.name = "bad";
  bad.f_max = bad.f_star - 1.0;
  CHECK_THROWS(reg.add(bad));
}

TEST_CASE("problem files with built-in and external evaluators") {
  auto reg = ProblemRegistry::with_builtins();
  const std::string name = reg.load_file(std::string(MFBO_TEST_DATA_DIR) + "/shifted_forrester.json");
  CHECK(name == "shifted_forrester");
  const auto& p = reg.get(name);
  CHECK(p.num_levels() == 2);
  CHECK(p.costs == std::vector<double>{0.1, 1.0});
  CHECK(p.default_n0 == std::vector<std::size_t>{4, 2});
  const Eigen::VectorXd x = vec({0.3});
  CHECK(p.evaluate(x, L1) == forrester(x, L1));
  // external command: f2(x) = x^2 - 1 via awk
  CHECK(p.evaluate(x, L2) == doctest::Approx(0.09 - 1.0).epsilon(1e-12));
  CHECK_THROWS_AS(reg.load_file(std::string(MFBO_TEST_DATA_DIR) + "/shifted_forrester.json"), ConfigError);
}

TEST_CASE("malformed problem files and failing commands") {
  auto reg = ProblemRegistry::with_builtins();
  const auto dir = std::filesystem::temp_directory_path() / "mfbo_bench_test";
  std::filesystem::create_directories(dir);
  const auto path = (dir / "broken.json").string();
  std::ofstream(path) << R"({"name": "broken", "bounds": [[0, 1]], "costs": [1.0]})";
  CHECK_THROWS_AS(reg.load_file(path), ConfigError);
  CHECK_THROWS_AS(reg.load_file((dir / "nope.json").string()), ConfigError);

  const Evaluator failing = external_command_evaluator("exit 3");
  CHECK_THROWS_AS(failing(vec({0.5})), EvaluationError);
  const Evaluator garbage = external_command_evaluator("echo not-a-number");
  CHECK_THROWS_AS(garbage(vec({0.5})), EvaluationError);
}
