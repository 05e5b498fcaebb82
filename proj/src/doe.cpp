#include "mfbo/doe.hpp"

#include <algorithm>
#include <numeric>
#include <random>

namespace mfbo {

void DesignSpec::validate() const {
  if (n_points < 1) throw ContractViolation("design needs at least one point");
  if (bounds.dimension() < 1) throw ContractViolation("design needs a nonempty box");
  for (Eigen::Index i = 0; i < bounds.dimension(); ++i) {
    if (!(bounds.lower[i] < bounds.upper[i])) {
      throw ContractViolation("design bounds need low < high in every dimension");
    }
  }
}

std::vector<Eigen::VectorXd> latin_hypercube(const DesignSpec& spec) {
  spec.validate();
  const std::size_t n = spec.n_points;
  const Eigen::Index d = spec.dimension();
  std::mt19937_64 rng(spec.seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);

  std::vector<Eigen::VectorXd> points(n, Eigen::VectorXd(d));
  std::vector<std::size_t> perm(n);
  // Keeps (bin + offset) / n strictly inside its bin after rounding.
  constexpr double kMaxOffset = 1.0 - 1e-12;
  for (Eigen::Index j = 0; j < d; ++j) {
    std::iota(perm.begin(), perm.end(), std::size_t{0});
    std::shuffle(perm.begin(), perm.end(), rng);
    const double lo = spec.bounds.lower[j];
    const double width = spec.bounds.upper[j] - lo;
    for (std::size_t i = 0; i < n; ++i) {
      const double offset = std::min(unit(rng), kMaxOffset);
      const double frac = (static_cast<double>(perm[i]) + offset) / static_cast<double>(n);
      points[i][j] = std::min(lo + frac * width, spec.bounds.upper[j]);
    }
  }
  return points;
}

std::vector<Eigen::VectorXd> uniform_pool(const DesignSpec& spec) {
  spec.validate();
  const Eigen::Index d = spec.dimension();
  std::mt19937_64 rng(spec.seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::vector<Eigen::VectorXd> points(spec.n_points, Eigen::VectorXd(d));
  for (auto& p : points) {
    for (Eigen::Index j = 0; j < d; ++j) {
      p[j] = std::min(spec.bounds.lower[j] + unit(rng) * (spec.bounds.upper[j] - spec.bounds.lower[j]),
                      spec.bounds.upper[j]);
    }
  }
  return points;
}

}  // namespace mfbo
