#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <vector>

#include "mfbo/types.hpp"

namespace mfbo {

struct DesignSpec {
  std::size_t n_points = 1;
  Bounds bounds;
  std::uint64_t seed = 0;

  Eigen::Index dimension() const { return bounds.dimension(); }
  void validate() const;
};

/// Randomized Latin hypercube: one random permutation of the n bins per
/// dimension, uniform position inside each bin.
std::vector<Eigen::VectorXd> latin_hypercube(const DesignSpec& spec);

/// I.i.d. uniform points in the box.
std::vector<Eigen::VectorXd> uniform_pool(const DesignSpec& spec);

}  // namespace mfbo
