#pragma once

#include <Eigen/Dense>

#include <compare>
#include <cstdint>
#include <string>

#include "mfbo/errors.hpp"

namespace mfbo {

/// Axis-aligned box of feasible inputs.
struct Bounds {
  Eigen::VectorXd lower;
  Eigen::VectorXd upper;

  Bounds() = default;
  Bounds(Eigen::VectorXd lo, Eigen::VectorXd hi);

  static Bounds unit(Eigen::Index dimension);

  Eigen::Index dimension() const { return lower.size(); }
  Eigen::VectorXd width() const { return upper - lower; }
  bool contains(const Eigen::VectorXd& x) const;
  Eigen::VectorXd clamp(const Eigen::VectorXd& x) const;
};

/// One-based fidelity index; level L (the largest) is the ground truth.
class FidelityLevel {
 public:
  constexpr FidelityLevel() = default;
  constexpr explicit FidelityLevel(int index) : index_(index) {}

  constexpr int index() const { return index_; }
  /// Zero-based position, for indexing per-level vectors.
  constexpr std::size_t slot() const { return static_cast<std::size_t>(index_ - 1); }

  void check(int num_levels) const {
    if (index_ < 1 || index_ > num_levels) {
      throw ContractViolation("fidelity level " + std::to_string(index_) +
                              " outside 1.." + std::to_string(num_levels));
    }
  }

  friend constexpr auto operator<=>(FidelityLevel, FidelityLevel) = default;

 private:
  int index_ = 1;
};

/// Mixes a base seed with a stream tag and an index (splitmix64 finalizer),
/// giving independent RNG streams per trial / iteration / purpose.
std::uint64_t derive_seed(std::uint64_t base, std::uint64_t stream, std::uint64_t index = 0);

}  // namespace mfbo
