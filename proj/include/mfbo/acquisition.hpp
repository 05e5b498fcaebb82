#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <utility>
#include <vector>

#include "mfbo/mf_gp.hpp"

namespace mfbo {

struct McConfig {
  std::size_t n_mc = 64;
  std::size_t inner_candidates = 128;
  std::uint64_t seed = 0;
  /// When nonempty, used verbatim as the standard-normal draws (size n_mc).
  std::vector<double> fixed_draws;

  void validate() const;
};

struct AcquisitionValue {
  double total = 0.0;
  double immediate = 0.0;
  double lookahead = 0.0;
  double mc_std_error = 0.0;
};

/// A point of the joint (input, fidelity) decision space.
struct Candidate {
  Eigen::VectorXd x;
  FidelityLevel level;
};

double normal_pdf(double z);
double normal_cdf(double z);

/// Expected improvement below f_star for f ~ N(mu, sigma^2):
/// sigma * (g Phi(g) + phi(g)), g = (f_star - mu) / sigma; 0 when sigma = 0.
double expected_improvement(double mu, double sigma, double f_star);

/// Correlation utility; see posterior_fidelity_correlation.
double alpha1(const MfGpModel& model, const Eigen::VectorXd& x, FidelityLevel l);
/// Noise utility 1 - noise / sqrt(var_l(x) + noise^2); 1 for noiseless levels.
double alpha2(const MfGpModel& model, const Eigen::VectorXd& x, FidelityLevel l);
/// Same formula from the two standard deviations directly.
double alpha2(double noise_std, double posterior_std);
/// Cost utility lambda_L / lambda_l.
double alpha3(const std::vector<double>& costs, FidelityLevel l);

/// EI of the level-L posterior at x times alpha1 * alpha2 * alpha3.
/// alpha1 enters clipped at zero so the product stays nonnegative. A
/// level-L variance below degenerate_variance(model) counts as zero.
/// Throws ContractViolation when the model has no level-L sample yet.
double mfei(const MfGpModel& model, const Eigen::VectorXd& x, FidelityLevel l,
            const std::vector<double>& costs);

/// Standard deviation of the simulated observation at (x, l): posterior
/// variance plus observation noise plus the model's factorization jitter.
double fantasy_std(const MfGpModel& model, const Eigen::VectorXd& x, FidelityLevel l);

/// Conditions the model (hyperparameters frozen) on the simulated sample
/// y = mu_l(x) + fantasy_std * z at (x, l).
MfGpModel fantasize(const MfGpModel& model, const Eigen::VectorXd& x_new, FidelityLevel l_new,
                    double z);

/// The n_mc standard-normal draws used for a given seed.
std::vector<double> mc_draws(const McConfig& cfg);

/// Two-step lookahead evaluator for one model and one inner candidate pool.
///
/// The per-pool posterior quantities are computed once. For an outer point
/// (x, l) the one-step fantasy shifts every pool mean by H(q) z and shrinks
/// every pool variance by H(q)^2 with H(q) = cov(q, (x, l)) / s, s the
/// fantasy std. Those are exactly the moments of the model conditioned on the
/// fantasy sample, so no per-draw refactorization is needed. Draws are shared
/// by every outer point (common random numbers) and reduced in index order.
class TwoStepLookahead {
 public:
  TwoStepLookahead(const MfGpModel& model, std::vector<double> costs,
                   std::vector<Candidate> pool, const McConfig& cfg);

  AcquisitionValue evaluate(const Eigen::VectorXd& x, FidelityLevel l) const;

  const std::vector<Candidate>& pool() const { return pool_; }
  const std::vector<double>& draws() const { return draws_; }

 private:
  const MfGpModel& model_;
  std::vector<double> costs_;
  std::vector<Candidate> pool_;
  std::vector<double> draws_;

  // one entry per pool candidate
  Eigen::MatrixXd v_level_;  // L^{-1} k_n(q, l_q), one column each
  Eigen::MatrixXd v_top_;    // L^{-1} k_n(q, L)
  Eigen::MatrixXd unit_pool_;
  Eigen::VectorXd mean_top_, var_level_, var_top_, cov_level_top_;
};

/// Immediate MFEI plus the Monte Carlo estimate of E[max over `candidates`
/// of the MFEI after a one-step fantasy at (x, l)].
AcquisitionValue two_step_acquisition(const MfGpModel& model, const Eigen::VectorXd& x,
                                      FidelityLevel l, const std::vector<double>& costs,
                                      const std::vector<Candidate>& candidates,
                                      const McConfig& cfg);

}  // namespace mfbo
