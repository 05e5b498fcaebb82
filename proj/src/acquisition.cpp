#include "mfbo/acquisition.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <random>

namespace mfbo {

void McConfig::validate() const {
  if (n_mc < 1) throw ContractViolation("n_mc must be >= 1");
  if (inner_candidates < 1) throw ContractViolation("inner_candidates must be >= 1");
  if (!fixed_draws.empty() && fixed_draws.size() != n_mc) {
    throw ContractViolation("fixed_draws must hold exactly n_mc values");
  }
}

double normal_pdf(double z) { return std::exp(-0.5 * z * z) / std::sqrt(2.0 * std::numbers::pi); }

double normal_cdf(double z) { return 0.5 * std::erfc(-z / std::numbers::sqrt2); }

double expected_improvement(double mu, double sigma, double f_star) {
  if (!(sigma > 0.0)) return 0.0;
  const double g = (f_star - mu) / sigma;
  return std::max(sigma * (g * normal_cdf(g) + normal_pdf(g)), 0.0);
}

double alpha1(const MfGpModel& model, const Eigen::VectorXd& x, FidelityLevel l) {
  return posterior_fidelity_correlation(model, x, l);
}

double alpha2(double noise_std, double posterior_std) {
  if (noise_std == 0.0) return 1.0;
  return 1.0 - noise_std / std::sqrt(posterior_std * posterior_std + noise_std * noise_std);
}

double alpha2(const MfGpModel& model, const Eigen::VectorXd& x, FidelityLevel l) {
  return alpha2(model.noise_std(l), model.posterior_standardized(x, l).stddev());
}

double alpha3(const std::vector<double>& costs, FidelityLevel l) {
  l.check(static_cast<int>(costs.size()));
  const double own = costs[l.slot()];
  if (!(own > 0.0)) throw ContractViolation("level costs must be positive");
  return costs.back() / own;
}

namespace {

std::optional<double> require_incumbent(const MfGpModel& model) {
  if (!model.incumbent()) {
    throw ContractViolation(
        "MFEI needs an incumbent: seed the training set with at least one highest-fidelity sample");
  }
  return model.incumbent();
}

double correlation_utility(FidelityLevel l, FidelityLevel top, double var_l, double var_top,
                           double cov, double floor) {
  if (l == top) return 1.0;
  if (var_l < floor || var_top < floor) return 0.0;
  return std::clamp(cov / std::sqrt(var_l * var_top), -1.0, 1.0);
}

}  // namespace

double mfei(const MfGpModel& model, const Eigen::VectorXd& x, FidelityLevel l,
            const std::vector<double>& costs) {
  const double f_star = *require_incumbent(model);
  if (costs.size() != static_cast<std::size_t>(model.num_levels())) {
    throw ContractViolation("mfei: one cost per fidelity level required");
  }
  const FidelityLevel top = model.top_level();
  const auto p = model.joint_posterior(x, l, top);
  const double floor = degenerate_variance(model);
  PosteriorMoments top_std = p.second;
  if (top_std.variance < floor) top_std.variance = 0.0;
  const auto top_raw = model.scaling().destandardize(top_std);
  const double ei = expected_improvement(top_raw.mean, top_raw.stddev(), f_star);
  const double a1 = correlation_utility(l, top, p.first.variance, p.second.variance, p.covariance, floor);
  const double a2 = alpha2(model.noise_std(l), p.first.stddev());
  return ei * std::max(a1, 0.0) * a2 * alpha3(costs, l);
}

double fantasy_std(const MfGpModel& model, const Eigen::VectorXd& x, FidelityLevel l) {
  const double var = model.posterior_standardized(x, l).variance;
  const double s = model.noise_std(l);
  return std::sqrt(var + s * s + model.factor().jitter);
}

MfGpModel fantasize(const MfGpModel& model, const Eigen::VectorXd& x_new, FidelityLevel l_new,
                    double z) {
  const double mean = model.posterior_standardized(x_new, l_new).mean;
  const double y = model.scaling().destandardize(mean + fantasy_std(model, x_new, l_new) * z);
  Sample s;
  s.x = x_new;
  s.level = l_new;
  s.y = y;
  s.cost = model.training_set().cost(l_new);
  return model.condition(s);
}

std::vector<double> mc_draws(const McConfig& cfg) {
  cfg.validate();
  if (!cfg.fixed_draws.empty()) return cfg.fixed_draws;
  std::mt19937_64 rng(cfg.seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::vector<double> z(cfg.n_mc);
  for (auto& v : z) v = normal(rng);
  return z;
}

// ---------------------------------------------------------------------------
// two-step lookahead

TwoStepLookahead::TwoStepLookahead(const MfGpModel& model, std::vector<double> costs,
                                   std::vector<Candidate> pool, const McConfig& cfg)
    : model_(model), costs_(std::move(costs)), pool_(std::move(pool)), draws_(mc_draws(cfg)) {
  if (pool_.empty()) throw ContractViolation("two-step lookahead: candidate pool is empty");
  if (costs_.size() != static_cast<std::size_t>(model.num_levels())) {
    throw ContractViolation("two-step lookahead: one cost per fidelity level required");
  }
  require_incumbent(model_);

  const auto m = static_cast<Eigen::Index>(pool_.size());
  const Eigen::Index n = static_cast<Eigen::Index>(model_.training_set().size());
  const FidelityLevel top = model_.top_level();
  unit_pool_.resize(model_.dimension(), m);
  Eigen::MatrixXd k_level(n, m), k_top(n, m);
  mean_top_.resize(m);
  var_level_.resize(m);
  var_top_.resize(m);
  cov_level_top_.resize(m);
  for (Eigen::Index q = 0; q < m; ++q) {
    const auto& c = pool_[static_cast<std::size_t>(q)];
    c.level.check(model_.num_levels());
    unit_pool_.col(q) = model_.scaling().to_unit(c.x);
    k_level.col(q) = model_.cross_covariance_unit(unit_pool_.col(q), c.level);
    k_top.col(q) = c.level == top ? Eigen::VectorXd(k_level.col(q))
                                  : model_.cross_covariance_unit(unit_pool_.col(q), top);
  }
  v_level_ = model_.factor().solve_lower(k_level);
  v_top_ = model_.factor().solve_lower(k_top);
  const Eigen::VectorXd& alpha = model_.weights();
  for (Eigen::Index q = 0; q < m; ++q) {
    const auto u = unit_pool_.col(q);
    const FidelityLevel l = pool_[static_cast<std::size_t>(q)].level;
    mean_top_[q] = k_top.col(q).dot(alpha);
    var_level_[q] = model_.prior_covariance_unit(u, l, u, l) - v_level_.col(q).squaredNorm();
    var_top_[q] = model_.prior_covariance_unit(u, top, u, top) - v_top_.col(q).squaredNorm();
    cov_level_top_[q] = model_.prior_covariance_unit(u, l, u, top) - v_level_.col(q).dot(v_top_.col(q));
  }
}

AcquisitionValue TwoStepLookahead::evaluate(const Eigen::VectorXd& x, FidelityLevel l) const {
  AcquisitionValue out;
  out.immediate = mfei(model_, x, l, costs_);

  const FidelityLevel top = model_.top_level();
  const Standardization& scaling = model_.scaling();
  const Eigen::VectorXd u = scaling.to_unit(x);
  const Eigen::VectorXd k_x = model_.cross_covariance_unit(u, l);
  const Eigen::VectorXd w = model_.factor().solve_lower(k_x);
  const double var_x =
      std::max(model_.prior_covariance_unit(u, l, u, l) - w.squaredNorm(), 0.0);
  const double noise = model_.noise_std(l);
  const double s = std::sqrt(var_x + noise * noise + model_.factor().jitter);
  const double mean_x = k_x.dot(model_.weights());

  // Fantasy-independent parts of every pool term.
  const auto m = static_cast<Eigen::Index>(pool_.size());
  const double floor = degenerate_variance(model_);
  const Eigen::VectorXd c_level = -(v_level_.transpose() * w);
  const Eigen::VectorXd c_top = -(v_top_.transpose() * w);
  std::vector<double> shift(static_cast<std::size_t>(m)), sigma(static_cast<std::size_t>(m)),
      weight(static_cast<std::size_t>(m));
  std::vector<Eigen::Index> active;
  for (Eigen::Index q = 0; q < m; ++q) {
    const auto uq = unit_pool_.col(q);
    const FidelityLevel lq = pool_[static_cast<std::size_t>(q)].level;
    const double h_level = (c_level[q] + model_.prior_covariance_unit(uq, lq, u, l)) / s;
    const double h_top = (c_top[q] + model_.prior_covariance_unit(uq, top, u, l)) / s;
    const double vl = std::max(var_level_[q] - h_level * h_level, 0.0);
    const double vt = std::max(var_top_[q] - h_top * h_top, 0.0);
    const double cov = cov_level_top_[q] - h_level * h_top;
    const double a1 = correlation_utility(lq, top, vl, vt, cov, floor);
    const double factor =
        std::max(a1, 0.0) * alpha2(model_.noise_std(lq), std::sqrt(vl)) * alpha3(costs_, lq);
    const auto i = static_cast<std::size_t>(q);
    shift[i] = h_top;
    sigma[i] = vt < floor ? 0.0 : scaling.output_scale * std::sqrt(vt);
    weight[i] = factor;
    if (factor > 0.0 && sigma[i] > 0.0) active.push_back(q);
  }

  const double incumbent = *model_.incumbent();
  double sum = 0.0;
  double sum_sq = 0.0;
  for (const double z : draws_) {
    const double f_star =
        l == top ? std::min(incumbent, scaling.destandardize(mean_x + s * z)) : incumbent;
    double best = 0.0;
    for (const Eigen::Index q : active) {
      const auto i = static_cast<std::size_t>(q);
      const double mu = scaling.destandardize(mean_top_[q] + shift[i] * z);
      best = std::max(best, expected_improvement(mu, sigma[i], f_star) * weight[i]);
    }
    sum += best;
    sum_sq += best * best;
  }
  const double n = static_cast<double>(draws_.size());
  out.lookahead = sum / n;
  if (draws_.size() > 1) {
    const double var = std::max((sum_sq - n * out.lookahead * out.lookahead) / (n - 1.0), 0.0);
    out.mc_std_error = std::sqrt(var / n);
  }
  out.total = out.immediate + out.lookahead;
  return out;
}

AcquisitionValue two_step_acquisition(const MfGpModel& model, const Eigen::VectorXd& x,
                                      FidelityLevel l, const std::vector<double>& costs,
                                      const std::vector<Candidate>& candidates,
                                      const McConfig& cfg) {
  return TwoStepLookahead(model, costs, candidates, cfg).evaluate(x, l);
}

}  // namespace mfbo
