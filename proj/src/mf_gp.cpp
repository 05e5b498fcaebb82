#include "mfbo/mf_gp.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include "detail/parameter_space.hpp"
#include "mfbo/local_search.hpp"

namespace mfbo {

// ---------------------------------------------------------------------------
// TrainingSet

TrainingSet::TrainingSet(Bounds bounds, int num_levels, std::vector<double> costs)
    : bounds_(std::move(bounds)), num_levels_(num_levels), costs_(std::move(costs)) {
  if (num_levels_ < 1) throw ContractViolation("training set needs at least one fidelity level");
  if (!costs_.empty() && costs_.size() != static_cast<std::size_t>(num_levels_)) {
    throw ContractViolation("training set: one cost per fidelity level required");
  }
}

void TrainingSet::add(Sample sample) {
  sample.level.check(num_levels_);
  if (!bounds_.contains(sample.x)) throw ContractViolation("sample input outside bounds");
  if (!std::isfinite(sample.y)) throw ContractViolation("sample value is not finite");
  if (!costs_.empty() && sample.cost != costs_[sample.level.slot()]) {
    throw ContractViolation("sample cost does not match the level cost");
  }
  if (sample.level.index() == num_levels_ && (!incumbent_ || sample.y < *incumbent_)) {
    incumbent_ = sample.y;
    incumbent_index_ = samples_.size();
  }
  samples_.push_back(std::move(sample));
}

std::size_t TrainingSet::count_at(FidelityLevel level) const {
  return static_cast<std::size_t>(std::count_if(
      samples_.begin(), samples_.end(), [&](const Sample& s) { return s.level == level; }));
}

double TrainingSet::cost(FidelityLevel level) const {
  level.check(num_levels_);
  return costs_.empty() ? 0.0 : costs_[level.slot()];
}

// ---------------------------------------------------------------------------
// hyperparameters

void MfHyperparameters::validate(Eigen::Index dimension) const {
  if (kernels.empty()) throw ContractViolation("multifidelity model needs at least one kernel");
  for (const auto& k : kernels) {
    k.validate();
    if (k.dimension() != dimension) throw ContractViolation("kernel dimension mismatch");
  }
  if (rho.size() + 1 != kernels.size()) {
    throw ContractViolation("need exactly one scaling factor per level transition");
  }
  for (double r : rho) {
    if (!std::isfinite(r)) throw ContractViolation("scaling factor must be finite");
  }
  if (noise_std.size() != kernels.size()) {
    throw ContractViolation("need exactly one noise std per level");
  }
  for (double s : noise_std) {
    if (!(s >= 0.0)) throw ContractViolation("noise std must be >= 0");
  }
  if (!(jitter > 0.0)) throw ContractViolation("jitter must be > 0");
}

// ---------------------------------------------------------------------------
// covariance

namespace {

double autoregressive_cov(const MfHyperparameters& h, const Eigen::Ref<const Eigen::VectorXd>& u,
                          int l, const Eigen::Ref<const Eigen::VectorXd>& u2, int l2) {
  // cov(f_l, f_l2) = sum_{k <= min(l, l2)} c(k, l) c(k, l2) k_k(u, u2),
  // c(k, l) = prod_{j = k+1..l} rho_j.
  const int m = std::min(l, l2);
  double cl = 1.0;
  double cl2 = 1.0;
  for (int j = m + 1; j <= l; ++j) cl *= h.rho[static_cast<std::size_t>(j - 2)];
  for (int j = m + 1; j <= l2; ++j) cl2 *= h.rho[static_cast<std::size_t>(j - 2)];
  double total = 0.0;
  for (int k = m; k >= 1; --k) {
    total += cl * cl2 * kernel_se(u, u2, h.kernels[static_cast<std::size_t>(k - 1)]);
    if (k > 1) {
      const double r = h.rho[static_cast<std::size_t>(k - 2)];
      cl *= r;
      cl2 *= r;
    }
  }
  return total;
}

Eigen::MatrixXd joint_matrix(const MfHyperparameters& h, const Eigen::MatrixXd& U,
                             const std::vector<FidelityLevel>& levels) {
  const Eigen::Index n = U.cols();
  Eigen::MatrixXd K(n, n);
  for (Eigen::Index j = 0; j < n; ++j) {
    const int lj = levels[static_cast<std::size_t>(j)].index();
    for (Eigen::Index i = j; i < n; ++i) {
      const double k =
          autoregressive_cov(h, U.col(i), levels[static_cast<std::size_t>(i)].index(), U.col(j), lj);
      K(i, j) = k;
      K(j, i) = k;
    }
    const double s = h.noise_std[static_cast<std::size_t>(lj - 1)];
    K(j, j) += s * s;
  }
  return K;
}

}  // namespace

// ---------------------------------------------------------------------------
// MfGpModel

MfGpModel::MfGpModel(TrainingSet train, MfHyperparameters hyper,
                     std::optional<Standardization> scaling)
    : train_(std::move(train)), hyper_(std::move(hyper)) {
  hyper_.validate(train_.dimension());
  if (hyper_.num_levels() != train_.num_levels()) {
    throw ContractViolation("hyperparameters describe " + std::to_string(hyper_.num_levels()) +
                            " levels, training set has " + std::to_string(train_.num_levels()));
  }
  if (scaling) {
    scaling_ = *scaling;
  } else {
    Eigen::VectorXd y(static_cast<Eigen::Index>(train_.size()));
    for (std::size_t i = 0; i < train_.size(); ++i) y[static_cast<Eigen::Index>(i)] = train_.samples()[i].y;
    scaling_ = Standardization::from_data(train_.bounds(), y);
  }
  build();
}

void MfGpModel::build() {
  const auto n = static_cast<Eigen::Index>(train_.size());
  unit_X_.resize(train_.dimension(), n);
  y_std_.resize(n);
  levels_.clear();
  for (Eigen::Index i = 0; i < n; ++i) {
    const Sample& s = train_.samples()[static_cast<std::size_t>(i)];
    unit_X_.col(i) = scaling_.to_unit(s.x);
    y_std_[i] = scaling_.standardize(s.y);
    levels_.push_back(s.level);
  }
  gram_ = joint_matrix(hyper_, unit_X_, levels_);
  chol_ = factorize(gram_, hyper_.jitter);
  alpha_ = n > 0 ? refined_solve(chol_, gram_, y_std_) : Eigen::VectorXd();
}

double MfGpModel::noise_std(FidelityLevel level) const {
  level.check(num_levels());
  return hyper_.noise_std[level.slot()];
}

double MfGpModel::prior_covariance_unit(const Eigen::Ref<const Eigen::VectorXd>& u,
                                        FidelityLevel l,
                                        const Eigen::Ref<const Eigen::VectorXd>& u2,
                                        FidelityLevel l2) const {
  l.check(num_levels());
  l2.check(num_levels());
  return autoregressive_cov(hyper_, u, l.index(), u2, l2.index());
}

Eigen::VectorXd MfGpModel::cross_covariance_unit(const Eigen::VectorXd& u,
                                                 FidelityLevel l) const {
  l.check(num_levels());
  Eigen::VectorXd k(unit_X_.cols());
  for (Eigen::Index i = 0; i < unit_X_.cols(); ++i) {
    k[i] = autoregressive_cov(hyper_, unit_X_.col(i), levels_[static_cast<std::size_t>(i)].index(),
                              u, l.index());
  }
  return k;
}

PosteriorMoments MfGpModel::posterior_standardized(const Eigen::VectorXd& x,
                                                   FidelityLevel l) const {
  const Eigen::VectorXd u = scaling_.to_unit(x);
  return posterior_from_factor(chol_, alpha_, cross_covariance_unit(u, l),
                               prior_covariance_unit(u, l, u, l));
}

PosteriorMoments MfGpModel::posterior(const Eigen::VectorXd& x, FidelityLevel l) const {
  return scaling_.destandardize(posterior_standardized(x, l));
}

MfGpModel::PairPosterior MfGpModel::joint_posterior(const Eigen::VectorXd& x, FidelityLevel l,
                                                    FidelityLevel l2) const {
  const Eigen::VectorXd u = scaling_.to_unit(x);
  const Eigen::VectorXd k1 = cross_covariance_unit(u, l);
  const Eigen::VectorXd k2 = cross_covariance_unit(u, l2);
  PairPosterior out;
  const double p11 = prior_covariance_unit(u, l, u, l);
  const double p22 = prior_covariance_unit(u, l2, u, l2);
  const double p12 = prior_covariance_unit(u, l, u, l2);
  if (chol_.size() == 0) {
    out.first = {0.0, p11};
    out.second = {0.0, p22};
    out.covariance = p12;
    return out;
  }
  const Eigen::VectorXd v1 = chol_.solve_lower(k1);
  const Eigen::VectorXd v2 = chol_.solve_lower(k2);
  out.first = {k1.dot(alpha_), std::max(p11 - v1.squaredNorm(), 0.0)};
  out.second = {k2.dot(alpha_), std::max(p22 - v2.squaredNorm(), 0.0)};
  out.covariance = p12 - v1.dot(v2);
  return out;
}

MfGpModel MfGpModel::condition(const Sample& sample) const {
  MfGpModel next;
  next.train_ = train_;
  next.train_.add(sample);
  next.hyper_ = hyper_;
  next.scaling_ = scaling_;
  next.fit_info_ = fit_info_;

  const Eigen::Index n = unit_X_.cols();
  const Eigen::VectorXd u = scaling_.to_unit(sample.x);
  const Eigen::VectorXd k = cross_covariance_unit(u, sample.level);
  const double s = noise_std(sample.level);
  const double c = prior_covariance_unit(u, sample.level, u, sample.level) + s * s + chol_.jitter;
  const Eigen::VectorXd w = n > 0 ? chol_.solve_lower(k) : Eigen::VectorXd();
  const double pivot = c - w.squaredNorm();

  if (!(pivot > 0.5 * chol_.jitter) || !std::isfinite(pivot)) {
    next.build();
    next.refactorized_ = true;
    return next;
  }

  next.unit_X_.resize(unit_X_.rows(), n + 1);
  next.unit_X_.leftCols(n) = unit_X_;
  next.unit_X_.col(n) = u;
  next.levels_ = levels_;
  next.levels_.push_back(sample.level);
  next.y_std_.resize(n + 1);
  next.y_std_.head(n) = y_std_;
  next.y_std_[n] = scaling_.standardize(sample.y);
  next.chol_.jitter = chol_.jitter;
  next.chol_.lower = Eigen::MatrixXd::Zero(n + 1, n + 1);
  next.chol_.lower.topLeftCorner(n, n) = chol_.lower;
  next.chol_.lower.row(n).head(n) = w.transpose();
  next.chol_.lower(n, n) = std::sqrt(pivot);
  next.gram_.resize(n + 1, n + 1);
  next.gram_.topLeftCorner(n, n) = gram_;
  next.gram_.col(n).head(n) = k;
  next.gram_.row(n).head(n) = k.transpose();
  next.gram_(n, n) = c - chol_.jitter;
  next.alpha_ = refined_solve(next.chol_, next.gram_, next.y_std_);
  return next;
}

// ---------------------------------------------------------------------------
// free functions

double mf_cov(const Eigen::VectorXd& x, FidelityLevel l, const Eigen::VectorXd& x2,
              FidelityLevel l2, const MfGpModel& model) {
  return model.prior_covariance_unit(model.scaling().to_unit(x), l, model.scaling().to_unit(x2),
                                     l2);
}

PosteriorMoments mf_posterior(const MfGpModel& model, const Eigen::VectorXd& x, FidelityLevel l) {
  return model.posterior(x, l);
}

double degenerate_variance(const MfGpModel& model) {
  return std::max(1e-12, 2.0 * model.factor().jitter);
}

double posterior_fidelity_correlation(const MfGpModel& model, const Eigen::VectorXd& x,
                                      FidelityLevel l) {
  l.check(model.num_levels());
  const FidelityLevel top = model.top_level();
  if (l == top) return 1.0;
  const auto p = model.joint_posterior(x, l, top);
  const double floor = degenerate_variance(model);
  if (p.first.variance < floor || p.second.variance < floor) return 0.0;
  const double r = p.covariance / std::sqrt(p.first.variance * p.second.variance);
  return std::clamp(r, -1.0, 1.0);
}

// ---------------------------------------------------------------------------
// fitting

MfGpModel fit_mf(const TrainingSet& train, const SearchConfig& config,
                 const std::optional<MfHyperparameters>& warm_start) {
  if (train.empty()) throw ContractViolation("fit_mf: empty training set");
  const int L = train.num_levels();
  const Eigen::Index d = train.dimension();
  const auto n = static_cast<Eigen::Index>(train.size());

  Eigen::VectorXd y(n);
  std::vector<FidelityLevel> levels;
  for (Eigen::Index i = 0; i < n; ++i) {
    y[i] = train.samples()[static_cast<std::size_t>(i)].y;
    levels.push_back(train.samples()[static_cast<std::size_t>(i)].level);
  }
  const Standardization scaling = Standardization::from_data(train.bounds(), y);
  Eigen::MatrixXd U(d, n);
  for (Eigen::Index i = 0; i < n; ++i) U.col(i) = scaling.to_unit(train.samples()[static_cast<std::size_t>(i)].x);
  const Eigen::VectorXd y_std = scaling.standardize(y);

  std::vector<double> fixed_noise(static_cast<std::size_t>(L), 0.0);
  for (int l = 0; l < L; ++l) {
    if (!config.fixed_noise_std.empty()) {
      fixed_noise[static_cast<std::size_t>(l)] =
          config.fixed_noise_std.size() == 1 ? config.fixed_noise_std.front()
                                             : config.fixed_noise_std.at(static_cast<std::size_t>(l));
    }
  }

  detail::ParameterSpace space;
  for (int l = 0; l < L; ++l) {
    space.add_log(l == 0 ? 1.0 : 0.1, config.scale_lower, config.scale_upper,
                  config.start_signal_lower, config.start_signal_upper);
    for (Eigen::Index i = 0; i < d; ++i) {
      space.add_log(0.5, config.scale_lower, config.scale_upper, config.start_length_lower,
                    config.start_length_upper);
    }
  }
  for (int l = 1; l < L; ++l) space.add_linear(1.0, -config.rho_bound, config.rho_bound, 0.0, 2.0);
  if (config.fit_noise) space.add_log(1e-3, config.noise_lower, config.noise_upper, 1e-3, 1e-1);

  const Eigen::Index block = 1 + d;
  auto unpack = [&](const Eigen::VectorXd& p) {
    MfHyperparameters h;
    h.jitter = config.jitter;
    for (int l = 0; l < L; ++l) {
      KernelParams k;
      k.signal_variance = std::exp(p[l * block]);
      k.length_scales = p.segment(l * block + 1, d).array().exp();
      h.kernels.push_back(std::move(k));
    }
    for (int l = 1; l < L; ++l) h.rho.push_back(p[L * block + (l - 1)]);
    if (config.fit_noise) {
      h.noise_std.assign(static_cast<std::size_t>(L), std::exp(p[L * block + (L - 1)]));
    } else {
      h.noise_std = fixed_noise;
    }
    return h;
  };
  auto pack = [&](const MfHyperparameters& h) {
    Eigen::VectorXd p(space.size());
    for (int l = 0; l < L; ++l) {
      const auto& k = h.kernels.at(static_cast<std::size_t>(l));
      p[l * block] = std::log(k.signal_variance);
      p.segment(l * block + 1, d) = k.length_scales.array().log();
    }
    for (int l = 1; l < L; ++l) p[L * block + (l - 1)] = h.rho.at(static_cast<std::size_t>(l - 1));
    if (config.fit_noise) {
      p[L * block + (L - 1)] = std::log(std::max(h.noise_std.front(), config.noise_lower));
    }
    return p;
  };

  std::mt19937_64 rng(config.seed);
  std::vector<Eigen::VectorXd> starts;
  if (warm_start && warm_start->num_levels() == L) starts.push_back(pack(*warm_start));
  for (auto& s : space.starts(config.starts, rng)) starts.push_back(std::move(s));

  auto objective = [&](const Eigen::VectorXd& p) {
    const MfHyperparameters h = unpack(p);
    return gaussian_log_evidence(factorize(joint_matrix(h, U, levels), h.jitter), y_std);
  };

  CoordinateSearchOptions opts;
  opts.initial_step = config.initial_step;
  opts.min_step = config.min_step;
  opts.max_evaluations = config.max_evaluations_per_start;
  SearchResult best;
  try {
    best = multistart_search(objective, starts, space.lower(), space.upper(), opts);
  } catch (const std::runtime_error& e) {
    throw NumericalError(std::string("fit_mf: ") + e.what(), config.jitter);
  }

  MfFitInfo info;
  info.log_likelihood = best.value;
  info.evaluations = best.evaluations;
  for (int l = 1; l <= L; ++l) {
    if (train.count_at(FidelityLevel(l)) == 0) info.missing_levels.push_back(l);
  }
  MfGpModel model(train, unpack(best.argmax), scaling);
  model.set_fit_info(std::move(info));
  return model;
}

}  // namespace mfbo
