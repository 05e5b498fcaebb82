#include "mfbo/gp_core.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>
#include <sstream>

#include "detail/parameter_space.hpp"
#include "mfbo/local_search.hpp"

namespace mfbo {

// ---------------------------------------------------------------------------
// types shared across modules

Bounds::Bounds(Eigen::VectorXd lo, Eigen::VectorXd hi) : lower(std::move(lo)), upper(std::move(hi)) {
  if (lower.size() != upper.size() || lower.size() == 0) {
    throw ContractViolation("bounds: lower/upper must be nonempty and of equal dimension");
  }
  for (Eigen::Index i = 0; i < lower.size(); ++i) {
    if (!(lower[i] < upper[i])) {
      throw ContractViolation("bounds: dimension " + std::to_string(i) + " has low >= high");
    }
  }
}

Bounds Bounds::unit(Eigen::Index dimension) {
  return Bounds(Eigen::VectorXd::Zero(dimension), Eigen::VectorXd::Ones(dimension));
}

bool Bounds::contains(const Eigen::VectorXd& x) const {
  if (x.size() != lower.size()) return false;
  return (x.array() >= lower.array()).all() && (x.array() <= upper.array()).all();
}

Eigen::VectorXd Bounds::clamp(const Eigen::VectorXd& x) const {
  return x.cwiseMax(lower).cwiseMin(upper);
}

std::uint64_t derive_seed(std::uint64_t base, std::uint64_t stream, std::uint64_t index) {
  auto mix = [](std::uint64_t z) {
    z += 0x9e3779b97f4a7c15ULL;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  };
  return mix(mix(mix(base) ^ stream) ^ index);
}

// ---------------------------------------------------------------------------
// parameters

KernelParams::KernelParams(double sv, Eigen::VectorXd ls)
    : signal_variance(sv), length_scales(std::move(ls)) {
  validate();
}

void KernelParams::validate() const {
  if (!(signal_variance > 0.0) || !std::isfinite(signal_variance)) {
    throw ContractViolation("kernel: signal variance must be positive");
  }
  if (length_scales.size() == 0 || !(length_scales.array() > 0.0).all() ||
      !length_scales.allFinite()) {
    throw ContractViolation("kernel: length scales must be nonempty and positive");
  }
}

void NoiseParams::validate() const {
  if (!(noise_std >= 0.0)) throw ContractViolation("noise: noise_std must be >= 0");
  if (!(jitter > 0.0)) throw ContractViolation("noise: jitter must be > 0");
}

double PosteriorMoments::stddev() const { return std::sqrt(std::max(variance, 0.0)); }

double kernel_se(const Eigen::Ref<const Eigen::VectorXd>& x,
                 const Eigen::Ref<const Eigen::VectorXd>& x2, const KernelParams& params) {
  const auto d = params.length_scales.size();
  if (x.size() != d || x2.size() != d) {
    throw ContractViolation("kernel_se: input dimension " + std::to_string(x.size()) + "/" +
                            std::to_string(x2.size()) + " does not match " +
                            std::to_string(d) + " length scales");
  }
  double r2 = 0.0;
  for (Eigen::Index i = 0; i < d; ++i) {
    const double t = (x[i] - x2[i]) / params.length_scales[i];
    r2 += t * t;
  }
  return params.signal_variance * std::exp(-0.5 * r2);
}

// ---------------------------------------------------------------------------
// factorization

Eigen::VectorXd Cholesky::solve_lower(const Eigen::VectorXd& b) const {
  return lower.triangularView<Eigen::Lower>().solve(b);
}

Eigen::MatrixXd Cholesky::solve_lower(const Eigen::MatrixXd& b) const {
  return lower.triangularView<Eigen::Lower>().solve(b);
}

Eigen::VectorXd Cholesky::solve(const Eigen::VectorXd& b) const {
  Eigen::VectorXd t = solve_lower(b);
  return lower.transpose().triangularView<Eigen::Upper>().solve(t);
}

double Cholesky::log_determinant() const {
  return 2.0 * lower.diagonal().array().log().sum();
}

Cholesky factorize(const Eigen::MatrixXd& K, double jitter) {
  if (K.rows() != K.cols()) throw ContractViolation("factorize: matrix is not square");
  const Eigen::Index n = K.rows();
  if (n == 0) return Cholesky{Eigen::MatrixXd(0, 0), jitter};
  if (!(jitter >= 0.0)) throw ContractViolation("factorize: jitter must be >= 0");

  const double mean_diag = std::max(K.diagonal().mean(), std::numeric_limits<double>::min());
  const double ceiling = 1e-4 * mean_diag;

  auto attempt = [&](double j, Cholesky& out) {
    Eigen::MatrixXd A = K;
    A.diagonal().array() += j;
    Eigen::LLT<Eigen::MatrixXd> llt(A);
    if (llt.info() != Eigen::Success) return false;
    out.lower = llt.matrixL();
    out.jitter = j;
    return out.lower.diagonal().allFinite() && (out.lower.diagonal().array() > 0.0).all();
  };

  Cholesky result;
  if (attempt(jitter, result)) return result;
  double j = std::max(jitter * 10.0, 1e-10 * mean_diag);
  double last = jitter;
  while (j <= ceiling * (1.0 + 1e-12)) {
    last = j;
    if (attempt(j, result)) return result;
    j *= 10.0;
  }
  std::ostringstream msg;
  msg << "covariance matrix (n=" << n << ") not positive definite; last jitter tried " << last;
  throw NumericalError(msg.str(), last);
}

// ---------------------------------------------------------------------------
// scaling

Standardization Standardization::identity(Eigen::Index dimension) {
  Standardization s;
  s.input_offset = Eigen::VectorXd::Zero(dimension);
  s.input_scale = Eigen::VectorXd::Ones(dimension);
  return s;
}

Standardization Standardization::from_data(const Bounds& bounds, const Eigen::VectorXd& y) {
  Standardization s;
  s.input_offset = bounds.lower;
  s.input_scale = bounds.width();
  if (y.size() > 0) {
    s.output_mean = y.mean();
    const double var = (y.array() - s.output_mean).square().mean();
    s.output_scale = var > 1e-24 ? std::sqrt(var) : 1.0;
  }
  return s;
}

Eigen::VectorXd Standardization::to_unit(const Eigen::VectorXd& x) const {
  if (x.size() != input_offset.size()) {
    throw ContractViolation("input dimension " + std::to_string(x.size()) + " != " +
                            std::to_string(input_offset.size()));
  }
  return (x - input_offset).cwiseQuotient(input_scale);
}

Eigen::MatrixXd Standardization::to_unit_columns(const Eigen::MatrixXd& X) const {
  Eigen::MatrixXd U(X.rows(), X.cols());
  for (Eigen::Index j = 0; j < X.cols(); ++j) U.col(j) = to_unit(X.col(j));
  return U;
}

Eigen::VectorXd Standardization::standardize(const Eigen::VectorXd& y) const {
  return (y.array() - output_mean) / output_scale;
}

PosteriorMoments Standardization::destandardize(const PosteriorMoments& m) const {
  return {output_mean + output_scale * m.mean, output_scale * output_scale * m.variance};
}

// ---------------------------------------------------------------------------
// likelihood and posterior

Eigen::MatrixXd kernel_matrix(const Eigen::MatrixXd& X, const KernelParams& kernel,
                              const NoiseParams& noise) {
  const Eigen::Index n = X.cols();
  Eigen::MatrixXd K(n, n);
  const double nv = noise.noise_std * noise.noise_std;
  for (Eigen::Index j = 0; j < n; ++j) {
    for (Eigen::Index i = j; i < n; ++i) {
      const double k = kernel_se(X.col(i), X.col(j), kernel);
      K(i, j) = k;
      K(j, i) = k;
    }
    K(j, j) += nv;
  }
  return K;
}

double gaussian_log_evidence(const Cholesky& chol, const Eigen::VectorXd& y) {
  const Eigen::VectorXd t = chol.solve_lower(y);
  const double n = static_cast<double>(y.size());
  return -0.5 * t.squaredNorm() - 0.5 * chol.log_determinant() -
         0.5 * n * std::log(2.0 * std::numbers::pi);
}

double log_marginal_likelihood(const Dataset& data, const KernelParams& kernel,
                               const NoiseParams& noise) {
  if (data.size() == 0) throw ContractViolation("log_marginal_likelihood: empty training set");
  return gaussian_log_evidence(factorize(kernel_matrix(data.X, kernel, noise), noise.jitter),
                               data.y);
}

Eigen::VectorXd refined_solve(const Cholesky& chol, const Eigen::MatrixXd& K, const Eigen::VectorXd& y) {
  Eigen::VectorXd x = chol.solve(y);
  const Eigen::Index n = y.size();
  Eigen::VectorXd r(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    long double acc = static_cast<long double>(y[i]) - static_cast<long double>(chol.jitter) * x[i];
    for (Eigen::Index j = 0; j < n; ++j) acc -= static_cast<long double>(K(i, j)) * x[j];
    r[i] = static_cast<double>(acc);
  }
  return x + chol.solve(r);
}

PosteriorMoments posterior_from_factor(const Cholesky& chol, const Eigen::VectorXd& alpha,
                                       const Eigen::VectorXd& cross_cov, double prior_variance) {
  if (chol.size() == 0) return {0.0, prior_variance};
  const double mean = cross_cov.dot(alpha);
  const Eigen::VectorXd v = chol.solve_lower(cross_cov);
  return {mean, std::max(prior_variance - v.squaredNorm(), 0.0)};
}

GaussianProcess::GaussianProcess(Dataset data, KernelParams kernel, NoiseParams noise,
                                 std::optional<Standardization> scaling)
    : kernel_(std::move(kernel)), noise_(noise) {
  kernel_.validate();
  noise_.validate();
  if (data.X.cols() != data.y.size()) {
    throw ContractViolation("GaussianProcess: X has " + std::to_string(data.X.cols()) +
                            " columns but y has " + std::to_string(data.y.size()) + " entries");
  }
  if (data.size() > 0 && data.dimension() != kernel_.dimension()) {
    throw ContractViolation("GaussianProcess: data dimension does not match kernel");
  }
  scaling_ = scaling ? *scaling : Standardization::identity(kernel_.dimension());
  unit_X_ = scaling_.to_unit_columns(data.X);
  const Eigen::MatrixXd K = kernel_matrix(unit_X_, kernel_, noise_);
  chol_ = factorize(K, noise_.jitter);
  if (data.size() > 0) alpha_ = refined_solve(chol_, K, scaling_.standardize(data.y));
}

PosteriorMoments GaussianProcess::posterior_standardized(const Eigen::VectorXd& x) const {
  const Eigen::VectorXd u = scaling_.to_unit(x);
  Eigen::VectorXd k(unit_X_.cols());
  for (Eigen::Index i = 0; i < unit_X_.cols(); ++i) k[i] = kernel_se(unit_X_.col(i), u, kernel_);
  return posterior_from_factor(chol_, alpha_, k, kernel_se(u, u, kernel_));
}

PosteriorMoments GaussianProcess::posterior(const Eigen::VectorXd& x) const {
  return scaling_.destandardize(posterior_standardized(x));
}

// ---------------------------------------------------------------------------
// maximum likelihood

namespace {

detail::ParameterSpace gp_space(Eigen::Index d, const SearchConfig& cfg) {
  detail::ParameterSpace space;
  space.add_log(1.0, cfg.scale_lower, cfg.scale_upper, cfg.start_signal_lower,
                cfg.start_signal_upper);
  for (Eigen::Index i = 0; i < d; ++i) {
    space.add_log(0.5, cfg.scale_lower, cfg.scale_upper, cfg.start_length_lower,
                  cfg.start_length_upper);
  }
  if (cfg.fit_noise) {
    space.add_log(1e-3, cfg.noise_lower, cfg.noise_upper, 1e-3, 1e-1);
  }
  return space;
}

}  // namespace

GpFit fit_mle(const Dataset& data, const Bounds& bounds, const SearchConfig& config,
              const std::optional<GpFit>& warm_start) {
  if (data.size() == 0) throw ContractViolation("fit_mle: empty training set");
  const Eigen::Index d = data.dimension();
  if (bounds.dimension() != d) throw ContractViolation("fit_mle: bounds dimension mismatch");

  GpFit fit;
  fit.scaling = Standardization::from_data(bounds, data.y);
  const Dataset unit{fit.scaling.to_unit_columns(data.X), fit.scaling.standardize(data.y)};
  const double fixed_noise = config.fixed_noise_std.empty() ? 0.0 : config.fixed_noise_std.back();

  auto unpack = [&](const Eigen::VectorXd& p, KernelParams& k, NoiseParams& nz) {
    k.signal_variance = std::exp(p[0]);
    k.length_scales = p.segment(1, d).array().exp();
    nz.jitter = config.jitter;
    nz.noise_std = config.fit_noise ? std::exp(p[1 + d]) : fixed_noise;
  };

  const auto space = gp_space(d, config);
  std::mt19937_64 rng(config.seed);
  std::vector<Eigen::VectorXd> starts;
  if (warm_start) {
    Eigen::VectorXd w(space.size());
    w[0] = std::log(warm_start->kernel.signal_variance);
    w.segment(1, d) = warm_start->kernel.length_scales.array().log();
    if (config.fit_noise) w[1 + d] = std::log(std::max(warm_start->noise.noise_std, config.noise_lower));
    starts.push_back(w);
  }
  for (auto& s : space.starts(config.starts, rng)) starts.push_back(std::move(s));

  auto objective = [&](const Eigen::VectorXd& p) {
    KernelParams k;
    NoiseParams nz;
    unpack(p, k, nz);
    return log_marginal_likelihood(unit, k, nz);
  };

  CoordinateSearchOptions opts;
  opts.initial_step = config.initial_step;
  opts.min_step = config.min_step;
  opts.max_evaluations = config.max_evaluations_per_start;
  SearchResult best;
  try {
    best = multistart_search(objective, starts, space.lower(), space.upper(), opts);
  } catch (const std::runtime_error& e) {
    throw NumericalError(std::string("fit_mle: ") + e.what(), config.jitter);
  }
  unpack(best.argmax, fit.kernel, fit.noise);
  fit.log_likelihood = best.value;
  fit.evaluations = best.evaluations;
  return fit;
}

}  // namespace mfbo
