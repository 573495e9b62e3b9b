#include "bsn/quad_baselines.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <vector>

#include "bsn/errors.hpp"

namespace bsn::quad {
namespace {

constexpr double kLog2Pi = 1.8378770664093454836;
constexpr double kSqrt2Pi = 2.5066282746310005024;

/// log P(Z > z) for a standard normal, finite for any z. Below the switch
/// point erfc is exact; above it (where erfc would still be representable but
/// the probes never go) the standard continued asymptotic expansion carries
/// ~1e-11 relative error.
double log_normal_sf(double z) {
  if (z <= 37.0) {
    return std::log(0.5 * std::erfc(z / std::sqrt(2.0)));
  }
  const double z2 = z * z;
  const double series = -1.0 / z2 + 3.0 / (z2 * z2) - 15.0 / (z2 * z2 * z2);
  return -0.5 * z2 - 0.5 * kLog2Pi - std::log(z) + std::log1p(series);
}

double log_normal_cdf_stable(double z) { return log_normal_sf(-z); }

double squared_distance(std::span<const double> x, std::span<const double> y) {
  double r2 = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double d = x[i] - y[i];
    r2 += d * d;
  }
  return r2;
}

void check_kernel(const RbfKernel& k) {
  if (!(k.amplitude > 0.0) || !(k.lengthscale > 0.0)) {
    throw ConfigError("kernel hyperparameters must be positive");
  }
}

/// Fills the Gram matrix using `entry(i, j)`; each (i, j) pair is owned by the
/// row max(i, j), so parallel rows write disjoint elements and the result is
/// schedule-independent.
template <typename EntryFn>
numkit::Matrix build_gram(int n, EntryFn&& entry) {
  numkit::Matrix gram(static_cast<std::size_t>(n), static_cast<std::size_t>(n));
#pragma omp parallel for schedule(dynamic, 8)
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j <= i; ++j) {
      const double value = entry(i, j);
      gram(i, j) = value;
      gram(j, i) = value;
    }
  }
  return gram;
}

struct SubsampledData {
  numkit::Matrix x;
  std::vector<double> y;
};

/// Deterministic stride subsample: index k of m maps to floor(k*n/m).
SubsampledData stride_subsample(const numkit::Matrix& x, std::span<const double> y,
                                int max_points) {
  const int n = static_cast<int>(x.rows());
  const int m = std::min(n, std::max(1, max_points));
  SubsampledData out{numkit::Matrix(static_cast<std::size_t>(m), x.cols()),
                     std::vector<double>(static_cast<std::size_t>(m))};
  for (int k = 0; k < m; ++k) {
    const int idx = static_cast<int>((static_cast<long long>(k) * n) / m);
    for (std::size_t c = 0; c < x.cols(); ++c) out.x(k, c) = x(idx, c);
    out.y[static_cast<std::size_t>(k)] = y[static_cast<std::size_t>(idx)];
  }
  return out;
}

std::vector<double> log_space(double lo_exp, double hi_exp, int count) {
  std::vector<double> values(static_cast<std::size_t>(count));
  for (int i = 0; i < count; ++i) {
    const double t = count == 1 ? 0.0 : static_cast<double>(i) / (count - 1);
    values[static_cast<std::size_t>(i)] = std::pow(10.0, lo_exp + t * (hi_exp - lo_exp));
  }
  return values;
}

double sample_variance_floor(std::span<const double> y) {
  double mean = 0.0;
  for (double v : y) mean += v;
  mean /= static_cast<double>(y.size());
  double var = 0.0;
  for (double v : y) var += (v - mean) * (v - mean);
  var /= static_cast<double>(y.size());
  return std::max(var, 1e-12);
}

using UnitGramFn = std::function<numkit::Matrix(const numkit::Matrix&, double)>;

/// Grid search over 25 lengthscales x 10 amplitudes maximizing the GP log
/// marginal likelihood. The amplitude factors out of the kernel,
/// K = A (K_unit + shift I), so each lengthscale costs one factorization:
///   lml(A) = -q/(2A) - (n log A + logdet(K_unit + shift I))/2 - n/2 log 2pi,
/// with q = y^T (K_unit + shift I)^{-1} y. Ties keep the earlier grid point
/// (smaller lengthscale, then smaller amplitude).
RbfKernel lml_grid_search(const numkit::Matrix& x, std::span<const double> y,
                          const UnitGramFn& unit_gram, double diag_shift) {
  const int n = static_cast<int>(x.rows());
  const std::vector<double> lengthscales = log_space(-1.0, 1.5, 25);
  const double y_scale = sample_variance_floor(y);
  std::vector<double> amplitudes = log_space(-2.0, 2.0, 10);
  for (double& a : amplitudes) a *= y_scale;

  RbfKernel best{amplitudes.front(), lengthscales.front()};
  double best_lml = -std::numeric_limits<double>::infinity();
  for (double ell : lengthscales) {
    numkit::Matrix gram = unit_gram(x, ell);
    for (int i = 0; i < n; ++i) gram(i, i) += diag_shift;
    const numkit::CholeskyResult factor = numkit::cholesky(gram);
    const double logdet = numkit::log_det_from_factor(factor.lower);
    std::vector<double> half(static_cast<std::size_t>(n));
    numkit::solve_lower(factor.lower, y, half);
    double q = 0.0;
    for (double h : half) q += h * h;
    for (double amp : amplitudes) {
      const double lml = -0.5 * q / amp - 0.5 * (n * std::log(amp) + logdet) -
                         0.5 * static_cast<double>(n) * kLog2Pi;
      if (lml > best_lml) {
        best_lml = lml;
        best = RbfKernel{amp, ell};
      }
    }
  }
  return best;
}

double interval_mass(double mu, double sigma, double lower, double upper) {
  return numkit::normal_cdf((upper - mu) / sigma) - numkit::normal_cdf((lower - mu) / sigma);
}

}  // namespace

McResult mc_estimate(std::span<const double> values) {
  const std::size_t n = values.size();
  if (n < 2) throw DimensionMismatchError("mc_estimate: need at least two values");
  double mean = 0.0;
  for (double v : values) mean += v;
  mean /= static_cast<double>(n);
  double ss = 0.0;
  for (double v : values) ss += (v - mean) * (v - mean);
  const double variance = ss / static_cast<double>(n - 1);
  return McResult{mean, std::sqrt(variance / static_cast<double>(n))};
}

double rbf_kernel_eval(const RbfKernel& k, std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size()) throw DimensionMismatchError("rbf_kernel_eval: size mismatch");
  check_kernel(k);
  const double l2 = k.lengthscale * k.lengthscale;
  return k.amplitude * std::exp(-squared_distance(x, y) / l2);
}

numkit::Matrix gram_rbf(const numkit::Matrix& x, const RbfKernel& k) {
  check_kernel(k);
  const double l2 = k.lengthscale * k.lengthscale;
  return build_gram(static_cast<int>(x.rows()), [&](int i, int j) {
    return k.amplitude * std::exp(-squared_distance(x.row_span(i), x.row_span(j)) / l2);
  });
}

numkit::Matrix gram_rbf_reference(const numkit::Matrix& x, const RbfKernel& k) {
  check_kernel(k);
  numkit::Matrix gram(x.rows(), x.rows());
  for (std::size_t i = 0; i < x.rows(); ++i) {
    for (std::size_t j = 0; j < x.rows(); ++j) {
      gram(i, j) = rbf_kernel_eval(k, x.row_span(i), x.row_span(j));
    }
  }
  return gram;
}

double rbf_embedding_gaussian(const RbfKernel& k, double sigma_pi, std::span<const double> x) {
  check_kernel(k);
  if (!(sigma_pi > 0.0)) throw DomainError("rbf_embedding_gaussian: sigma must be positive");
  const double s2 = 0.5 * k.lengthscale * k.lengthscale;
  const double v = s2 + sigma_pi * sigma_pi;
  double log_value = std::log(k.amplitude);
  for (double xi : x) {
    log_value += 0.5 * std::log(s2 / v) - xi * xi / (2.0 * v);
  }
  return std::exp(log_value);
}

double rbf_initial_error_gaussian(const RbfKernel& k, double sigma_pi, int dim) {
  check_kernel(k);
  if (!(sigma_pi > 0.0)) throw DomainError("rbf_initial_error_gaussian: sigma must be positive");
  if (dim < 1) throw DimensionMismatchError("rbf_initial_error_gaussian: dim must be positive");
  const double s2 = 0.5 * k.lengthscale * k.lengthscale;
  return k.amplitude * std::pow(s2 / (s2 + 2.0 * sigma_pi * sigma_pi), 0.5 * dim);
}

double truncated_gaussian_embedding(double lengthscale, double mu, double sigma, double lower,
                                    double upper, double x) {
  if (!(lengthscale > 0.0) || !(sigma > 0.0)) {
    throw DomainError("truncated_gaussian_embedding: lengthscale and sigma must be positive");
  }
  if (!(lower < upper)) {
    throw DomainError("truncated_gaussian_embedding: interval must be nonempty");
  }
  const double mass = interval_mass(mu, sigma, lower, upper);
  if (!(mass >= 1e-300)) {
    throw DegenerateIntervalError("truncated_gaussian_embedding: interval mass underflows");
  }
  const double l2 = lengthscale * lengthscale;
  const double v = sigma * sigma + l2;
  const double density = std::exp(-(x - mu) * (x - mu) / (2.0 * v)) / std::sqrt(2.0 * M_PI * v);
  const double mu_post = (mu * l2 + x * sigma * sigma) / v;
  const double sigma_post = sigma * lengthscale / std::sqrt(v);
  const double mass_post = interval_mass(mu_post, sigma_post, lower, upper);
  return lengthscale * kSqrt2Pi * density * mass_post / mass;
}

double matern_half_embedding(double lengthscale, double x) {
  if (!(lengthscale > 0.0)) {
    throw DomainError("matern_half_embedding: lengthscale must be positive");
  }
  const double inv_l = 1.0 / lengthscale;
  const double half_inv_l2 = 0.5 * inv_l * inv_l;
  const double left = std::exp(half_inv_l2 - x * inv_l + log_normal_cdf_stable(x - inv_l));
  const double right = std::exp(half_inv_l2 + x * inv_l + log_normal_sf(x + inv_l));
  return left + right;
}

numkit::Matrix gram_matern_half(const numkit::Matrix& x, const RbfKernel& k) {
  check_kernel(k);
  return build_gram(static_cast<int>(x.rows()), [&](int i, int j) {
    const double r = std::sqrt(squared_distance(x.row_span(i), x.row_span(j)));
    return k.amplitude * std::exp(-r / k.lengthscale);
  });
}

BqProblem BqProblem::gaussian_iso(double sigma_pi) {
  BqProblem p;
  p.kind = Kind::GaussianIso;
  p.sigma_pi = sigma_pi;
  return p;
}

BqProblem BqProblem::truncated(double mu, double sigma, double lower, double upper) {
  BqProblem p;
  p.kind = Kind::TruncatedGaussian1D;
  p.mu = mu;
  p.sigma = sigma;
  p.lower = lower;
  p.upper = upper;
  return p;
}

BqProblem BqProblem::matern_half() {
  BqProblem p;
  p.kind = Kind::MaternHalf1D;
  return p;
}

BqPosterior bq_estimate(const numkit::Matrix& x, std::span<const double> y,
                        const BqProblem& problem, const BqConfig& config) {
  const int n = static_cast<int>(x.rows());
  if (n < 1) throw DimensionMismatchError("bq_estimate: need at least one point");
  if (y.size() != x.rows()) throw DimensionMismatchError("bq_estimate: x/y size mismatch");
  const int dim = static_cast<int>(x.cols());
  if (problem.kind != BqProblem::Kind::GaussianIso && dim != 1) {
    throw DimensionMismatchError("bq_estimate: this measure is one-dimensional");
  }

  const bool matern = problem.kind == BqProblem::Kind::MaternHalf1D;
  const UnitGramFn unit_gram = [matern](const numkit::Matrix& pts, double ell) {
    const RbfKernel unit{1.0, ell};
    return matern ? gram_matern_half(pts, unit) : gram_rbf(pts, unit);
  };

  RbfKernel kernel = config.kernel;
  if (config.optimize_hyperparameters) {
    const SubsampledData sub = stride_subsample(x, y, config.max_lml_points);
    kernel = lml_grid_search(sub.x, sub.y, unit_gram, config.relative_jitter);
  } else {
    check_kernel(kernel);
  }

  numkit::Matrix gram = unit_gram(x, kernel.lengthscale);
  for (int i = 0; i < n; ++i) gram(i, i) += config.relative_jitter;
  // Amplitude cancels in the posterior mean; keep the unit-gram solve and
  // reintroduce it only where it matters (the variance).
  const numkit::CholeskyResult factor = numkit::cholesky(gram);

  std::vector<double> z(static_cast<std::size_t>(n));
  const RbfKernel unit_kernel{1.0, kernel.lengthscale};
  for (int i = 0; i < n; ++i) {
    switch (problem.kind) {
      case BqProblem::Kind::GaussianIso:
        z[static_cast<std::size_t>(i)] =
            rbf_embedding_gaussian(unit_kernel, problem.sigma_pi, x.row_span(i));
        break;
      case BqProblem::Kind::TruncatedGaussian1D:
        // Convert lengthscale conventions: exp(-r^2/l^2) = exp(-r^2/(2 (l/sqrt2)^2)).
        z[static_cast<std::size_t>(i)] =
            truncated_gaussian_embedding(kernel.lengthscale / std::sqrt(2.0), problem.mu,
                                         problem.sigma, problem.lower, problem.upper, x(i, 0));
        break;
      case BqProblem::Kind::MaternHalf1D:
        z[static_cast<std::size_t>(i)] = matern_half_embedding(kernel.lengthscale, x(i, 0));
        break;
    }
  }

  const numkit::Vector weights = numkit::solve_with_factor(factor.lower, z);
  BqPosterior posterior;
  posterior.kernel = kernel;
  posterior.mean = 0.0;
  for (int i = 0; i < n; ++i) {
    posterior.mean += weights[static_cast<std::size_t>(i)] * y[static_cast<std::size_t>(i)];
  }

  if (problem.kind == BqProblem::Kind::GaussianIso) {
    double quad_form = 0.0;
    for (int i = 0; i < n; ++i) {
      quad_form += weights[static_cast<std::size_t>(i)] * z[static_cast<std::size_t>(i)];
    }
    const double initial =
        rbf_initial_error_gaussian(unit_kernel, problem.sigma_pi, dim);
    posterior.variance = kernel.amplitude * std::max(0.0, initial - quad_form);
  }
  return posterior;
}

numkit::Vector gp_posterior_mean(const numkit::Matrix& x_train, std::span<const double> y,
                                 const RbfKernel& k, double relative_jitter,
                                 const numkit::Matrix& x_eval) {
  if (y.size() != x_train.rows()) throw DimensionMismatchError("gp_posterior_mean: x/y mismatch");
  if (x_eval.cols() != x_train.cols()) throw DimensionMismatchError("gp_posterior_mean: dim mismatch");
  numkit::Matrix gram = gram_rbf(x_train, k);
  for (std::size_t i = 0; i < x_train.rows(); ++i) gram(i, i) += k.amplitude * relative_jitter;
  const numkit::CholeskyResult factor = numkit::cholesky(gram);
  const numkit::Vector alpha = numkit::solve_with_factor(factor.lower, y);
  numkit::Vector out(x_eval.rows(), 0.0);
  for (std::size_t e = 0; e < x_eval.rows(); ++e) {
    double acc = 0.0;
    for (std::size_t i = 0; i < x_train.rows(); ++i) {
      acc += rbf_kernel_eval(k, x_eval.row_span(e), x_train.row_span(i)) * alpha[i];
    }
    out[e] = acc;
  }
  return out;
}

double stein_kernel_eval(const RbfKernel& k, std::span<const double> x, std::span<const double> sx,
                         std::span<const double> y, std::span<const double> sy) {
  const std::size_t d = x.size();
  if (sx.size() != d || y.size() != d || sy.size() != d) {
    throw DimensionMismatchError("stein_kernel_eval: size mismatch");
  }
  check_kernel(k);
  const double l2 = k.lengthscale * k.lengthscale;
  const double r2 = squared_distance(x, y);
  const double base = k.amplitude * std::exp(-r2 / l2);
  double diff_dot_sx = 0.0;
  double diff_dot_sy = 0.0;
  double score_dot = 0.0;
  for (std::size_t i = 0; i < d; ++i) {
    const double diff = x[i] - y[i];
    diff_dot_sx += diff * sx[i];
    diff_dot_sy += diff * sy[i];
    score_dot += sx[i] * sy[i];
  }
  const double laplacian_part = 2.0 * static_cast<double>(d) / l2 - 4.0 * r2 / (l2 * l2);
  return base * (laplacian_part + (2.0 / l2) * (diff_dot_sx - diff_dot_sy) + score_dot);
}

numkit::Matrix gram_stein(const numkit::Matrix& x, const numkit::Matrix& scores,
                          const RbfKernel& k) {
  if (scores.rows() != x.rows() || scores.cols() != x.cols()) {
    throw DimensionMismatchError("gram_stein: score shape mismatch");
  }
  check_kernel(k);
  return build_gram(static_cast<int>(x.rows()), [&](int i, int j) {
    return stein_kernel_eval(k, x.row_span(i), scores.row_span(i), x.row_span(j),
                             scores.row_span(j));
  });
}

numkit::Matrix gram_stein_reference(const numkit::Matrix& x, const numkit::Matrix& scores,
                                    const RbfKernel& k) {
  if (scores.rows() != x.rows() || scores.cols() != x.cols()) {
    throw DimensionMismatchError("gram_stein_reference: score shape mismatch");
  }
  numkit::Matrix gram(x.rows(), x.rows());
  for (std::size_t i = 0; i < x.rows(); ++i) {
    for (std::size_t j = 0; j < x.rows(); ++j) {
      gram(i, j) = stein_kernel_eval(k, x.row_span(i), scores.row_span(i), x.row_span(j),
                                     scores.row_span(j));
    }
  }
  return gram;
}

double ratio_estimate(const numkit::Matrix& k0_regularized, std::span<const double> y) {
  const std::size_t n = k0_regularized.rows();
  if (y.size() != n) throw DimensionMismatchError("ratio_estimate: size mismatch");
  const numkit::CholeskyResult factor = numkit::cholesky(k0_regularized);
  const std::vector<double> ones(n, 1.0);
  const numkit::Vector weights = numkit::solve_with_factor(factor.lower, ones);
  double denominator = 0.0;
  double numerator = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    denominator += weights[i];
    numerator += weights[i] * y[i];
  }
  if (std::abs(denominator) < 1e-12) {
    throw DegenerateDenominatorError("ratio_estimate: 1^T K^{-1} 1 is numerically zero");
  }
  return numerator / denominator;
}

SteinCfResult stein_cf_estimate(const numkit::Matrix& x, std::span<const double> y,
                                const numkit::Matrix& scores, const SteinCfConfig& config) {
  const int n = static_cast<int>(x.rows());
  if (n < 1) throw DimensionMismatchError("stein_cf_estimate: need at least one point");
  if (y.size() != x.rows()) throw DimensionMismatchError("stein_cf_estimate: x/y size mismatch");
  if (scores.rows() != x.rows() || scores.cols() != x.cols()) {
    throw DimensionMismatchError("stein_cf_estimate: score shape mismatch");
  }
  if (!(config.regularizer > 0.0)) throw ConfigError("stein_cf_estimate: regularizer must be positive");

  RbfKernel kernel = config.kernel;
  if (config.optimize_hyperparameters) {
    const SubsampledData sub_x = stride_subsample(x, y, config.max_lml_points);
    const SubsampledData sub_s = stride_subsample(scores, y, config.max_lml_points);
    const UnitGramFn unit_gram = [&sub_s](const numkit::Matrix& pts, double ell) {
      return gram_stein(pts, sub_s.x, RbfKernel{1.0, ell});
    };
    const double shift = static_cast<double>(sub_x.x.rows()) * config.regularizer;
    kernel = lml_grid_search(sub_x.x, sub_x.y, unit_gram, shift);
  } else {
    check_kernel(kernel);
  }

  numkit::Matrix gram = gram_stein(x, scores, kernel);
  const double shift = static_cast<double>(n) * config.regularizer * kernel.amplitude;
  for (int i = 0; i < n; ++i) gram(i, i) += shift;
  return SteinCfResult{ratio_estimate(gram, y), kernel};
}

}  // namespace bsn::quad
