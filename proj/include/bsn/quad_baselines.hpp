#pragma once

#include <optional>
#include <span>

#include "bsn/numkit.hpp"

namespace bsn::quad {

/// Squared-exponential kernel in the convention
///   k(x, y) = amplitude * exp(-|x-y|^2 / lengthscale^2).
/// (The truncated-Gaussian embedding below uses the exp(-r^2/(2 l^2))
/// convention internally; bq_estimate converts at the boundary.)
struct RbfKernel {
  double amplitude = 1.0;
  double lengthscale = 1.0;
};

struct McResult {
  double mean;
  double std_error;  ///< sqrt(sample variance / n)
};

/// Sample mean and standard error of integrand values; requires n >= 2.
McResult mc_estimate(std::span<const double> values);

double rbf_kernel_eval(const RbfKernel& k, std::span<const double> x, std::span<const double> y);

/// Gram matrix of the RBF kernel. OpenMP over rows; serial reference kept
/// for testing.
numkit::Matrix gram_rbf(const numkit::Matrix& x, const RbfKernel& k);
numkit::Matrix gram_rbf_reference(const numkit::Matrix& x, const RbfKernel& k);

/// Kernel mean embedding Pi[k(., x)] for pi = N(0, sigma_pi^2 I).
double rbf_embedding_gaussian(const RbfKernel& k, double sigma_pi, std::span<const double> x);

/// Initial error PiPi[k] = integral of k against pi twice, pi = N(0, sigma_pi^2 I).
double rbf_initial_error_gaussian(const RbfKernel& k, double sigma_pi, int dim);

/// Mean embedding of k(t, x) = exp(-(t-x)^2 / (2 l^2)) — note the 2 l^2
/// convention — against N(mu, sigma^2) truncated to [lower, upper]. Throws
/// DegenerateIntervalError when the interval mass underflows.
double truncated_gaussian_embedding(double lengthscale, double mu, double sigma, double lower,
                                    double upper, double x);

/// Mean embedding of the Matern-1/2 kernel k(t, x) = exp(-|t-x|/l) against
/// N(0, 1); evaluated in log space so it stays finite for any x.
double matern_half_embedding(double lengthscale, double x);

/// Exponential (Matern-1/2) kernel amplitude * exp(-|x-y|/l), 1-D gram.
numkit::Matrix gram_matern_half(const numkit::Matrix& x, const RbfKernel& k);

struct BqProblem {
  enum class Kind { GaussianIso, TruncatedGaussian1D, MaternHalf1D };
  Kind kind = Kind::GaussianIso;
  double sigma_pi = 1.0;                                     ///< GaussianIso: pi = N(0, sigma_pi^2 I)
  double mu = 0.0, sigma = 1.0, lower = -1.0, upper = 1.0;   ///< TruncatedGaussian1D parameters

  static BqProblem gaussian_iso(double sigma_pi = 1.0);
  static BqProblem truncated(double mu, double sigma, double lower, double upper);
  static BqProblem matern_half();  ///< pi = N(0,1), d = 1
};

struct BqConfig {
  RbfKernel kernel{};                    ///< used as-is when the grid search is off
  bool optimize_hyperparameters = true;  ///< log-marginal-likelihood grid: 25 lengthscales x 10 amplitudes
  double relative_jitter = 1e-8;         ///< K = amplitude * (K_unit + jitter * I)
  int max_lml_points = 1024;             ///< deterministic stride subsample cap for the grid search
};

struct BqPosterior {
  double mean = 0.0;
  std::optional<double> variance;  ///< absent when PiPi[k] has no closed form (truncated, Matern)
  RbfKernel kernel;                ///< hyperparameters actually used
};

/// Gaussian-process quadrature with zero prior mean: posterior mean
/// z^T K^{-1} y and, when available, variance PiPi[k] - z^T K^{-1} z with
/// z_i = Pi[k(., x_i)].
BqPosterior bq_estimate(const numkit::Matrix& x, std::span<const double> y,
                        const BqProblem& problem, const BqConfig& config = {});

/// GP posterior mean at evaluation points (interpolation diagnostics).
numkit::Vector gp_posterior_mean(const numkit::Matrix& x_train, std::span<const double> y,
                                 const RbfKernel& k, double relative_jitter,
                                 const numkit::Matrix& x_eval);

/// Canonical Stein kernel built from the RBF base kernel and score vectors:
///   k0(x,y) = k [2d/l^2 - 4 r^2/l^4] + (2/l^2)(x-y).(s(x) - s(y)) k + k s(x).s(y).
double stein_kernel_eval(const RbfKernel& k, std::span<const double> x, std::span<const double> sx,
                         std::span<const double> y, std::span<const double> sy);

numkit::Matrix gram_stein(const numkit::Matrix& x, const numkit::Matrix& scores, const RbfKernel& k);
numkit::Matrix gram_stein_reference(const numkit::Matrix& x, const numkit::Matrix& scores,
                                    const RbfKernel& k);

struct SteinCfConfig {
  RbfKernel kernel{};
  bool optimize_hyperparameters = true;
  double regularizer = 1e-3;  ///< lambda; the solve uses K0 + n*lambda*amplitude*I
  int max_lml_points = 1024;
};

struct SteinCfResult {
  double estimate = 0.0;
  RbfKernel kernel;
};

/// Control-functional estimate 1^T (K0 + n lambda A I)^{-1} y / 1^T (...)^{-1} 1.
/// Throws DegenerateDenominatorError when the denominator underflows.
SteinCfResult stein_cf_estimate(const numkit::Matrix& x, std::span<const double> y,
                                const numkit::Matrix& scores, const SteinCfConfig& config = {});

/// The ratio estimate from an explicitly regularized Gram matrix (exposed for
/// hand-checkable tests).
double ratio_estimate(const numkit::Matrix& k0_regularized, std::span<const double> y);

}  // namespace bsn::quad
