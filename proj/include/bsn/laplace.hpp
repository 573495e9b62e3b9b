#pragma once

#include <span>

#include "bsn/batch_eval.hpp"
#include "bsn/numkit.hpp"

namespace bsn::laplace {

/// Generalized Gauss-Newton matrix H = (1/sigma2) * sum_i J_i J_i^T where
/// J_i = d g_theta(x_i) / d theta (length p+1, leading entry 1 for theta0).
/// OpenMP-parallel over output blocks; each entry is accumulated over data
/// rows in a fixed order, so the result is identical for any thread count.
numkit::Matrix build_ggn(const net::MlpConfig& cfg, std::span<const double> params,
                         const net::PreparedDataset& data, double sigma2);

/// Serial per-row outer-product reference for build_ggn.
numkit::Matrix build_ggn_reference(const net::MlpConfig& cfg, std::span<const double> params,
                                   const net::PreparedDataset& data, double sigma2);

/// Log evidence of the linearized model:
///   -n/2 log(2 pi sigma2) - (1/2 sigma2) sum r_i^2 - (1/2 sigma0_sq) |theta|^2
///   - 1/2 log det(H + I/sigma0_sq) - (p+1)/2 log sigma0_sq.
/// Factorizes H + I/sigma0_sq internally.
double log_evidence(const numkit::Matrix& h_ggn, double sum_sq_residuals, double theta_sq_norm,
                    std::size_t n, double sigma2, double sigma0_sq);

/// Marginal posterior variance of theta0: first diagonal entry of
/// (H + I/sigma0_sq)^{-1}, via a Cholesky solve of the unit basis vector.
double posterior_theta0_variance(const numkit::Matrix& h_ggn, double sigma0_sq);

/// The fixed logarithmic grid {1e-4, 1e-3, ..., 1e4} searched for sigma0_sq.
numkit::Vector default_sigma0_grid();

struct LaplacePosterior {
  double sigma2 = 0.0;           ///< observation noise, max(mean sq residual, 1e-12)
  double sigma0_sq = 0.0;        ///< prior variance selected by evidence maximization
  double log_evidence = 0.0;     ///< evidence at the selected hyperparameters
  double theta0_mean = 0.0;      ///< the MAP integral estimate itself
  double theta0_variance = 0.0;  ///< in (0, sigma0_sq]
};

/// Full pipeline at the MAP parameters: residuals -> sigma2 (floored at
/// 1e-12) -> GGN -> evidence grid over sigma0_sq (ties broken toward the
/// smaller value) -> theta0 variance at the winner.
LaplacePosterior laplace_posterior(const net::MlpConfig& cfg, std::span<const double> params,
                                   const net::PreparedDataset& data,
                                   std::span<const double> sigma0_grid = {});

}  // namespace bsn::laplace
