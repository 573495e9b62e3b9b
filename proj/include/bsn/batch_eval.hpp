#pragma once

#include <span>

#include "bsn/mlp.hpp"
#include "bsn/numkit.hpp"
#include "bsn/stein.hpp"

namespace bsn::net {

/// Regression inputs: rows of x paired with integrand values y.
struct TrainingSet {
  numkit::Matrix x;  ///< n x d
  numkit::Vector y;  ///< n
};

/// Training data augmented with the per-point Stein coefficient fields
///   g_theta(x_i) = dot(a_i, u_theta(x_i)) + dot(w_i, diag J_u(x_i)) + theta0.
/// a and w depend only on the point, score, diffusion, and bounds, so they
/// are computed once and shared by every loss/gradient/Jacobian evaluation.
struct PreparedDataset {
  numkit::Matrix x;        ///< n x d
  numkit::Matrix coeff_a;  ///< n x d
  numkit::Matrix coeff_w;  ///< n x d
  numkit::Vector y;        ///< n (may be empty for identity-check uses)

  std::size_t size() const { return x.rows(); }
  int dim() const { return static_cast<int>(x.cols()); }
};

PreparedDataset prepare_dataset(const stein::SteinModel& model, const TrainingSet& data);
PreparedDataset prepare_points(const stein::SteinModel& model, const numkit::Matrix& x);

/// g_theta at every dataset row. OpenMP over point blocks; output rows are
/// written independently, so the result is identical for any thread count.
numkit::Vector batch_model_values(const MlpConfig& cfg, std::span<const double> params,
                                  const PreparedDataset& data);

/// Mean squared residual plus lambda * |params|^2 (theta0 included in both
/// the parameter vector and the penalty).
double batch_loss(const MlpConfig& cfg, std::span<const double> params, const PreparedDataset& data,
                  double lambda);

/// Loss and its exact parameter gradient. Per-block partial gradients are
/// reduced in fixed block order, so results are bit-stable for any thread
/// count. Throws NonFiniteGradientError if the loss or gradient is NaN/Inf.
double batch_loss_gradient(const MlpConfig& cfg, std::span<const double> params,
                           const PreparedDataset& data, double lambda, std::span<double> grad_out);

/// Serial per-point references for the kernels above; an independent code
/// path (matrix-based, no blocking) kept for testing and benchmarking.
double loss_reference(const MlpConfig& cfg, std::span<const double> params,
                      const PreparedDataset& data, double lambda);
double loss_gradient_reference(const MlpConfig& cfg, std::span<const double> params,
                               const PreparedDataset& data, double lambda, std::span<double> grad_out);
numkit::Vector model_values_reference(const MlpConfig& cfg, std::span<const double> params,
                                      const PreparedDataset& data);

/// d g_theta(x) / d theta at a single point; length p+1, index 0 is theta0.
void param_jacobian_row(const MlpConfig& cfg, std::span<const double> params,
                        std::span<const double> x, std::span<const double> coeff_a,
                        std::span<const double> coeff_w, std::span<double> row_out);

/// All Jacobian rows, n x (p+1). OpenMP over point blocks.
numkit::Matrix param_jacobian(const MlpConfig& cfg, std::span<const double> params,
                              const PreparedDataset& data);

/// Model-level wrappers (pack the model parameters per call).
double loss(const stein::SteinModel& model, const TrainingSet& data, double lambda);
double loss_gradient(const stein::SteinModel& model, const TrainingSet& data, double lambda,
                     std::span<double> grad_out);

}  // namespace bsn::net
