#pragma once

#include <cstddef>
#include <span>
#include <vector>

namespace bsn::numkit {

using Vector = std::vector<double>;

/// Row-major dense matrix of doubles. Rows are contiguous, so row spans can
/// be handed to vectorized kernels directly.
class Matrix {
 public:
  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols, double fill = 0.0)
      : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

  double& operator()(std::size_t i, std::size_t j) { return data_[i * cols_ + j]; }
  double operator()(std::size_t i, std::size_t j) const { return data_[i * cols_ + j]; }

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }

  double* data() { return data_.data(); }
  const double* data() const { return data_.data(); }
  double* row(std::size_t i) { return data_.data() + i * cols_; }
  const double* row(std::size_t i) const { return data_.data() + i * cols_; }
  std::span<double> row_span(std::size_t i) { return {row(i), cols_}; }
  std::span<const double> row_span(std::size_t i) const { return {row(i), cols_}; }

 private:
  std::size_t rows_ = 0, cols_ = 0;
  std::vector<double> data_;
};

/// Escalation ladder for the jittered Cholesky factorization. The first
/// attempt adds no jitter; on a nonpositive pivot the ladder retries with
/// `initial`, escalating by `factor` up to `max`, then throws
/// NotPositiveDefiniteError.
struct JitterPolicy {
  double initial = 1e-8;
  double factor = 10.0;
  double max = 1e-4;
};

struct CholeskyResult {
  Matrix lower;        ///< Lower-triangular factor L with A + jitter*I = L*L^T.
  double jitter_used;  ///< 0.0 when the matrix factored without perturbation.
};

/// Blocked right-looking Cholesky (OpenMP-parallel trailing updates).
CholeskyResult cholesky(const Matrix& a, const JitterPolicy& policy = {});

/// Unblocked textbook Cholesky; the serial reference for `cholesky`.
CholeskyResult cholesky_serial(const Matrix& a, const JitterPolicy& policy = {});

/// Solves L*x = b (forward substitution), L lower-triangular.
void solve_lower(const Matrix& lower, std::span<const double> b, std::span<double> x);

/// Solves L^T*x = b (backward substitution), L lower-triangular.
void solve_lower_transposed(const Matrix& lower, std::span<const double> b, std::span<double> x);

/// Solves A*x = b for symmetric positive definite A via jittered Cholesky.
Vector solve_psd(const Matrix& a, std::span<const double> b, const JitterPolicy& policy = {});

/// Solves A*X = B column-by-column for SPD A.
Matrix solve_psd(const Matrix& a, const Matrix& b, const JitterPolicy& policy = {});

/// Solves using an existing factor (no refactorization).
Vector solve_with_factor(const Matrix& lower, std::span<const double> b);

/// log(det(A)) = 2 * sum(log(diag(L))).
double log_det_from_factor(const Matrix& lower);

/// Error function to double precision (|err| < 1e-12 guaranteed, validated
/// against an independent high-precision oracle in the test suite).
double erf_value(double x);

/// Standard normal CDF.
double normal_cdf(double x);

/// Normal CDF with location/scale.
double normal_cdf(double x, double mean, double stddev);

/// Standard normal quantile (inverse CDF), accurate to ~1e-15 after a
/// Halley refinement of the Acklam initial estimate.
double normal_quantile(double p);

/// Dot product of equal-length spans.
double dot(std::span<const double> a, std::span<const double> b);

/// Euclidean norm.
double norm2(std::span<const double> a);

/// Max-norm.
double norm_inf(std::span<const double> a);

/// y += alpha * x.
void axpy(double alpha, std::span<const double> x, std::span<double> y);

}  // namespace bsn::numkit
