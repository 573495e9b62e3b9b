#include "bsn/numkit.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "bsn/errors.hpp"

namespace bsn::numkit {

namespace {

constexpr std::size_t kBlock = 64;

// Copies the lower triangle of `a` into `l` and adds `jitter` to the diagonal.
void load_lower(const Matrix& a, Matrix& l, double jitter) {
  const std::size_t n = a.rows();
  for (std::size_t i = 0; i < n; ++i) {
    const double* src = a.row(i);
    double* dst = l.row(i);
    std::copy(src, src + i + 1, dst);
    std::fill(dst + i + 1, dst + n, 0.0);
    dst[i] += jitter;
  }
}

double dot_raw(const double* a, const double* b, std::size_t n) {
  double s = 0.0;
#pragma omp simd reduction(+ : s)
  for (std::size_t k = 0; k < n; ++k) s += a[k] * b[k];
  return s;
}

// Unblocked factorization of the leading block rows [k0, k0+kb) assuming all
// columns < k0 have already been eliminated. Returns the failing pivot index
// or -1 on success.
long factor_diag_block(Matrix& l, std::size_t k0, std::size_t kb) {
  for (std::size_t j = k0; j < k0 + kb; ++j) {
    double* lj = l.row(j);
    double pivot = lj[j] - dot_raw(lj + k0, lj + k0, j - k0);
    if (!(pivot > 0.0) || !std::isfinite(pivot)) return static_cast<long>(j);
    pivot = std::sqrt(pivot);
    lj[j] = pivot;
    const double inv = 1.0 / pivot;
    for (std::size_t i = j + 1; i < k0 + kb; ++i) {
      double* li = l.row(i);
      li[j] = (li[j] - dot_raw(li + k0, lj + k0, j - k0)) * inv;
    }
  }
  return -1;
}

// One full blocked attempt at a fixed jitter. Returns failing pivot or -1.
long factor_attempt_blocked(const Matrix& a, Matrix& l, double jitter) {
  const std::size_t n = a.rows();
  load_lower(a, l, jitter);
  for (std::size_t k0 = 0; k0 < n; k0 += kBlock) {
    const std::size_t kb = std::min(kBlock, n - k0);
    const long bad = factor_diag_block(l, k0, kb);
    if (bad >= 0) return bad;
    const std::size_t r0 = k0 + kb;
    // Panel solve: rows below the diagonal block against L11^T.
#pragma omp parallel for schedule(static)
    for (long ii = static_cast<long>(r0); ii < static_cast<long>(n); ++ii) {
      const auto i = static_cast<std::size_t>(ii);
      double* li = l.row(i);
      for (std::size_t j = k0; j < r0; ++j) {
        const double* lj = l.row(j);
        li[j] = (li[j] - dot_raw(li + k0, lj + k0, j - k0)) / lj[j];
      }
    }
    // Trailing update: A22 -= L21 * L21^T, lower triangle only.
#pragma omp parallel for schedule(dynamic, 16)
    for (long ii = static_cast<long>(r0); ii < static_cast<long>(n); ++ii) {
      const auto i = static_cast<std::size_t>(ii);
      double* li = l.row(i);
      for (std::size_t j = r0; j <= i; ++j) {
        li[j] -= dot_raw(li + k0, l.row(j) + k0, kb);
      }
    }
  }
  return -1;
}

long factor_attempt_serial(const Matrix& a, Matrix& l, double jitter) {
  const std::size_t n = a.rows();
  load_lower(a, l, jitter);
  for (std::size_t j = 0; j < n; ++j) {
    double* lj = l.row(j);
    double pivot = lj[j];
    for (std::size_t k = 0; k < j; ++k) pivot -= lj[k] * lj[k];
    if (!(pivot > 0.0) || !std::isfinite(pivot)) return static_cast<long>(j);
    lj[j] = std::sqrt(pivot);
    const double inv = 1.0 / lj[j];
    for (std::size_t i = j + 1; i < n; ++i) {
      double* li = l.row(i);
      double s = li[j];
      for (std::size_t k = 0; k < j; ++k) s -= li[k] * lj[k];
      li[j] = s * inv;
    }
  }
  return -1;
}

template <typename Attempt>
CholeskyResult cholesky_with_policy(const Matrix& a, const JitterPolicy& policy, Attempt attempt) {
  if (a.rows() != a.cols()) throw DimensionMismatchError("cholesky: matrix must be square");
  CholeskyResult result{Matrix(a.rows(), a.cols()), 0.0};
  long bad = attempt(a, result.lower, 0.0);
  if (bad < 0) return result;
  double pivot_value = result.lower(static_cast<std::size_t>(bad), static_cast<std::size_t>(bad));
  for (double jitter = policy.initial; jitter <= policy.max * (1.0 + 1e-12); jitter *= policy.factor) {
    bad = attempt(a, result.lower, jitter);
    if (bad < 0) {
      result.jitter_used = jitter;
      return result;
    }
    pivot_value = result.lower(static_cast<std::size_t>(bad), static_cast<std::size_t>(bad));
    if (jitter == 0.0) break;  // guards a degenerate policy with initial == 0
  }
  throw NotPositiveDefiniteError(static_cast<std::size_t>(bad), pivot_value, policy.max);
}

}  // namespace

CholeskyResult cholesky(const Matrix& a, const JitterPolicy& policy) {
  return cholesky_with_policy(a, policy, factor_attempt_blocked);
}

CholeskyResult cholesky_serial(const Matrix& a, const JitterPolicy& policy) {
  return cholesky_with_policy(a, policy, factor_attempt_serial);
}

void solve_lower(const Matrix& lower, std::span<const double> b, std::span<double> x) {
  const std::size_t n = lower.rows();
  if (b.size() != n || x.size() != n) throw DimensionMismatchError("solve_lower: size mismatch");
  for (std::size_t i = 0; i < n; ++i) {
    const double* li = lower.row(i);
    x[i] = (b[i] - dot_raw(li, x.data(), i)) / li[i];
  }
}

void solve_lower_transposed(const Matrix& lower, std::span<const double> b, std::span<double> x) {
  const std::size_t n = lower.rows();
  if (b.size() != n || x.size() != n) throw DimensionMismatchError("solve_lower_transposed: size mismatch");
  for (std::size_t ii = n; ii-- > 0;) {
    double s = b[ii];
    for (std::size_t k = ii + 1; k < n; ++k) s -= lower(k, ii) * x[k];
    x[ii] = s / lower(ii, ii);
  }
}

Vector solve_with_factor(const Matrix& lower, std::span<const double> b) {
  Vector tmp(lower.rows()), x(lower.rows());
  solve_lower(lower, b, tmp);
  solve_lower_transposed(lower, tmp, x);
  return x;
}

Vector solve_psd(const Matrix& a, std::span<const double> b, const JitterPolicy& policy) {
  return solve_with_factor(cholesky(a, policy).lower, b);
}

Matrix solve_psd(const Matrix& a, const Matrix& b, const JitterPolicy& policy) {
  if (a.rows() != b.rows()) throw DimensionMismatchError("solve_psd: row mismatch");
  const CholeskyResult chol = cholesky(a, policy);
  Matrix x(b.rows(), b.cols());
  Vector col(b.rows()), sol(b.rows());
  for (std::size_t j = 0; j < b.cols(); ++j) {
    for (std::size_t i = 0; i < b.rows(); ++i) col[i] = b(i, j);
    sol = solve_with_factor(chol.lower, col);
    for (std::size_t i = 0; i < b.rows(); ++i) x(i, j) = sol[i];
  }
  return x;
}

double log_det_from_factor(const Matrix& lower) {
  double s = 0.0;
  for (std::size_t i = 0; i < lower.rows(); ++i) s += std::log(lower(i, i));
  return 2.0 * s;
}

double erf_value(double x) { return std::erf(x); }

double normal_cdf(double x) { return 0.5 * std::erfc(-x * 0.7071067811865475244); }

double normal_cdf(double x, double mean, double stddev) { return normal_cdf((x - mean) / stddev); }

double normal_quantile(double p) {
  if (!(p > 0.0 && p < 1.0)) throw std::domain_error("normal_quantile: p must lie in (0, 1)");
  // Acklam's rational approximation, then one Halley step.
  static constexpr double a[] = {-3.969683028665376e+01, 2.209460984245205e+02, -2.759285104469687e+02,
                                 1.383577518672690e+02,  -3.066479806614716e+01, 2.506628277459239e+00};
  static constexpr double b[] = {-5.447609879822406e+01, 1.615858368580409e+02, -1.556989798598866e+02,
                                 6.680131188771972e+01, -1.328068155288572e+01};
  static constexpr double c[] = {-7.784894002430293e-03, -3.223964580411365e-01, -2.400758277161838e+00,
                                 -2.549732539343734e+00, 4.374664141464968e+00,  2.938163982698783e+00};
  static constexpr double d[] = {7.784695709041462e-03, 3.224671290700398e-01, 2.445134137142996e+00,
                                 3.754408661907416e+00};
  constexpr double p_low = 0.02425;
  double x;
  if (p < p_low) {
    const double q = std::sqrt(-2.0 * std::log(p));
    x = (((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
        ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
  } else if (p <= 1.0 - p_low) {
    const double q = p - 0.5;
    const double r = q * q;
    x = (((((a[0] * r + a[1]) * r + a[2]) * r + a[3]) * r + a[4]) * r + a[5]) * q /
        (((((b[0] * r + b[1]) * r + b[2]) * r + b[3]) * r + b[4]) * r + 1.0);
  } else {
    const double q = std::sqrt(-2.0 * std::log(1.0 - p));
    x = -(((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
        ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
  }
  const double e = normal_cdf(x) - p;
  const double u = e * std::sqrt(2.0 * 3.14159265358979323846) * std::exp(0.5 * x * x);
  x -= u / (1.0 + 0.5 * x * u);
  return x;
}

double dot(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw DimensionMismatchError("dot: size mismatch");
  return dot_raw(a.data(), b.data(), a.size());
}

double norm2(std::span<const double> a) { return std::sqrt(dot_raw(a.data(), a.data(), a.size())); }

double norm_inf(std::span<const double> a) {
  double m = 0.0;
  for (double v : a) m = std::max(m, std::abs(v));
  return m;
}

void axpy(double alpha, std::span<const double> x, std::span<double> y) {
  if (x.size() != y.size()) throw DimensionMismatchError("axpy: size mismatch");
  double* yp = y.data();
  const double* xp = x.data();
#pragma omp simd
  for (std::size_t i = 0; i < x.size(); ++i) yp[i] += alpha * xp[i];
}

}  // namespace bsn::numkit
