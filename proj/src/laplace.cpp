#include "bsn/laplace.hpp"

#include <cmath>

#include "bsn/errors.hpp"

namespace bsn::laplace {

namespace {
constexpr double kLog2Pi = 1.8378770664093454836;
constexpr std::size_t kColBlock = 64;
}  // namespace

numkit::Matrix build_ggn(const net::MlpConfig& cfg, std::span<const double> params,
                         const net::PreparedDataset& data, double sigma2) {
  if (!(sigma2 > 0.0)) throw DomainError("build_ggn: sigma2 must be positive");
  const numkit::Matrix jac = net::param_jacobian(cfg, params, data);
  const std::size_t n = jac.rows(), p = jac.cols();
  numkit::Matrix h(p, p);
  const double inv_s2 = 1.0 / sigma2;
  const std::size_t nblocks = (p + kColBlock - 1) / kColBlock;

  // Each (bi, bj) tile of H is owned by exactly one task and accumulates over
  // data rows in index order: deterministic for any thread count.
#pragma omp parallel for collapse(2) schedule(dynamic)
  for (std::size_t bi = 0; bi < nblocks; ++bi) {
    for (std::size_t bj = 0; bj < nblocks; ++bj) {
      if (bj > bi) continue;  // lower triangle only
      const std::size_t i0 = bi * kColBlock, i1 = std::min(i0 + kColBlock, p);
      const std::size_t j0 = bj * kColBlock, j1 = std::min(j0 + kColBlock, p);
      for (std::size_t r = 0; r < n; ++r) {
        const double* row = jac.row(r);
        for (std::size_t i = i0; i < i1; ++i) {
          const double ji = row[i];
          if (ji == 0.0) continue;
          double* hrow = h.row(i);
          const std::size_t jend = (bi == bj) ? std::min(i + 1, j1) : j1;
          for (std::size_t j = j0; j < jend; ++j) hrow[j] += ji * row[j];
        }
      }
    }
  }
  for (std::size_t i = 0; i < p; ++i)
    for (std::size_t j = 0; j <= i; ++j) {
      h(i, j) *= inv_s2;
      h(j, i) = h(i, j);
    }
  return h;
}

numkit::Matrix build_ggn_reference(const net::MlpConfig& cfg, std::span<const double> params,
                                   const net::PreparedDataset& data, double sigma2) {
  if (!(sigma2 > 0.0)) throw DomainError("build_ggn_reference: sigma2 must be positive");
  const std::size_t p = params.size();
  numkit::Matrix h(p, p);
  numkit::Vector row(p);
  for (std::size_t r = 0; r < data.size(); ++r) {
    net::param_jacobian_row(cfg, params, data.x.row_span(r), data.coeff_a.row_span(r),
                            data.coeff_w.row_span(r), row);
    for (std::size_t i = 0; i < p; ++i)
      for (std::size_t j = 0; j < p; ++j) h(i, j) += row[i] * row[j];
  }
  for (std::size_t i = 0; i < p; ++i)
    for (std::size_t j = 0; j < p; ++j) h(i, j) /= sigma2;
  return h;
}

namespace {

numkit::Matrix with_prior_precision(const numkit::Matrix& h_ggn, double sigma0_sq) {
  if (!(sigma0_sq > 0.0)) throw DomainError("laplace: sigma0_sq must be positive");
  numkit::Matrix a = h_ggn;
  const double prior_prec = 1.0 / sigma0_sq;
  for (std::size_t i = 0; i < a.rows(); ++i) a(i, i) += prior_prec;
  return a;
}

}  // namespace

double log_evidence(const numkit::Matrix& h_ggn, double sum_sq_residuals, double theta_sq_norm,
                    std::size_t n, double sigma2, double sigma0_sq) {
  const auto chol = numkit::cholesky(with_prior_precision(h_ggn, sigma0_sq));
  const double p1 = static_cast<double>(h_ggn.rows());
  return -0.5 * static_cast<double>(n) * (kLog2Pi + std::log(sigma2)) -
         0.5 * sum_sq_residuals / sigma2 - 0.5 * theta_sq_norm / sigma0_sq -
         0.5 * numkit::log_det_from_factor(chol.lower) - 0.5 * p1 * std::log(sigma0_sq);
}

double posterior_theta0_variance(const numkit::Matrix& h_ggn, double sigma0_sq) {
  const auto chol = numkit::cholesky(with_prior_precision(h_ggn, sigma0_sq));
  numkit::Vector e0(h_ggn.rows(), 0.0);
  e0[0] = 1.0;
  return numkit::solve_with_factor(chol.lower, e0)[0];
}

numkit::Vector default_sigma0_grid() {
  numkit::Vector grid;
  for (int e = -4; e <= 4; ++e) grid.push_back(std::pow(10.0, e));
  return grid;
}

LaplacePosterior laplace_posterior(const net::MlpConfig& cfg, std::span<const double> params,
                                   const net::PreparedDataset& data,
                                   std::span<const double> sigma0_grid) {
  const numkit::Vector default_grid = sigma0_grid.empty() ? default_sigma0_grid() : numkit::Vector{};
  const std::span<const double> grid =
      sigma0_grid.empty() ? std::span<const double>(default_grid) : sigma0_grid;

  const numkit::Vector values = net::batch_model_values(cfg, params, data);
  double ssr = 0.0;
  for (std::size_t i = 0; i < values.size(); ++i) {
    const double r = values[i] - data.y[i];
    ssr += r * r;
  }
  const std::size_t n = data.size();
  const double sigma2 = std::max(ssr / static_cast<double>(n), 1e-12);

  const numkit::Matrix h = build_ggn(cfg, params, data, sigma2);
  double theta_sq = 0.0;
  for (double t : params) theta_sq += t * t;

  LaplacePosterior post;
  post.sigma2 = sigma2;
  post.theta0_mean = params[0];
  bool first = true;
  for (double s0 : grid) {
    const double ev = log_evidence(h, ssr, theta_sq, n, sigma2, s0);
    // strict improvement required: ties stay with the earlier (smaller) value
    if (first || ev > post.log_evidence) {
      first = false;
      post.log_evidence = ev;
      post.sigma0_sq = s0;
    }
  }
  post.theta0_variance = posterior_theta0_variance(h, post.sigma0_sq);
  return post;
}

}  // namespace bsn::laplace
