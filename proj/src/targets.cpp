#include "bsn/targets.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "bsn/errors.hpp"

namespace bsn::targets {

namespace {
constexpr double kNegInf = -std::numeric_limits<double>::infinity();
constexpr double kLog2Pi = 1.8378770664093454836;
}  // namespace

void TargetDistribution::sample_point(rng::SplitMix64& gen, std::span<double> out) const {
  if (!sampler_) throw NoSamplerError("target has no exact sampler");
  if (out.size() != static_cast<std::size_t>(dim_))
    throw DimensionMismatchError("sample_point: output size mismatch");
  sampler_(gen, out);
}

numkit::Matrix TargetDistribution::sample_iid(int n, rng::SplitMix64& gen) const {
  if (!sampler_) throw NoSamplerError("target has no exact sampler");
  numkit::Matrix points(static_cast<std::size_t>(n), static_cast<std::size_t>(dim_));
  for (int i = 0; i < n; ++i) sampler_(gen, points.row_span(static_cast<std::size_t>(i)));
  return points;
}

TargetDistribution TargetDistribution::isotropic_gaussian(int dim, double mean, double stddev) {
  if (dim < 1 || !(stddev > 0.0)) throw DimensionMismatchError("isotropic_gaussian: bad parameters");
  const double inv_var = 1.0 / (stddev * stddev);
  const double log_norm = -0.5 * dim * (kLog2Pi + 2.0 * std::log(stddev));
  auto log_density = [mean, inv_var, log_norm](std::span<const double> x) {
    double q = 0.0;
    for (double v : x) q += (v - mean) * (v - mean);
    return log_norm - 0.5 * q * inv_var;
  };
  auto score = [mean, inv_var](std::span<const double> x, std::span<double> out) {
    for (std::size_t i = 0; i < x.size(); ++i) out[i] = -(x[i] - mean) * inv_var;
  };
  auto sampler = [dim, mean, stddev](rng::SplitMix64& gen, std::span<double> out) {
    for (int i = 0; i < dim; ++i) out[static_cast<std::size_t>(i)] = mean + stddev * gen.next_normal();
  };
  return TargetDistribution(dim, log_density, score, sampler);
}

TargetDistribution TargetDistribution::gaussian_mixture(int dim, std::vector<double> weights,
                                                        std::vector<double> means,
                                                        std::vector<double> variances) {
  const std::size_t k = weights.size();
  if (k == 0 || means.size() != k || variances.size() != k)
    throw DimensionMismatchError("gaussian_mixture: component arrays must share a nonzero length");
  double wsum = 0.0;
  for (double w : weights) {
    if (!(w > 0.0)) throw DimensionMismatchError("gaussian_mixture: weights must be positive");
    wsum += w;
  }
  for (double& w : weights) w /= wsum;
  std::vector<double> stddevs(k), log_wk(k);
  for (std::size_t j = 0; j < k; ++j) {
    if (!(variances[j] > 0.0)) throw DimensionMismatchError("gaussian_mixture: variances must be positive");
    stddevs[j] = std::sqrt(variances[j]);
    log_wk[j] = std::log(weights[j]) - std::log(stddevs[j]) - 0.5 * kLog2Pi;
  }
  // 1-D log-density and score of the shared per-coordinate mixture,
  // stabilized against underflow by factoring out the max exponent.
  auto coord_stats = [means, variances, stddevs, log_wk, k](double x, double& logp, double& score) {
    double emax = kNegInf;
    std::vector<double> e(k);
    for (std::size_t j = 0; j < k; ++j) {
      e[j] = log_wk[j] - 0.5 * (x - means[j]) * (x - means[j]) / variances[j];
      emax = std::max(emax, e[j]);
    }
    double p = 0.0, dp = 0.0;
    for (std::size_t j = 0; j < k; ++j) {
      const double w = std::exp(e[j] - emax);
      p += w;
      dp += w * (-(x - means[j]) / variances[j]);
    }
    logp = emax + std::log(p);
    score = dp / p;
  };
  auto log_density = [coord_stats](std::span<const double> x) {
    double total = 0.0, lp, sc;
    for (double v : x) {
      coord_stats(v, lp, sc);
      total += lp;
    }
    return total;
  };
  auto score = [coord_stats](std::span<const double> x, std::span<double> out) {
    double lp, sc;
    for (std::size_t i = 0; i < x.size(); ++i) {
      coord_stats(x[i], lp, sc);
      out[i] = sc;
    }
  };
  auto sampler = [weights, means, stddevs, k, dim](rng::SplitMix64& gen, std::span<double> out) {
    for (int i = 0; i < dim; ++i) {
      const double u = gen.next_uniform();
      double acc = 0.0;
      std::size_t pick = k - 1;
      for (std::size_t j = 0; j < k; ++j) {
        acc += weights[j];
        if (u < acc) {
          pick = j;
          break;
        }
      }
      out[static_cast<std::size_t>(i)] = means[pick] + stddevs[pick] * gen.next_normal();
    }
  };
  return TargetDistribution(dim, log_density, score, sampler);
}

TargetDistribution TargetDistribution::truncated_gaussian(double mean, double stddev, double lower,
                                                          double upper) {
  if (!(stddev > 0.0) || !(lower < upper))
    throw DimensionMismatchError("truncated_gaussian: bad parameters");
  const double cdf_lo = numkit::normal_cdf(lower, mean, stddev);
  const double cdf_hi = numkit::normal_cdf(upper, mean, stddev);
  const double mass = cdf_hi - cdf_lo;
  if (!(mass >= 1e-300))
    throw DegenerateIntervalError("truncated_gaussian: interval mass underflows (" +
                                  std::to_string(mass) + ")");
  const double inv_var = 1.0 / (stddev * stddev);
  const double log_norm = -std::log(stddev) - 0.5 * kLog2Pi - std::log(mass);
  auto log_density = [mean, inv_var, log_norm, lower, upper](std::span<const double> x) {
    if (x[0] < lower || x[0] > upper) return kNegInf;
    return log_norm - 0.5 * (x[0] - mean) * (x[0] - mean) * inv_var;
  };
  // The score inside the support equals the untruncated score; outside we
  // still return the untruncated value so MALA can evaluate (its proposals
  // out of support are rejected through the -inf log-density).
  auto score = [mean, inv_var](std::span<const double> x, std::span<double> out) {
    out[0] = -(x[0] - mean) * inv_var;
  };
  auto sampler = [mean, stddev, cdf_lo, mass](rng::SplitMix64& gen, std::span<double> out) {
    const double u = cdf_lo + mass * gen.next_uniform();
    const double clipped = std::min(std::max(u, 1e-300), 1.0 - 1e-16);
    out[0] = mean + stddev * numkit::normal_quantile(clipped);
  };
  return TargetDistribution(1, log_density, score, sampler);
}

TargetDistribution TargetDistribution::custom(int dim, LogDensityFn log_density, ScoreFn score,
                                              SamplerFn sampler, std::uint64_t check_seed) {
  if (dim < 1 || !log_density || !score) throw InvalidTargetError("custom: missing log-density or score");
  TargetDistribution target(dim, std::move(log_density), std::move(score), std::move(sampler));
  rng::SplitMix64 gen = rng::substream(check_seed, 0x637573746f6dULL);
  numkit::Vector x(static_cast<std::size_t>(dim)), s(static_cast<std::size_t>(dim));
  for (int probe = 0; probe < 10; ++probe) {
    for (double& v : x) v = 1.5 * gen.next_normal();
    target.score(x, s);
    for (int j = 0; j < dim; ++j) {
      const double h = 1e-5 * std::max(1.0, std::abs(x[static_cast<std::size_t>(j)]));
      numkit::Vector xp(x), xm(x);
      xp[static_cast<std::size_t>(j)] += h;
      xm[static_cast<std::size_t>(j)] -= h;
      const double fd = (target.log_density(xp) - target.log_density(xm)) / (2.0 * h);
      const double sj = s[static_cast<std::size_t>(j)];
      if (!(std::abs(fd - sj) <= 1e-6 * std::max(1.0, std::abs(sj))))
        throw InvalidTargetError("custom: score inconsistent with log-density at probe " +
                                 std::to_string(probe) + " coordinate " + std::to_string(j) +
                                 " (fd=" + std::to_string(fd) + ", score=" + std::to_string(sj) + ")");
    }
  }
  return target;
}

numkit::Matrix sample_grid_1d(double sigma, int n) {
  if (n < 1 || !(sigma > 0.0)) throw DimensionMismatchError("sample_grid_1d: bad parameters");
  numkit::Matrix points(static_cast<std::size_t>(n), 1);
  if (n == 1) {
    points(0, 0) = 0.0;
    return points;
  }
  const double lo = -5.0 * sigma, hi = 5.0 * sigma;
  const double step = (hi - lo) / static_cast<double>(n - 1);
  for (int i = 0; i < n; ++i) points(static_cast<std::size_t>(i), 0) = lo + step * i;
  return points;
}

MalaResult mala_sample(const TargetDistribution& target, int n, const MalaConfig& config,
                       rng::SplitMix64& gen) {
  const auto d = static_cast<std::size_t>(target.dim());
  if (n < 1 || !(config.step_size > 0.0) || config.burn_in < 0 || config.thinning < 1)
    throw DimensionMismatchError("mala_sample: bad configuration");
  numkit::Vector x(d, 0.0);
  if (!config.initial.empty()) {
    if (config.initial.size() != d) throw DimensionMismatchError("mala_sample: initial point dimension");
    x = config.initial;
  }
  const double h = config.step_size;
  const double half_h2 = 0.5 * h * h;
  double logp = target.log_density(x);
  if (!std::isfinite(logp))
    throw NonFiniteScoreError("mala_sample: initial point has non-finite log-density", -1);
  numkit::Vector s = target.score(x);
  for (double v : s)
    if (!std::isfinite(v)) throw NonFiniteScoreError("mala_sample: non-finite score at start", -1);

  MalaResult result{numkit::Matrix(static_cast<std::size_t>(n), d), 0.0};
  const long total = static_cast<long>(config.burn_in) + static_cast<long>(n) * config.thinning;
  long accepted = 0;
  numkit::Vector prop(d), sp(d);
  int written = 0;
  for (long step = 0; step < total; ++step) {
    for (std::size_t j = 0; j < d; ++j) prop[j] = x[j] + half_h2 * s[j] + h * gen.next_normal();
    const double u = gen.next_uniform();
    const double logp_prop = target.log_density(prop);
    if (logp_prop > kNegInf) {
      target.score(prop, sp);
      for (double v : sp)
        if (!std::isfinite(v))
          throw NonFiniteScoreError("mala_sample: non-finite score mid-chain", step);
      double q_fwd = 0.0, q_rev = 0.0;  // log proposal densities, constants cancel
      for (std::size_t j = 0; j < d; ++j) {
        const double df = prop[j] - (x[j] + half_h2 * s[j]);
        const double dr = x[j] - (prop[j] + half_h2 * sp[j]);
        q_fwd += df * df;
        q_rev += dr * dr;
      }
      const double log_alpha = logp_prop - logp - (q_rev - q_fwd) / (2.0 * h * h);
      if (std::log(std::max(u, 1e-300)) < log_alpha) {
        x = prop;
        logp = logp_prop;
        s = sp;
        ++accepted;
      }
    }
    if (step >= config.burn_in && (step - config.burn_in + 1) % config.thinning == 0 && written < n) {
      std::copy(x.begin(), x.end(), result.samples.row(static_cast<std::size_t>(written)));
      ++written;
    }
  }
  result.acceptance_rate = static_cast<double>(accepted) / static_cast<double>(total);
  return result;
}

}  // namespace bsn::targets
