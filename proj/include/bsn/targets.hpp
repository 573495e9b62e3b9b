#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "bsn/numkit.hpp"
#include "bsn/rng.hpp"

namespace bsn::targets {

/// Distribution pi known up to normalization through its log-density and
/// score function grad log pi; optionally equipped with an exact sampler.
class TargetDistribution {
 public:
  using LogDensityFn = std::function<double(std::span<const double>)>;
  using ScoreFn = std::function<void(std::span<const double>, std::span<double>)>;
  using SamplerFn = std::function<void(rng::SplitMix64&, std::span<double>)>;

  int dim() const { return dim_; }

  /// Log-density, possibly unnormalized; -inf outside the support.
  double log_density(std::span<const double> x) const { return log_density_(x); }

  void score(std::span<const double> x, std::span<double> out) const { score_(x, out); }
  numkit::Vector score(std::span<const double> x) const {
    numkit::Vector s(x.size());
    score_(x, s);
    return s;
  }

  bool has_sampler() const { return static_cast<bool>(sampler_); }
  void sample_point(rng::SplitMix64& gen, std::span<double> out) const;

  /// n i.i.d. draws as an n x dim matrix; throws NoSamplerError without a sampler.
  numkit::Matrix sample_iid(int n, rng::SplitMix64& gen) const;

  /// N(mean*1, stddev^2 * I) in `dim` dimensions.
  static TargetDistribution isotropic_gaussian(int dim, double mean, double stddev);

  /// Product over dimensions of the same 1-D Gaussian mixture
  /// sum_k weights[k] * N(means[k], variances[k]). Weights are normalized.
  static TargetDistribution gaussian_mixture(int dim, std::vector<double> weights,
                                             std::vector<double> means, std::vector<double> variances);

  /// N(mean, stddev^2) restricted to [lower, upper] (1-D). Throws
  /// DegenerateIntervalError when the interval mass underflows.
  static TargetDistribution truncated_gaussian(double mean, double stddev, double lower, double upper);

  /// User-supplied log-density/score (sampler optional). Construction runs a
  /// finite-difference consistency check of score vs log-density on 10
  /// seeded probe points (relative tolerance 1e-6) and throws
  /// InvalidTargetError if the pair is inconsistent.
  static TargetDistribution custom(int dim, LogDensityFn log_density, ScoreFn score,
                                   SamplerFn sampler = nullptr, std::uint64_t check_seed = 0);

 private:
  TargetDistribution(int dim, LogDensityFn ld, ScoreFn sc, SamplerFn sm)
      : dim_(dim), log_density_(std::move(ld)), score_(std::move(sc)), sampler_(std::move(sm)) {}

  int dim_;
  LogDensityFn log_density_;
  ScoreFn score_;
  SamplerFn sampler_;
};

/// n equally spaced points spanning [-5*sigma, 5*sigma] inclusive (1-D designs).
numkit::Matrix sample_grid_1d(double sigma, int n);

struct MalaConfig {
  double step_size = 0.5;  ///< h; proposal is x + (h^2/2) score(x) + h*xi
  int burn_in = 1000;
  int thinning = 1;
  numkit::Vector initial;  ///< empty -> origin
};

struct MalaResult {
  numkit::Matrix samples;  ///< n x dim, post burn-in, thinned
  double acceptance_rate;  ///< accepted / proposed over the whole chain
};

/// Metropolis-adjusted Langevin chain targeting `target`. Throws
/// NonFiniteScoreError (with the chain step) if the score turns NaN/Inf.
MalaResult mala_sample(const TargetDistribution& target, int n, const MalaConfig& config,
                       rng::SplitMix64& gen);

}  // namespace bsn::targets
