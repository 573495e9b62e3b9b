#include "bsn/stein.hpp"

#include <cmath>

#include "bsn/errors.hpp"

namespace bsn::stein {

std::string diffusion_name(const DiffusionChoice& m) {
  switch (m.kind) {
    case DiffusionChoice::Kind::Identity: return "identity";
    case DiffusionChoice::Kind::ScaledIdentity: return "scaled-identity";
    case DiffusionChoice::Kind::InverseSqNorm: return "inverse-sq-norm";
    case DiffusionChoice::Kind::InverseNorm: return "inverse-norm";
    case DiffusionChoice::Kind::TargetDensity: return "target-density";
    case DiffusionChoice::Kind::DiagX: return "diag-x";
  }
  return "?";
}

DiffusionChoice diffusion_from_name(const std::string& name, double scale) {
  if (name == "identity") return DiffusionChoice::identity();
  if (name == "scaled-identity") return DiffusionChoice::scaled_identity(scale);
  if (name == "inverse-sq-norm") return DiffusionChoice::inverse_sq_norm();
  if (name == "inverse-norm") return DiffusionChoice::inverse_norm();
  if (name == "target-density") return DiffusionChoice::target_density();
  if (name == "diag-x") return DiffusionChoice::diag_x();
  throw ConfigError("unknown diffusion: " + name);
}

double bounded_delta(double lower, double upper, double x) { return (x - lower) * (upper - x); }

double bounded_delta_derivative(double lower, double upper, double x) { return lower + upper - 2.0 * x; }

namespace {

// phi(x) and grad phi(x) for the scalar-diffusion family m = phi * I.
void scalar_diffusion(const DiffusionChoice& m, const targets::TargetDistribution& target,
                      std::span<const double> x, std::span<const double> score, double& phi,
                      std::span<double> grad_phi) {
  const std::size_t d = x.size();
  switch (m.kind) {
    case DiffusionChoice::Kind::Identity:
      phi = 1.0;
      std::fill(grad_phi.begin(), grad_phi.end(), 0.0);
      return;
    case DiffusionChoice::Kind::ScaledIdentity:
      if (!(m.scale > 0.0)) throw ConfigError("scaled-identity: scale must be positive");
      phi = 1.0 / m.scale;
      std::fill(grad_phi.begin(), grad_phi.end(), 0.0);
      return;
    case DiffusionChoice::Kind::InverseSqNorm: {
      double q = 1.0;
      for (double v : x) q += v * v;
      phi = 1.0 / q;
      for (std::size_t i = 0; i < d; ++i) grad_phi[i] = -2.0 * x[i] / (q * q);
      return;
    }
    case DiffusionChoice::Kind::InverseNorm: {
      double q = 1.0;
      for (double v : x) q += v * v;
      phi = 1.0 / std::sqrt(q);
      for (std::size_t i = 0; i < d; ++i) grad_phi[i] = -x[i] * phi / q;
      return;
    }
    case DiffusionChoice::Kind::TargetDensity: {
      phi = std::exp(target.log_density(x));
      // grad pi = pi * score
      for (std::size_t i = 0; i < d; ++i) grad_phi[i] = phi * score[i];
      return;
    }
    case DiffusionChoice::Kind::DiagX:
      throw DimensionMismatchError("scalar_diffusion: DiagX is not a scalar diffusion");
  }
}

}  // namespace

void stein_coefficients(const DiffusionChoice& m, const targets::TargetDistribution& target,
                        std::span<const double> x, const std::optional<BoxBounds>& bounds,
                        std::span<double> a_out, std::span<double> w_out) {
  const std::size_t d = x.size();
  if (a_out.size() != d || w_out.size() != d)
    throw DimensionMismatchError("stein_coefficients: output size mismatch");
  numkit::Vector score(d);
  target.score(x, score);

  double window = 1.0;
  numkit::Vector grad_window(d, 0.0);
  if (bounds) {
    if (bounds->lower.size() != d || bounds->upper.size() != d)
      throw DimensionMismatchError("stein_coefficients: bounds dimension mismatch");
    numkit::Vector delta(d);
    for (std::size_t j = 0; j < d; ++j) {
      delta[j] = bounded_delta(bounds->lower[j], bounds->upper[j], x[j]);
      window *= delta[j];
    }
    for (std::size_t j = 0; j < d; ++j) {
      double rest = 1.0;
      for (std::size_t k = 0; k < d; ++k)
        if (k != j) rest *= delta[k];
      grad_window[j] = bounded_delta_derivative(bounds->lower[j], bounds->upper[j], x[j]) * rest;
    }
  }

  if (m.kind == DiffusionChoice::Kind::DiagX) {
    // S[u] = sum_i (x_i s_i + 1) u_i + x_i du_i/dx_i, windowed when bounded.
    for (std::size_t i = 0; i < d; ++i) {
      const double base = x[i] * score[i] + 1.0;
      a_out[i] = bounds ? base * window + x[i] * grad_window[i] : base;
      w_out[i] = bounds ? x[i] * window : x[i];
    }
    return;
  }

  double phi = 1.0;
  numkit::Vector grad_phi(d);
  scalar_diffusion(m, target, x, score, phi, grad_phi);
  for (std::size_t i = 0; i < d; ++i) {
    const double base = phi * score[i] + grad_phi[i];
    a_out[i] = bounds ? base * window + phi * grad_window[i] : base;
    w_out[i] = bounds ? phi * window : phi;
  }
}

double stein_apply(const DiffusionChoice& m, const targets::TargetDistribution& target,
                   std::span<const double> x, std::span<const double> u_value,
                   const numkit::Matrix& u_jacobian, const std::optional<BoxBounds>& bounds) {
  const std::size_t d = x.size();
  if (u_value.size() != d || u_jacobian.rows() != d || u_jacobian.cols() != d)
    throw DimensionMismatchError("stein_apply: test function size mismatch");
  numkit::Vector a(d), w(d);
  stein_coefficients(m, target, x, bounds, a, w);
  double result = 0.0;
  for (std::size_t i = 0; i < d; ++i) result += a[i] * u_value[i] + w[i] * u_jacobian(i, i);
  return result;
}

numkit::Vector SteinModel::pack() const {
  numkit::Vector out(static_cast<std::size_t>(param_count()));
  out[0] = theta0;
  network.pack_into(std::span<double>(out).subspan(1));
  return out;
}

void SteinModel::unpack(std::span<const double> params) {
  if (params.size() != static_cast<std::size_t>(param_count()))
    throw DimensionMismatchError("SteinModel::unpack: bad parameter length");
  theta0 = params[0];
  network.unpack(params.subspan(1));
}

double model_eval(const SteinModel& model, std::span<const double> x) {
  const net::ForwardJacobian fj = net::forward_with_input_jacobian(model.network, x);
  return stein_apply(model.diffusion, model.target, x, fj.value, fj.jacobian, model.bounds) +
         model.theta0;
}

IdentityCheck stein_identity_check(const SteinModel& model, int n, std::uint64_t seed) {
  rng::SplitMix64 gen = rng::substream(seed, 0x737465696eULL);
  const auto d = static_cast<std::size_t>(model.target.dim());
  numkit::Vector x(d);
  double sum = 0.0, sum_sq = 0.0;
  for (int i = 0; i < n; ++i) {
    model.target.sample_point(gen, x);
    const double v = model_eval(model, x) - model.theta0;
    sum += v;
    sum_sq += v * v;
  }
  const double mean = sum / n;
  const double var = (sum_sq - n * mean * mean) / (n - 1.0);
  return {mean, std::sqrt(std::max(var, 0.0) / n)};
}

}  // namespace bsn::stein
