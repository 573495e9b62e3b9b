#pragma once

#include <optional>
#include <span>
#include <string>
#include <vector>

#include "bsn/mlp.hpp"
#include "bsn/numkit.hpp"
#include "bsn/targets.hpp"

namespace bsn::stein {

/// Diffusion matrix m(x) used by the operator
///   S_m[u](x) = (m(x) grad log pi(x)) . u(x) + div(m(x) u(x)).
/// All supported choices keep m diagonal, so S_m[u] reduces to
///   S_m[u](x) = a(x) . u(x) + sum_i w_i(x) * du_i/dx_i
/// with x-only coefficient fields a, w (see stein_coefficients).
struct DiffusionChoice {
  enum class Kind {
    Identity,         ///< m = I
    ScaledIdentity,   ///< m = I / scale
    InverseSqNorm,    ///< m = phi(x) I, phi = 1/(|x|^2+1)
    InverseNorm,      ///< m = phi(x) I, phi = 1/sqrt(|x|^2+1)
    TargetDensity,    ///< m = pi(x) I (unnormalized density)
    DiagX             ///< m = diag(x)
  };
  Kind kind = Kind::Identity;
  double scale = 1.0;  ///< divisor C for ScaledIdentity

  static DiffusionChoice identity() { return {Kind::Identity, 1.0}; }
  static DiffusionChoice scaled_identity(double c) { return {Kind::ScaledIdentity, c}; }
  static DiffusionChoice inverse_sq_norm() { return {Kind::InverseSqNorm, 1.0}; }
  static DiffusionChoice inverse_norm() { return {Kind::InverseNorm, 1.0}; }
  static DiffusionChoice target_density() { return {Kind::TargetDensity, 1.0}; }
  static DiffusionChoice diag_x() { return {Kind::DiagX, 1.0}; }
};

std::string diffusion_name(const DiffusionChoice& m);
DiffusionChoice diffusion_from_name(const std::string& name, double scale = 1.0);

/// Axis-aligned box [lower_j, upper_j]^d. When present, the network output is
/// multiplied by D(x) = prod_j (x_j - lower_j)(upper_j - x_j), which pins the
/// test function to zero on the boundary so the Stein identity holds without
/// decay-at-infinity assumptions.
struct BoxBounds {
  numkit::Vector lower;
  numkit::Vector upper;
};

/// delta(a, b, x) = (x-a)(b-x) and its derivative, the per-coordinate factor
/// of the boundary window D.
double bounded_delta(double lower, double upper, double x);
double bounded_delta_derivative(double lower, double upper, double x);

/// Coefficient fields of the collapsed operator: on exit
///   S_m[u](x) = dot(a, u(x)) + sum_i w[i] * du_i/dx_i.
/// They depend on x, the score, the diffusion choice, and optional bounds,
/// but never on the network parameters, so datasets can precompute them.
void stein_coefficients(const DiffusionChoice& m, const targets::TargetDistribution& target,
                        std::span<const double> x, const std::optional<BoxBounds>& bounds,
                        std::span<double> a_out, std::span<double> w_out);

/// Applies the operator to an explicitly supplied test function value and
/// Jacobian (u need not be a network).
double stein_apply(const DiffusionChoice& m, const targets::TargetDistribution& target,
                   std::span<const double> x, std::span<const double> u_value,
                   const numkit::Matrix& u_jacobian, const std::optional<BoxBounds>& bounds = {});

/// Network u_theta with a Stein-operator readout layer:
///   g_theta(x) = S_m[u_theta](x) + theta0
/// whose integral under pi is exactly theta0.
struct SteinModel {
  net::MlpNetwork network;
  DiffusionChoice diffusion;
  targets::TargetDistribution target;
  double theta0 = 0.0;
  std::optional<BoxBounds> bounds;

  int param_count() const { return network.param_count() + 1; }

  /// Flat parameters [theta0, network...].
  numkit::Vector pack() const;
  void unpack(std::span<const double> params);
};

/// g_theta(x) evaluated through the point path (forward + tangents).
double model_eval(const SteinModel& model, std::span<const double> x);

/// The integral estimate is the trained parameter itself.
inline double integral_readout(const SteinModel& model) { return model.theta0; }

struct IdentityCheck {
  double mean;
  double std_error;
};

/// Monte Carlo check of E_pi[S_m[u]] = 0: returns the sample mean and
/// standard error of g_theta - theta0 over n draws from the target.
IdentityCheck stein_identity_check(const SteinModel& model, int n, std::uint64_t seed);

}  // namespace bsn::stein
