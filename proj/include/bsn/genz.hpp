#pragma once

#include <span>
#include <string>

#include "bsn/numkit.hpp"

namespace bsn::genz {

enum class Family { Continuous, CornerPeak, Discontinuous, GaussianPeak, ProductPeak, Oscillatory };

std::string family_name(Family f);
Family family_from_name(const std::string& name);

/// One of the six standard integrand families on the unit cube [0,1]^d with
/// per-dimension parameters a and u (Oscillatory uses only u[0] as its phase).
struct GenzSpec {
  Family family = Family::Continuous;
  int dim = 1;
  numkit::Vector a;
  numkit::Vector u;

  /// Default parameters: Continuous a=1.3, u=0.55; all other families a=5,
  /// u=0.5, replicated across dimensions.
  static GenzSpec defaults(Family f, int dim);
};

/// Evaluates the family formula at t in [0,1]^d; throws DomainError outside.
double genz_eval(const GenzSpec& spec, std::span<const double> t);

/// f(c(x)) with the coordinate-wise standard normal CDF c, mapping the
/// unit-cube problem to an integral against N(0, I).
double transformed_eval(const GenzSpec& spec, std::span<const double> x);

/// The unit-cube integral, by closed form: products of 1-D integrals for the
/// separable families, a complex product for Oscillatory, and for CornerPeak
/// either the gamma-function form (equal parameters; stable at any d) or
/// inclusion-exclusion over 2^d subsets (general parameters, d <= 25).
double ground_truth(const GenzSpec& spec);

}  // namespace bsn::genz
