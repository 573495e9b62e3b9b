#include "bsn/genz.hpp"

#include <cmath>
#include <complex>

#include "bsn/errors.hpp"

namespace bsn::genz {

std::string family_name(Family f) {
  switch (f) {
    case Family::Continuous: return "continuous";
    case Family::CornerPeak: return "corner-peak";
    case Family::Discontinuous: return "discontinuous";
    case Family::GaussianPeak: return "gaussian-peak";
    case Family::ProductPeak: return "product-peak";
    case Family::Oscillatory: return "oscillatory";
  }
  return "?";
}

Family family_from_name(const std::string& name) {
  if (name == "continuous") return Family::Continuous;
  if (name == "corner-peak") return Family::CornerPeak;
  if (name == "discontinuous") return Family::Discontinuous;
  if (name == "gaussian-peak") return Family::GaussianPeak;
  if (name == "product-peak") return Family::ProductPeak;
  if (name == "oscillatory") return Family::Oscillatory;
  throw ConfigError("unknown integrand family: " + name);
}

GenzSpec GenzSpec::defaults(Family f, int dim) {
  if (dim < 1) throw DomainError("GenzSpec: dim must be >= 1");
  GenzSpec spec;
  spec.family = f;
  spec.dim = dim;
  const double a = (f == Family::Continuous) ? 1.3 : 5.0;
  const double u = (f == Family::Continuous) ? 0.55 : 0.5;
  spec.a.assign(static_cast<std::size_t>(dim), a);
  spec.u.assign(static_cast<std::size_t>(dim), u);
  return spec;
}

namespace {

void check_spec(const GenzSpec& spec) {
  const auto d = static_cast<std::size_t>(spec.dim);
  if (spec.dim < 1 || spec.a.size() != d || spec.u.size() != d)
    throw DomainError("GenzSpec: parameter arrays must match dim");
}

constexpr double kTwoPi = 6.2831853071795864769;

}  // namespace

double genz_eval(const GenzSpec& spec, std::span<const double> t) {
  check_spec(spec);
  const auto d = static_cast<std::size_t>(spec.dim);
  if (t.size() != d) throw DimensionMismatchError("genz_eval: point dimension mismatch");
  for (double v : t)
    if (!(v >= 0.0 && v <= 1.0)) throw DomainError("genz_eval: point outside the unit cube");

  switch (spec.family) {
    case Family::Continuous: {
      double s = 0.0;
      for (std::size_t k = 0; k < d; ++k) s += spec.a[k] * std::abs(t[k] - spec.u[k]);
      return std::exp(-s);
    }
    case Family::CornerPeak: {
      double s = 1.0;
      for (std::size_t k = 0; k < d; ++k) s += spec.a[k] * t[k];
      return std::pow(s, -static_cast<double>(d + 1));
    }
    case Family::Discontinuous: {
      for (std::size_t k = 0; k < d; ++k)
        if (t[k] > spec.u[k]) return 0.0;
      double s = 0.0;
      for (std::size_t k = 0; k < d; ++k) s += spec.a[k] * t[k];
      return std::exp(s);
    }
    case Family::GaussianPeak: {
      double s = 0.0;
      for (std::size_t k = 0; k < d; ++k)
        s += spec.a[k] * spec.a[k] * (t[k] - spec.u[k]) * (t[k] - spec.u[k]);
      return std::exp(-s);
    }
    case Family::ProductPeak: {
      double prod = 1.0;
      for (std::size_t k = 0; k < d; ++k) {
        const double inv_a2 = 1.0 / (spec.a[k] * spec.a[k]);
        prod *= 1.0 / (inv_a2 + (t[k] - spec.u[k]) * (t[k] - spec.u[k]));
      }
      return prod;
    }
    case Family::Oscillatory: {
      double s = kTwoPi * spec.u[0];
      for (std::size_t k = 0; k < d; ++k) s += spec.a[k] * t[k];
      return std::cos(s);
    }
  }
  return 0.0;
}

double transformed_eval(const GenzSpec& spec, std::span<const double> x) {
  check_spec(spec);
  const auto d = static_cast<std::size_t>(spec.dim);
  if (x.size() != d) throw DimensionMismatchError("transformed_eval: point dimension mismatch");
  numkit::Vector t(d);
  for (std::size_t k = 0; k < d; ++k) t[k] = numkit::normal_cdf(x[k]);
  return genz_eval(spec, t);
}

namespace {

double corner_peak_truth(const GenzSpec& spec) {
  const auto d = static_cast<std::size_t>(spec.dim);
  bool equal = true;
  for (std::size_t k = 1; k < d; ++k)
    if (spec.a[k] != spec.a[0]) equal = false;
  if (equal) {
    // Gamma-function form: all terms positive, stable at any dimension.
    const double a = spec.a[0];
    const double z = 1.0 / a;
    return std::exp(std::lgamma(z) - static_cast<double>(d + 1) * std::log(a) -
                    std::lgamma(static_cast<double>(d + 1) + z));
  }
  if (spec.dim > 25) throw DomainError("corner-peak: inclusion-exclusion limited to d <= 25");
  // repeated antidifferentiation leaves each corner term at power -1:
  // integral = sum over subsets S of (-1)^|S| / (1 + sum_{k in S} a_k),
  // divided by d! * prod a_k
  long double sum = 0.0L;
  const std::size_t subsets = std::size_t{1} << d;
  for (std::size_t mask = 0; mask < subsets; ++mask) {
    long double s = 1.0L;
    int bits = 0;
    for (std::size_t k = 0; k < d; ++k)
      if (mask & (std::size_t{1} << k)) {
        s += spec.a[k];
        ++bits;
      }
    const long double term = 1.0L / s;
    sum += (bits % 2 == 0) ? term : -term;
  }
  long double denom = 1.0L;
  for (std::size_t k = 1; k <= d; ++k) denom *= static_cast<long double>(k);
  for (std::size_t k = 0; k < d; ++k) denom *= static_cast<long double>(spec.a[k]);
  return static_cast<double>(sum / denom);
}

}  // namespace

double ground_truth(const GenzSpec& spec) {
  check_spec(spec);
  const auto d = static_cast<std::size_t>(spec.dim);
  switch (spec.family) {
    case Family::Continuous: {
      double prod = 1.0;
      for (std::size_t k = 0; k < d; ++k) {
        const double a = spec.a[k], u = spec.u[k];
        prod *= (2.0 - std::exp(-a * u) - std::exp(-a * (1.0 - u))) / a;
      }
      return prod;
    }
    case Family::CornerPeak: return corner_peak_truth(spec);
    case Family::Discontinuous: {
      double prod = 1.0;
      for (std::size_t k = 0; k < d; ++k) {
        const double a = spec.a[k], u = spec.u[k];
        prod *= (std::exp(a * u) - 1.0) / a;
      }
      return prod;
    }
    case Family::GaussianPeak: {
      const double sqrt_pi = 1.7724538509055160273;
      double prod = 1.0;
      for (std::size_t k = 0; k < d; ++k) {
        const double a = spec.a[k], u = spec.u[k];
        prod *= sqrt_pi / (2.0 * a) *
                (numkit::erf_value(a * u) + numkit::erf_value(a * (1.0 - u)));
      }
      return prod;
    }
    case Family::ProductPeak: {
      double prod = 1.0;
      for (std::size_t k = 0; k < d; ++k) {
        const double a = spec.a[k], u = spec.u[k];
        prod *= a * (std::atan(a * u) + std::atan(a * (1.0 - u)));
      }
      return prod;
    }
    case Family::Oscillatory: {
      std::complex<double> prod = std::exp(std::complex<double>(0.0, kTwoPi * spec.u[0]));
      for (std::size_t k = 0; k < d; ++k) {
        const double a = spec.a[k];
        prod *= (std::exp(std::complex<double>(0.0, a)) - 1.0) / std::complex<double>(0.0, a);
      }
      return prod.real();
    }
  }
  return 0.0;
}

}  // namespace bsn::genz
