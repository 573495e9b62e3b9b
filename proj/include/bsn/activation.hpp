#pragma once

#include <cmath>
#include <string>

#include "bsn/errors.hpp"

namespace bsn::net {

enum class Activation { Celu, Tanh, Gaussian, Sigmoid, TanhShrink };

/// Value together with first and second derivative; the Stein layer needs
/// both derivatives of every hidden unit.
struct ActivationValue {
  double value;
  double first;
  double second;
};

inline ActivationValue activation_eval(Activation kind, double x) {
  switch (kind) {
    case Activation::Celu: {
      // max(0,x) + min(0, exp(x)-1); derivative is 1 for x >= 0, exp(x) below.
      if (x >= 0.0) return {x, 1.0, 0.0};
      const double e = std::exp(x);
      return {e - 1.0, e, e};
    }
    case Activation::Tanh: {
      const double t = std::tanh(x);
      const double d = 1.0 - t * t;
      return {t, d, -2.0 * t * d};
    }
    case Activation::Gaussian: {
      const double e = std::exp(-x * x);
      return {e, -2.0 * x * e, (4.0 * x * x - 2.0) * e};
    }
    case Activation::Sigmoid: {
      const double s = x >= 0.0 ? 1.0 / (1.0 + std::exp(-x)) : std::exp(x) / (1.0 + std::exp(x));
      const double d = s * (1.0 - s);
      return {s, d, d * (1.0 - 2.0 * s)};
    }
    case Activation::TanhShrink: {
      const double t = std::tanh(x);
      const double d = 1.0 - t * t;
      return {x - t, t * t, 2.0 * t * d};
    }
  }
  throw std::invalid_argument("activation_eval: unknown activation");
}

inline std::string activation_name(Activation kind) {
  switch (kind) {
    case Activation::Celu: return "celu";
    case Activation::Tanh: return "tanh";
    case Activation::Gaussian: return "gaussian";
    case Activation::Sigmoid: return "sigmoid";
    case Activation::TanhShrink: return "tanhshrink";
  }
  return "?";
}

inline Activation activation_from_name(const std::string& name) {
  if (name == "celu") return Activation::Celu;
  if (name == "tanh") return Activation::Tanh;
  if (name == "gaussian") return Activation::Gaussian;
  if (name == "sigmoid") return Activation::Sigmoid;
  if (name == "tanhshrink") return Activation::TanhShrink;
  throw ConfigError("unknown activation: " + name);
}

}  // namespace bsn::net
