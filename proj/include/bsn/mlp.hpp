#pragma once

#include <span>
#include <vector>

#include "bsn/activation.hpp"
#include "bsn/numkit.hpp"
#include "bsn/rng.hpp"

namespace bsn::net {

/// Architecture: input_dim -> [hidden_width + activation] x hidden_layers -> input_dim.
/// hidden_layers == 0 degenerates to a single affine map input_dim -> input_dim.
struct MlpConfig {
  int input_dim = 1;
  int hidden_width = 32;
  int hidden_layers = 2;
  Activation activation = Activation::Celu;
};

struct LayerShape {
  int in, out;
};

/// Shapes of the affine layers, in forward order.
std::vector<LayerShape> layer_shapes(const MlpConfig& cfg);

/// Number of scalar parameters (weights + biases) of the network alone.
int param_count(const MlpConfig& cfg);

/// Vector-valued MLP u: R^d -> R^d with activations after every affine layer
/// except the last.
struct MlpNetwork {
  MlpConfig config;
  std::vector<numkit::Matrix> weights;  ///< per layer, out x in
  std::vector<numkit::Vector> biases;   ///< per layer, out

  static MlpNetwork zeros(const MlpConfig& cfg);

  /// Uniform init in [-sqrt(1/fan_in), +sqrt(1/fan_in)] per layer, weights
  /// then biases, drawn in pack order so the result is seed-deterministic.
  static MlpNetwork random_init(const MlpConfig& cfg, rng::SplitMix64& gen);

  int param_count() const { return net::param_count(config); }

  /// Flattens to [W0 row-major, b0, W1, b1, ...].
  numkit::Vector pack() const;
  void pack_into(std::span<double> out) const;

  /// Inverse of pack; the layer shapes must match `config`.
  void unpack(std::span<const double> params);
};

numkit::Vector forward(const MlpNetwork& net, std::span<const double> x);

struct ForwardJacobian {
  numkit::Vector value;     ///< u(x), length d
  numkit::Matrix jacobian;  ///< J(i,j) = du_i/dx_j, d x d
};

/// Forward pass plus the full input Jacobian via d tangent propagations.
ForwardJacobian forward_with_input_jacobian(const MlpNetwork& net, std::span<const double> x);

/// Read-only view of one affine layer inside a flat parameter vector;
/// lets hot kernels evaluate the network without unpacking into matrices.
struct LayerView {
  const double* w;  ///< out x in, row-major
  const double* b;  ///< out
  int in, out;
};

/// Views over the network portion of a flat parameter vector (theta0 excluded).
std::vector<LayerView> layer_views(const MlpConfig& cfg, const double* net_params);

}  // namespace bsn::net
