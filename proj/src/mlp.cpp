#include "bsn/mlp.hpp"

#include <cmath>

#include "bsn/errors.hpp"

namespace bsn::net {

std::vector<LayerShape> layer_shapes(const MlpConfig& cfg) {
  const int d = cfg.input_dim, h = cfg.hidden_width, l = cfg.hidden_layers;
  if (d < 1 || l < 0 || (l > 0 && h < 1))
    throw DimensionMismatchError("layer_shapes: invalid architecture");
  std::vector<LayerShape> shapes;
  if (l == 0) {
    shapes.push_back({d, d});
    return shapes;
  }
  shapes.push_back({d, h});
  for (int k = 1; k < l; ++k) shapes.push_back({h, h});
  shapes.push_back({h, d});
  return shapes;
}

int param_count(const MlpConfig& cfg) {
  int count = 0;
  for (const LayerShape& s : layer_shapes(cfg)) count += s.out * s.in + s.out;
  return count;
}

MlpNetwork MlpNetwork::zeros(const MlpConfig& cfg) {
  MlpNetwork net;
  net.config = cfg;
  for (const LayerShape& s : layer_shapes(cfg)) {
    net.weights.emplace_back(s.out, s.in);
    net.biases.emplace_back(s.out, 0.0);
  }
  return net;
}

MlpNetwork MlpNetwork::random_init(const MlpConfig& cfg, rng::SplitMix64& gen) {
  MlpNetwork net = zeros(cfg);
  for (std::size_t k = 0; k < net.weights.size(); ++k) {
    const double bound = std::sqrt(1.0 / static_cast<double>(net.weights[k].cols()));
    for (std::size_t i = 0; i < net.weights[k].rows(); ++i)
      for (std::size_t j = 0; j < net.weights[k].cols(); ++j)
        net.weights[k](i, j) = gen.next_uniform(-bound, bound);
    for (double& b : net.biases[k]) b = gen.next_uniform(-bound, bound);
  }
  return net;
}

numkit::Vector MlpNetwork::pack() const {
  numkit::Vector out(static_cast<std::size_t>(param_count()));
  pack_into(out);
  return out;
}

void MlpNetwork::pack_into(std::span<double> out) const {
  if (out.size() != static_cast<std::size_t>(param_count()))
    throw DimensionMismatchError("pack_into: bad output length");
  std::size_t pos = 0;
  for (std::size_t k = 0; k < weights.size(); ++k) {
    const numkit::Matrix& w = weights[k];
    std::copy(w.data(), w.data() + w.rows() * w.cols(), out.begin() + pos);
    pos += w.rows() * w.cols();
    std::copy(biases[k].begin(), biases[k].end(), out.begin() + pos);
    pos += biases[k].size();
  }
}

void MlpNetwork::unpack(std::span<const double> params) {
  if (params.size() != static_cast<std::size_t>(param_count()))
    throw DimensionMismatchError("unpack: bad parameter length");
  std::size_t pos = 0;
  for (std::size_t k = 0; k < weights.size(); ++k) {
    numkit::Matrix& w = weights[k];
    std::copy(params.begin() + pos, params.begin() + pos + w.rows() * w.cols(), w.data());
    pos += w.rows() * w.cols();
    std::copy(params.begin() + pos, params.begin() + pos + biases[k].size(), biases[k].begin());
    pos += biases[k].size();
  }
}

std::vector<LayerView> layer_views(const MlpConfig& cfg, const double* net_params) {
  std::vector<LayerView> views;
  const double* p = net_params;
  for (const LayerShape& s : layer_shapes(cfg)) {
    views.push_back({p, p + s.out * s.in, s.in, s.out});
    p += s.out * s.in + s.out;
  }
  return views;
}

numkit::Vector forward(const MlpNetwork& net, std::span<const double> x) {
  if (x.size() != static_cast<std::size_t>(net.config.input_dim))
    throw DimensionMismatchError("forward: input dimension mismatch");
  const std::size_t layers = net.weights.size();
  numkit::Vector z(x.begin(), x.end()), a;
  for (std::size_t k = 0; k < layers; ++k) {
    const numkit::Matrix& w = net.weights[k];
    a.assign(w.rows(), 0.0);
    for (std::size_t i = 0; i < w.rows(); ++i)
      a[i] = net.biases[k][i] + numkit::dot(w.row_span(i), z);
    if (k + 1 < layers) {
      z.resize(a.size());
      for (std::size_t i = 0; i < a.size(); ++i) z[i] = activation_eval(net.config.activation, a[i]).value;
    } else {
      z = a;
    }
  }
  return z;
}

ForwardJacobian forward_with_input_jacobian(const MlpNetwork& net, std::span<const double> x) {
  const auto d = static_cast<std::size_t>(net.config.input_dim);
  if (x.size() != d) throw DimensionMismatchError("forward_with_input_jacobian: input dimension mismatch");
  const std::size_t layers = net.weights.size();
  numkit::Vector z(x.begin(), x.end());
  // tangents[j] tracks du/dx_j through the network; starts as e_j.
  std::vector<numkit::Vector> tangents(d);
  for (std::size_t j = 0; j < d; ++j) {
    tangents[j].assign(d, 0.0);
    tangents[j][j] = 1.0;
  }
  numkit::Vector a, zn;
  std::vector<numkit::Vector> tn(d);
  for (std::size_t k = 0; k < layers; ++k) {
    const numkit::Matrix& w = net.weights[k];
    a.assign(w.rows(), 0.0);
    for (std::size_t i = 0; i < w.rows(); ++i)
      a[i] = net.biases[k][i] + numkit::dot(w.row_span(i), z);
    for (std::size_t j = 0; j < d; ++j) {
      tn[j].assign(w.rows(), 0.0);
      for (std::size_t i = 0; i < w.rows(); ++i) tn[j][i] = numkit::dot(w.row_span(i), tangents[j]);
    }
    if (k + 1 < layers) {
      zn.resize(a.size());
      for (std::size_t i = 0; i < a.size(); ++i) {
        const ActivationValue av = activation_eval(net.config.activation, a[i]);
        zn[i] = av.value;
        for (std::size_t j = 0; j < d; ++j) tn[j][i] *= av.first;
      }
      z = zn;
    } else {
      z = a;
    }
    for (std::size_t j = 0; j < d; ++j) tangents[j] = tn[j];
  }
  ForwardJacobian out{std::move(z), numkit::Matrix(d, d)};
  for (std::size_t i = 0; i < d; ++i)
    for (std::size_t j = 0; j < d; ++j) out.jacobian(i, j) = tangents[j][i];
  return out;
}

}  // namespace bsn::net
