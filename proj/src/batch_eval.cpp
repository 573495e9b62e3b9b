#include "bsn/batch_eval.hpp"

#include <algorithm>
#include <cmath>

#include "bsn/errors.hpp"

namespace bsn::net {

namespace {

constexpr std::size_t kBlockSize = 128;

inline double dotn(const double* a, const double* b, std::size_t n) {
  double s = 0.0;
#pragma omp simd reduction(+ : s)
  for (std::size_t k = 0; k < n; ++k) s += a[k] * b[k];
  return s;
}

inline void axpyn(double alpha, const double* x, double* y, std::size_t n) {
#pragma omp simd
  for (std::size_t k = 0; k < n; ++k) y[k] += alpha * x[k];
}

// Parameter offsets of each layer inside the network part of a flat vector.
struct LayerOffsets {
  std::size_t w, b;
};
std::vector<LayerOffsets> layer_offsets(const MlpConfig& cfg) {
  std::vector<LayerOffsets> off;
  std::size_t pos = 0;
  for (const LayerShape& s : layer_shapes(cfg)) {
    off.push_back({pos, pos + static_cast<std::size_t>(s.out) * s.in});
    pos += static_cast<std::size_t>(s.out) * s.in + s.out;
  }
  return off;
}

// Scratch for one block of points. Hidden activations and tangent states are
// stored for the whole block; reverse-pass adjoints only need per-point rows.
struct BlockWork {
  std::size_t cap = 0;
  int d = 0, h = 0, hl = 0;
  std::vector<std::vector<double>> z, d1, d2;               // hl x (B*h)
  std::vector<std::vector<std::vector<double>>> p, s;       // hl x d x (B*h)
  std::vector<double> u;                                    // B*d
  std::vector<std::vector<double>> gdiag;                   // d x B
  std::vector<double> g;                                    // B
  std::vector<double> abar, zrow, zrow2;                    // h
  std::vector<std::vector<double>> srow, srow2;             // d x h

  void configure(const MlpConfig& cfg, std::size_t block) {
    const int dd = cfg.input_dim, hh = cfg.hidden_layers > 0 ? cfg.hidden_width : 0;
    if (cap == block && d == dd && h == hh && hl == cfg.hidden_layers) return;
    cap = block;
    d = dd;
    h = hh;
    hl = cfg.hidden_layers;
    const std::size_t bh = block * static_cast<std::size_t>(std::max(h, 1));
    auto resize2 = [&](std::vector<std::vector<double>>& v) {
      v.assign(static_cast<std::size_t>(hl), std::vector<double>(bh));
    };
    resize2(z);
    resize2(d1);
    resize2(d2);
    p.assign(static_cast<std::size_t>(hl),
             std::vector<std::vector<double>>(static_cast<std::size_t>(d), std::vector<double>(bh)));
    s = p;
    u.assign(block * static_cast<std::size_t>(d), 0.0);
    gdiag.assign(static_cast<std::size_t>(d), std::vector<double>(block));
    g.assign(block, 0.0);
    abar.assign(static_cast<std::size_t>(std::max(h, d)), 0.0);
    zrow = abar;
    zrow2 = abar;
    srow.assign(static_cast<std::size_t>(d), std::vector<double>(static_cast<std::size_t>(std::max(h, d))));
    srow2 = srow;
  }
};

// Forward pass plus tangent propagation for points [row0, row0+nb) of `data`.
// Fills work.u, work.gdiag, and work.g (without theta0).
void forward_tangent_block(const MlpConfig& cfg, const std::vector<LayerView>& views,
                           const PreparedDataset& data, std::size_t row0, std::size_t nb,
                           BlockWork& work) {
  const auto d = static_cast<std::size_t>(cfg.input_dim);
  const std::size_t hl = views.size() - 1;
  if (hl == 0) {
    const LayerView& lv = views[0];
    for (std::size_t i = 0; i < nb; ++i) {
      const double* xi = data.x.row(row0 + i);
      double* ui = work.u.data() + i * d;
      for (std::size_t o = 0; o < d; ++o) ui[o] = lv.b[o] + dotn(lv.w + o * d, xi, d);
      for (std::size_t j = 0; j < d; ++j) work.gdiag[j][i] = lv.w[j * d + j];
    }
  } else {
    const auto h = static_cast<std::size_t>(cfg.hidden_width);
    // First hidden layer; the tangent of direction j before the activation is
    // the j-th column of W0, identical for every point.
    {
      const LayerView& lv = views[0];
      for (std::size_t i = 0; i < nb; ++i) {
        const double* xi = data.x.row(row0 + i);
        double* zi = work.z[0].data() + i * h;
        double* d1i = work.d1[0].data() + i * h;
        double* d2i = work.d2[0].data() + i * h;
        for (std::size_t o = 0; o < h; ++o) {
          const double a = lv.b[o] + dotn(lv.w + o * d, xi, d);
          const ActivationValue av = activation_eval(cfg.activation, a);
          zi[o] = av.value;
          d1i[o] = av.first;
          d2i[o] = av.second;
        }
        for (std::size_t j = 0; j < d; ++j) {
          double* pj = work.p[0][j].data() + i * h;
          double* sj = work.s[0][j].data() + i * h;
          for (std::size_t o = 0; o < h; ++o) {
            pj[o] = lv.w[o * d + j];
            sj[o] = d1i[o] * pj[o];
          }
        }
      }
    }
    for (std::size_t k = 1; k < hl; ++k) {
      const LayerView& lv = views[k];
      for (std::size_t i = 0; i < nb; ++i) {
        const double* zprev = work.z[k - 1].data() + i * h;
        double* zi = work.z[k].data() + i * h;
        double* d1i = work.d1[k].data() + i * h;
        double* d2i = work.d2[k].data() + i * h;
        for (std::size_t o = 0; o < h; ++o) {
          const double a = lv.b[o] + dotn(lv.w + o * h, zprev, h);
          const ActivationValue av = activation_eval(cfg.activation, a);
          zi[o] = av.value;
          d1i[o] = av.first;
          d2i[o] = av.second;
        }
        for (std::size_t j = 0; j < d; ++j) {
          const double* sprev = work.s[k - 1][j].data() + i * h;
          double* pj = work.p[k][j].data() + i * h;
          double* sj = work.s[k][j].data() + i * h;
          for (std::size_t o = 0; o < h; ++o) {
            pj[o] = dotn(lv.w + o * h, sprev, h);
            sj[o] = d1i[o] * pj[o];
          }
        }
      }
    }
    {
      const LayerView& lv = views[hl];
      for (std::size_t i = 0; i < nb; ++i) {
        const double* zprev = work.z[hl - 1].data() + i * h;
        double* ui = work.u.data() + i * d;
        for (std::size_t o = 0; o < d; ++o) ui[o] = lv.b[o] + dotn(lv.w + o * h, zprev, h);
        for (std::size_t j = 0; j < d; ++j)
          work.gdiag[j][i] = dotn(work.s[hl - 1][j].data() + i * h, lv.w + j * h, h);
      }
    }
  }
  for (std::size_t i = 0; i < nb; ++i) {
    const double* ai = data.coeff_a.row(row0 + i);
    const double* wi = data.coeff_w.row(row0 + i);
    double acc = dotn(ai, work.u.data() + i * d, d);
    for (std::size_t j = 0; j < d; ++j) acc += wi[j] * work.gdiag[j][i];
    work.g[i] = acc;
  }
}

// Reverse pass for points [r0, r1) of the block (relative indices), with
// per-point output weights c. Accumulates into the network-part gradient
// buffer `grad_net` (layout identical to the parameter vector) and returns
// sum(c) (the theta0 component).
double reverse_block(const MlpConfig& cfg, const std::vector<LayerView>& views,
                     const std::vector<LayerOffsets>& offs, const PreparedDataset& data,
                     std::size_t row0, std::size_t r0, std::size_t r1, const double* c,
                     BlockWork& work, double* grad_net) {
  const auto d = static_cast<std::size_t>(cfg.input_dim);
  const std::size_t hl = views.size() - 1;
  double csum = 0.0;
  if (hl == 0) {
    double* gw = grad_net + offs[0].w;
    double* gb = grad_net + offs[0].b;
    for (std::size_t i = r0; i < r1; ++i) {
      const double ci = c[i];
      csum += ci;
      const double* xi = data.x.row(row0 + i);
      const double* ai = data.coeff_a.row(row0 + i);
      const double* wi = data.coeff_w.row(row0 + i);
      for (std::size_t o = 0; o < d; ++o) {
        const double ub = ci * ai[o];
        gb[o] += ub;
        axpyn(ub, xi, gw + o * d, d);
      }
      for (std::size_t j = 0; j < d; ++j) gw[j * d + j] += ci * wi[j];
    }
    return csum;
  }
  const auto h = static_cast<std::size_t>(cfg.hidden_width);
  const LayerView& last = views[hl];
  double* gw_last = grad_net + offs[hl].w;
  double* gb_last = grad_net + offs[hl].b;
  for (std::size_t i = r0; i < r1; ++i) {
    const double ci = c[i];
    csum += ci;
    const double* ai = data.coeff_a.row(row0 + i);
    const double* wi = data.coeff_w.row(row0 + i);
    const double* zprev = work.z[hl - 1].data() + i * h;
    double* zrow = work.zrow.data();
    std::fill(zrow, zrow + h, 0.0);
    for (std::size_t o = 0; o < d; ++o) {
      const double ub = ci * ai[o];
      gb_last[o] += ub;
      axpyn(ub, zprev, gw_last + o * h, h);
      axpyn(ub, last.w + o * h, zrow, h);
    }
    for (std::size_t j = 0; j < d; ++j) {
      const double sc = ci * wi[j];
      axpyn(sc, work.s[hl - 1][j].data() + i * h, gw_last + j * h, h);
      double* srj = work.srow[j].data();
      const double* wj = last.w + j * h;
      for (std::size_t o = 0; o < h; ++o) srj[o] = sc * wj[o];
    }
    for (std::size_t kk = hl; kk-- > 0;) {
      const LayerView& lv = views[kk];
      double* gw = grad_net + offs[kk].w;
      double* gb = grad_net + offs[kk].b;
      const double* d1i = work.d1[kk].data() + i * h;
      const double* d2i = work.d2[kk].data() + i * h;
      double* ab = work.abar.data();
      for (std::size_t o = 0; o < h; ++o) {
        double t = d1i[o] * zrow[o];
        for (std::size_t j = 0; j < d; ++j)
          t += d2i[o] * work.p[kk][j][i * h + o] * work.srow[j][o];
        ab[o] = t;
        gb[o] += t;
      }
      // pbar_j overwrites srow[j] in place.
      for (std::size_t j = 0; j < d; ++j) {
        double* srj = work.srow[j].data();
        for (std::size_t o = 0; o < h; ++o) srj[o] *= d1i[o];
      }
      if (kk >= 1) {
        const double* zin = work.z[kk - 1].data() + i * h;
        for (std::size_t o = 0; o < h; ++o) axpyn(ab[o], zin, gw + o * h, h);
        for (std::size_t j = 0; j < d; ++j) {
          const double* sin = work.s[kk - 1][j].data() + i * h;
          const double* srj = work.srow[j].data();
          for (std::size_t o = 0; o < h; ++o) axpyn(srj[o], sin, gw + o * h, h);
        }
        double* z2 = work.zrow2.data();
        std::fill(z2, z2 + h, 0.0);
        for (std::size_t o = 0; o < h; ++o) axpyn(ab[o], lv.w + o * h, z2, h);
        std::swap(work.zrow, work.zrow2);
        zrow = work.zrow.data();
        for (std::size_t j = 0; j < d; ++j) {
          double* s2 = work.srow2[j].data();
          std::fill(s2, s2 + h, 0.0);
          const double* srj = work.srow[j].data();
          for (std::size_t o = 0; o < h; ++o) axpyn(srj[o], lv.w + o * h, s2, h);
          std::swap(work.srow[j], work.srow2[j]);
        }
      } else {
        const double* xi = data.x.row(row0 + i);
        for (std::size_t o = 0; o < h; ++o) axpyn(ab[o], xi, gw + o * d, d);
        for (std::size_t j = 0; j < d; ++j) {
          const double* srj = work.srow[j].data();
          for (std::size_t o = 0; o < h; ++o) gw[o * d + j] += srj[o];
        }
      }
    }
  }
  return csum;
}

void check_params(const MlpConfig& cfg, std::span<const double> params) {
  if (params.size() != static_cast<std::size_t>(param_count(cfg)) + 1)
    throw DimensionMismatchError("flat parameter vector must have length p+1");
}

}  // namespace

PreparedDataset prepare_dataset(const stein::SteinModel& model, const TrainingSet& data) {
  PreparedDataset out = prepare_points(model, data.x);
  if (!data.y.empty() && data.y.size() != data.x.rows())
    throw DimensionMismatchError("prepare_dataset: y length mismatch");
  out.y = data.y;
  return out;
}

PreparedDataset prepare_points(const stein::SteinModel& model, const numkit::Matrix& x) {
  const std::size_t n = x.rows(), d = x.cols();
  if (d != static_cast<std::size_t>(model.target.dim()))
    throw DimensionMismatchError("prepare_points: dimension mismatch with target");
  PreparedDataset out{x, numkit::Matrix(n, d), numkit::Matrix(n, d), {}};
#pragma omp parallel for schedule(static)
  for (long ii = 0; ii < static_cast<long>(n); ++ii) {
    const auto i = static_cast<std::size_t>(ii);
    stein::stein_coefficients(model.diffusion, model.target, x.row_span(i), model.bounds,
                              out.coeff_a.row_span(i), out.coeff_w.row_span(i));
  }
  return out;
}

numkit::Vector batch_model_values(const MlpConfig& cfg, std::span<const double> params,
                                  const PreparedDataset& data) {
  check_params(cfg, params);
  const std::size_t n = data.size();
  const double theta0 = params[0];
  const std::vector<LayerView> views = layer_views(cfg, params.data() + 1);
  numkit::Vector out(n);
  const std::size_t nblocks = (n + kBlockSize - 1) / kBlockSize;
#pragma omp parallel
  {
    BlockWork work;
    work.configure(cfg, kBlockSize);
#pragma omp for schedule(static)
    for (long bb = 0; bb < static_cast<long>(nblocks); ++bb) {
      const std::size_t row0 = static_cast<std::size_t>(bb) * kBlockSize;
      const std::size_t nb = std::min(kBlockSize, n - row0);
      forward_tangent_block(cfg, views, data, row0, nb, work);
      for (std::size_t i = 0; i < nb; ++i) out[row0 + i] = work.g[i] + theta0;
    }
  }
  return out;
}

double batch_loss(const MlpConfig& cfg, std::span<const double> params, const PreparedDataset& data,
                  double lambda) {
  check_params(cfg, params);
  const std::size_t n = data.size();
  if (data.y.size() != n) throw DimensionMismatchError("batch_loss: dataset has no targets");
  const double theta0 = params[0];
  const std::vector<LayerView> views = layer_views(cfg, params.data() + 1);
  const std::size_t nblocks = (n + kBlockSize - 1) / kBlockSize;
  numkit::Vector partial(nblocks, 0.0);
#pragma omp parallel
  {
    BlockWork work;
    work.configure(cfg, kBlockSize);
#pragma omp for schedule(static)
    for (long bb = 0; bb < static_cast<long>(nblocks); ++bb) {
      const std::size_t row0 = static_cast<std::size_t>(bb) * kBlockSize;
      const std::size_t nb = std::min(kBlockSize, n - row0);
      forward_tangent_block(cfg, views, data, row0, nb, work);
      double acc = 0.0;
      for (std::size_t i = 0; i < nb; ++i) {
        const double r = work.g[i] + theta0 - data.y[row0 + i];
        acc += r * r;
      }
      partial[static_cast<std::size_t>(bb)] = acc;
    }
  }
  double sq = 0.0;
  for (double v : partial) sq += v;
  double reg = 0.0;
  for (double v : params) reg += v * v;
  return sq / static_cast<double>(n) + lambda * reg;
}

double batch_loss_gradient(const MlpConfig& cfg, std::span<const double> params,
                           const PreparedDataset& data, double lambda, std::span<double> grad_out) {
  check_params(cfg, params);
  const std::size_t n = data.size();
  if (data.y.size() != n) throw DimensionMismatchError("batch_loss_gradient: dataset has no targets");
  if (grad_out.size() != params.size())
    throw DimensionMismatchError("batch_loss_gradient: gradient size mismatch");
  const double theta0 = params[0];
  const std::vector<LayerView> views = layer_views(cfg, params.data() + 1);
  const std::vector<LayerOffsets> offs = layer_offsets(cfg);
  const std::size_t np = params.size();
  const std::size_t nblocks = (n + kBlockSize - 1) / kBlockSize;
  // Per-block partial gradients, reduced in block order afterwards.
  numkit::Vector partial_grad(nblocks * np, 0.0);
  numkit::Vector partial_loss(nblocks, 0.0);
  const double scale = 2.0 / static_cast<double>(n);
#pragma omp parallel
  {
    BlockWork work;
    work.configure(cfg, kBlockSize);
    numkit::Vector c(kBlockSize);
#pragma omp for schedule(static)
    for (long bb = 0; bb < static_cast<long>(nblocks); ++bb) {
      const std::size_t row0 = static_cast<std::size_t>(bb) * kBlockSize;
      const std::size_t nb = std::min(kBlockSize, n - row0);
      forward_tangent_block(cfg, views, data, row0, nb, work);
      double acc = 0.0;
      for (std::size_t i = 0; i < nb; ++i) {
        const double r = work.g[i] + theta0 - data.y[row0 + i];
        acc += r * r;
        c[i] = scale * r;
      }
      partial_loss[static_cast<std::size_t>(bb)] = acc;
      double* gblock = partial_grad.data() + static_cast<std::size_t>(bb) * np;
      gblock[0] = reverse_block(cfg, views, offs, data, row0, 0, nb, c.data(), work, gblock + 1);
    }
  }
  std::fill(grad_out.begin(), grad_out.end(), 0.0);
  for (std::size_t b = 0; b < nblocks; ++b)
    axpyn(1.0, partial_grad.data() + b * np, grad_out.data(), np);
  double sq = 0.0;
  for (double v : partial_loss) sq += v;
  double reg = 0.0;
  for (double v : params) reg += v * v;
  const double loss_value = sq / static_cast<double>(n) + lambda * reg;
  for (std::size_t t = 0; t < np; ++t) grad_out[t] += 2.0 * lambda * params[t];
  if (!std::isfinite(loss_value)) throw NonFiniteGradientError("loss is not finite");
  for (double v : grad_out)
    if (!std::isfinite(v)) throw NonFiniteGradientError("gradient is not finite");
  return loss_value;
}

void param_jacobian_row(const MlpConfig& cfg, std::span<const double> params,
                        std::span<const double> x, std::span<const double> coeff_a,
                        std::span<const double> coeff_w, std::span<double> row_out) {
  check_params(cfg, params);
  if (row_out.size() != params.size())
    throw DimensionMismatchError("param_jacobian_row: output size mismatch");
  const auto d = static_cast<std::size_t>(cfg.input_dim);
  PreparedDataset data{numkit::Matrix(1, d), numkit::Matrix(1, d), numkit::Matrix(1, d), {}};
  std::copy(x.begin(), x.end(), data.x.row(0));
  std::copy(coeff_a.begin(), coeff_a.end(), data.coeff_a.row(0));
  std::copy(coeff_w.begin(), coeff_w.end(), data.coeff_w.row(0));
  const std::vector<LayerView> views = layer_views(cfg, params.data() + 1);
  const std::vector<LayerOffsets> offs = layer_offsets(cfg);
  BlockWork work;
  work.configure(cfg, 1);
  forward_tangent_block(cfg, views, data, 0, 1, work);
  std::fill(row_out.begin(), row_out.end(), 0.0);
  const double one = 1.0;
  row_out[0] = reverse_block(cfg, views, offs, data, 0, 0, 1, &one, work, row_out.data() + 1);
}

numkit::Matrix param_jacobian(const MlpConfig& cfg, std::span<const double> params,
                              const PreparedDataset& data) {
  check_params(cfg, params);
  const std::size_t n = data.size();
  const std::size_t np = params.size();
  const std::vector<LayerView> views = layer_views(cfg, params.data() + 1);
  const std::vector<LayerOffsets> offs = layer_offsets(cfg);
  numkit::Matrix rows(n, np);
  const std::size_t nblocks = (n + kBlockSize - 1) / kBlockSize;
#pragma omp parallel
  {
    BlockWork work;
    work.configure(cfg, kBlockSize);
    const numkit::Vector ones(kBlockSize, 1.0);
#pragma omp for schedule(static)
    for (long bb = 0; bb < static_cast<long>(nblocks); ++bb) {
      const std::size_t row0 = static_cast<std::size_t>(bb) * kBlockSize;
      const std::size_t nb = std::min(kBlockSize, n - row0);
      forward_tangent_block(cfg, views, data, row0, nb, work);
      for (std::size_t i = 0; i < nb; ++i) {
        double* row = rows.row(row0 + i);
        std::fill(row, row + np, 0.0);
        row[0] = reverse_block(cfg, views, offs, data, row0, i, i + 1, ones.data(), work, row + 1);
      }
    }
  }
  return rows;
}

// ---------------------------------------------------------------------------
// Serial reference implementations: straightforward per-point matrix code,
// structurally independent of the blocked kernels above.
// ---------------------------------------------------------------------------

namespace {

struct PointTrace {
  std::vector<numkit::Vector> z;            // per layer post-activation (z[0] = x)
  std::vector<numkit::Vector> d1, d2;       // activation derivatives per hidden layer
  std::vector<std::vector<numkit::Vector>> pt, st;  // tangent pre/post per hidden layer per direction
  numkit::Vector u;
  numkit::Vector jdiag;
};

void point_forward(const MlpNetwork& net, std::span<const double> x, PointTrace& tr) {
  const auto d = static_cast<std::size_t>(net.config.input_dim);
  const std::size_t layers = net.weights.size();
  const std::size_t hl = layers - 1;
  tr.z.assign(1, numkit::Vector(x.begin(), x.end()));
  tr.d1.assign(hl, {});
  tr.d2.assign(hl, {});
  tr.pt.assign(hl, {});
  tr.st.assign(hl, {});
  std::vector<numkit::Vector> tan(d);
  for (std::size_t j = 0; j < d; ++j) {
    tan[j].assign(d, 0.0);
    tan[j][j] = 1.0;
  }
  for (std::size_t k = 0; k < hl; ++k) {
    const numkit::Matrix& w = net.weights[k];
    numkit::Vector zk(w.rows()), d1k(w.rows()), d2k(w.rows());
    tr.pt[k].assign(d, numkit::Vector(w.rows()));
    tr.st[k].assign(d, numkit::Vector(w.rows()));
    for (std::size_t o = 0; o < w.rows(); ++o) {
      const double a = net.biases[k][o] + numkit::dot(w.row_span(o), tr.z[k]);
      const ActivationValue av = activation_eval(net.config.activation, a);
      zk[o] = av.value;
      d1k[o] = av.first;
      d2k[o] = av.second;
      for (std::size_t j = 0; j < d; ++j) {
        tr.pt[k][j][o] = numkit::dot(w.row_span(o), tan[j]);
        tr.st[k][j][o] = av.first * tr.pt[k][j][o];
      }
    }
    tr.z.push_back(zk);
    tr.d1[k] = d1k;
    tr.d2[k] = d2k;
    for (std::size_t j = 0; j < d; ++j) tan[j] = tr.st[k][j];
  }
  const numkit::Matrix& wl = net.weights[hl];
  tr.u.assign(d, 0.0);
  tr.jdiag.assign(d, 0.0);
  for (std::size_t o = 0; o < d; ++o)
    tr.u[o] = net.biases[hl][o] + numkit::dot(wl.row_span(o), tr.z[hl]);
  for (std::size_t j = 0; j < d; ++j) tr.jdiag[j] = numkit::dot(wl.row_span(j), tan[j]);
}

// Gradient of c * g(x) accumulated into per-layer weight/bias gradients.
void point_reverse(const MlpNetwork& net, std::span<const double> x, std::span<const double> ca,
                   std::span<const double> cw, double c, const PointTrace& tr,
                   std::vector<numkit::Matrix>& gw, std::vector<numkit::Vector>& gb) {
  const auto d = static_cast<std::size_t>(net.config.input_dim);
  const std::size_t layers = net.weights.size();
  const std::size_t hl = layers - 1;
  if (hl == 0) {
    for (std::size_t o = 0; o < d; ++o) {
      const double ub = c * ca[o];
      gb[0][o] += ub;
      for (std::size_t in = 0; in < d; ++in) gw[0](o, in) += ub * x[in];
      gw[0](o, o) += c * cw[o];
    }
    return;
  }
  const numkit::Matrix& wl = net.weights[hl];
  const std::size_t h = wl.cols();
  numkit::Vector zbar(h, 0.0);
  std::vector<numkit::Vector> sbar(d, numkit::Vector(h, 0.0));
  for (std::size_t o = 0; o < d; ++o) {
    const double ub = c * ca[o];
    gb[hl][o] += ub;
    for (std::size_t m = 0; m < h; ++m) {
      gw[hl](o, m) += ub * tr.z[hl][m];
      zbar[m] += ub * wl(o, m);
    }
  }
  for (std::size_t j = 0; j < d; ++j) {
    const double sc = c * cw[j];
    for (std::size_t m = 0; m < h; ++m) {
      gw[hl](j, m) += sc * tr.st[hl - 1][j][m];
      sbar[j][m] += sc * wl(j, m);
    }
  }
  for (std::size_t kk = hl; kk-- > 0;) {
    const numkit::Matrix& w = net.weights[kk];
    const std::size_t out = w.rows(), in = w.cols();
    numkit::Vector ab(out);
    std::vector<numkit::Vector> pb(d, numkit::Vector(out));
    for (std::size_t o = 0; o < out; ++o) {
      double t = tr.d1[kk][o] * zbar[o];
      for (std::size_t j = 0; j < d; ++j) t += tr.d2[kk][o] * tr.pt[kk][j][o] * sbar[j][o];
      ab[o] = t;
      gb[kk][o] += t;
      for (std::size_t j = 0; j < d; ++j) pb[j][o] = tr.d1[kk][o] * sbar[j][o];
    }
    for (std::size_t o = 0; o < out; ++o)
      for (std::size_t m = 0; m < in; ++m) gw[kk](o, m) += ab[o] * tr.z[kk][m];
    if (kk >= 1) {
      for (std::size_t j = 0; j < d; ++j)
        for (std::size_t o = 0; o < out; ++o)
          for (std::size_t m = 0; m < in; ++m) gw[kk](o, m) += pb[j][o] * tr.st[kk - 1][j][m];
      zbar.assign(in, 0.0);
      for (std::size_t o = 0; o < out; ++o)
        for (std::size_t m = 0; m < in; ++m) zbar[m] += ab[o] * w(o, m);
      for (std::size_t j = 0; j < d; ++j) {
        numkit::Vector nb(in, 0.0);
        for (std::size_t o = 0; o < out; ++o)
          for (std::size_t m = 0; m < in; ++m) nb[m] += pb[j][o] * w(o, m);
        sbar[j] = nb;
      }
    } else {
      for (std::size_t j = 0; j < d; ++j)
        for (std::size_t o = 0; o < out; ++o) gw[0](o, j) += pb[j][o];
    }
  }
}

double point_g(const MlpNetwork& net, const PreparedDataset& data, std::size_t i, PointTrace& tr) {
  point_forward(net, data.x.row_span(i), tr);
  double g = 0.0;
  for (std::size_t c = 0; c < tr.u.size(); ++c)
    g += data.coeff_a(i, c) * tr.u[c] + data.coeff_w(i, c) * tr.jdiag[c];
  return g;
}

}  // namespace

numkit::Vector model_values_reference(const MlpConfig& cfg, std::span<const double> params,
                                      const PreparedDataset& data) {
  check_params(cfg, params);
  MlpNetwork net = MlpNetwork::zeros(cfg);
  net.unpack(params.subspan(1));
  numkit::Vector out(data.size());
  PointTrace tr;
  for (std::size_t i = 0; i < data.size(); ++i) out[i] = point_g(net, data, i, tr) + params[0];
  return out;
}

double loss_reference(const MlpConfig& cfg, std::span<const double> params,
                      const PreparedDataset& data, double lambda) {
  const numkit::Vector values = model_values_reference(cfg, params, data);
  double sq = 0.0;
  for (std::size_t i = 0; i < values.size(); ++i) sq += (values[i] - data.y[i]) * (values[i] - data.y[i]);
  double reg = 0.0;
  for (double v : params) reg += v * v;
  return sq / static_cast<double>(values.size()) + lambda * reg;
}

double loss_gradient_reference(const MlpConfig& cfg, std::span<const double> params,
                               const PreparedDataset& data, double lambda,
                               std::span<double> grad_out) {
  check_params(cfg, params);
  if (grad_out.size() != params.size())
    throw DimensionMismatchError("loss_gradient_reference: gradient size mismatch");
  MlpNetwork net = MlpNetwork::zeros(cfg);
  net.unpack(params.subspan(1));
  const std::size_t n = data.size();
  std::vector<numkit::Matrix> gw;
  std::vector<numkit::Vector> gb;
  for (const numkit::Matrix& w : net.weights) {
    gw.emplace_back(w.rows(), w.cols());
    gb.emplace_back(w.rows(), 0.0);
  }
  PointTrace tr;
  double sq = 0.0, theta0_grad = 0.0;
  const double scale = 2.0 / static_cast<double>(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double r = point_g(net, data, i, tr) + params[0] - data.y[i];
    sq += r * r;
    const double c = scale * r;
    theta0_grad += c;
    point_reverse(net, data.x.row_span(i), data.coeff_a.row_span(i), data.coeff_w.row_span(i), c, tr,
                  gw, gb);
  }
  grad_out[0] = theta0_grad;
  std::size_t pos = 1;
  for (std::size_t k = 0; k < gw.size(); ++k) {
    std::copy(gw[k].data(), gw[k].data() + gw[k].rows() * gw[k].cols(), grad_out.begin() + pos);
    pos += gw[k].rows() * gw[k].cols();
    std::copy(gb[k].begin(), gb[k].end(), grad_out.begin() + pos);
    pos += gb[k].size();
  }
  double reg = 0.0;
  for (double v : params) reg += v * v;
  for (std::size_t t = 0; t < params.size(); ++t) grad_out[t] += 2.0 * lambda * params[t];
  return sq / static_cast<double>(n) + lambda * reg;
}

double loss(const stein::SteinModel& model, const TrainingSet& data, double lambda) {
  const PreparedDataset prepared = prepare_dataset(model, data);
  return batch_loss(model.network.config, model.pack(), prepared, lambda);
}

double loss_gradient(const stein::SteinModel& model, const TrainingSet& data, double lambda,
                     std::span<double> grad_out) {
  const PreparedDataset prepared = prepare_dataset(model, data);
  return batch_loss_gradient(model.network.config, model.pack(), prepared, lambda, grad_out);
}

}  // namespace bsn::net
