#include "bsn/train.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <limits>
#include <vector>

#include "bsn/errors.hpp"

namespace bsn::opt {

std::string termination_name(Termination t) {
  switch (t) {
    case Termination::Converged: return "converged";
    case Termination::MaxIterations: return "max-iterations";
    case Termination::LineSearchFailure: return "line-search-failure";
  }
  return "?";
}

namespace {

using numkit::Vector;

bool all_finite(std::span<const double> v) {
  for (double x : v)
    if (!std::isfinite(x)) return false;
  return true;
}

/// Objective evaluation that treats NaN/Inf (thrown or returned) as +inf so
/// the line search can back away from blow-up regions instead of aborting.
struct GuardedObjective {
  const ObjectiveFn& fn;
  double operator()(std::span<const double> p, std::span<double> g) const {
    double f;
    try {
      f = fn(p, g);
    } catch (const NonFiniteGradientError&) {
      return std::numeric_limits<double>::infinity();
    }
    if (!std::isfinite(f) || !all_finite(g)) return std::numeric_limits<double>::infinity();
    return f;
  }
};

struct Trial {
  double alpha = 0.0;
  double f = 0.0;
  double dphi = 0.0;  ///< directional derivative g(x + alpha d) . d
};

/// Minimizer of the cubic through (a.alpha, a.f, a.dphi), (b.alpha, b.f,
/// b.dphi); falls back to bisection when the cubic has no interior minimum.
double cubic_step(const Trial& a, const Trial& b) {
  const double d1 = a.dphi + b.dphi - 3.0 * (a.f - b.f) / (a.alpha - b.alpha);
  const double disc = d1 * d1 - a.dphi * b.dphi;
  if (disc < 0.0 || !std::isfinite(disc)) return 0.5 * (a.alpha + b.alpha);
  const double d2 = std::copysign(std::sqrt(disc), b.alpha - a.alpha);
  const double step =
      b.alpha - (b.alpha - a.alpha) * (b.dphi + d2 - d1) / (b.dphi - a.dphi + 2.0 * d2);
  if (!std::isfinite(step)) return 0.5 * (a.alpha + b.alpha);
  return step;
}

struct LineSearchState {
  Vector x_trial, g_trial;
  double f_trial = 0.0;
  bool success = false;
  bool improved = false;  ///< some trial beat f0 even though Wolfe failed
  int evals = 0;
};

/// Strong-Wolfe line search (bracket + cubic zoom). On success x_trial holds
/// the accepted point with its objective and gradient; on failure it holds
/// the best point seen (improved tells whether it beats the start).
LineSearchState wolfe_search(const GuardedObjective& obj, const Vector& x, const Vector& d,
                             double f0, double dphi0, double alpha_init, const LbfgsConfig& cfg) {
  const std::size_t n = x.size();
  LineSearchState st;
  st.x_trial.resize(n);
  st.g_trial.resize(n);
  Vector xt(n), gt(n);

  const auto evaluate = [&](double alpha) -> Trial {
    for (std::size_t i = 0; i < n; ++i) xt[i] = x[i] + alpha * d[i];
    const double f = obj(xt, gt);
    ++st.evals;
    double dphi = std::numeric_limits<double>::quiet_NaN();
    if (std::isfinite(f)) dphi = numkit::dot(gt, d);
    if (std::isfinite(f) && f < f0 && (!st.improved || f < st.f_trial)) {
      st.improved = true;
      st.f_trial = f;
      st.x_trial = xt;
      st.g_trial = gt;
    }
    return {alpha, f, dphi};
  };

  const auto accept = [&](const Trial& t) {
    st.success = true;
    st.f_trial = t.f;
    st.x_trial = xt;
    st.g_trial = gt;
  };

  const auto zoom = [&](Trial lo, Trial hi) {
    while (st.evals < cfg.max_line_search_evals) {
      double alpha = cubic_step(lo, hi);
      const double left = std::min(lo.alpha, hi.alpha), right = std::max(lo.alpha, hi.alpha);
      const double width = right - left;
      if (width < 1e-16 * std::max(1.0, right)) break;  // interval collapsed
      if (!(alpha > left + 0.1 * width) || !(alpha < right - 0.1 * width))
        alpha = 0.5 * (left + right);
      const Trial t = evaluate(alpha);
      if (!std::isfinite(t.f) || t.f > f0 + cfg.c1 * alpha * dphi0 || t.f >= lo.f) {
        hi = t;
      } else {
        if (std::abs(t.dphi) <= -cfg.c2 * dphi0) {
          accept(t);
          return;
        }
        if (t.dphi * (hi.alpha - lo.alpha) >= 0.0) hi = lo;
        lo = t;
      }
    }
  };

  Trial prev{0.0, f0, dphi0};
  double alpha = alpha_init;
  while (st.evals < cfg.max_line_search_evals) {
    const Trial t = evaluate(alpha);
    if (!std::isfinite(t.f) || t.f > f0 + cfg.c1 * alpha * dphi0 || (st.evals > 1 && t.f >= prev.f)) {
      zoom(prev, t);
      return st;
    }
    if (std::abs(t.dphi) <= -cfg.c2 * dphi0) {
      accept(t);
      return st;
    }
    if (t.dphi >= 0.0) {
      zoom(t, prev);
      return st;
    }
    prev = t;
    alpha = std::min(2.0 * alpha, 1e10);
  }
  return st;
}

}  // namespace

FitResult lbfgs_minimize(const ObjectiveFn& objective, Vector initial, const LbfgsConfig& config) {
  const GuardedObjective obj{objective};
  const std::size_t n = initial.size();
  Vector x = std::move(initial), g(n);
  const double f0 = objective(x, g);  // initial point must be evaluable: throw through
  double f = f0;
  if (!std::isfinite(f) || !all_finite(g))
    throw NonFiniteGradientError("lbfgs_minimize: non-finite objective at the initial point");

  Vector best_x = x;
  double best_f = f;
  std::deque<Vector> s_hist, y_hist;
  std::deque<double> rho_hist;
  Vector d(n), q(n);

  FitResult result;
  result.termination = Termination::MaxIterations;
  int iter = 0;
  for (; iter < config.max_iterations; ++iter) {
    if (numkit::norm_inf(g) <= config.gradient_tolerance) {
      result.termination = Termination::Converged;
      break;
    }

    // two-loop recursion: d = -H g
    q = g;
    const std::size_t m = s_hist.size();
    std::vector<double> alpha_coef(m);
    for (std::size_t k = m; k-- > 0;) {
      alpha_coef[k] = rho_hist[k] * numkit::dot(s_hist[k], q);
      numkit::axpy(-alpha_coef[k], y_hist[k], q);
    }
    if (m > 0) {
      const double gamma =
          numkit::dot(s_hist[m - 1], y_hist[m - 1]) / numkit::dot(y_hist[m - 1], y_hist[m - 1]);
      for (double& v : q) v *= gamma;
    }
    for (std::size_t k = 0; k < m; ++k) {
      const double beta = rho_hist[k] * numkit::dot(y_hist[k], q);
      numkit::axpy(alpha_coef[k] - beta, s_hist[k], q);
    }
    for (std::size_t i = 0; i < n; ++i) d[i] = -q[i];

    double dphi0 = numkit::dot(g, d);
    if (!(dphi0 < 0.0)) {
      // curvature memory went stale; restart from steepest descent
      s_hist.clear();
      y_hist.clear();
      rho_hist.clear();
      for (std::size_t i = 0; i < n; ++i) d[i] = -g[i];
      dphi0 = -numkit::dot(g, g);
      if (!(dphi0 < 0.0)) {
        result.termination = Termination::Converged;  // zero gradient
        break;
      }
    }

    const double alpha_init =
        (iter == 0) ? std::min(1.0, 1.0 / std::max(numkit::norm2(g), 1e-12)) : 1.0;
    const LineSearchState ls = wolfe_search(obj, x, d, f, dphi0, alpha_init, config);
    if (!ls.success) {
      if (ls.improved && ls.f_trial < best_f) {
        best_f = ls.f_trial;
        best_x = ls.x_trial;
      }
      result.termination = Termination::LineSearchFailure;
      break;
    }

    Vector s(n), yv(n);
    for (std::size_t i = 0; i < n; ++i) {
      s[i] = ls.x_trial[i] - x[i];
      yv[i] = ls.g_trial[i] - g[i];
    }
    const double sy = numkit::dot(s, yv);
    if (sy > 1e-10 * numkit::norm2(s) * numkit::norm2(yv)) {
      s_hist.push_back(std::move(s));
      y_hist.push_back(std::move(yv));
      rho_hist.push_back(1.0 / sy);
      if (static_cast<int>(s_hist.size()) > config.memory) {
        s_hist.pop_front();
        y_hist.pop_front();
        rho_hist.pop_front();
      }
    }
    x = ls.x_trial;
    g = ls.g_trial;
    f = ls.f_trial;
    if (f < best_f) {
      best_f = f;
      best_x = x;
    }
  }

  result.params = std::move(best_x);
  result.final_loss = best_f;
  result.iterations = iter;
  return result;
}

FitResult adam_minimize(const ObjectiveFn& objective, Vector initial, const AdamConfig& config) {
  const std::size_t n = initial.size();
  Vector x = std::move(initial), g(n), m(n, 0.0), v(n, 0.0);
  double f = objective(x, g);
  if (!std::isfinite(f) || !all_finite(g))
    throw NonFiniteGradientError("adam_minimize: non-finite objective at the initial point");

  Vector best_x = x;
  double best_f = f;
  FitResult result;
  result.termination = Termination::MaxIterations;
  int t = 0;
  for (; t < config.iterations; ++t) {
    if (numkit::norm_inf(g) <= config.gradient_tolerance) {
      result.termination = Termination::Converged;
      break;
    }
    const double bc1 = 1.0 - std::pow(config.beta1, t + 1);
    const double bc2 = 1.0 - std::pow(config.beta2, t + 1);
    for (std::size_t i = 0; i < n; ++i) {
      m[i] = config.beta1 * m[i] + (1.0 - config.beta1) * g[i];
      v[i] = config.beta2 * v[i] + (1.0 - config.beta2) * g[i] * g[i];
      x[i] -= config.learning_rate * (m[i] / bc1) / (std::sqrt(v[i] / bc2) + config.epsilon);
    }
    f = objective(x, g);
    if (!std::isfinite(f) || !all_finite(g))
      throw NonFiniteGradientError("adam_minimize: objective turned non-finite at step " +
                                   std::to_string(t));
    if (f < best_f) {
      best_f = f;
      best_x = x;
    }
  }

  result.params = std::move(best_x);
  result.final_loss = best_f;
  result.iterations = t;
  return result;
}

}  // namespace bsn::opt

namespace bsn::train {

opt::FitResult train_model(stein::SteinModel& model, const net::TrainingSet& data,
                           const TrainConfig& config) {
  const net::PreparedDataset prep = net::prepare_dataset(model, data);
  double mean_y = 0.0;
  for (double y : data.y) mean_y += y;
  model.theta0 = data.y.empty() ? 0.0 : mean_y / static_cast<double>(data.y.size());

  const auto& cfg = model.network.config;
  const double lambda = config.lambda;
  const opt::ObjectiveFn objective = [&cfg, &prep, lambda](std::span<const double> p,
                                                           std::span<double> grad) {
    return net::batch_loss_gradient(cfg, p, prep, lambda, grad);
  };

  opt::FitResult result = (config.optimizer == Optimizer::Lbfgs)
                              ? opt::lbfgs_minimize(objective, model.pack(), config.lbfgs)
                              : opt::adam_minimize(objective, model.pack(), config.adam);
  model.unpack(result.params);
  return result;
}

}  // namespace bsn::train
