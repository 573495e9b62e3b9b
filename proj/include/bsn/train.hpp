#pragma once

#include <functional>
#include <span>
#include <string>

#include "bsn/batch_eval.hpp"
#include "bsn/numkit.hpp"
#include "bsn/stein.hpp"

namespace bsn::opt {

/// Differentiable objective: returns the loss at `params` and writes the
/// gradient into the second argument (same length as params).
using ObjectiveFn = std::function<double(std::span<const double>, std::span<double>)>;

enum class Termination { Converged, MaxIterations, LineSearchFailure };

std::string termination_name(Termination t);

struct LbfgsConfig {
  int memory = 10;
  int max_iterations = 2000;
  double gradient_tolerance = 1e-9;  ///< max-norm stopping threshold
  double c1 = 1e-4;                  ///< sufficient-decrease (Armijo) constant
  double c2 = 0.9;                   ///< strong-Wolfe curvature constant
  int max_line_search_evals = 25;
};

struct AdamConfig {
  int iterations = 10000;
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  double gradient_tolerance = 1e-9;
};

struct FitResult {
  numkit::Vector params;    ///< best parameters found
  double final_loss = 0.0;  ///< objective at `params`; never above the initial loss
  int iterations = 0;
  Termination termination = Termination::Converged;
};

/// Limited-memory BFGS with a strong-Wolfe line search (cubic-interpolation
/// zoom) and per-iteration initial scaling gamma = (s.y)/(y.y). A failed line
/// search is an automatic stop: the best iterate seen is returned with
/// termination = LineSearchFailure.
FitResult lbfgs_minimize(const ObjectiveFn& objective, numkit::Vector initial,
                         const LbfgsConfig& config = {});

/// Full-batch Adam with bias correction; returns the best iterate seen.
FitResult adam_minimize(const ObjectiveFn& objective, numkit::Vector initial,
                        const AdamConfig& config = {});

}  // namespace bsn::opt

namespace bsn::train {

enum class Optimizer { Lbfgs, Adam };

struct TrainConfig {
  Optimizer optimizer = Optimizer::Lbfgs;
  double lambda = 1e-6;  ///< weight-decay strength; relates to the prior via lambda = sigma^2/(n sigma0^2)
  opt::LbfgsConfig lbfgs;
  opt::AdamConfig adam;
};

/// Fits the model in place: theta0 starts at mean(y), the network keeps its
/// current (externally seeded) weights, and the chosen optimizer minimizes
/// mean squared residual + lambda * |params|^2. The model holds the fitted
/// parameters on exit.
opt::FitResult train_model(stein::SteinModel& model, const net::TrainingSet& data,
                           const TrainConfig& config = {});

}  // namespace bsn::train
