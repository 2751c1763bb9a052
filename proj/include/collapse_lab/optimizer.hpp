#pragma once

#include <functional>
#include <vector>

#include "collapse_lab/data.hpp"

namespace collapse_lab {

enum class OptimizerKind { PlainGD, Adam, LBFGS };

/// Returns f(x) and writes the gradient into *grad when grad is non-null.
using ObjectiveFn = std::function<double(const Vector& x, Vector* grad)>;

struct OptimizerConfig {
  OptimizerKind kind = OptimizerKind::LBFGS;
  double learning_rate = 1e-3;
  long max_steps = 10000;
  double grad_tol = 1e-8;
  // Adam
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  // L-BFGS
  int memory = 10;
  bool record_trace = false;
  /// Called with every accepted iterate, including the starting point (step 0).
  std::function<void(long step, const Vector& x)> on_step;
};

struct TracePoint {
  long step = 0;
  double loss = 0.0;
  double grad_norm = 0.0;
};

struct OptimizerResult {
  Vector x;
  double loss = 0.0;
  double grad_norm = 0.0;
  long steps = 0;
  bool converged = false;
  std::vector<TracePoint> trace;
};

/// Minimizes f from x0. Stops once the Euclidean gradient norm is at most
/// grad_tol or after max_steps iterations. Throws DivergenceError when the
/// loss or gradient becomes non-finite.
///
/// PlainGD halves the step and retries whenever a step would increase the
/// loss, so accepted losses never increase. L-BFGS ignores learning_rate and
/// uses Armijo backtracking from a unit step.
OptimizerResult minimize(const ObjectiveFn& f, const Vector& x0, const OptimizerConfig& cfg);

}  // namespace collapse_lab
