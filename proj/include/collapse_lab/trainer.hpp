#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <vector>

#include "collapse_lab/closed_form.hpp"
#include "collapse_lab/optimizer.hpp"

namespace collapse_lab {

/// Which parameter blocks exist and are optimized.
struct ParamLayout {
  bool learn_sigma = true;  // log_sigma trained (otherwise held at its value)
  bool bias = false;        // encoder and decoder biases
  bool ddv = false;         // sigma_i(x) = |C_i x + f_i| replaces log_sigma
  bool learn_s = false;     // decoder variance s = exp(log_s) trained

  static ParamLayout from(const Hyperparams& hp, bool bias = false, bool ddv = false);
};

struct ModelParams {
  Matrix U;            // d2 x d1
  Matrix W;            // D0 x d1
  Vector log_sigma;    // d1
  Vector b_e;          // d1, zero unless layout.bias
  Vector b_d;          // d2, zero unless layout.bias
  Matrix C;            // d1 x D0, used when layout.ddv
  Vector f;            // d1, used when layout.ddv
  double log_s = 0.0;  // used when layout.learn_s
  ParamLayout layout;

  int latent_dim() const { return static_cast<int>(U.cols()); }
  Vector sigma() const { return log_sigma.array().exp(); }

  /// Zero-initialized parameters of the right shapes.
  static ModelParams zeros(int input_dim, int target_dim, const Hyperparams& hp, ParamLayout layout);
  /// Entries uniform in [-0.1, 0.1]; log_sigma = 0, f = 1, log_s = log eta_dec^2.
  static ModelParams random(int input_dim, int target_dim, const Hyperparams& hp, ParamLayout layout,
                            std::uint64_t seed);
  /// Closed-form solution placed into parameter form (sigma and biases filled in).
  static ModelParams from_minimum(const GlobalMinimum& gm, const Hyperparams& hp, ParamLayout layout);

  /// Active entries concatenated in a fixed order; inverse of unflatten.
  Vector flatten() const;
  void unflatten(const Vector& x);
};

/// First and second moments the exact loss depends on.
struct Moments {
  Matrix A;       // E[x x^T], D0 x D0
  Vector mean_x;  // E[x]
  Matrix Cyx;     // E[y x^T], d2 x D0
  Vector mean_y;  // E[y]
  double y2 = 0.0;  // E||y||^2
};

Moments moments_of(const Dataset& ds);
/// Centered moments implied by a spectrum: A = P Phi P^T, E[y x^T] = Z Phi^{1/2} P^T.
Moments moments_of(const DataSpectrum& sp);

/// Exact expected loss and its gradient. The expectation over the encoder
/// noise is integrated analytically; the data-dependent variance needs the
/// samples for its E log sigma^2 term, so it requires a dataset.
class Objective {
 public:
  Objective(const Dataset& ds, const Hyperparams& hp);
  Objective(const DataSpectrum& sp, const Hyperparams& hp);

  double loss(const ModelParams& p) const;
  /// Loss, with the gradient written into grad (same layout as p).
  double loss_and_grad(const ModelParams& p, ModelParams& grad) const;

  const Moments& moments() const { return m_; }
  const Hyperparams& hyperparams() const { return hp_; }
  int input_dim() const { return static_cast<int>(m_.A.rows()); }
  int target_dim() const { return static_cast<int>(m_.Cyx.rows()); }
  bool has_samples() const { return X_.size() != 0; }

 private:
  double evaluate(const ModelParams& p, ModelParams* grad) const;
  void check(const ModelParams& p) const;

  Moments m_;
  Hyperparams hp_;
  Matrix X_;  // samples, only for the data-dependent variance
};

double eval_loss(const ModelParams& p, const Dataset& ds, const Hyperparams& hp);
double eval_loss(const ModelParams& p, const DataSpectrum& sp, const Hyperparams& hp);
ModelParams eval_grad(const ModelParams& p, const DataSpectrum& sp, const Hyperparams& hp);
ModelParams eval_grad(const ModelParams& p, const Dataset& ds, const Hyperparams& hp);

struct MonteCarloEstimate {
  double mean = 0.0;
  double std_error = 0.0;
  long samples = 0;
};

/// Reparameterized estimate: draw k uses data row k mod n and one noise draw
/// eps ~ N(0, Sigma(x)); the KL term is kept analytic per sample.
MonteCarloEstimate eval_loss_monte_carlo(const ModelParams& p, const Dataset& ds, const Hyperparams& hp,
                                         long k, std::uint64_t seed);

enum class ExpectationMode { ClosedForm, MonteCarlo };

struct TrainConfig {
  OptimizerKind optimizer = OptimizerKind::LBFGS;
  double learning_rate = 1e-3;
  long max_steps = 20000;
  double grad_tol = 1e-9;
  std::uint64_t seed = 0;
  ExpectationMode expectation = ExpectationMode::ClosedForm;
  bool trace = false;
  /// Adam iterations run before the main optimizer. Small steps keep
  /// |C x + f| from jumping across zero on some samples, which for the
  /// data-dependent variance separates basins.
  long warmup_steps = 0;
  double warmup_learning_rate = 1e-2;
  /// Optional observer of every accepted iterate.
  std::function<void(long step, const ModelParams& p)> on_step;

  void validate() const;
};

struct TrainResult {
  ModelParams params;
  double final_loss = 0.0;
  double grad_norm = 0.0;
  long steps = 0;
  bool converged = false;
  std::vector<TracePoint> trace;
};

/// Minimizes the objective from init. Training always uses the exact
/// expectation; ExpectationMode::MonteCarlo is rejected with InvalidSpec.
TrainResult train(const ModelParams& init, const Objective& obj, const TrainConfig& cfg);
/// Random initialization from cfg.seed.
TrainResult train(const Objective& obj, ParamLayout layout, const TrainConfig& cfg);

/// Singular values of U (Phi^{1/2} P_A^T W)^T, i.e. of U W^T A^{1/2}, descending.
Vector product_singular_values(const ModelParams& p, const DataSpectrum& sp);

/// Root of the sample average of sigma_i(x)^2 (or sigma_i without ddv).
Vector effective_sigma(const ModelParams& p, const Moments& m);

struct DdvComparison {
  double lhs = 0.0;  // loss with (C, f)
  double rhs = 0.0;  // loss with C = 0 and f'_i = sqrt(E (C_i x + f_i)^2)
};

/// Throws DegenerateVariance if sigma_i(x) = 0 on some sample.
DdvComparison ddv_inequality_check(const ModelParams& p, const Dataset& ds, const Hyperparams& hp);

}  // namespace collapse_lab
