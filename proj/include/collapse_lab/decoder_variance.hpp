#pragma once

#include <limits>
#include <string>
#include <vector>

#include "collapse_lab/closed_form.hpp"

namespace collapse_lab {

enum class DecVarRegime { IllPosedZero, BoundaryInterval, NoCollapse, PartialCollapse, CompleteCollapse };

std::string to_string(DecVarRegime r);

struct BetaInterval {
  double lo = 0.0;
  double hi = std::numeric_limits<double>::infinity();
  bool lo_closed = false;
  bool hi_closed = false;

  bool contains(double beta) const;
};

/// One line of the regime table for a fixed spectrum. Inside the interval the
/// optimal decoder variance is s_numerator / (d2 - beta * surviving), except
/// for the ill-posed and boundary rows.
struct RegimeRow {
  DecVarRegime regime = DecVarRegime::NoCollapse;
  int surviving = 0;
  BetaInterval beta;
  double s_numerator = 0.0;
};

struct DecVarSolution {
  DecVarRegime regime = DecVarRegime::NoCollapse;
  /// Modes that keep lambda_i > 0. For BoundaryInterval this is the count for
  /// s strictly inside the interval; at the right endpoint one fewer survives.
  int surviving = 0;
  int surviving_at_endpoint = 0;
  /// Unique minimizer for NoCollapse, PartialCollapse and CompleteCollapse;
  /// right endpoint of the minimizing set for BoundaryInterval; 0 when ill-posed.
  double s_star = 0.0;
  double s_lo = 0.0;  // minimizing set is [s_lo, s_star], or (0, s_star] when s_lo = 0
  bool tends_to_zero = false;  // IllPosedZero: the loss decreases without bound as s -> 0
  BetaInterval beta_interval;
  std::vector<RegimeRow> table;

  int nonzero = 0;         // d^hat*
  int nonzero_latent = 0;  // d^hat_1
  int target_dim = 0;      // d2
};

/// Objective after U, W and Sigma are minimized out, as a function of the
/// decoder variance s. The unexplained target variance enters as residual / (2s).
double g_loss(const DataSpectrum& sp, const Hyperparams& hp, double s);
double g_derivative(const DataSpectrum& sp, const Hyperparams& hp, double s);

/// Right-hand side of the stationarity condition d2 s = C(s).
double stationarity_rhs(const DataSpectrum& sp, const Hyperparams& hp, double s);

/// Entry p-1 is the beta from which mode p (1-based, p <= d^hat_1) no longer
/// survives when the decoder variance is learned. Non-increasing.
Vector decvar_thresholds(const DataSpectrum& sp, const Hyperparams& hp);

/// Regime and optimal decoder variance. hp.eta_dec is ignored.
DecVarSolution solve_decoder_variance(const DataSpectrum& sp, const Hyperparams& hp);

struct SRange {
  double lo = 0.0;
  double hi = 0.0;
};

/// Bracket with G' > 0 at the upper end.
SRange oracle_bracket(const DataSpectrum& sp, const Hyperparams& hp);

/// Log-grid scan followed by golden-section refinement of g_loss on [lo, hi].
double oracle_minimize_g(const DataSpectrum& sp, const Hyperparams& hp, SRange range, int grid_points = 2000);

}  // namespace collapse_lab
