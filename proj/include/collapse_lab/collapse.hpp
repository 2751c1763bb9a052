#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "collapse_lab/decoder_variance.hpp"

namespace collapse_lab {

enum class CollapseRegime { None, Partial, Complete };

std::string to_string(CollapseRegime r);

struct CollapseReport {
  Vector mode_thresholds;        // d*, beta at which mode i collapses: zeta_i^2 / s
  std::vector<bool> collapsed;   // d1, zeta_i^2 <= beta s (always true past d*)
  CollapseRegime regime = CollapseRegime::None;
  int surviving = 0;
  bool hessian_psd = false;
  double min_hessian_quadratic = 0.0;
  /// Decoder variance the flags were computed at: eta_dec^2, or the learned optimum.
  double decoder_variance = 0.0;
  std::optional<DecVarSolution> decvar;  // set when the decoder variance is learnable
};

/// Per-mode collapse prediction. With a learnable decoder variance the flags
/// are evaluated at the optimal s from solve_decoder_variance; when that is
/// ill-posed or a flat interval, at s just below its right end (every
/// nonzero mode survives).
///
/// The regime only looks at modes with nonzero signal: None if none of them
/// collapsed, Complete if all latent modes collapsed.
CollapseReport predict(const DataSpectrum& sp, const Hyperparams& hp);

struct HessianTest {
  bool psd = false;
  double min_quadratic = 0.0;
};

/// Smallest value of the second-order form of the reduced objective at the
/// origin over unit directions, with sigma_i = eta_enc:
/// eta_enc^2 + c - sqrt((eta_enc^2 - c)^2 + 4 zeta_max^2), c = beta eta_dec^2 / eta_enc^2.
HessianTest hessian_origin_test(const DataSpectrum& sp, const Hyperparams& hp);

/// Finite-difference curvature of the full objective at the origin (sigma_i =
/// eta_enc), rescaled to the units of hessian_origin_test. Samples n_directions
/// random unit directions in (U, V) plus a refined scan over directions that
/// mix the top singular pair (F_1, G_1). Returns the smallest curvature seen.
double numeric_hessian_check(const DataSpectrum& sp, const Hyperparams& hp, int n_directions,
                             std::uint64_t seed = 0, bool directed = true);

struct SweepRow {
  double beta = 0.0;
  double loss = 0.0;      // minimal objective at this beta
  int rank = 0;           // surviving modes
  std::string regime;
  Vector sigma;           // optimal encoder standard deviations, sorted descending
  double decoder_variance = 0.0;
};

/// One row per beta, computed on a pool of worker threads. The grid must be
/// strictly positive and strictly ascending.
std::vector<SweepRow> beta_sweep(const DataSpectrum& sp, const Hyperparams& hp, const std::vector<double>& betas,
                                 unsigned threads = 0);

/// lo, lo + step, ... up to hi (inclusive within half a step).
std::vector<double> beta_grid(double lo, double hi, double step);

}  // namespace collapse_lab
