#pragma once

#include <string>
#include <vector>

#include "collapse_lab/data.hpp"

namespace collapse_lab {

/// Spectral summary of a dataset that every closed form is written in.
///
/// With A = E[x x^T] = P_A Phi P_A^T (positive part only) and the whitened
/// input x~ = Phi^{-1/2} P_A^T x, the cross moment Z = E[y x~^T] has SVD
/// Z = F Sigma_Z G^T with singular values zeta non-increasing.
struct DataSpectrum {
  int ambient_dim = 0;  // D0
  int rank = 0;         // d0, eigenvalues of A kept
  int target_dim = 0;   // d2

  Matrix P;        // D0 x d0, orthonormal columns
  Vector phi;      // d0, positive, non-increasing
  Matrix Z;        // d2 x d0
  Matrix F;        // d2 x d2
  Matrix G;        // d0 x d0
  Vector zeta;     // min(d0, d2), non-increasing, >= 0
  int nonzero = 0; // d^hat*, count of zeta_i above zeta_tol

  double eig_tol = 0.0;   // absolute cut used on eigenvalues of A
  double zeta_tol = 0.0;  // absolute cut used on zeta

  double y_second_moment = 0.0;  // E||y||^2
  /// E||y||^2 - ||Z||_F^2, the part of y no linear map of x can explain.
  /// Zero (up to the tolerance) for linear targets.
  double residual = 0.0;

  std::vector<std::string> warnings;

  int min_dim() const { return static_cast<int>(zeta.size()); }  // d*
  double zeta_sq(int i) const;  // zeta_i^2 with zeta_i = 0 beyond d*
  /// Sum of zeta_i^2 over i < nonzero.
  double zeta_sq_sum() const;

  /// Spectrum with P_A = F = G = I, Phi = 1 and the given singular values
  /// (padded with zeros up to min(d0, d2)). Used to feed published spectra
  /// straight into the predictors.
  static DataSpectrum from_singular_values(const Vector& zeta, int d0, int d2,
                                           double relative_tol = 1e-10);
};

struct EffectiveCounts {
  int min_dim = 0;         // d*
  int nonzero = 0;         // d^hat*
  int nonzero_latent = 0;  // d^hat_1
};

constexpr double kDefaultRankTol = 1e-10;

/// Empirical moments of ds. Eigenvalues of A and singular values of Z below
/// relative_tol times the largest one are treated as zero. Throws
/// DegenerateInput when A is numerically zero.
DataSpectrum compute_spectrum(const Dataset& ds, double relative_tol = kDefaultRankTol);

EffectiveCounts effective_counts(const DataSpectrum& sp, int latent_dim);

/// Maps a sample to whitened coordinates Phi^{-1/2} P_A^T x (rows are samples).
Matrix whiten(const DataSpectrum& sp, const Matrix& X);

/// Flips signs so the largest-magnitude entry of each column of `lead` is
/// positive, applying the same flip to the matching column of `follow`.
void fix_column_signs(Matrix& lead, Matrix* follow);

}  // namespace collapse_lab
