#pragma once

#include <optional>
#include <vector>

#include "collapse_lab/spectrum.hpp"

namespace collapse_lab {

enum class Mode { Fixed, Learnable };

struct Hyperparams {
  double beta = 1.0;
  double eta_enc = 1.0;
  double eta_dec = 1.0;
  int latent_dim = 1;  // d1
  Mode sigma_mode = Mode::Learnable;
  Mode decvar_mode = Mode::Fixed;

  /// Throws DomainError unless beta, eta_enc, eta_dec > 0 and latent_dim >= 1.
  void validate() const;

  /// beta * eta_dec^2 / eta_enc^2, the ridge weight on V in the reduced problem.
  double ridge() const { return beta * eta_dec * eta_dec / (eta_enc * eta_enc); }
  /// beta * eta_dec^2. Mode i collapses iff zeta_i^2 <= this.
  double collapse_level() const { return beta * eta_dec * eta_dec; }
};

/// min_{U,V} ||U V^T - Z||_F^2 + Tr(U diag(sigma^2) U^T) + ridge ||V||_F^2,
/// with V = Phi^{1/2} P_A^T W.
struct ReducedProblem {
  Matrix Z;      // d2 x d0
  Vector sigma;  // d1 encoder standard deviations
  double ridge = 0.0;
  Matrix P;      // D0 x d0
  Vector phi;    // d0

  double value(const Matrix& U, const Matrix& V) const;
  Matrix V_from_W(const Matrix& W) const;
  /// Minimum-norm W with Phi^{1/2} P_A^T W = V.
  Matrix W_from_V(const Matrix& V) const;
};

struct Factors {
  Vector lambda;          // d1
  Vector theta;           // d1
  std::vector<int> mode;  // d1, index of the zeta paired with each latent column
};

struct GlobalMinimum {
  Vector lambda;  // d1
  Vector theta;   // d1
  Vector sigma;   // d1, standard deviations
  Matrix U;       // d2 x d1
  Matrix W;       // D0 x d1
  /// Value of the full objective at (U, W, sigma) for the data the spectrum
  /// came from, including the unexplained target variance.
  double predicted_loss = 0.0;
  std::vector<bool> collapsed;  // d1

  int surviving() const;
};

ReducedProblem reduce_to_factorization(const DataSpectrum& sp, const Hyperparams& hp, const Vector& sigma);

/// Minimizer of the reduced problem for a fixed diagonal Sigma = diag(sigma^2).
/// The k-th smallest sigma is paired with the k-th largest zeta; columns with
/// equal sigma keep their order, so sorted or constant sigma pairs i with i.
Factors optimal_factors_given_sigma(const DataSpectrum& sp, const Hyperparams& hp, const Vector& sigma);

/// optimal_factors_given_sigma with every sigma_i = eta_enc.
Factors theorem1_factors(const DataSpectrum& sp, const Hyperparams& hp);

/// Global minimum with sigma_i = eta_enc held fixed. P may be any orthogonal d1 x d1.
GlobalMinimum theorem1_solution(const DataSpectrum& sp, const Hyperparams& hp,
                                const std::optional<Matrix>& P = std::nullopt);

/// Optimal encoder standard deviations when Sigma is learned.
Vector optimal_sigma(const DataSpectrum& sp, const Hyperparams& hp);

/// Per-mode objective in sigma after U and V are minimized out, in units of
/// 2 eta_dec^2 (additive constants dropped).
double sigma_objective(double zeta, double sigma, const Hyperparams& hp);

/// Global minimum with learnable Sigma and fixed decoder variance.
///
/// U* = F Lambda P and W* = P_A Phi^{-1/2} G Theta P. The encoder variances
/// are not isotropic, so only a signed permutation P keeps the loss; sigma*
/// is permuted with it. Throws DomainError for any other P.
GlobalMinimum theorem2_solution(const DataSpectrum& sp, const Hyperparams& hp,
                                const std::optional<Matrix>& P = std::nullopt);

/// min_{U,V} of the reduced problem at fixed sigma.
double min_factorization_value(const DataSpectrum& sp, const Hyperparams& hp, const Vector& sigma);

/// Minimal objective over (U, W, Sigma) at fixed decoder variance, written in
/// zeta only. Add residual / (2 eta_dec^2) to compare with a loss evaluated on data.
double min_vae_value(const DataSpectrum& sp, const Hyperparams& hp);

/// zeta_i, or 0 past min(d0, d2).
inline double zeta_or_zero(const DataSpectrum& sp, int i) {
  return i < sp.min_dim() ? sp.zeta(i) : 0.0;
}

/// True if P is orthogonal with exactly one nonzero (+-1) per column.
bool is_signed_permutation(const Matrix& P, double tol = 1e-12);

}  // namespace collapse_lab
