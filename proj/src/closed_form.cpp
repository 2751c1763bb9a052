#include "collapse_lab/closed_form.hpp"

#include <algorithm>
#include <cmath>

#include "collapse_lab/errors.hpp"

namespace collapse_lab {

namespace {

void check_sigma(const Hyperparams& hp, const Vector& sigma) {
  if (sigma.size() != hp.latent_dim) throw ShapeError("sigma must have latent_dim entries");
  for (Eigen::Index i = 0; i < sigma.size(); ++i)
    if (!(sigma(i) > 0.0)) throw DomainError("encoder standard deviations must be positive");
}

// Rank of each sigma in ascending order, ties broken by index.
std::vector<int> pairing(const Vector& sigma) {
  std::vector<int> order(sigma.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = static_cast<int>(i);
  std::stable_sort(order.begin(), order.end(), [&](int a, int b) { return sigma(a) < sigma(b); });
  std::vector<int> mode(order.size());
  for (std::size_t r = 0; r < order.size(); ++r) mode[order[r]] = static_cast<int>(r);
  return mode;
}

// U = F Lambda P (d2 x d1), W = P_A Phi^{-1/2} G Theta P (D0 x d1). Column j
// uses singular pair mode[j] (identity when mode is empty).
void assemble(const DataSpectrum& sp, const Vector& lambda, const Vector& theta, const Matrix& P,
              Matrix& U, Matrix& W, const std::vector<int>& mode = {}) {
  const int d1 = static_cast<int>(lambda.size());
  Matrix u = Matrix::Zero(sp.target_dim, d1);
  Matrix v = Matrix::Zero(sp.rank, d1);
  for (int j = 0; j < d1; ++j) {
    const int m = mode.empty() ? j : mode[j];
    if (m >= sp.min_dim()) continue;
    u.col(j) = lambda(j) * sp.F.col(m);
    v.col(j) = theta(j) * sp.G.col(m);
  }
  U = u * P;
  W = sp.P * sp.phi.cwiseSqrt().cwiseInverse().asDiagonal() * v * P;
}

Matrix identity_or(const std::optional<Matrix>& P, int d1) {
  if (!P) return Matrix::Identity(d1, d1);
  if (P->rows() != d1 || P->cols() != d1) throw ShapeError("P must be d1 x d1");
  const double err = (P->transpose() * *P - Matrix::Identity(d1, d1)).cwiseAbs().maxCoeff();
  if (err > 1e-10) throw DomainError("P is not orthogonal");
  return *P;
}

}  // namespace

void Hyperparams::validate() const {
  if (!(beta > 0.0) || !std::isfinite(beta)) throw DomainError("beta must be > 0");
  if (!(eta_enc > 0.0) || !std::isfinite(eta_enc)) throw DomainError("eta_enc must be > 0");
  if (!(eta_dec > 0.0) || !std::isfinite(eta_dec)) throw DomainError("eta_dec must be > 0");
  if (latent_dim < 1) throw DomainError("latent dimension must be >= 1");
}

int GlobalMinimum::surviving() const {
  return static_cast<int>(std::count(collapsed.begin(), collapsed.end(), false));
}

double ReducedProblem::value(const Matrix& U, const Matrix& V) const {
  if (U.rows() != Z.rows() || V.rows() != Z.cols() || U.cols() != V.cols() || U.cols() != sigma.size())
    throw ShapeError("U, V do not match the reduced problem");
  const double fit = (U * V.transpose() - Z).squaredNorm();
  double noise = 0.0;
  for (Eigen::Index j = 0; j < U.cols(); ++j) noise += sigma(j) * sigma(j) * U.col(j).squaredNorm();
  return fit + noise + ridge * V.squaredNorm();
}

Matrix ReducedProblem::V_from_W(const Matrix& W) const {
  if (W.rows() != P.rows()) throw ShapeError("W has the wrong number of rows");
  return phi.cwiseSqrt().asDiagonal() * (P.transpose() * W);
}

Matrix ReducedProblem::W_from_V(const Matrix& V) const {
  if (V.rows() != phi.size()) throw ShapeError("V has the wrong number of rows");
  return P * (phi.cwiseSqrt().cwiseInverse().asDiagonal() * V);
}

ReducedProblem reduce_to_factorization(const DataSpectrum& sp, const Hyperparams& hp, const Vector& sigma) {
  hp.validate();
  check_sigma(hp, sigma);
  ReducedProblem rp;
  rp.Z = sp.Z;
  rp.sigma = sigma;
  rp.ridge = hp.ridge();
  rp.P = sp.P;
  rp.phi = sp.phi;
  return rp;
}

Factors optimal_factors_given_sigma(const DataSpectrum& sp, const Hyperparams& hp, const Vector& sigma) {
  hp.validate();
  check_sigma(hp, sigma);
  const double k = std::sqrt(hp.beta) * hp.eta_dec / hp.eta_enc;
  Factors f;
  f.lambda = Vector::Zero(hp.latent_dim);
  f.theta = Vector::Zero(hp.latent_dim);
  f.mode = pairing(sigma);
  for (int i = 0; i < hp.latent_dim; ++i) {
    const double zeta = zeta_or_zero(sp, f.mode[i]);
    const double gap = zeta - k * sigma(i);
    if (!(gap > 0.0)) continue;
    f.lambda(i) = std::sqrt(k / sigma(i) * gap);
    f.theta(i) = std::sqrt(sigma(i) / k * gap);
  }
  return f;
}

Factors theorem1_factors(const DataSpectrum& sp, const Hyperparams& hp) {
  hp.validate();
  return optimal_factors_given_sigma(sp, hp, Vector::Constant(hp.latent_dim, hp.eta_enc));
}

GlobalMinimum theorem1_solution(const DataSpectrum& sp, const Hyperparams& hp, const std::optional<Matrix>& P) {
  const Factors f = theorem1_factors(sp, hp);
  GlobalMinimum gm;
  gm.lambda = f.lambda;
  gm.theta = f.theta;
  gm.sigma = Vector::Constant(hp.latent_dim, hp.eta_enc);
  gm.collapsed.assign(hp.latent_dim, true);
  for (int i = 0; i < hp.latent_dim; ++i) gm.collapsed[i] = !(f.lambda(i) > 0.0);
  assemble(sp, gm.lambda, gm.theta, identity_or(P, hp.latent_dim), gm.U, gm.W);
  const double s = hp.eta_dec * hp.eta_dec;
  gm.predicted_loss = (min_factorization_value(sp, hp, gm.sigma) + sp.residual) / (2.0 * s);
  return gm;
}

Vector optimal_sigma(const DataSpectrum& sp, const Hyperparams& hp) {
  hp.validate();
  const double level = hp.collapse_level();
  Vector sigma = Vector::Constant(hp.latent_dim, hp.eta_enc);
  for (int i = 0; i < hp.latent_dim; ++i) {
    const double zeta = zeta_or_zero(sp, i);
    if (level < zeta * zeta) sigma(i) = std::sqrt(hp.beta) * hp.eta_dec * hp.eta_enc / zeta;
  }
  return sigma;
}

double sigma_objective(double zeta, double sigma, const Hyperparams& hp) {
  if (!(sigma > 0.0)) throw DomainError("sigma must be positive");
  const double k = std::sqrt(hp.beta) * hp.eta_dec / hp.eta_enc;
  const double gap = zeta - k * sigma;
  const double fit = gap > 0.0 ? zeta * zeta - gap * gap : zeta * zeta;
  const double r = sigma * sigma / (hp.eta_enc * hp.eta_enc);
  return fit + hp.collapse_level() * (r - 1.0 - std::log(r));
}

bool is_signed_permutation(const Matrix& P, double tol) {
  if (P.rows() != P.cols()) return false;
  std::vector<bool> used(P.rows(), false);
  for (Eigen::Index j = 0; j < P.cols(); ++j) {
    Eigen::Index hit = -1;
    for (Eigen::Index i = 0; i < P.rows(); ++i) {
      const double a = std::abs(P(i, j));
      if (std::abs(a - 1.0) <= tol) {
        if (hit >= 0) return false;
        hit = i;
      } else if (a > tol) {
        return false;
      }
    }
    if (hit < 0 || used[hit]) return false;
    used[hit] = true;
  }
  return true;
}

GlobalMinimum theorem2_solution(const DataSpectrum& sp, const Hyperparams& hp, const std::optional<Matrix>& P) {
  hp.validate();
  const Matrix rot = identity_or(P, hp.latent_dim);
  if (P && !is_signed_permutation(rot))
    throw DomainError("with learnable Sigma the loss is only invariant under signed permutations");

  const double level = hp.collapse_level();
  GlobalMinimum gm;
  gm.lambda = Vector::Zero(hp.latent_dim);
  gm.theta = Vector::Zero(hp.latent_dim);
  gm.collapsed.assign(hp.latent_dim, true);
  for (int i = 0; i < hp.latent_dim; ++i) {
    const double zeta = zeta_or_zero(sp, i);
    if (!(zeta * zeta > level)) continue;
    const double root = std::sqrt(zeta * zeta - level);
    gm.lambda(i) = root / hp.eta_enc;
    gm.theta(i) = hp.eta_enc / zeta * root;
    gm.collapsed[i] = false;
  }
  const Vector sigma = optimal_sigma(sp, hp);
  gm.sigma = (rot.transpose() * sigma.cwiseAbs2().asDiagonal() * rot).diagonal().cwiseSqrt();
  assemble(sp, gm.lambda, gm.theta, rot, gm.U, gm.W);
  gm.predicted_loss = min_vae_value(sp, hp) + sp.residual / (2.0 * hp.eta_dec * hp.eta_dec);
  return gm;
}

double min_factorization_value(const DataSpectrum& sp, const Hyperparams& hp, const Vector& sigma) {
  hp.validate();
  check_sigma(hp, sigma);
  const double k = std::sqrt(hp.beta) * hp.eta_dec / hp.eta_enc;
  double total = sp.zeta.squaredNorm();
  const std::vector<int> mode = pairing(sigma);
  for (int j = 0; j < hp.latent_dim; ++j) {
    const double gap = zeta_or_zero(sp, mode[j]) - k * sigma(j);
    if (gap > 0.0) total -= gap * gap;
  }
  return total;
}

double min_vae_value(const DataSpectrum& sp, const Hyperparams& hp) {
  hp.validate();
  const double level = hp.collapse_level();
  double total = 0.0;
  for (int i = 0; i < sp.min_dim(); ++i) {
    const double z2 = sp.zeta(i) * sp.zeta(i);
    total += z2;
    if (i < hp.latent_dim && z2 > level) total -= z2 + level * (std::log(level / z2) - 1.0);
  }
  return total / (2.0 * hp.eta_dec * hp.eta_dec);
}

}  // namespace collapse_lab
