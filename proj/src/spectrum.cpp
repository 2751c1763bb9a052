#include "collapse_lab/spectrum.hpp"

#include <algorithm>
#include <cmath>
#include <functional>

#include "collapse_lab/errors.hpp"

namespace collapse_lab {

namespace {

void fix_sign(Matrix& m, Eigen::Index col, Matrix* follow) {
  Eigen::Index arg = 0;
  m.col(col).cwiseAbs().maxCoeff(&arg);
  if (m(arg, col) < 0) {
    m.col(col) *= -1.0;
    if (follow != nullptr && col < follow->cols()) follow->col(col) *= -1.0;
  }
}

}  // namespace

double DataSpectrum::zeta_sq(int i) const {
  if (i < 0 || i >= zeta.size()) return 0.0;
  return zeta(i) * zeta(i);
}

double DataSpectrum::zeta_sq_sum() const {
  double s = 0.0;
  for (int i = 0; i < nonzero; ++i) s += zeta(i) * zeta(i);
  return s;
}

void fix_column_signs(Matrix& lead, Matrix* follow) {
  for (Eigen::Index j = 0; j < lead.cols(); ++j) fix_sign(lead, j, follow);
}

DataSpectrum compute_spectrum(const Dataset& ds, double relative_tol) {
  const auto n = ds.X.rows();
  if (n < 1) throw ShapeError("dataset has no samples");
  if (ds.Y.rows() != n) throw ShapeError("X and Y must have the same number of rows");
  if (ds.X.cols() < 1 || ds.Y.cols() < 1) throw ShapeError("dataset needs at least one input and one target column");

  DataSpectrum sp;
  sp.ambient_dim = static_cast<int>(ds.X.cols());
  sp.target_dim = static_cast<int>(ds.Y.cols());

  if (!ds.centered) {
    const double scale = std::max(ds.X.cwiseAbs().maxCoeff(), ds.Y.cwiseAbs().maxCoeff());
    const double drift = std::max(ds.X.colwise().mean().cwiseAbs().maxCoeff(),
                                  ds.Y.colwise().mean().cwiseAbs().maxCoeff());
    if (drift > 1e-10 * std::max(scale, 1e-300))
      sp.warnings.push_back("data is not centered; moments are uncentered (enable biases or center first)");
  }

  const Matrix A = (ds.X.transpose() * ds.X) / static_cast<double>(n);
  Eigen::SelfAdjointEigenSolver<Matrix> eig(A);
  if (eig.info() != Eigen::Success) throw DegenerateInput("eigendecomposition of the input second moment failed");

  // Eigen returns ascending order.
  const Vector evals = eig.eigenvalues().reverse();
  const Matrix evecs = eig.eigenvectors().rowwise().reverse();
  const double top = evals.size() ? evals(0) : 0.0;
  if (!(top > 0.0) || !std::isfinite(top))
    throw DegenerateInput("input second moment is zero; every eigenvalue is below tolerance");
  sp.eig_tol = relative_tol * top;

  int rank = 0;
  while (rank < evals.size() && evals(rank) > sp.eig_tol) ++rank;
  sp.rank = rank;
  sp.phi = evals.head(rank);
  sp.P = evecs.leftCols(rank);
  fix_column_signs(sp.P, nullptr);

  const Vector inv_root = sp.phi.cwiseSqrt().cwiseInverse();
  const Matrix whitened = ds.X * sp.P * inv_root.asDiagonal();
  sp.Z = (ds.Y.transpose() * whitened) / static_cast<double>(n);

  Eigen::JacobiSVD<Matrix> svd(sp.Z, Eigen::ComputeFullU | Eigen::ComputeFullV);
  sp.F = svd.matrixU();
  sp.G = svd.matrixV();
  Vector zeta = svd.singularValues().cwiseMax(0.0);
  const int dmin = static_cast<int>(zeta.size());
  for (int j = 0; j < dmin; ++j) fix_sign(sp.F, j, &sp.G);
  for (int j = dmin; j < sp.F.cols(); ++j) fix_sign(sp.F, j, nullptr);
  for (int j = dmin; j < sp.G.cols(); ++j) fix_sign(sp.G, j, nullptr);

  sp.zeta_tol = dmin > 0 ? relative_tol * zeta(0) : 0.0;
  sp.nonzero = 0;
  for (int i = 0; i < dmin; ++i) {
    if (zeta(i) > sp.zeta_tol)
      ++sp.nonzero;
    else
      zeta(i) = 0.0;
  }
  sp.zeta = zeta;

  sp.y_second_moment = ds.Y.squaredNorm() / static_cast<double>(n);
  const double explained = sp.zeta.squaredNorm();
  const double residual = sp.y_second_moment - explained;
  sp.residual = residual > relative_tol * sp.y_second_moment ? residual : 0.0;

  if (sp.nonzero == 0) sp.warnings.push_back("all singular values of Z are zero; targets carry no linear signal");
  return sp;
}

EffectiveCounts effective_counts(const DataSpectrum& sp, int latent_dim) {
  if (latent_dim < 1) throw DomainError("latent dimension must be >= 1");
  EffectiveCounts c;
  c.min_dim = sp.min_dim();
  c.nonzero = 0;
  c.nonzero_latent = 0;
  for (int i = 0; i < c.min_dim; ++i) {
    if (sp.zeta(i) > sp.zeta_tol) {
      ++c.nonzero;
      if (i < latent_dim) ++c.nonzero_latent;
    }
  }
  return c;
}

Matrix whiten(const DataSpectrum& sp, const Matrix& X) {
  if (X.cols() != sp.ambient_dim) throw ShapeError("sample dimension does not match the spectrum");
  return X * sp.P * sp.phi.cwiseSqrt().cwiseInverse().asDiagonal();
}

DataSpectrum DataSpectrum::from_singular_values(const Vector& zeta, int d0, int d2, double relative_tol) {
  if (d0 < 1 || d2 < 1) throw DomainError("dimensions must be >= 1");
  const int dmin = std::min(d0, d2);
  if (zeta.size() > dmin) throw ShapeError("more singular values than min(d0, d2)");
  if (zeta.size() && zeta.minCoeff() < 0.0) throw DomainError("singular values must be non-negative");

  DataSpectrum sp;
  sp.ambient_dim = d0;
  sp.rank = d0;
  sp.target_dim = d2;
  sp.P = Matrix::Identity(d0, d0);
  sp.phi = Vector::Ones(d0);
  sp.F = Matrix::Identity(d2, d2);
  sp.G = Matrix::Identity(d0, d0);
  sp.eig_tol = relative_tol;

  std::vector<double> sorted(zeta.data(), zeta.data() + zeta.size());
  std::sort(sorted.begin(), sorted.end(), std::greater<>());
  sp.zeta = Vector::Zero(dmin);
  for (std::size_t i = 0; i < sorted.size(); ++i) sp.zeta(static_cast<Eigen::Index>(i)) = sorted[i];

  sp.zeta_tol = dmin > 0 ? relative_tol * sp.zeta(0) : 0.0;
  sp.nonzero = 0;
  for (int i = 0; i < dmin; ++i) {
    if (sp.zeta(i) > sp.zeta_tol)
      ++sp.nonzero;
    else
      sp.zeta(i) = 0.0;
  }
  sp.Z = Matrix::Zero(d2, d0);
  for (int i = 0; i < dmin; ++i) sp.Z(i, i) = sp.zeta(i);
  sp.y_second_moment = sp.zeta.squaredNorm();
  sp.residual = 0.0;
  return sp;
}

}  // namespace collapse_lab
