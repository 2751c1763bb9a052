#pragma once

#include <cstdint>
#include <filesystem>

#include <Eigen/Dense>

namespace collapse_lab {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

/// Paired samples, one per row: X is n x D0, Y is n x d2.
struct Dataset {
  Matrix X;
  Matrix Y;
  bool centered = false;

  Eigen::Index n() const { return X.rows(); }
  Eigen::Index input_dim() const { return X.cols(); }
  Eigen::Index target_dim() const { return Y.cols(); }
};

/// Gaussian inputs x ~ N(0, A) and linear targets y = M x.
struct SyntheticSpec {
  int d0 = 0;
  int d2 = 0;
  int n = 0;
  Matrix A;  // d0 x d0, symmetric PSD
  Matrix M;  // d2 x d0
  std::uint64_t seed = 0;

  /// Deterministic instance used by the CLI's --synthetic flag.
  ///
  /// A = Q diag(a) Q^T with a linearly spaced from 14 down to 2 and Q a
  /// random rotation; M has orthonormal rows (d2 <= d0) or columns
  /// (d2 > d0). For y = M x the population zeta_i^2 are then the top
  /// min(d0, d2) entries of a, so thresholds are well separated.
  static SyntheticSpec standard(int d0, int d2, int n, std::uint64_t seed);
};

struct CenteredDataset {
  Dataset data;
  Vector mean_x;
  Vector mean_y;
};

/// Throws InvalidSpec if A is not symmetric PSD (within 1e-12) or shapes disagree.
void validate(const SyntheticSpec& spec);

/// Draws X with rows i.i.d. N(0, A) via the eigen-factor P Phi^{1/2}, and
/// sets Y = X M^T. Uses std::mt19937_64 seeded with spec.seed.
Dataset generate(const SyntheticSpec& spec);

/// Subtracts column means; the returned means reconstruct the optimal biases.
CenteredDataset center(const Dataset& ds);

/// Format is chosen by extension: ".csv" is text, anything else the raw binary format.
void save(const Dataset& ds, const std::filesystem::path& path);
Dataset load(const std::filesystem::path& path);

void save_csv(const Dataset& ds, const std::filesystem::path& path);
Dataset load_csv(const std::filesystem::path& path);
void save_binary(const Dataset& ds, const std::filesystem::path& path);
Dataset load_binary(const std::filesystem::path& path);

/// Haar-distributed orthogonal matrix (QR of a Gaussian matrix with sign fix).
Matrix random_orthogonal(int dim, std::uint64_t seed);

}  // namespace collapse_lab
