#pragma once

#include "comind/autodiff/tensor.hpp"

#include <Eigen/Dense>

#include <optional>
#include <vector>

namespace comind::linalg {

using Matrix = ad::RowMatrix;
using Vector = Eigen::VectorXd;

inline constexpr double kWhitenEpsilon = 1e-8;
inline constexpr double kNormEpsilon = 1e-8;
// Gram-Schmidt drops z2 when its residual is below this fraction of ||z2||.
inline constexpr double kParallelTolerance = 1e-6;
inline constexpr double kCcaRidge = 1e-6;

/// Per-column mean and population standard deviation.
struct WhitenStats {
  Vector mean;
  Vector stddev;
  std::vector<bool> degenerate;

  bool any_degenerate() const;
};

struct Whitened {
  Matrix values;
  WhitenStats stats;
};

/// Column-whitens z (mean 0, population variance 1). Columns whose standard
/// deviation is below kWhitenEpsilon become zero and are flagged.
Whitened whiten(const Matrix& z);

WhitenStats column_stats(const Matrix& z);

/// Applies previously computed statistics; degenerate columns map to zero.
Matrix apply_whitening(const Matrix& z, const WhitenStats& stats);

struct CorrelationStats {
  Matrix cross;    // Z1^T Z2 / n
  Matrix within1;  // Z1^T Z1 / n
  Matrix within2;  // Z2^T Z2 / n
  std::optional<Matrix> cross_block1;  // Z1^T H1 / n
  std::optional<Matrix> cross_block2;  // Z2^T H2 / n
};

/// Correlation matrices of already-whitened representations.
CorrelationStats correlation_stats(const Matrix& z1, const Matrix& z2, const Matrix* h1 = nullptr,
                                   const Matrix* h2 = nullptr);

struct OrthogonalizedPair {
  Vector first;
  std::optional<Vector> second;  // absent when z2 is (numerically) parallel to z1
  Matrix projector;              // I - sum of outer products of present vectors
};

/// Gram-Schmidt on (z1, z2) in that order plus the complementary projector.
OrthogonalizedPair orthogonalize_pair(const Vector& z1, const Vector& z2);

struct CcaResult {
  Vector correlations;  // descending, each in [0, 1]
  Matrix u;             // d1 x k
  Matrix v;             // d2 x k
};

/// Classical CCA: singular values of S11^{-1/2} S12 S22^{-1/2} with both
/// within-view covariances ridged by kCcaRidge * I.
CcaResult svd_cca(const Matrix& x1, const Matrix& x2, int k);

/// Symmetric inverse square root through an eigendecomposition.
Matrix inverse_sqrt_spd(const Matrix& s);

}  // namespace comind::linalg
