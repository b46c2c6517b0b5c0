#pragma once

#include "comind/linalg/stats.hpp"

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

namespace comind::model {
struct CommonComponent;
struct IndividualComponent;
}  // namespace comind::model

namespace comind::linear {

using linalg::Matrix;
using linalg::Vector;

/// Linear encoder weights: common (U, V) and individual (W, S), all with k columns.
struct LinearMaps {
  Matrix U;  // d1 x k
  Matrix V;  // d2 x k
  Matrix W;  // d1 x k
  Matrix S;  // d2 x k
};

/// ds/dx1 and ds/dx2 of the common score for z1 = U^T x1, z2 = V^T x2:
///   (z1.z2)/||z1|| [U z2~ - (z1~.z2~) U z1~] + (z1~.z2~) U z2
/// and its mirror. Throws NumericError when a latent norm is below 1e-8.
std::pair<Vector, Vector> closed_form_common_grad(const Matrix& U, const Matrix& V, const Vector& x1,
                                                  const Vector& x2);

/// dr/dx1 = x1^T W_perp W_perp^T with W_perp = W P^T, returned as a column.
Vector closed_form_individual_grad(const Matrix& W, const Matrix& projector, const Vector& x1);

/// | ||w+u||_S^2 - ||w||_S^2 - ||u||_S^2 | with S = X1^T X1 / n.
double mahalanobis_residual(const Matrix& X1, const Vector& w, const Vector& u);

/// w minus its component along u in the X1^T X1 inner product, so that
/// (X1 w')^T (X1 u) vanishes.
Vector sigma_orthogonal(const Matrix& X1, const Vector& w, const Vector& u);

struct ReguSides {
  double gradient_norm = 0.0;  // ||ds/dx1||_p
  double scaled_basis = 0.0;   // |c| * ||u1||_p
  bool degenerate = false;     // a latent vanished; both sides are 0
};

/// k = 1 case. c is the scalar multiplying u1^T in the closed-form gradient,
/// evaluated from its defining expression rather than from the gradient.
ReguSides regu_equivalence_check(const Matrix& U, const Matrix& V, const Vector& x1, const Vector& x2, int p);

/// Gaussian instance; any of U, V, W, S with condition number above 1e6 is redrawn.
struct LinearInstance {
  LinearMaps maps;
  Vector x1;
  Vector x2;
};

LinearInstance random_instance(std::size_t d1, std::size_t d2, std::size_t k, std::uint64_t seed);

/// Ratio of extreme singular values (infinity for rank-deficient input).
double condition_number(const Matrix& m);

/// Single-layer encoders with zero biases and no whitening.
model::CommonComponent linear_common(const Matrix& U, const Matrix& V);
model::IndividualComponent linear_individual(const Matrix& W, const Matrix& S);

struct OracleCheck {
  std::string name;
  double error = 0.0;  // worst error over the instances
  double tolerance = 0.0;
  bool passed = false;
};

struct OracleSuiteOptions {
  std::uint64_t seed = 0;
  std::size_t instances = 100;
  // Added to every entry of the closed-form common gradient before comparing.
  double fault = 0.0;
};

std::vector<OracleCheck> run_oracle_suite(const OracleSuiteOptions& options = {});

}  // namespace comind::linear
