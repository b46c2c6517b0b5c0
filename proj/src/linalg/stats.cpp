#include "comind/linalg/stats.hpp"

#include "comind/error.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace comind::linalg {

bool WhitenStats::any_degenerate() const {
  return std::any_of(degenerate.begin(), degenerate.end(), [](bool d) { return d; });
}

WhitenStats column_stats(const Matrix& z) {
  if (z.rows() < 2) throw DataError("whitening needs at least 2 rows, got " + std::to_string(z.rows()));
  const double n = static_cast<double>(z.rows());
  WhitenStats stats;
  stats.mean = z.colwise().sum().transpose() / n;
  stats.stddev.resize(z.cols());
  stats.degenerate.assign(static_cast<std::size_t>(z.cols()), false);
  for (Eigen::Index j = 0; j < z.cols(); ++j) {
    const double var = (z.col(j).array() - stats.mean(j)).square().sum() / n;
    stats.stddev(j) = std::sqrt(var);
    stats.degenerate[static_cast<std::size_t>(j)] = !(stats.stddev(j) >= kWhitenEpsilon);
  }
  return stats;
}

Matrix apply_whitening(const Matrix& z, const WhitenStats& stats) {
  if (z.cols() != stats.mean.size()) {
    throw ShapeError("whitening stats cover " + std::to_string(stats.mean.size()) + " columns, input has " +
                     std::to_string(z.cols()));
  }
  Matrix out(z.rows(), z.cols());
  for (Eigen::Index j = 0; j < z.cols(); ++j) {
    if (stats.degenerate[static_cast<std::size_t>(j)]) {
      out.col(j).setZero();
    } else {
      out.col(j) = (z.col(j).array() - stats.mean(j)) / stats.stddev(j);
    }
  }
  return out;
}

Whitened whiten(const Matrix& z) {
  Whitened w;
  w.stats = column_stats(z);
  w.values = apply_whitening(z, w.stats);
  return w;
}

CorrelationStats correlation_stats(const Matrix& z1, const Matrix& z2, const Matrix* h1, const Matrix* h2) {
  if (z1.rows() != z2.rows()) {
    throw ShapeError("correlation_stats: row counts differ (" + std::to_string(z1.rows()) + " vs " +
                     std::to_string(z2.rows()) + ")");
  }
  const double n = static_cast<double>(z1.rows());
  CorrelationStats out;
  out.cross = z1.transpose() * z2 / n;
  out.within1 = z1.transpose() * z1 / n;
  out.within2 = z2.transpose() * z2 / n;
  if (h1 != nullptr) {
    if (h1->rows() != z1.rows()) throw ShapeError("correlation_stats: H1 row count differs from Z1");
    out.cross_block1 = Matrix(z1.transpose() * *h1 / n);
  }
  if (h2 != nullptr) {
    if (h2->rows() != z2.rows()) throw ShapeError("correlation_stats: H2 row count differs from Z2");
    out.cross_block2 = Matrix(z2.transpose() * *h2 / n);
  }
  return out;
}

OrthogonalizedPair orthogonalize_pair(const Vector& z1, const Vector& z2) {
  if (z1.size() != z2.size()) throw ShapeError("orthogonalize_pair: vectors differ in length");
  const double n1 = z1.norm();
  if (!(n1 > kNormEpsilon)) throw NumericError("orthogonalize_pair: first vector has norm below 1e-8");
  OrthogonalizedPair out;
  out.first = z1 / n1;
  const Vector residual = z2 - out.first.dot(z2) * out.first;
  const double rn = residual.norm();
  if (rn > 0.0 && rn >= kParallelTolerance * z2.norm()) out.second = residual / rn;

  const Eigen::Index k = z1.size();
  out.projector = Matrix::Identity(k, k) - out.first * out.first.transpose();
  if (out.second) out.projector -= *out.second * out.second->transpose();
  return out;
}

Matrix inverse_sqrt_spd(const Matrix& s) {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(s);
  if (eig.info() != Eigen::Success) throw NumericError("eigendecomposition failed");
  const Vector& lambda = eig.eigenvalues();
  const double largest = lambda.maxCoeff();
  if (!(lambda.minCoeff() > largest * 1e-12) || !(largest > 0.0)) {
    throw NumericError("covariance is rank deficient beyond the ridge");
  }
  const Eigen::MatrixXd& q = eig.eigenvectors();
  return q * lambda.cwiseSqrt().cwiseInverse().asDiagonal() * q.transpose();
}

CcaResult svd_cca(const Matrix& x1, const Matrix& x2, int k) {
  if (x1.rows() != x2.rows()) throw ShapeError("svd_cca: views have different sample counts");
  const Eigen::Index n = x1.rows();
  const Eigen::Index d1 = x1.cols();
  const Eigen::Index d2 = x2.cols();
  if (k < 1 || k > std::min(d1, d2)) {
    throw ShapeError("svd_cca: k=" + std::to_string(k) + " must be in [1, min(d1, d2)]");
  }
  if (n <= std::max(d1, d2)) throw DataError("svd_cca: need more samples than features");

  const Matrix c1 = x1.rowwise() - x1.colwise().mean();
  const Matrix c2 = x2.rowwise() - x2.colwise().mean();
  const double inv_n = 1.0 / static_cast<double>(n);
  const Matrix s11 = c1.transpose() * c1 * inv_n + kCcaRidge * Matrix::Identity(d1, d1);
  const Matrix s22 = c2.transpose() * c2 * inv_n + kCcaRidge * Matrix::Identity(d2, d2);
  const Matrix s12 = c1.transpose() * c2 * inv_n;

  const Matrix w1 = inverse_sqrt_spd(s11);
  const Matrix w2 = inverse_sqrt_spd(s22);
  const Matrix t = w1 * s12 * w2;
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(t, Eigen::ComputeThinU | Eigen::ComputeThinV);

  CcaResult out;
  out.correlations = svd.singularValues().head(k).cwiseMin(1.0).cwiseMax(0.0);
  out.u = w1 * svd.matrixU().leftCols(k);
  out.v = w2 * svd.matrixV().leftCols(k);
  return out;
}

}  // namespace comind::linalg
