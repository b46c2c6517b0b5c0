#include "comind/data/synthetic.hpp"

#include "comind/error.hpp"
#include "comind/util/random.hpp"

#include <cmath>

namespace comind::data {

Matrix random_orthogonal(std::size_t d, std::uint64_t seed) {
  util::Rng rng(seed);
  Eigen::MatrixXd g(static_cast<Eigen::Index>(d), static_cast<Eigen::Index>(d));
  for (Eigen::Index i = 0; i < g.rows(); ++i) {
    for (Eigen::Index j = 0; j < g.cols(); ++j) g(i, j) = rng.normal();
  }
  Eigen::HouseholderQR<Eigen::MatrixXd> qr(g);
  Eigen::MatrixXd q = qr.householderQ();
  const Eigen::MatrixXd r = qr.matrixQR().triangularView<Eigen::Upper>();
  for (Eigen::Index j = 0; j < q.cols(); ++j) {
    if (r(j, j) < 0.0) q.col(j) = -q.col(j);
  }
  return q;
}

namespace {

Matrix mixing_matrix(std::size_t d, std::uint64_t seed, bool mix) {
  if (!mix) return Matrix::Identity(static_cast<Eigen::Index>(d), static_cast<Eigen::Index>(d));
  util::Rng rng(util::mix_seed(seed, 17));
  Eigen::VectorXd scales(static_cast<Eigen::Index>(d));
  for (Eigen::Index i = 0; i < scales.size(); ++i) scales(i) = rng.uniform(1.0, 3.0);
  return scales.asDiagonal() * random_orthogonal(d, util::mix_seed(seed, 29));
}

PairedDataset draw(const SyntheticSpec& spec, const Matrix& m1, const Matrix& m2, std::uint64_t seed,
                   bool break_pairing) {
  const std::size_t s = spec.shared_correlations.size();
  util::Rng rng(seed);
  const auto n = static_cast<Eigen::Index>(spec.n);
  Matrix l1(n, static_cast<Eigen::Index>(spec.d1));
  Matrix l2(n, static_cast<Eigen::Index>(spec.d2));
  for (Eigen::Index i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < s; ++j) {
      const double rho = spec.shared_correlations[j];
      const double a = rng.normal();
      const double e = rng.normal();
      const double a2 = break_pairing ? rng.normal() : a;
      l1(i, static_cast<Eigen::Index>(j)) = a;
      l2(i, static_cast<Eigen::Index>(j)) = rho * a2 + std::sqrt(std::max(0.0, 1.0 - rho * rho)) * e;
    }
    for (std::size_t j = s; j < spec.d1; ++j) l1(i, static_cast<Eigen::Index>(j)) = spec.private_scale * rng.normal();
    for (std::size_t j = s; j < spec.d2; ++j) l2(i, static_cast<Eigen::Index>(j)) = spec.private_scale * rng.normal();
  }
  PairedDataset out;
  out.view1.values = l1 * m1;
  out.view2.values = l2 * m2;
  out.view1.pairing_id = "synthetic-1";
  out.view2.pairing_id = "synthetic-2";
  return out;
}

}  // namespace

SyntheticData make_shared_latent(const SyntheticSpec& spec) {
  const std::size_t s = spec.shared_correlations.size();
  if (s > spec.d1 || s > spec.d2) throw ConfigError("more shared factors than feature dimensions");
  for (double rho : spec.shared_correlations) {
    if (rho < 0.0 || rho > 1.0) throw ConfigError("shared correlations must lie in [0, 1]");
  }
  SyntheticData out;
  out.mixing1 = mixing_matrix(spec.d1, util::mix_seed(spec.seed, 1), spec.mix);
  out.mixing2 = mixing_matrix(spec.d2, util::mix_seed(spec.seed, 2), spec.mix);
  out.dataset = draw(spec, out.mixing1, out.mixing2, util::mix_seed(spec.seed, 3), false);
  return out;
}

PairedDataset resample(const SyntheticData& source, const SyntheticSpec& spec, std::uint64_t seed,
                       bool break_pairing) {
  return draw(spec, source.mixing1, source.mixing2, util::mix_seed(seed, 4), break_pairing);
}

}  // namespace comind::data
