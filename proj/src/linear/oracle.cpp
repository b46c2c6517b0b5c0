#include "comind/linear/oracle.hpp"

#include "comind/error.hpp"
#include "comind/model/individual.hpp"
#include "comind/scores/scores.hpp"
#include "comind/util/random.hpp"

#include <Eigen/SVD>

#include <cmath>
#include <limits>
#include <string>

namespace comind::linear {

namespace {

void require_latent(double norm, const char* which) {
  if (!(norm >= linalg::kNormEpsilon)) {
    throw NumericError(std::string("closed_form_common_grad: ") + which + " latent norm is below 1e-8");
  }
}

// Gradient of the common score with respect to the input behind za, where
// za = A^T x and zb is the other view's latent.
Vector eq8(const Matrix& A, const Vector& za, const Vector& zb) {
  const double na = za.norm();
  const double nb = zb.norm();
  const Vector ta = za / na;
  const Vector tb = zb / nb;
  const double sim = ta.dot(tb);
  return za.dot(zb) / na * (A * tb - sim * (A * ta)) + sim * (A * zb);
}

double relative_error(const Vector& a, const Vector& b) {
  return (a - b).norm() / std::max(b.norm(), 1e-12);
}

Matrix gaussian(util::Rng& rng, std::size_t rows, std::size_t cols) {
  Matrix m(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    for (Eigen::Index j = 0; j < m.cols(); ++j) m(i, j) = rng.normal();
  }
  return m;
}

Matrix well_conditioned(util::Rng& rng, std::size_t rows, std::size_t cols) {
  for (;;) {
    Matrix m = gaussian(rng, rows, cols);
    if (condition_number(m) <= 1e6) return m;
  }
}

Vector gaussian_vector(util::Rng& rng, std::size_t n) { return gaussian(rng, n, 1).col(0); }

// Relative error between the tape gradient of `output` and central finite
// differences obtained by replaying the tape with perturbed parameters.
double tape_gradient_error(ad::Tape& tape, ad::Var output, const std::vector<ad::Var>& params,
                           const std::vector<ad::Var>& inputs, double h) {
  const ad::GradientSet grads = tape.backward(output, params);
  ad::Bindings bindings;
  for (ad::Var v : params) bindings.set(v, v.value());
  for (ad::Var v : inputs) bindings.set(v, v.value());
  const ad::Var outs[1] = {output};
  double diff = 0.0;
  double norm = 0.0;
  for (ad::Var p : params) {
    const ad::Tensor base = p.value();
    for (std::size_t i = 0; i < base.size(); ++i) {
      ad::Tensor t = base;
      t[i] = base[i] + h;
      bindings.set(p, t);
      const double up = tape.evaluate(bindings, outs)[0].item();
      t[i] = base[i] - h;
      bindings.set(p, t);
      const double down = tape.evaluate(bindings, outs)[0].item();
      const double fd = (up - down) / (2 * h);
      diff += std::pow(grads[p][i] - fd, 2);
      norm += fd * fd;
    }
    bindings.set(p, base);
  }
  return std::sqrt(diff) / std::max(std::sqrt(norm), 1e-12);
}

}  // namespace

std::pair<Vector, Vector> closed_form_common_grad(const Matrix& U, const Matrix& V, const Vector& x1,
                                                  const Vector& x2) {
  if (U.rows() != x1.size() || V.rows() != x2.size() || U.cols() != V.cols()) {
    throw ShapeError("closed_form_common_grad: U, V, x1, x2 shapes do not align");
  }
  const Vector z1 = U.transpose() * x1;
  const Vector z2 = V.transpose() * x2;
  require_latent(z1.norm(), "first");
  require_latent(z2.norm(), "second");
  return {eq8(U, z1, z2), eq8(V, z2, z1)};
}

Vector closed_form_individual_grad(const Matrix& W, const Matrix& projector, const Vector& x1) {
  if (W.rows() != x1.size() || projector.rows() != W.cols() || projector.cols() != W.cols()) {
    throw ShapeError("closed_form_individual_grad: W, projector, x1 shapes do not align");
  }
  const Matrix w_perp = W * projector.transpose();
  return (x1.transpose() * w_perp * w_perp.transpose()).transpose();
}

double mahalanobis_residual(const Matrix& X1, const Vector& w, const Vector& u) {
  if (X1.rows() < 2) throw DataError("mahalanobis_residual needs at least 2 samples");
  if (X1.cols() != w.size() || X1.cols() != u.size()) throw ShapeError("mahalanobis_residual: shapes do not align");
  const Matrix sigma = X1.transpose() * X1 / static_cast<double>(X1.rows());
  auto sq = [&](const Vector& v) { return v.dot(sigma * v); };
  return std::abs(sq(w + u) - sq(w) - sq(u));
}

Vector sigma_orthogonal(const Matrix& X1, const Vector& w, const Vector& u) {
  const Vector xu = X1 * u;
  const double denom = xu.squaredNorm();
  if (!(denom > 0.0)) return w;
  return w - ((X1 * w).dot(xu) / denom) * u;
}

ReguSides regu_equivalence_check(const Matrix& U, const Matrix& V, const Vector& x1, const Vector& x2, int p) {
  if (U.cols() != 1 || V.cols() != 1) throw ShapeError("regu_equivalence_check requires k = 1");
  if (p < 1) throw ConfigError("p must be at least 1");
  if (U.rows() != x1.size() || V.rows() != x2.size()) throw ShapeError("regu_equivalence_check: shapes do not align");
  const double z1 = U.col(0).dot(x1);
  const double z2 = V.col(0).dot(x2);
  ReguSides out;
  if (!(std::abs(z1) >= linalg::kNormEpsilon) || !(std::abs(z2) >= linalg::kNormEpsilon)) {
    out.degenerate = true;
    return out;
  }
  auto pnorm = [p](const Vector& v) { return std::pow(v.array().abs().pow(p).sum(), 1.0 / p); };
  out.gradient_norm = pnorm(closed_form_common_grad(U, V, x1, x2).first);
  const double t1 = z1 / std::abs(z1);
  const double t2 = z2 / std::abs(z2);
  const double c = z1 * z2 / std::abs(z1) * (t2 - t1 * t2 * t1) + t1 * t2 * z2;
  out.scaled_basis = std::abs(c) * pnorm(U.col(0));
  return out;
}

double condition_number(const Matrix& m) {
  const Eigen::JacobiSVD<Eigen::MatrixXd> svd(m);
  const Vector& s = svd.singularValues();
  if (s.size() == 0) return std::numeric_limits<double>::infinity();
  const double lo = s(s.size() - 1);
  if (!(lo > 0.0)) return std::numeric_limits<double>::infinity();
  return s(0) / lo;
}

LinearInstance random_instance(std::size_t d1, std::size_t d2, std::size_t k, std::uint64_t seed) {
  if (k == 0 || k > d1 || k > d2) throw ConfigError("random_instance: need 1 <= k <= min(d1, d2)");
  util::Rng rng(seed);
  LinearInstance inst;
  inst.maps.U = well_conditioned(rng, d1, k);
  inst.maps.V = well_conditioned(rng, d2, k);
  inst.maps.W = well_conditioned(rng, d1, k);
  inst.maps.S = well_conditioned(rng, d2, k);
  inst.x1 = gaussian_vector(rng, d1);
  inst.x2 = gaussian_vector(rng, d2);
  return inst;
}

namespace {

model::Mlp single_layer(const Matrix& weight) {
  model::Mlp mlp = model::Mlp::zeros({static_cast<std::size_t>(weight.rows()), static_cast<std::size_t>(weight.cols())},
                                     false);
  mlp.layers()[0].weight = ad::Tensor::from_matrix(weight);
  return mlp;
}

}  // namespace

model::CommonComponent linear_common(const Matrix& U, const Matrix& V) {
  if (U.cols() != V.cols()) throw ShapeError("linear_common: U and V need the same number of columns");
  model::CommonComponent c;
  c.k = static_cast<std::size_t>(U.cols());
  c.encoder1 = single_layer(U);
  c.encoder2 = single_layer(V);
  c.trained = true;
  return c;
}

model::IndividualComponent linear_individual(const Matrix& W, const Matrix& S) {
  if (W.cols() != S.cols()) throw ShapeError("linear_individual: W and S need the same number of columns");
  const std::size_t k = static_cast<std::size_t>(W.cols());
  model::IndividualComponent c;
  c.k = k;
  c.q = k;
  c.encoder1 = single_layer(W);
  c.encoder2 = single_layer(S);
  c.decoder1 = model::Mlp::zeros({2 * k, static_cast<std::size_t>(W.rows())}, false);
  c.decoder2 = model::Mlp::zeros({2 * k, static_cast<std::size_t>(S.rows())}, false);
  c.trained = true;
  return c;
}

std::vector<OracleCheck> run_oracle_suite(const OracleSuiteOptions& options) {
  constexpr std::size_t d1 = 5;
  constexpr std::size_t d2 = 5;
  constexpr std::size_t k = 3;
  const std::size_t count = std::max<std::size_t>(options.instances, 1);
  auto eq8_under_test = [&](const LinearInstance& in) {
    auto g = closed_form_common_grad(in.maps.U, in.maps.V, in.x1, in.x2);
    g.first.array() += options.fault;
    g.second.array() += options.fault;
    return g;
  };
  auto score_at = [](const LinearInstance& in, const Vector& x1, const Vector& x2) {
    return scores::common_score(in.maps.U.transpose() * x1, in.maps.V.transpose() * x2).value;
  };
  auto instance = [&](std::size_t i) { return random_instance(d1, d2, k, util::mix_seed(options.seed, i)); };

  std::vector<OracleCheck> checks;
  auto add = [&](std::string name, double error, double tolerance) {
    checks.push_back({std::move(name), error, tolerance, error <= tolerance});
  };

  {
    double worst = 0.0;
    for (std::size_t i = 0; i < count; ++i) {
      const LinearInstance in = instance(i);
      const auto [g1, g2] = eq8_under_test(in);
      Vector fd1(in.x1.size());
      Vector fd2(in.x2.size());
      const double h = 1e-5;
      for (Eigen::Index j = 0; j < in.x1.size(); ++j) {
        Vector a = in.x1, b = in.x1;
        a(j) += h;
        b(j) -= h;
        fd1(j) = (score_at(in, a, in.x2) - score_at(in, b, in.x2)) / (2 * h);
      }
      for (Eigen::Index j = 0; j < in.x2.size(); ++j) {
        Vector a = in.x2, b = in.x2;
        a(j) += h;
        b(j) -= h;
        fd2(j) = (score_at(in, in.x1, a) - score_at(in, in.x1, b)) / (2 * h);
      }
      worst = std::max({worst, relative_error(g1, fd1), relative_error(g2, fd2)});
    }
    add("common_closed_form_vs_finite_difference", worst, 1e-6);
  }
  {
    double worst = 0.0;
    for (std::size_t i = 0; i < count; ++i) {
      const LinearInstance in = instance(i);
      const auto [g1, g2] = eq8_under_test(in);
      const scores::ScoreResult r = scores::grad_map_common(linear_common(in.maps.U, in.maps.V), in.x1, in.x2);
      worst = std::max({worst, relative_error(g1, *r.map1), relative_error(g2, *r.map2)});
    }
    add("common_closed_form_vs_autodiff", worst, 1e-6);
  }
  {
    double worst = 0.0;
    for (std::size_t i = 0; i < count; ++i) {
      LinearInstance in = instance(i);
      const Vector z1 = in.maps.U.transpose() * in.x1;
      const Vector z2 = in.maps.V.transpose() * in.x2;
      const Matrix vtv = in.maps.V.transpose() * in.maps.V;
      const Vector target = z2 - z2.dot(z1.normalized()) * z1.normalized();
      in.x2 += in.maps.V * vtv.ldlt().solve(target - z2);
      const auto [g1, g2] = eq8_under_test(in);
      worst = std::max({worst, g1.cwiseAbs().maxCoeff(), g2.cwiseAbs().maxCoeff()});
    }
    add("common_orthogonal_latents_vanish", worst, 1e-9);
  }
  {
    double worst = 0.0;
    for (std::size_t i = 0; i < count; ++i) {
      LinearInstance in = instance(i);
      const Vector z1 = in.maps.U.transpose() * in.x1;
      const Matrix vtv = in.maps.V.transpose() * in.maps.V;
      in.x2 = in.maps.V * vtv.ldlt().solve(z1);
      const Vector g1 = eq8_under_test(in).first;
      const Vector dir = in.maps.U * z1;
      worst = std::max(worst, std::abs(1.0 - g1.dot(dir) / (g1.norm() * dir.norm())));
    }
    add("common_aligned_latents_parallel", worst, 1e-9);
  }
  {
    double worst_fd = 0.0;
    double worst_ad = 0.0;
    for (std::size_t i = 0; i < count; ++i) {
      const LinearInstance in = instance(i);
      const Vector z1 = in.maps.U.transpose() * in.x1;
      const Vector z2 = in.maps.V.transpose() * in.x2;
      const Matrix p = linalg::orthogonalize_pair(z1, z2).projector;
      const Vector g = closed_form_individual_grad(in.maps.W, p, in.x1);
      auto r = [&](const Vector& x) { return 0.5 * (p * (in.maps.W.transpose() * x)).squaredNorm(); };
      Vector fd(in.x1.size());
      const double h = 1e-5;
      for (Eigen::Index j = 0; j < in.x1.size(); ++j) {
        Vector a = in.x1, b = in.x1;
        a(j) += h;
        b(j) -= h;
        fd(j) = (r(a) - r(b)) / (2 * h);
      }
      worst_fd = std::max(worst_fd, relative_error(g, fd));
      const scores::ScoreResult res =
          scores::grad_map_individual(linear_individual(in.maps.W, in.maps.S), linear_common(in.maps.U, in.maps.V),
                                      in.x1, in.x2, 1);
      worst_ad = std::max(worst_ad, relative_error(g, *res.map1));
    }
    add("individual_closed_form_vs_finite_difference", worst_fd, 1e-6);
    add("individual_closed_form_vs_autodiff", worst_ad, 1e-6);
  }
  {
    double worst_identity = 0.0;
    double worst_orth = 0.0;
    util::Rng rng(util::mix_seed(options.seed, 7001));
    for (std::size_t i = 0; i < count; ++i) {
      const Matrix x = gaussian(rng, 50, d1);
      const Vector w = gaussian_vector(rng, d1);
      const Vector u = gaussian_vector(rng, d1);
      const Matrix sigma = x.transpose() * x / 50.0;
      worst_identity = std::max(worst_identity, std::abs(mahalanobis_residual(x, w, u) - 2.0 * std::abs(w.dot(sigma * u))));
      worst_orth = std::max(worst_orth, mahalanobis_residual(x, sigma_orthogonal(x, w, u), u));
    }
    add("mahalanobis_residual_identity", worst_identity, 1e-12);
    add("mahalanobis_orthogonal_direction", worst_orth, 1e-9);
  }
  for (int p : {1, 2}) {
    double worst = 0.0;
    for (std::size_t i = 0; i < count; ++i) {
      const LinearInstance in = random_instance(d1, d2, 1, util::mix_seed(options.seed, 9000 + i));
      const ReguSides sides = regu_equivalence_check(in.maps.U, in.maps.V, in.x1, in.x2, p);
      worst = std::max(worst, std::abs(sides.gradient_norm - sides.scaled_basis));
    }
    add("regularization_equivalence_p" + std::to_string(p), worst, 1e-9);
  }
  {
    double worst_first = 0.0;
    double worst_second = 0.0;
    const std::size_t nets = std::min<std::size_t>(count, 50);
    for (std::size_t i = 0; i < nets; ++i) {
      util::Rng rng(util::mix_seed(options.seed, 11000 + i));
      const Matrix x1 = gaussian(rng, 32, 6);
      const Matrix x2 = gaussian(rng, 32, 6);
      model::TrainConfig cfg;
      cfg.k = 3;
      cfg.hidden = {5};
      cfg.seed = util::mix_seed(options.seed, 12000 + i);
      const model::CommonComponent c = model::make_common(6, 6, cfg);
      {
        ad::Tape tape;
        const model::CommonObjective obj = model::record_common_objective(tape, c, x1, x2, cfg);
        std::vector<ad::Var> params = obj.params1;
        params.insert(params.end(), obj.params2.begin(), obj.params2.end());
        worst_first = std::max(worst_first, tape_gradient_error(tape, obj.total, params, {}, 1e-6));
      }
      {
        cfg.gamma = 1e-3;
        ad::Tape tape;
        const model::CommonObjective obj = model::record_common_objective(tape, c, x1, x2, cfg);
        std::vector<ad::Var> params = obj.params1;
        params.insert(params.end(), obj.params2.begin(), obj.params2.end());
        worst_second = std::max(worst_second, tape_gradient_error(tape, obj.penalty, params, {obj.x1, obj.x2}, 1e-6));
      }
    }
    add("common_loss_gradient_vs_finite_difference", worst_first, 1e-5);
    add("contractive_penalty_second_order_vs_finite_difference", worst_second, 1e-4);
  }
  return checks;
}

}  // namespace comind::linear
