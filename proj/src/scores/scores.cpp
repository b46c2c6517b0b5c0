#include "comind/scores/scores.hpp"

#include "comind/error.hpp"
#include "comind/model/individual.hpp"
#include "comind/util/binary.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <string>

namespace comind::scores {

ScoreValue common_score(const Vector& z1, const Vector& z2) {
  if (z1.size() != z2.size()) throw ShapeError("common_score: latent lengths differ");
  const double n1 = z1.norm();
  const double n2 = z2.norm();
  if (!(n1 >= linalg::kNormEpsilon) || !(n2 >= linalg::kNormEpsilon)) return {0.0, true};
  const double dot = z1.dot(z2);
  return {dot / (n1 * n2) * dot, false};
}

double individual_score(const Vector& h, const Vector& z1, const Vector& z2) {
  if (h.size() != z1.size() || h.size() != z2.size()) {
    throw ShapeError("individual_score: h has " + std::to_string(h.size()) + " entries but the projector acts on " +
                     std::to_string(z1.size()));
  }
  const Matrix p = linalg::orthogonalize_pair(z1, z2).projector;
  return 0.5 * (p * h).squaredNorm();
}

double contractive_penalty(const Vector& grad, double alpha) {
  if (!(alpha >= 0.0 && alpha <= 1.0)) throw ConfigError("alpha must lie in [0, 1]");
  return alpha * grad.lpNorm<1>() + (1.0 - alpha) * grad.squaredNorm();
}

ad::Var common_score_rows(ad::Tape& tape, ad::Var z1, ad::Var z2) {
  if (z1.rows() != z2.rows() || z1.cols() != z2.cols()) throw ShapeError("common_score_rows: latent shapes differ");
  const std::size_t n = z1.rows();
  const ad::Var sq1 = tape.sum_cols(tape.square(z1));
  const ad::Var sq2 = tape.sum_cols(tape.square(z2));
  ad::Tensor keep({n, 1}, 1.0);
  ad::Tensor fill({n, 1}, 0.0);
  bool any = false;
  for (std::size_t i = 0; i < n; ++i) {
    if (!(std::sqrt(sq1.value()[i]) >= linalg::kNormEpsilon) || !(std::sqrt(sq2.value()[i]) >= linalg::kNormEpsilon)) {
      keep[i] = 0.0;
      fill[i] = 1.0;
      any = true;
    }
  }
  auto safe = [&](ad::Var sq) {
    if (!any) return sq;
    return tape.add(tape.mul(sq, tape.constant(keep)), tape.constant(fill));
  };
  const ad::Var dot = tape.sum_cols(tape.mul(z1, z2));
  const ad::Var norms = tape.mul(tape.sqrt(safe(sq1)), tape.sqrt(safe(sq2)));
  ad::Var s = tape.mul(tape.div(dot, norms), dot);
  if (any) s = tape.mul(s, tape.constant(keep));
  return s;
}

ad::Var contractive_penalty_rows(ad::Tape& tape, ad::Var grad, double alpha) {
  if (!(alpha >= 0.0 && alpha <= 1.0)) throw ConfigError("alpha must lie in [0, 1]");
  const ad::Var l1 = tape.sum(tape.abs(grad));
  const ad::Var l2 = tape.sum(tape.square(grad));
  return tape.add(tape.scale(l1, alpha), tape.scale(l2, 1.0 - alpha));
}

namespace {

std::vector<ad::Var> constants(ad::Tape& tape, const model::Mlp& mlp) {
  std::vector<ad::Var> out;
  for (const ad::Tensor* p : mlp.parameters()) out.push_back(tape.constant(*p));
  return out;
}

ad::Var input_leaf(ad::Tape& tape, const Vector& x, std::size_t expected, const char* name) {
  if (static_cast<std::size_t>(x.size()) != expected) {
    throw ShapeError(std::string(name) + " has " + std::to_string(x.size()) + " features, the encoder expects " +
                     std::to_string(expected));
  }
  return tape.leaf(ad::Tensor::from_matrix(x.transpose()), name);
}

Vector row_vector(const ad::Tensor& t) { return t.mat().row(0).transpose(); }

}  // namespace

ScoreResult grad_map_common(const model::CommonComponent& common, const Vector& x1, const Vector& x2) {
  ad::Tape tape;
  const ad::Var v1 = input_leaf(tape, x1, common.encoder1.input_dim(), "x1");
  const ad::Var v2 = input_leaf(tape, x2, common.encoder2.input_dim(), "x2");
  const std::vector<ad::Var> p1 = constants(tape, common.encoder1);
  const std::vector<ad::Var> p2 = constants(tape, common.encoder2);
  const ad::Var z1 = common.encoder1.forward(tape, p1, v1, model::Mode::Eval).whitened;
  const ad::Var z2 = common.encoder2.forward(tape, p2, v2, model::Mode::Eval).whitened;

  ScoreResult out;
  out.kind = ScoreKind::Common;
  out.degenerate = common_score(row_vector(z1.value()), row_vector(z2.value())).degenerate;
  const ad::Var s = tape.sum(common_score_rows(tape, z1, z2));
  out.value = s.value().item();
  const ad::Var wrt[2] = {v1, v2};
  const ad::GradientSet g = tape.backward(s, wrt);
  out.map1 = row_vector(g[v1]);
  out.map2 = row_vector(g[v2]);
  return out;
}

ScoreResult grad_map_individual(const model::IndividualComponent& individual, const model::CommonComponent& common,
                                const Vector& x_view, const Vector& x_other, int view) {
  if (view != 1 && view != 2) throw ConfigError("view index must be 1 or 2, got " + std::to_string(view));
  if (individual.q != common.k) {
    throw ConfigError("individual scores need q == k (q=" + std::to_string(individual.q) +
                      ", k=" + std::to_string(common.k) + ")");
  }
  const Vector& x1 = view == 1 ? x_view : x_other;
  const Vector& x2 = view == 1 ? x_other : x_view;
  const Vector z1 = model::encode_common(common, x1.transpose(), 1, model::Mode::Eval).row(0).transpose();
  const Vector z2 = model::encode_common(common, x2.transpose(), 2, model::Mode::Eval).row(0).transpose();

  ScoreResult out;
  out.kind = ScoreKind::Individual;
  const Vector zero = Vector::Zero(x_view.size());
  if (!(z1.norm() >= linalg::kNormEpsilon) || !(z2.norm() >= linalg::kNormEpsilon)) {
    out.degenerate = true;
    (view == 1 ? out.map1 : out.map2) = zero;
    return out;
  }
  const Matrix p = linalg::orthogonalize_pair(z1, z2).projector;

  ad::Tape tape;
  const model::Mlp& enc = individual.encoder(view);
  const ad::Var x = input_leaf(tape, x_view, enc.input_dim(), view == 1 ? "x1" : "x2");
  const ad::Var h = enc.forward(tape, constants(tape, enc), x, model::Mode::Eval).whitened;
  const ad::Var ph = tape.matmul(h, tape.constant(ad::Tensor::from_matrix(p)), false, true);
  const ad::Var r = tape.scale(tape.sum(tape.square(ph)), 0.5);
  out.value = r.value().item();
  const ad::Var wrt[1] = {x};
  const ad::GradientSet g = tape.backward(r, wrt);
  (view == 1 ? out.map1 : out.map2) = row_vector(g[x]);
  return out;
}

std::vector<std::uint8_t> saliency_bytes(const Vector& map) {
  std::vector<std::uint8_t> out(static_cast<std::size_t>(map.size()), 128);
  if (map.size() == 0) return out;
  if (!map.allFinite()) throw NumericError("saliency map has non-finite entries");
  const Vector a = map.cwiseAbs();
  const double lo = a.minCoeff();
  const double range = a.maxCoeff() - lo;
  if (!(range > 0.0)) return out;
  for (Eigen::Index i = 0; i < a.size(); ++i) {
    out[static_cast<std::size_t>(i)] = static_cast<std::uint8_t>(std::lround((a(i) - lo) / range * 255.0));
  }
  return out;
}

void export_saliency(const Vector& map, std::size_t rows, std::size_t cols, const std::filesystem::path& path) {
  if (rows * cols != static_cast<std::size_t>(map.size())) {
    throw ShapeError("saliency layout " + std::to_string(rows) + "x" + std::to_string(cols) + " does not hold " +
                     std::to_string(map.size()) + " values");
  }
  const std::string header = "P5\n" + std::to_string(cols) + " " + std::to_string(rows) + "\n255\n";
  std::vector<std::uint8_t> bytes(header.begin(), header.end());
  const std::vector<std::uint8_t> pixels = saliency_bytes(map);
  bytes.insert(bytes.end(), pixels.begin(), pixels.end());
  util::write_file(path, bytes);
}

GrayImage read_pgm(const std::filesystem::path& path) {
  const std::vector<std::uint8_t> bytes = util::read_file(path);
  std::size_t pos = 0;
  auto skip_space = [&] {
    while (pos < bytes.size()) {
      if (bytes[pos] == '#') {
        while (pos < bytes.size() && bytes[pos] != '\n') ++pos;
      } else if (std::isspace(bytes[pos])) {
        ++pos;
      } else {
        break;
      }
    }
  };
  auto number = [&](const char* what) {
    skip_space();
    std::size_t value = 0;
    const std::size_t start = pos;
    while (pos < bytes.size() && std::isdigit(bytes[pos])) value = value * 10 + (bytes[pos++] - '0');
    if (pos == start) throw FormatError(std::string("PGM: missing ") + what);
    return value;
  };
  if (bytes.size() < 2 || bytes[0] != 'P' || bytes[1] != '5') throw FormatError("PGM: expected P5 magic");
  pos = 2;
  GrayImage img;
  img.width = number("width");
  img.height = number("height");
  if (number("maxval") != 255) throw FormatError("PGM: only 8-bit images are supported");
  if (pos >= bytes.size() || !std::isspace(bytes[pos])) throw FormatError("PGM: malformed header");
  ++pos;
  if (bytes.size() - pos != img.width * img.height) throw FormatError("PGM: pixel data has the wrong length");
  img.pixels.assign(bytes.begin() + static_cast<std::ptrdiff_t>(pos), bytes.end());
  return img;
}

}  // namespace comind::scores
