#include "comind/model/mlp.hpp"

#include "comind/error.hpp"
#include "comind/util/random.hpp"

#include <zlib.h>

#include <cmath>
#include <string>

namespace comind::model {

ad::Tensor to_tensor(const Matrix& m) { return ad::Tensor::from_matrix(m); }

Matrix to_matrix(const ad::Tensor& t) { return t.mat(); }

ad::Var whiten_on_tape(ad::Tape& tape, ad::Var z, WhitenMode mode, linalg::WhitenStats* stats, ad::Var source) {
  if (mode == WhitenMode::Running) throw Error("whiten_on_tape: running statistics are applied by Mlp::forward");
  const std::size_t n = z.rows();
  const std::size_t k = z.cols();
  if (n < 2) throw DataError("batch whitening needs at least 2 rows, got " + std::to_string(n));
  const bool detached = mode == WhitenMode::BatchDetached;
  const ad::Var src = source.valid() ? source : z;
  if (src.rows() != n || src.cols() != k) throw ShapeError("whiten_on_tape: statistics source has another shape");

  ad::Var mean = tape.mean_rows(src);
  if (detached) mean = tape.detach(mean);
  const ad::Var mean_rows = tape.broadcast_rows(mean, n);
  const ad::Var centered_src = tape.sub(src, mean_rows);
  const ad::Var centered = source.valid() ? tape.sub(z, mean_rows) : centered_src;
  const ad::Var var = tape.mean_rows(tape.square(centered_src));

  const ad::Tensor& var_value = var.value();
  ad::Tensor keep({1, k}, 1.0);
  ad::Tensor fill({1, k}, 0.0);
  bool any_degenerate = false;
  for (std::size_t j = 0; j < k; ++j) {
    if (!(std::sqrt(var_value[j]) >= linalg::kWhitenEpsilon)) {
      keep[j] = 0.0;
      fill[j] = 1.0;
      any_degenerate = true;
    }
  }
  if (stats != nullptr) {
    stats->mean = mean.value().mat().row(0).transpose();
    stats->stddev.resize(static_cast<Eigen::Index>(k));
    stats->degenerate.assign(k, false);
    for (std::size_t j = 0; j < k; ++j) {
      stats->stddev(static_cast<Eigen::Index>(j)) = std::sqrt(var_value[j]);
      stats->degenerate[j] = keep[j] == 0.0;
    }
  }

  ad::Var safe_var = var;
  if (any_degenerate) safe_var = tape.add(tape.mul(var, tape.constant(keep)), tape.constant(fill));
  if (detached) safe_var = tape.detach(safe_var);
  const ad::Var stddev = tape.sqrt(safe_var);
  ad::Var out = tape.div(centered, tape.broadcast_rows(stddev, n));
  if (any_degenerate) out = tape.mul(out, tape.broadcast_rows(tape.constant(keep), n));
  return out;
}

Mlp::Mlp(std::vector<std::size_t> sizes, bool terminal_whitening, std::uint64_t seed)
    : sizes_(std::move(sizes)), whitening_(terminal_whitening) {
  if (sizes_.size() < 2) throw ShapeError("an MLP needs at least input and output sizes");
  util::Rng rng(seed);
  for (std::size_t l = 0; l + 1 < sizes_.size(); ++l) {
    const std::size_t in = sizes_[l];
    const std::size_t out = sizes_[l + 1];
    if (in == 0 || out == 0) throw ShapeError("MLP layer sizes must be positive");
    const double limit = std::sqrt(6.0 / static_cast<double>(in + out));
    Layer layer{ad::Tensor({in, out}), ad::Tensor({1, out})};
    for (double& w : layer.weight.data()) w = rng.uniform(-limit, limit);
    layers_.push_back(std::move(layer));
  }
  running_mean_ = linalg::Vector::Zero(static_cast<Eigen::Index>(output_dim()));
  running_var_ = linalg::Vector::Ones(static_cast<Eigen::Index>(output_dim()));
}

Mlp Mlp::zeros(std::vector<std::size_t> sizes, bool terminal_whitening) {
  Mlp mlp(std::move(sizes), terminal_whitening, 0);
  for (Layer& layer : mlp.layers_) {
    for (double& w : layer.weight.data()) w = 0.0;
  }
  return mlp;
}

void Mlp::set_running_stats(linalg::Vector mean, linalg::Vector var) {
  if (mean.size() != static_cast<Eigen::Index>(output_dim()) || var.size() != mean.size()) {
    throw ShapeError("running statistics must have " + std::to_string(output_dim()) + " entries");
  }
  running_mean_ = std::move(mean);
  running_var_ = std::move(var);
}

std::vector<ad::Tensor*> Mlp::parameters() {
  std::vector<ad::Tensor*> out;
  for (Layer& layer : layers_) {
    out.push_back(&layer.weight);
    out.push_back(&layer.bias);
  }
  return out;
}

std::vector<const ad::Tensor*> Mlp::parameters() const {
  std::vector<const ad::Tensor*> out;
  for (const Layer& layer : layers_) {
    out.push_back(&layer.weight);
    out.push_back(&layer.bias);
  }
  return out;
}

std::size_t Mlp::parameter_count() const {
  std::size_t total = 0;
  for (const Layer& layer : layers_) total += layer.weight.size() + layer.bias.size();
  return total;
}

std::vector<ad::Var> Mlp::bind(ad::Tape& tape) const {
  std::vector<ad::Var> out;
  for (std::size_t l = 0; l < layers_.size(); ++l) {
    out.push_back(tape.leaf(layers_[l].weight, "W" + std::to_string(l)));
    out.push_back(tape.leaf(layers_[l].bias, "b" + std::to_string(l)));
  }
  return out;
}

Mlp::Output Mlp::forward(ad::Tape& tape, std::span<const ad::Var> params, ad::Var x, Mode mode) const {
  if (params.size() != 2 * layers_.size()) throw ShapeError("MLP forward: wrong number of parameter variables");
  if (x.cols() != input_dim()) {
    throw ShapeError("MLP expects " + std::to_string(input_dim()) + " input features, got " +
                     std::to_string(x.cols()));
  }
  const std::size_t n = x.rows();
  if (mode == Mode::Train && whitening_ && n < 2) throw DataError("train mode needs a batch of at least 2 rows");

  ad::Var h = x;
  for (std::size_t l = 0; l < layers_.size(); ++l) {
    h = tape.add(tape.matmul(h, params[2 * l]), tape.broadcast_rows(params[2 * l + 1], n));
    if (l + 1 < layers_.size()) h = tape.relu(h);
  }

  Output out{h, h, {}};
  if (!whitening_) return out;
  if (mode == Mode::Train) {
    out.whitened = whiten_on_tape(tape, h, WhitenMode::Batch, &out.batch_stats);
    return out;
  }

  const std::size_t k = output_dim();
  ad::Tensor shift({n, k});
  ad::Tensor gain({n, k});
  for (std::size_t j = 0; j < k; ++j) {
    const double sd = std::sqrt(running_var_(static_cast<Eigen::Index>(j)));
    const double g = sd >= linalg::kWhitenEpsilon ? 1.0 / sd : 0.0;
    const double m = running_mean_(static_cast<Eigen::Index>(j));
    for (std::size_t i = 0; i < n; ++i) {
      shift(i, j) = m;
      gain(i, j) = g;
    }
  }
  out.whitened = tape.mul(tape.sub(h, tape.constant(std::move(shift))), tape.constant(std::move(gain)));
  return out;
}

Matrix Mlp::predict(const Matrix& x, Mode mode) const {
  ad::Tape tape;
  std::vector<ad::Var> params;
  for (const ad::Tensor* p : parameters()) params.push_back(tape.constant(*p));
  const ad::Var input = tape.constant(to_tensor(x));
  return to_matrix(forward(tape, params, input, mode).whitened.value());
}

Encoding encode(const Mlp& mlp, const Matrix& x, Mode mode) {
  ad::Tape tape;
  std::vector<ad::Var> params;
  for (const ad::Tensor* p : mlp.parameters()) params.push_back(tape.constant(*p));
  const Mlp::Output out = mlp.forward(tape, params, tape.constant(to_tensor(x)), mode);
  Encoding enc{to_matrix(out.whitened.value()), to_matrix(out.raw.value()), false};
  if (mlp.whitening() && mode == Mode::Train) {
    enc.degenerate = out.batch_stats.any_degenerate();
  } else if (mlp.whitening()) {
    enc.degenerate = (mlp.running_var().array().sqrt() < linalg::kWhitenEpsilon).any();
  }
  if (!enc.degenerate && enc.raw.rows() >= 2) enc.degenerate = linalg::column_stats(enc.raw).any_degenerate();
  return enc;
}

void Mlp::update_running_stats(const linalg::WhitenStats& batch) {
  if (!whitening_) return;
  const linalg::Vector var = batch.stddev.array().square();
  running_mean_ = kRunningMomentum * running_mean_ + (1.0 - kRunningMomentum) * batch.mean;
  running_var_ = kRunningMomentum * running_var_ + (1.0 - kRunningMomentum) * var;
}

std::uint32_t Mlp::checksum() const {
  uLong crc = crc32(0L, Z_NULL, 0);
  auto feed = [&crc](const double* data, std::size_t count) {
    crc = crc32(crc, reinterpret_cast<const Bytef*>(data), static_cast<uInt>(count * sizeof(double)));
  };
  for (const ad::Tensor* p : parameters()) feed(p->data().data(), p->size());
  feed(running_mean_.data(), static_cast<std::size_t>(running_mean_.size()));
  feed(running_var_.data(), static_cast<std::size_t>(running_var_.size()));
  return static_cast<std::uint32_t>(crc);
}

}  // namespace comind::model
