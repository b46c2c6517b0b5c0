#include "comind/model/common.hpp"

#include "comind/autodiff/adam.hpp"
#include "comind/data/batching.hpp"
#include "comind/error.hpp"
#include "comind/scores/scores.hpp"
#include "comind/util/random.hpp"

#include <zlib.h>

#include <cmath>
#include <string>

namespace comind::model {

void TrainConfig::validate() const {
  auto nonneg = [](double v, const char* name) {
    if (!(v >= 0.0) || !std::isfinite(v)) throw ConfigError(std::string(name) + " must be a finite value >= 0");
  };
  if (k == 0) throw ConfigError("k must be at least 1");
  nonneg(lambda1, "lambda1");
  nonneg(lambda2, "lambda2");
  nonneg(nu1, "nu1");
  nonneg(nu2, "nu2");
  nonneg(gamma, "gamma");
  if (!(alpha >= 0.0 && alpha <= 1.0)) throw ConfigError("alpha must lie in [0, 1]");
  if (!(learning_rate > 0.0) || !std::isfinite(learning_rate)) throw ConfigError("learning rate must be positive");
  if (batch_size < 2) throw ConfigError("batch size must be at least 2");
  if (epochs == 0) throw ConfigError("epochs must be at least 1");
  for (std::size_t h : hidden) {
    if (h == 0) throw ConfigError("hidden layer sizes must be positive");
  }
}

const Mlp& CommonComponent::encoder(int view) const {
  if (view == 1) return encoder1;
  if (view == 2) return encoder2;
  throw ConfigError("view index must be 1 or 2, got " + std::to_string(view));
}

Mlp& CommonComponent::encoder(int view) {
  return const_cast<Mlp&>(static_cast<const CommonComponent&>(*this).encoder(view));
}

std::uint32_t CommonComponent::checksum() const {
  const std::uint32_t parts[2] = {encoder1.checksum(), encoder2.checksum()};
  return static_cast<std::uint32_t>(
      crc32(crc32(0L, Z_NULL, 0), reinterpret_cast<const Bytef*>(parts), static_cast<uInt>(sizeof(parts))));
}

namespace {

std::vector<std::size_t> stack(std::size_t in, const std::vector<std::size_t>& hidden, std::size_t out) {
  std::vector<std::size_t> sizes{in};
  sizes.insert(sizes.end(), hidden.begin(), hidden.end());
  sizes.push_back(out);
  return sizes;
}

ad::Tensor offdiag_mask(std::size_t k) {
  ad::Tensor mask({k, k}, 1.0);
  for (std::size_t i = 0; i < k; ++i) mask(i, i) = 0.0;
  return mask;
}

Matrix rows_of(const Matrix& m, const data::Batch& idx) { return m(idx, Eigen::all); }

}  // namespace

CommonComponent make_common(std::size_t d1, std::size_t d2, const TrainConfig& config) {
  config.validate();
  CommonComponent c;
  c.k = config.k;
  c.encoder1 = Mlp(stack(d1, config.hidden, config.k), config.whitening, util::mix_seed(config.seed, 101));
  c.encoder2 = Mlp(stack(d2, config.hidden, config.k), config.whitening, util::mix_seed(config.seed, 102));
  return c;
}

Matrix encode_common(const CommonComponent& component, const Matrix& x, int view, Mode mode) {
  return encode(component.encoder(view), x, mode).values;
}

Encoding encode_common_detailed(const CommonComponent& component, const Matrix& x, int view, Mode mode) {
  return encode(component.encoder(view), x, mode);
}

CommonLossTerms common_loss(ad::Tape& tape, ad::Var z1, ad::Var z2, double lambda1, double lambda2) {
  if (z1.rows() != z2.rows() || z1.cols() != z2.cols()) {
    throw ShapeError("common_loss: latent shapes differ (" + z1.value().shape_string() + " vs " +
                     z2.value().shape_string() + ")");
  }
  const std::size_t n = z1.rows();
  const std::size_t k = z1.cols();
  const double inv_n = 1.0 / static_cast<double>(n);
  const ad::Var mask = tape.constant(offdiag_mask(k));

  const ad::Var diag = tape.mean_rows(tape.mul(z1, z2));
  const ad::Var corr = tape.sum(tape.square(tape.add_scalar(tape.neg(diag), 1.0)));
  auto redundancy = [&](ad::Var z) {
    const ad::Var s = tape.scale(tape.matmul(z, z, true, false), inv_n);
    return tape.sum(tape.square(tape.mul(s, mask)));
  };
  const ad::Var dec1 = redundancy(z1);
  const ad::Var dec2 = redundancy(z2);
  const ad::Var total = tape.add(corr, tape.add(tape.scale(dec1, lambda1), tape.scale(dec2, lambda2)));
  return {total, corr, dec1, dec2};
}

CommonLossValue common_loss_from_moments(const Matrix& cross, const Matrix& within1, const Matrix& within2,
                                         double lambda1, double lambda2) {
  const Eigen::Index k = cross.rows();
  if (cross.cols() != k || within1.rows() != k || within1.cols() != k || within2.rows() != k ||
      within2.cols() != k) {
    throw ShapeError("common_loss: moment matrices must all be k x k");
  }
  auto offdiag = [](const Matrix& s) { return s.squaredNorm() - s.diagonal().squaredNorm(); };
  CommonLossValue v;
  v.correlation = (1.0 - cross.diagonal().array()).square().sum();
  v.decorrelation1 = offdiag(within1);
  v.decorrelation2 = offdiag(within2);
  v.total = v.correlation + lambda1 * v.decorrelation1 + lambda2 * v.decorrelation2;
  return v;
}

CommonLossValue common_loss(const Matrix& z1, const Matrix& z2, double lambda1, double lambda2) {
  if (z1.rows() != z2.rows() || z1.cols() != z2.cols()) throw ShapeError("common_loss: latent shapes differ");
  if (z1.rows() == 0) throw ShapeError("common_loss: empty batch");
  const linalg::CorrelationStats st = linalg::correlation_stats(z1, z2);
  return common_loss_from_moments(st.cross, st.within1, st.within2, lambda1, lambda2);
}

CommonObjective record_common_objective(ad::Tape& tape, const CommonComponent& component, const Matrix& x1,
                                        const Matrix& x2, const TrainConfig& config) {
  if (x1.rows() != x2.rows()) throw DataError("views have different batch sizes");
  CommonObjective obj;
  obj.params1 = component.encoder1.bind(tape);
  obj.params2 = component.encoder2.bind(tape);
  const ad::Var c1 = tape.constant(to_tensor(x1));
  const ad::Var c2 = tape.constant(to_tensor(x2));

  const Mlp::Output out1 = component.encoder1.forward(tape, obj.params1, c1, Mode::Train);
  const Mlp::Output out2 = component.encoder2.forward(tape, obj.params2, c2, Mode::Train);
  obj.batch_stats1 = out1.batch_stats;
  obj.batch_stats2 = out2.batch_stats;
  const ad::Var z1 = component.encoder1.whitening() ? out1.whitened : whiten_on_tape(tape, out1.raw, WhitenMode::Batch);
  const ad::Var z2 = component.encoder2.whitening() ? out2.whitened : whiten_on_tape(tape, out2.raw, WhitenMode::Batch);
  obj.loss = common_loss(tape, z1, z2, config.lambda1, config.lambda2);
  obj.total = obj.loss.total;
  if (!(config.gamma > 0.0)) return obj;

  // The score pass sees the inputs as leaves but takes its whitening
  // statistics from the constant-input pass above. Row j of the score then
  // depends on x_j alone, so one gradient of the summed scores yields every
  // per-sample map, and the statistics still depend on the parameters.
  obj.x1 = tape.leaf(to_tensor(x1), "x1");
  obj.x2 = tape.leaf(to_tensor(x2), "x2");
  auto score_latent = [&](const Mlp& enc, std::span<const ad::Var> params, ad::Var x, const Mlp::Output& batch) {
    const ad::Var raw = enc.forward(tape, params, x, Mode::Eval).raw;
    return enc.whitening() ? whiten_on_tape(tape, raw, WhitenMode::Batch, nullptr, batch.raw) : raw;
  };
  const ad::Var s = scores::common_score_rows(tape, score_latent(component.encoder1, obj.params1, obj.x1, out1),
                                              score_latent(component.encoder2, obj.params2, obj.x2, out2));
  const ad::Var inputs[2] = {obj.x1, obj.x2};
  const std::vector<ad::Var> maps = tape.gradients(tape.sum(s), inputs);
  const double inv = 1.0 / (2.0 * static_cast<double>(x1.rows()));
  obj.penalty = tape.scale(tape.add(scores::contractive_penalty_rows(tape, maps[0], config.alpha),
                                    scores::contractive_penalty_rows(tape, maps[1], config.alpha)),
                           inv);
  obj.total = tape.add(obj.total, tape.scale(obj.penalty, config.gamma));
  return obj;
}

CommonTrainResult train_common(const TrainConfig& config, const data::PairedDataset& data,
                               const CommonEpochHook& hook) {
  config.validate();
  return train_common(config, data, make_common(data.view1.d(), data.view2.d(), config), hook);
}

CommonTrainResult train_common(const TrainConfig& config, const data::PairedDataset& data, CommonComponent initial,
                               const CommonEpochHook& hook) {
  config.validate();
  if (data.size() == 0) throw DataError("train_common: empty dataset");
  data.validate();
  if (initial.encoder1.input_dim() != data.view1.d() || initial.encoder2.input_dim() != data.view2.d()) {
    throw ShapeError("train_common: encoder input sizes do not match the data");
  }
  if (initial.encoder1.output_dim() != initial.k || initial.encoder2.output_dim() != initial.k) {
    throw ShapeError("train_common: both encoders must output k dimensions");
  }

  CommonTrainResult result{std::move(initial), {}};
  CommonComponent& c = result.component;
  std::vector<ad::Tensor*> params = c.encoder1.parameters();
  for (ad::Tensor* p : c.encoder2.parameters()) params.push_back(p);
  ad::AdamState adam(ad::AdamOptions{config.learning_rate});
  const std::uint64_t shuffle_seed = util::mix_seed(config.seed, 11);

  for (std::size_t epoch = 1; epoch <= config.epochs; ++epoch) {
    const std::vector<data::Batch> batches = data::batch_iterator(data.size(), config.batch_size, shuffle_seed, epoch);
    CommonEpoch rec;
    rec.epoch = epoch;
    for (std::size_t b = 0; b < batches.size(); ++b) {
      ad::Tape tape(config.strict);
      try {
        const CommonObjective obj = record_common_objective(tape, c, rows_of(data.view1.values, batches[b]),
                                                            rows_of(data.view2.values, batches[b]), config);
        std::vector<ad::Var> wrt = obj.params1;
        wrt.insert(wrt.end(), obj.params2.begin(), obj.params2.end());
        rec.correlation += obj.loss.correlation.value().item();
        rec.decorrelation1 += obj.loss.decorrelation1.value().item();
        rec.decorrelation2 += obj.loss.decorrelation2.value().item();
        if (obj.penalty.valid()) rec.penalty += obj.penalty.value().item();
        rec.total += obj.total.value().item();
        const ad::GradientSet grads = tape.backward(obj.total, wrt);
        std::vector<ad::Tensor> g;
        g.reserve(wrt.size());
        for (ad::Var v : wrt) g.push_back(grads[v]);
        adam.step(params, g);
        c.encoder1.update_running_stats(obj.batch_stats1);
        c.encoder2.update_running_stats(obj.batch_stats2);
      } catch (const NumericError& e) {
        throw NumericError("train_common: epoch " + std::to_string(epoch) + ", batch " + std::to_string(b + 1) +
                           ": " + e.what());
      }
    }
    const double nb = static_cast<double>(batches.size());
    rec.correlation /= nb;
    rec.decorrelation1 /= nb;
    rec.decorrelation2 /= nb;
    rec.penalty /= nb;
    rec.total /= nb;
    for (ad::Tensor* p : params) {
      if (!p->all_finite()) {
        throw NumericError("train_common: non-finite parameters after epoch " + std::to_string(epoch));
      }
    }
    c.trained = true;
    if (hook) rec.eval_metric = hook(epoch, c);
    result.history.push_back(rec);
  }
  return result;
}

}  // namespace comind::model
