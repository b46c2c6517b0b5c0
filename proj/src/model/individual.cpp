#include "comind/model/individual.hpp"

#include "comind/autodiff/adam.hpp"
#include "comind/data/batching.hpp"
#include "comind/error.hpp"
#include "comind/util/random.hpp"

#include <zlib.h>

#include <algorithm>
#include <string>

namespace comind::model {

namespace {

template <typename Self>
auto& pick(Self& a, Self& b, int view) {
  if (view == 1) return a;
  if (view == 2) return b;
  throw ConfigError("view index must be 1 or 2, got " + std::to_string(view));
}

}  // namespace

const Mlp& IndividualComponent::encoder(int view) const { return pick(encoder1, encoder2, view); }
const Mlp& IndividualComponent::decoder(int view) const { return pick(decoder1, decoder2, view); }
Mlp& IndividualComponent::encoder(int view) { return pick(encoder1, encoder2, view); }
Mlp& IndividualComponent::decoder(int view) { return pick(decoder1, decoder2, view); }

std::uint32_t IndividualComponent::checksum() const {
  const std::uint32_t parts[4] = {encoder1.checksum(), encoder2.checksum(), decoder1.checksum(),
                                  decoder2.checksum()};
  return static_cast<std::uint32_t>(
      crc32(crc32(0L, Z_NULL, 0), reinterpret_cast<const Bytef*>(parts), static_cast<uInt>(sizeof(parts))));
}

IndividualComponent make_individual(std::size_t d1, std::size_t d2, const TrainConfig& config) {
  config.validate();
  const std::size_t k = config.k;
  const std::size_t q = config.latent_q();
  auto encoder_sizes = [&](std::size_t d) {
    std::vector<std::size_t> s{d};
    s.insert(s.end(), config.hidden.begin(), config.hidden.end());
    s.push_back(q);
    return s;
  };
  auto decoder_sizes = [&](std::size_t d) {
    std::vector<std::size_t> s{k + q};
    s.insert(s.end(), config.hidden.rbegin(), config.hidden.rend());
    s.push_back(d);
    return s;
  };
  IndividualComponent c;
  c.k = k;
  c.q = q;
  c.encoder1 = Mlp(encoder_sizes(d1), config.whitening, util::mix_seed(config.seed, 201));
  c.encoder2 = Mlp(encoder_sizes(d2), config.whitening, util::mix_seed(config.seed, 202));
  c.decoder1 = Mlp(decoder_sizes(d1), false, util::mix_seed(config.seed, 203));
  c.decoder2 = Mlp(decoder_sizes(d2), false, util::mix_seed(config.seed, 204));
  return c;
}

Matrix encode_individual(const IndividualComponent& component, const Matrix& x, int view, Mode mode) {
  return encode(component.encoder(view), x, mode).values;
}

Encoding encode_individual_detailed(const IndividualComponent& component, const Matrix& x, int view, Mode mode) {
  return encode(component.encoder(view), x, mode);
}

Matrix reconstruct(const IndividualComponent& component, const Matrix& z, const Matrix& h, int view) {
  if (z.rows() != h.rows()) throw ShapeError("reconstruct: z and h batch sizes differ");
  if (static_cast<std::size_t>(z.cols()) != component.k || static_cast<std::size_t>(h.cols()) != component.q) {
    throw ShapeError("reconstruct: expected z with " + std::to_string(component.k) + " and h with " +
                     std::to_string(component.q) + " columns");
  }
  Matrix zh(z.rows(), z.cols() + h.cols());
  zh << z, h;
  return encode(component.decoder(view), zh, Mode::Eval).values;
}

IndividualLossTerms individual_loss(ad::Tape& tape, ad::Var x, ad::Var xhat, ad::Var zhat, ad::Var hhat, double nu) {
  if (x.rows() != xhat.rows() || x.cols() != xhat.cols()) throw ShapeError("individual_loss: x and xhat differ");
  if (zhat.rows() != hhat.rows() || zhat.rows() != x.rows()) {
    throw ShapeError("individual_loss: batch sizes differ");
  }
  const double inv_n = 1.0 / static_cast<double>(x.rows());
  const ad::Var recon = tape.sum(tape.square(tape.sub(xhat, x)));
  const ad::Var delta = tape.scale(tape.matmul(zhat, hhat, true, false), inv_n);
  const ad::Var decor = tape.sum(tape.square(delta));
  return {tape.add(recon, tape.scale(decor, nu)), recon, decor};
}

IndividualLossValue individual_loss_from_delta(const Matrix& x, const Matrix& xhat, const Matrix& delta, double nu) {
  if (x.rows() != xhat.rows() || x.cols() != xhat.cols()) throw ShapeError("individual_loss: x and xhat differ");
  IndividualLossValue v;
  v.reconstruction = (xhat - x).squaredNorm();
  v.decorrelation = delta.squaredNorm();
  v.total = v.reconstruction + nu * v.decorrelation;
  return v;
}

IndividualLossValue individual_loss(const Matrix& x, const Matrix& xhat, const Matrix& zhat, const Matrix& hhat,
                                    double nu) {
  if (zhat.rows() != hhat.rows() || zhat.rows() != x.rows()) {
    throw ShapeError("individual_loss: batch sizes differ");
  }
  const Matrix delta = zhat.transpose() * hhat / static_cast<double>(x.rows());
  return individual_loss_from_delta(x, xhat, delta, nu);
}

IndividualObjective record_individual_objective(ad::Tape& tape, const IndividualComponent& component,
                                                const Matrix& x1, const Matrix& x2, const Matrix& z1,
                                                const Matrix& z2, const TrainConfig& config) {
  IndividualObjective obj;
  auto view_loss = [&](int view, const Matrix& x, const Matrix& z, double nu, linalg::WhitenStats& stats) {
    const Mlp& enc = component.encoder(view);
    const Mlp& dec = component.decoder(view);
    const std::vector<ad::Var> pe = enc.bind(tape);
    const std::vector<ad::Var> pd = dec.bind(tape);
    obj.params.insert(obj.params.end(), pe.begin(), pe.end());
    obj.params.insert(obj.params.end(), pd.begin(), pd.end());

    const ad::Var xv = tape.constant(to_tensor(x));
    const Mlp::Output h = enc.forward(tape, pe, xv, Mode::Train);
    stats = h.batch_stats;
    const ad::Var zv = tape.constant(to_tensor(z));
    const ad::Var zhat = tape.constant(to_tensor(linalg::whiten(z).values));
    const ad::Var hhat = enc.whitening() ? h.whitened : whiten_on_tape(tape, h.raw, WhitenMode::Batch);
    const ad::Var xhat = dec.forward(tape, pd, tape.concat_cols(zv, h.whitened), Mode::Train).whitened;
    return individual_loss(tape, xv, xhat, zhat, hhat, nu);
  };
  obj.view1 = view_loss(1, x1, z1, config.nu1, obj.batch_stats1);
  obj.view2 = view_loss(2, x2, z2, config.nu2, obj.batch_stats2);
  obj.total = tape.add(obj.view1.total, obj.view2.total);
  return obj;
}

IndividualTrainResult train_individual(const TrainConfig& config, const data::PairedDataset& data,
                                       const CommonComponent& common) {
  config.validate();
  return train_individual(config, data, common, make_individual(data.view1.d(), data.view2.d(), config));
}

IndividualTrainResult train_individual(const TrainConfig& config, const data::PairedDataset& data,
                                       const CommonComponent& common, IndividualComponent initial) {
  config.validate();
  if (!common.trained) throw Error("train_individual: the common component has not been trained");
  if (data.size() == 0) throw DataError("train_individual: empty dataset");
  data.validate();
  if (common.encoder1.input_dim() != data.view1.d() || common.encoder2.input_dim() != data.view2.d()) {
    throw ShapeError("train_individual: common encoders do not match the data");
  }
  if (initial.encoder1.input_dim() != data.view1.d() || initial.encoder2.input_dim() != data.view2.d() ||
      initial.decoder1.output_dim() != data.view1.d() || initial.decoder2.output_dim() != data.view2.d()) {
    throw ShapeError("train_individual: individual networks do not match the data");
  }
  if (initial.k != common.k || initial.decoder1.input_dim() != initial.k + initial.q ||
      initial.decoder2.input_dim() != initial.k + initial.q) {
    throw ShapeError("train_individual: decoder inputs must have k + q columns");
  }

  const Matrix z1_all = encode_common(common, data.view1.values, 1, Mode::Eval);
  const Matrix z2_all = encode_common(common, data.view2.values, 2, Mode::Eval);

  IndividualTrainResult result{std::move(initial), {}};
  IndividualComponent& c = result.component;
  c.common_checksum = common.checksum();
  std::vector<ad::Tensor*> params;
  for (Mlp* m : {&c.encoder1, &c.decoder1, &c.encoder2, &c.decoder2}) {
    for (ad::Tensor* p : m->parameters()) params.push_back(p);
  }
  ad::AdamState adam(ad::AdamOptions{config.learning_rate});
  const std::uint64_t shuffle_seed = util::mix_seed(config.seed, 12);
  auto rows_of = [](const Matrix& m, const data::Batch& idx) -> Matrix { return m(idx, Eigen::all); };

  for (std::size_t epoch = 1; epoch <= config.epochs; ++epoch) {
    const std::vector<data::Batch> batches = data::batch_iterator(data.size(), config.batch_size, shuffle_seed, epoch);
    IndividualEpoch rec;
    rec.epoch = epoch;
    for (std::size_t b = 0; b < batches.size(); ++b) {
      const data::Batch& idx = batches[b];
      ad::Tape tape(config.strict);
      try {
        const IndividualObjective obj =
            record_individual_objective(tape, c, rows_of(data.view1.values, idx), rows_of(data.view2.values, idx),
                                        rows_of(z1_all, idx), rows_of(z2_all, idx), config);
        rec.reconstruction1 += obj.view1.reconstruction.value().item();
        rec.decorrelation1 += obj.view1.decorrelation.value().item();
        rec.reconstruction2 += obj.view2.reconstruction.value().item();
        rec.decorrelation2 += obj.view2.decorrelation.value().item();
        rec.total += obj.total.value().item();
        const ad::GradientSet grads = tape.backward(obj.total, obj.params);
        std::vector<ad::Tensor> g;
        g.reserve(obj.params.size());
        for (ad::Var v : obj.params) g.push_back(grads[v]);
        adam.step(params, g);
        c.encoder1.update_running_stats(obj.batch_stats1);
        c.encoder2.update_running_stats(obj.batch_stats2);
      } catch (const NumericError& e) {
        throw NumericError("train_individual: epoch " + std::to_string(epoch) + ", batch " + std::to_string(b + 1) +
                           ": " + e.what());
      }
    }
    const double nb = static_cast<double>(batches.size());
    rec.reconstruction1 /= nb;
    rec.decorrelation1 /= nb;
    rec.reconstruction2 /= nb;
    rec.decorrelation2 /= nb;
    rec.total /= nb;
    result.history.push_back(rec);
  }
  c.trained = true;
  if (common.checksum() != c.common_checksum) throw Error("train_individual: the common component changed");
  return result;
}

}  // namespace comind::model
