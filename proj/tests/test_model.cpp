#include "comind/autodiff/adam.hpp"
#include "comind/data/metrics.hpp"
#include "comind/data/synthetic.hpp"
#include "comind/error.hpp"
#include "comind/linear/oracle.hpp"
#include "comind/model/common.hpp"
#include "comind/model/individual.hpp"
#include "comind/util/random.hpp"
#include "test_support.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <limits>

using namespace comind;
using linalg::Matrix;
using model::Mode;

namespace {

Matrix gaussian(std::size_t n, std::size_t d, std::uint64_t seed) {
  util::Rng rng(seed);
  Matrix m(n, d);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = rng.normal();
  return m;
}

model::TrainConfig small_config() {
  model::TrainConfig c;
  c.k = 3;
  c.hidden = {5};
  c.batch_size = 32;
  c.epochs = 1;
  return c;
}

// Synthetic views with private structure, small enough for unit tests.
data::SyntheticData small_synthetic(std::size_t n, std::uint64_t seed) {
  data::SyntheticSpec spec;
  spec.n = n;
  spec.d1 = 8;
  spec.d2 = 8;
  spec.shared_correlations = {0.95, 0.9, 0.85};
  spec.seed = seed;
  return data::make_shared_latent(spec);
}

Matrix orthonormal_columns() {
  Matrix z(4, 2);
  z << 1, 1, -1, 1, 1, -1, -1, -1;
  return z;
}

}  // namespace

TEST(Config, Validation) {
  model::TrainConfig c;
  EXPECT_NO_THROW(c.validate());
  EXPECT_EQ(c.latent_q(), c.k);
  c.alpha = 1.5;
  EXPECT_THROW(c.validate(), ConfigError);
  c = {};
  c.k = 0;
  EXPECT_THROW(c.validate(), ConfigError);
  c = {};
  c.batch_size = 1;
  EXPECT_THROW(c.validate(), ConfigError);
  c = {};
  c.lambda1 = -1;
  EXPECT_THROW(c.validate(), ConfigError);
}

TEST(Mlp, DeterministicInitialization) {
  const model::Mlp a({6, 5, 3}, true, 9);
  const model::Mlp b({6, 5, 3}, true, 9);
  const model::Mlp c({6, 5, 3}, true, 10);
  EXPECT_EQ(a.checksum(), b.checksum());
  EXPECT_NE(a.checksum(), c.checksum());
  EXPECT_EQ(a.parameter_count(), 6u * 5 + 5 + 5 * 3 + 3);
}

TEST(Mlp, TapeForwardMatchesPredict) {
  const model::Mlp m({4, 6, 2}, false, 3);
  const Matrix x = gaussian(7, 4, 1);
  ad::Tape tape;
  const auto params = m.bind(tape);
  const model::Mlp::Output out = m.forward(tape, params, tape.constant(model::to_tensor(x)), Mode::Eval);
  EXPECT_LT((model::to_matrix(out.raw.value()) - m.predict(x, Mode::Eval)).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(Mlp, TrainModeWhitensBatch) {
  const model::Mlp m({4, 6, 3}, true, 3);
  const Matrix z = m.predict(gaussian(50, 4, 1), Mode::Train);
  const Matrix within = z.transpose() * z / 50.0;
  for (int i = 0; i < 3; ++i) EXPECT_NEAR(within(i, i), 1.0, 1e-9);
  EXPECT_LT(z.colwise().mean().cwiseAbs().maxCoeff(), 1e-12);
}

TEST(Mlp, RunningStatsMomentum) {
  model::Mlp m({2, 2}, true, 1);
  linalg::WhitenStats s;
  s.mean = linalg::Vector::Constant(2, 1.0);
  s.stddev = linalg::Vector::Constant(2, 2.0);
  s.degenerate = {false, false};
  m.update_running_stats(s);
  EXPECT_NEAR(m.running_mean()(0), 0.1, 1e-15);
  EXPECT_NEAR(m.running_var()(0), 0.9 + 0.1 * 4.0, 1e-15);
}

TEST(EncodeCommon, ZeroWeightsAreDegenerate) {
  model::CommonComponent c;
  c.k = 3;
  c.encoder1 = model::Mlp::zeros({4, 5, 3}, true);
  c.encoder2 = model::Mlp::zeros({4, 5, 3}, true);
  const model::Encoding e = model::encode_common_detailed(c, gaussian(10, 4, 1), 1, Mode::Train);
  EXPECT_EQ(e.raw.cwiseAbs().maxCoeff(), 0.0);
  EXPECT_EQ(e.values.cwiseAbs().maxCoeff(), 0.0);
  EXPECT_TRUE(e.degenerate);
}

TEST(EncodeCommon, LinearLayerIsExact) {
  const Matrix u = gaussian(5, 2, 1);
  const Matrix x = gaussian(9, 5, 2);
  const model::CommonComponent c = linear::linear_common(u, gaussian(4, 2, 3));
  EXPECT_EQ(model::encode_common(c, x, 1, Mode::Eval), Matrix(x * u));
}

TEST(EncodeCommon, BadViewIndex) {
  const model::CommonComponent c = model::make_common(4, 4, small_config());
  EXPECT_THROW(model::encode_common(c, gaussian(3, 4, 1), 3, Mode::Eval), ConfigError);
}

TEST(CommonLoss, PerfectCorrelation) {
  const Matrix z = orthonormal_columns();
  EXPECT_NEAR(model::common_loss(z, z, 1, 1).total, 0.0, 1e-12);
}

TEST(CommonLoss, IndependentViewsCostK) {
  Matrix cross = Matrix::Zero(2, 2);
  const Matrix eye = Matrix::Identity(2, 2);
  EXPECT_DOUBLE_EQ(model::common_loss_from_moments(cross, eye, eye, 1, 1).total, 2.0);
}

TEST(CommonLoss, HandEvaluated) {
  Matrix cross(2, 2);
  cross << 0.5, 0, 0, 1;
  Matrix s1(2, 2);
  s1 << 1, 0.2, 0.2, 1;
  const model::CommonLossValue v = model::common_loss_from_moments(cross, s1, Matrix::Identity(2, 2), 1, 1);
  EXPECT_NEAR(v.total, 0.33, 1e-12);
  EXPECT_NEAR(v.correlation, 0.25, 1e-12);
  EXPECT_NEAR(v.decorrelation1, 0.08, 1e-12);
  EXPECT_EQ(v.decorrelation2, 0.0);
}

TEST(CommonLoss, TapeMatchesNumeric) {
  const Matrix z1 = linalg::whiten(gaussian(20, 3, 1)).values;
  const Matrix z2 = linalg::whiten(gaussian(20, 3, 2)).values;
  ad::Tape tape;
  const model::CommonLossTerms t =
      model::common_loss(tape, tape.constant(model::to_tensor(z1)), tape.constant(model::to_tensor(z2)), 2.0, 3.0);
  const model::CommonLossValue v = model::common_loss(z1, z2, 2.0, 3.0);
  EXPECT_NEAR(t.total.value().item(), v.total, 1e-12);
  EXPECT_NEAR(t.decorrelation2.value().item(), v.decorrelation2, 1e-12);
}

TEST(CommonLoss, NonNegative) {
  for (std::uint64_t s = 0; s < 50; ++s) {
    const Matrix z1 = linalg::whiten(gaussian(10, 3, s)).values;
    const Matrix z2 = linalg::whiten(gaussian(10, 3, s + 500)).values;
    EXPECT_GE(model::common_loss(z1, z2, 1, 1).total, 0.0);
  }
}

TEST(CommonLoss, ParameterGradientsMatchFiniteDifferences) {
  for (std::uint64_t s = 0; s < 5; ++s) {
    model::TrainConfig cfg = small_config();
    cfg.seed = s;
    const model::CommonComponent c = model::make_common(6, 6, cfg);
    ad::Tape tape;
    const model::CommonObjective obj =
        model::record_common_objective(tape, c, gaussian(32, 6, 10 + s), gaussian(32, 6, 20 + s), cfg);
    std::vector<ad::Var> params = obj.params1;
    params.insert(params.end(), obj.params2.begin(), obj.params2.end());
    EXPECT_LT(test::fd_gradient_error(tape, obj.total, params), 1e-5) << "seed " << s;
  }
}

TEST(CommonLoss, PenaltyGradientsMatchFiniteDifferences) {
  for (bool whiten : {false, true}) {
    model::TrainConfig cfg = small_config();
    cfg.gamma = 1e-2;
    cfg.whitening = whiten;
    const model::CommonComponent c = model::make_common(6, 6, cfg);
    ad::Tape tape;
    const model::CommonObjective obj = model::record_common_objective(tape, c, gaussian(16, 6, 1), gaussian(16, 6, 2), cfg);
    ASSERT_TRUE(obj.penalty.valid());
    std::vector<ad::Var> params = obj.params1;
    params.insert(params.end(), obj.params2.begin(), obj.params2.end());
    EXPECT_LT(test::fd_gradient_error(tape, obj.penalty, params), 1e-4) << "whitening " << whiten;
  }
}

TEST(TrainCommon, PenaltyDisabledIsExactlyZero) {
  const data::SyntheticData s = small_synthetic(256, 1);
  model::TrainConfig cfg = small_config();
  cfg.epochs = 2;
  const model::CommonTrainResult a = model::train_common(cfg, s.dataset);
  for (const model::CommonEpoch& e : a.history) EXPECT_EQ(e.penalty, 0.0);
  cfg.gamma = 1e-3;
  const model::CommonTrainResult b = model::train_common(cfg, s.dataset);
  EXPECT_GT(b.history.front().penalty, 0.0);
  EXPECT_NEAR(b.history.front().correlation, a.history.front().correlation, 1e-3);
}

TEST(TrainCommon, Deterministic) {
  const data::SyntheticData s = small_synthetic(256, 2);
  model::TrainConfig cfg = small_config();
  cfg.epochs = 3;
  const model::CommonTrainResult a = model::train_common(cfg, s.dataset);
  const model::CommonTrainResult b = model::train_common(cfg, s.dataset);
  EXPECT_EQ(a.component.checksum(), b.component.checksum());
  for (std::size_t i = 0; i < a.history.size(); ++i) EXPECT_EQ(a.history[i].total, b.history[i].total);
}

TEST(TrainCommon, ApproachesCcaAndLossDecreases) {
  const data::SyntheticData s = small_synthetic(2048, 3);
  model::TrainConfig cfg;
  cfg.k = 3;
  cfg.hidden = {};
  cfg.batch_size = 256;
  cfg.learning_rate = 1e-2;
  cfg.epochs = 60;
  const model::CommonTrainResult r = model::train_common(cfg, s.dataset);
  const Matrix z1 = model::encode_common(r.component, s.dataset.view1.values, 1, Mode::Eval);
  const Matrix z2 = model::encode_common(r.component, s.dataset.view2.values, 2, Mode::Eval);
  const double oracle = linalg::svd_cca(s.dataset.view1.values, s.dataset.view2.values, 3).correlations.sum();
  EXPECT_GE(data::total_cross_correlation(z1, z2), 0.95 * oracle);

  std::vector<double> windows;
  for (std::size_t w = 0; w + 10 <= r.history.size(); w += 10) {
    double sum = 0.0;
    for (std::size_t i = w; i < w + 10; ++i) sum += r.history[i].total;
    windows.push_back(sum / 10.0);
  }
  for (std::size_t i = 1; i < windows.size(); ++i) EXPECT_LE(windows[i], windows[i - 1] + 1e-9);
}

TEST(TrainCommon, EmptyDataset) {
  data::PairedDataset empty;
  empty.view1.values = Matrix(0, 4);
  empty.view2.values = Matrix(0, 4);
  EXPECT_THROW(model::train_common(small_config(), empty), DataError);
}

TEST(TrainCommon, DivergenceIsNumericError) {
  const data::SyntheticData s = small_synthetic(64, 4);
  model::TrainConfig cfg = small_config();
  model::CommonComponent c = model::make_common(8, 8, cfg);
  c.encoder1.layers()[0].weight[0] = std::numeric_limits<double>::quiet_NaN();
  EXPECT_THROW(model::train_common(cfg, s.dataset, c), NumericError);
}

TEST(TrainCommon, HookFillsEvalMetric) {
  const data::SyntheticData s = small_synthetic(128, 5);
  model::TrainConfig cfg = small_config();
  cfg.epochs = 2;
  const model::CommonTrainResult r =
      model::train_common(cfg, s.dataset, [](std::size_t epoch, const model::CommonComponent& c) {
        EXPECT_TRUE(c.trained);
        return static_cast<double>(epoch) * 10.0;
      });
  EXPECT_EQ(r.history[1].eval_metric, 20.0);
}

TEST(EncodeIndividual, ZeroWeightsAreDegenerate) {
  model::IndividualComponent c;
  c.encoder1 = model::Mlp::zeros({4, 3}, true);
  const model::Encoding e = model::encode_individual_detailed(c, gaussian(6, 4, 1), 1, Mode::Train);
  EXPECT_EQ(e.values.cwiseAbs().maxCoeff(), 0.0);
  EXPECT_TRUE(e.degenerate);
}

TEST(EncodeIndividual, LinearLayerIsExact) {
  const Matrix w = gaussian(5, 2, 1);
  const Matrix x = gaussian(9, 5, 2);
  const model::IndividualComponent c = linear::linear_individual(w, gaussian(4, 2, 3));
  EXPECT_EQ(model::encode_individual(c, x, 1, Mode::Eval), Matrix(x * w));
}

TEST(Reconstruct, ZeroDecoderGivesBias) {
  model::TrainConfig cfg = small_config();
  model::IndividualComponent c = model::make_individual(4, 4, cfg);
  c.decoder1 = model::Mlp::zeros({6, 5, 4}, false);
  c.decoder1.layers().back().bias = ad::Tensor::row({1, 2, 3, 4});
  const Matrix out = model::reconstruct(c, gaussian(3, 3, 1), gaussian(3, 3, 2), 1);
  for (Eigen::Index r = 0; r < 3; ++r) EXPECT_EQ(out.row(r), (Eigen::RowVectorXd(4) << 1, 2, 3, 4).finished());
  EXPECT_THROW(model::reconstruct(c, gaussian(3, 2, 1), gaussian(3, 3, 2), 1), ShapeError);
}

TEST(Reconstruct, DecoderLearnsIdentity) {
  model::TrainConfig cfg;
  cfg.k = 2;
  cfg.hidden = {};
  model::IndividualComponent c = model::make_individual(4, 4, cfg);
  const Matrix x = gaussian(64, 4, 7);
  const Matrix z = x.leftCols(2);
  const Matrix h = x.rightCols(2);
  ad::AdamState adam(ad::AdamOptions{0.05});
  for (int step = 0; step < 2000; ++step) {
    ad::Tape tape;
    const auto p = c.decoder1.bind(tape);
    const ad::Var in = tape.constant(model::to_tensor(x));
    const ad::Var out = c.decoder1.forward(tape, p, in, Mode::Train).raw;
    const ad::Var loss = tape.sum(tape.square(tape.sub(out, in)));
    const ad::GradientSet g = tape.backward(loss, p);
    std::vector<ad::Tensor> grads;
    for (const ad::Var& v : p) grads.push_back(g[v]);
    adam.step(c.decoder1.parameters(), grads);
  }
  EXPECT_LT((model::reconstruct(c, z, h, 1) - x).cwiseAbs().maxCoeff(), 1e-3);
}

TEST(IndividualLoss, GlobalMinimum) {
  const Matrix x = gaussian(5, 3, 1);
  EXPECT_EQ(model::individual_loss_from_delta(x, x, Matrix::Zero(2, 2), 10).total, 0.0);
}

TEST(IndividualLoss, HandEvaluated) {
  const Matrix x = gaussian(5, 3, 1);
  Matrix delta = Matrix::Zero(2, 2);
  delta(0, 1) = 0.5;
  EXPECT_DOUBLE_EQ(model::individual_loss_from_delta(x, x, delta, 2).total, 0.5);
}

TEST(IndividualLoss, TapeMatchesNumeric) {
  const Matrix x = gaussian(8, 3, 1);
  const Matrix xh = gaussian(8, 3, 2);
  const Matrix z = gaussian(8, 2, 3);
  const Matrix h = gaussian(8, 2, 4);
  ad::Tape tape;
  auto c = [&](const Matrix& m) { return tape.constant(model::to_tensor(m)); };
  const model::IndividualLossTerms t = model::individual_loss(tape, c(x), c(xh), c(z), c(h), 3.0);
  EXPECT_NEAR(t.total.value().item(), model::individual_loss(x, xh, z, h, 3.0).total, 1e-12);
}

TEST(IndividualLoss, ParameterGradientsMatchFiniteDifferences) {
  model::TrainConfig cfg = small_config();
  const model::IndividualComponent c = model::make_individual(6, 6, cfg);
  ad::Tape tape;
  const model::IndividualObjective obj = model::record_individual_objective(
      tape, c, gaussian(32, 6, 1), gaussian(32, 6, 2), gaussian(32, 3, 3), gaussian(32, 3, 4), cfg);
  EXPECT_LT(test::fd_gradient_error(tape, obj.total, obj.params), 1e-5);
}

TEST(TrainIndividual, RequiresTrainedCommon) {
  const data::SyntheticData s = small_synthetic(64, 1);
  const model::CommonComponent c = model::make_common(8, 8, small_config());
  EXPECT_THROW(model::train_individual(small_config(), s.dataset, c), Error);
}

TEST(TrainIndividual, FreezesCommonAndDecorrelates) {
  const data::SyntheticData s = small_synthetic(2048, 6);
  model::TrainConfig cfg;
  cfg.k = 3;
  cfg.hidden = {16};
  cfg.batch_size = 256;
  cfg.learning_rate = 5e-3;
  cfg.epochs = 40;
  const model::CommonTrainResult common = model::train_common(cfg, s.dataset);
  const std::uint32_t before = common.component.checksum();
  const model::IndividualTrainResult ind = model::train_individual(cfg, s.dataset, common.component);
  EXPECT_EQ(common.component.checksum(), before);
  EXPECT_EQ(ind.component.common_checksum, before);
  EXPECT_TRUE(ind.component.trained);

  data::SyntheticSpec spec;
  spec.n = 2048;
  spec.d1 = 8;
  spec.d2 = 8;
  spec.shared_correlations = {0.95, 0.9, 0.85};
  const data::PairedDataset held = data::resample(s, spec, 77);
  const Matrix z = model::encode_common(common.component, held.view1.values, 1, Mode::Eval);
  const Matrix h = model::encode_individual(ind.component, held.view1.values, 1, Mode::Eval);
  const Matrix delta = linalg::whiten(z).values.transpose() * linalg::whiten(h).values / static_cast<double>(z.rows());
  EXPECT_LT(delta.cwiseAbs().mean(), 0.1);

  const Matrix full = model::reconstruct(ind.component, z, h, 1);
  const Matrix z_only = model::reconstruct(ind.component, z, Matrix::Zero(h.rows(), h.cols()), 1);
  EXPECT_LT((full - held.view1.values).squaredNorm(), (z_only - held.view1.values).squaredNorm());
}
