#include "comind/autodiff/adam.hpp"
#include "comind/autodiff/tape.hpp"
#include "comind/error.hpp"
#include "comind/util/random.hpp"
#include "test_support.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <functional>
#include <vector>

using namespace comind;
using ad::Tape;
using ad::Tensor;
using ad::Var;

namespace {

Tensor random_tensor(std::size_t r, std::size_t c, util::Rng& rng) {
  Tensor t({r, c});
  for (double& v : t.data()) v = rng.normal();
  return t;
}

}  // namespace

TEST(Tape, ReluClampsNegatives) {
  Tape tape;
  const Var x = tape.leaf(Tensor::row({-1, 2}));
  EXPECT_EQ(tape.relu(x).value(), Tensor::row({0, 2}));
}

TEST(Tape, IdentityMatmul) {
  Tape tape;
  const Var i = tape.constant(Tensor::matrix({{1, 0}, {0, 1}}));
  const Var m = tape.constant(Tensor::matrix({{3, 4}, {5, 6}}));
  EXPECT_EQ(tape.matmul(i, m).value(), Tensor::matrix({{3, 4}, {5, 6}}));
}

TEST(Tape, SumOfSquares) {
  Tape tape;
  const Var x = tape.leaf(Tensor::row({1, 2, 3}));
  EXPECT_DOUBLE_EQ(tape.sum(tape.square(x)).value().item(), 14.0);
}

TEST(Tape, EvaluateReplaysWithNewBindings) {
  Tape tape;
  const Var x = tape.leaf(Tensor::row({1, 2, 3}));
  const Var y = tape.sum(tape.square(x));
  ad::Bindings b;
  b.set(x, Tensor::row({0, 0, 2}));
  const Var outs[1] = {y};
  EXPECT_DOUBLE_EQ(tape.evaluate(b, outs)[0].item(), 4.0);
  EXPECT_DOUBLE_EQ(y.value().item(), 14.0);
}

TEST(Tape, EvaluateNeedsEveryLeaf) {
  Tape tape;
  const Var x = tape.leaf(Tensor::scalar(1));
  const Var y = tape.leaf(Tensor::scalar(2));
  const Var z = tape.mul(x, y);
  ad::Bindings b;
  b.set(x, Tensor::scalar(3));
  const Var outs[1] = {z};
  EXPECT_THROW(tape.evaluate(b, outs), Error);
}

TEST(Tape, BilinearGradient) {
  Tape tape;
  const Var x = tape.leaf(Tensor::scalar(2));
  const Var y = tape.leaf(Tensor::scalar(3));
  const Var wrt[2] = {x, y};
  const ad::GradientSet g = tape.backward(tape.mul(x, y), wrt);
  EXPECT_DOUBLE_EQ(g[x].item(), 3.0);
  EXPECT_DOUBLE_EQ(g[y].item(), 2.0);
}

TEST(Tape, QuadraticGradient) {
  Tape tape;
  const Var x = tape.leaf(Tensor::row({1, 2}));
  const Var wrt[1] = {x};
  const ad::GradientSet g = tape.backward(tape.sum(tape.square(x)), wrt);
  EXPECT_EQ(g[x], Tensor::row({2, 4}));
}

TEST(Tape, BackwardLeavesTapeSize) {
  Tape tape;
  const Var x = tape.leaf(Tensor::row({1, 2}));
  const Var y = tape.sum(tape.square(x));
  const std::size_t before = tape.size();
  const Var wrt[1] = {x};
  tape.backward(y, wrt);
  EXPECT_EQ(tape.size(), before);
}

TEST(Tape, UnrelatedLeafGetsZero) {
  Tape tape;
  const Var x = tape.leaf(Tensor::scalar(2));
  const Var u = tape.leaf(Tensor::row({1, 1, 1}));
  const Var wrt[2] = {x, u};
  const ad::GradientSet g = tape.backward(tape.square(x), wrt);
  EXPECT_EQ(g[u], Tensor::row({0, 0, 0}));
}

TEST(Tape, SecondDerivativeOfCube) {
  Tape tape;
  const Var x = tape.leaf(Tensor::scalar(2));
  const Var cube = tape.mul(tape.square(x), x);
  const Var wrt[1] = {x};
  const Var dx = tape.gradients(cube, wrt)[0];
  EXPECT_DOUBLE_EQ(dx.value().item(), 12.0);
  const Var d2 = tape.gradients(dx, wrt)[0];
  EXPECT_DOUBLE_EQ(d2.value().item(), 12.0);
}

TEST(Tape, GradientOfGradientPenalty) {
  Tape tape;
  const Var x = tape.leaf(Tensor::scalar(1));
  const Var y = tape.leaf(Tensor::scalar(2));
  const Var f = tape.mul(tape.square(x), y);
  const Var wrt[1] = {x};
  const Var g = tape.gradients(f, wrt)[0];
  EXPECT_DOUBLE_EQ(g.value().item(), 4.0);
  const Var penalty = tape.sum(tape.square(g));
  EXPECT_DOUBLE_EQ(penalty.value().item(), 16.0);
  const Var dp = tape.gradients(penalty, wrt)[0];
  EXPECT_DOUBLE_EQ(dp.value().item(), 32.0);
}

TEST(Tape, ReluDerivativeAtZeroIsZero) {
  Tape tape;
  const Var x = tape.leaf(Tensor::row({0, 1, -1}));
  const Var wrt[1] = {x};
  const ad::GradientSet g = tape.backward(tape.sum(tape.relu(x)), wrt);
  EXPECT_EQ(g[x], Tensor::row({0, 1, 0}));
}

TEST(Tape, DetachBlocksGradient) {
  Tape tape;
  const Var x = tape.leaf(Tensor::scalar(3));
  const Var y = tape.mul(tape.detach(x), x);
  const Var wrt[1] = {x};
  EXPECT_DOUBLE_EQ(tape.backward(y, wrt)[x].item(), 3.0);
}

TEST(Tape, DivisionClampCountsOrThrows) {
  {
    Tape tape;
    const Var a = tape.leaf(Tensor::scalar(1));
    const Var b = tape.leaf(Tensor::scalar(0));
    const Var q = tape.div(a, b);
    EXPECT_TRUE(std::isfinite(q.value().item()));
    EXPECT_EQ(tape.clamp_count(), 1u);
  }
  {
    Tape tape(true);
    const Var a = tape.leaf(Tensor::scalar(1));
    const Var b = tape.leaf(Tensor::scalar(0));
    EXPECT_THROW(tape.div(a, b), NumericError);
  }
}

TEST(Tape, ClampKeepsDenominatorSign) {
  Tape tape;
  const Var a = tape.constant(Tensor::scalar(1));
  const Var b = tape.constant(Tensor::scalar(-1e-20));
  EXPECT_LT(tape.div(a, b).value().item(), 0.0);
}

TEST(Tape, ShapeMismatchThrows) {
  Tape tape;
  const Var a = tape.leaf(Tensor::zeros(2, 3));
  const Var b = tape.leaf(Tensor::zeros(3, 2));
  EXPECT_THROW(tape.add(a, b), ShapeError);
  EXPECT_THROW(tape.matmul(a, a), ShapeError);
}

TEST(Tape, FirstOrderMatchesFiniteDifferences) {
  util::Rng rng(7);
  for (int trial = 0; trial < 20; ++trial) {
    Tape tape;
    const Var a = tape.leaf(random_tensor(4, 3, rng));
    const Var b = tape.leaf(random_tensor(3, 5, rng));
    const Var c = tape.leaf(random_tensor(4, 5, rng));
    const Var m = tape.matmul(a, b);
    const Var t = tape.matmul(b, a, true, true);  // (ab)^T
    const Var r = tape.relu(tape.add(m, c));
    const Var q = tape.div(tape.broadcast_cols(tape.sum_cols(r), 5), tape.add_scalar(tape.sqrt(tape.add_scalar(tape.square(c), 1.0)), 0.5));
    const Var z = tape.sub(tape.mean_rows(tape.abs(tape.add(m, c))), tape.sum_rows(tape.transpose(t)));
    const Var cat = tape.concat_cols(tape.slice_cols(z, 1, 3), tape.broadcast_scalar(tape.sum(q), 1, 2));
    const Var out = tape.add(tape.sum(tape.square(cat)), tape.sum(tape.mul(q, q)));
    EXPECT_LT(test::fd_gradient_error(tape, out, {a, b, c}), 1e-5) << "trial " << trial;
  }
}

TEST(Tape, SecondOrderMatchesFiniteDifferences) {
  util::Rng rng(11);
  for (int trial = 0; trial < 20; ++trial) {
    Tape tape;
    const Var w = tape.leaf(random_tensor(3, 4, rng));
    const Var x = tape.leaf(random_tensor(5, 3, rng));
    const Var h = tape.matmul(x, w);
    const Var norm = tape.sqrt(tape.add_scalar(tape.sum_cols(tape.square(h)), 1.0));
    const Var s = tape.sum(tape.div(tape.sum_cols(h), norm));
    const Var wrt_x[1] = {x};
    const Var g = tape.gradients(s, wrt_x)[0];
    const Var penalty = tape.add(tape.scale(tape.sum(tape.abs(g)), 0.5), tape.scale(tape.sum(tape.square(g)), 0.5));
    EXPECT_LT(test::fd_gradient_error(tape, penalty, {w}), 1e-4) << "trial " << trial;
  }
}

TEST(Adam, FirstStepMovesByLearningRate) {
  ad::AdamState state({.learning_rate = 0.1});
  Tensor p = Tensor::scalar(1.0);
  Tensor* params[1] = {&p};
  const Tensor grads[1] = {Tensor::scalar(2.0)};
  state.step(params, grads);
  EXPECT_NEAR(p.item(), 0.9, 1e-6);
  EXPECT_EQ(state.step_count(), 1u);
}

TEST(Adam, ZeroGradientIsFixedPoint) {
  ad::AdamState state;
  Tensor p = Tensor::row({1, -2});
  Tensor* params[1] = {&p};
  const Tensor grads[1] = {Tensor::row({0, 0})};
  state.step(params, grads);
  EXPECT_EQ(p, Tensor::row({1, -2}));
  EXPECT_EQ(state.step_count(), 1u);
}

TEST(Adam, ConvergesOnQuadratic) {
  ad::AdamState state({.learning_rate = 0.1});
  Tensor x = Tensor::scalar(0.0);
  Tensor* params[1] = {&x};
  for (int i = 0; i < 200; ++i) {
    const Tensor grads[1] = {Tensor::scalar(2.0 * (x.item() - 3.0))};
    state.step(params, grads);
  }
  EXPECT_LT(std::abs(x.item() - 3.0), 0.05);
}

TEST(Adam, ShapeChangeThrows) {
  ad::AdamState state;
  Tensor p = Tensor::row({1, 2});
  Tensor* params[1] = {&p};
  const Tensor grads[1] = {Tensor::row({1, 1})};
  state.step(params, grads);
  Tensor q = Tensor::row({1, 2, 3});
  Tensor* other[1] = {&q};
  const Tensor g3[1] = {Tensor::row({1, 1, 1})};
  EXPECT_THROW(state.step(other, g3), ShapeError);
}
