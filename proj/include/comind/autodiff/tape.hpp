#pragma once

#include "comind/autodiff/tensor.hpp"

#include <cstddef>
#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace comind::ad {

class Tape;

enum class Op : std::uint8_t {
  Leaf,
  Constant,
  MatMul,
  Add,
  Sub,
  Mul,
  Div,
  Neg,
  Scale,
  AddScalar,
  Relu,
  Step,
  Abs,
  Sign,
  Square,
  Sqrt,
  Sum,
  SumRows,
  SumCols,
  MeanRows,
  BroadcastRows,
  BroadcastCols,
  BroadcastScalar,
  Transpose,
  ConcatCols,
  SliceCols,
  PadCols,
  Detach,
};

std::string_view op_name(Op op);

/// Handle to a node on a tape. Cheap to copy; valid while the tape lives and
/// the node has not been truncated away.
struct Var {
  Tape* tape = nullptr;
  int id = -1;

  bool valid() const { return tape != nullptr && id >= 0; }
  const Tensor& value() const;
  std::size_t rows() const { return value().rows(); }
  std::size_t cols() const { return value().cols(); }
};

/// Tensors keyed by leaf node. Used both for leaf bindings passed to
/// evaluate() and for the gradients returned by backward().
class LeafTensors {
 public:
  void set(Var leaf, Tensor value) { entries_[leaf.id] = std::move(value); }
  bool contains(Var leaf) const { return entries_.count(leaf.id) != 0; }
  const Tensor& operator[](Var leaf) const;
  const Tensor* find(int id) const;
  std::size_t size() const { return entries_.size(); }

 private:
  std::map<int, Tensor> entries_;
};

using GradientSet = LeafTensors;
using Bindings = LeafTensors;

/// Define-by-run computation graph over Tensors.
///
/// Every op computes its value when recorded and appends a node, so node ids
/// are a topological order. Gradients are themselves recorded as nodes
/// (gradients()), which is what makes second-order differentiation work:
/// differentiate a function of a gradient by calling gradients() again.
///
/// Division denominators (by magnitude) and sqrt radicands are clamped at
/// kClamp. In strict mode hitting the clamp throws NumericError; otherwise it
/// is counted in clamp_count().
class Tape {
 public:
  static constexpr double kClamp = 1e-12;

  explicit Tape(bool strict = false) : strict_(strict) {}
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var leaf(Tensor value, std::string name = {});
  Var constant(Tensor value);

  Var matmul(Var a, Var b, bool transpose_a = false, bool transpose_b = false);
  Var add(Var a, Var b);
  Var sub(Var a, Var b);
  Var mul(Var a, Var b);
  Var div(Var a, Var b);
  Var neg(Var a);
  Var scale(Var a, double factor);
  Var add_scalar(Var a, double offset);
  Var relu(Var a);
  // Indicator a > 0. Zero derivative everywhere.
  Var step(Var a);
  Var abs(Var a);
  // sign(0) = 0. Zero derivative everywhere.
  Var sign(Var a);
  Var square(Var a);
  Var sqrt(Var a);
  Var sum(Var a);
  // r x c -> 1 x c
  Var sum_rows(Var a);
  // r x c -> r x 1
  Var sum_cols(Var a);
  Var mean_rows(Var a);
  // 1 x c -> rows x c
  Var broadcast_rows(Var a, std::size_t rows);
  // r x 1 -> r x cols
  Var broadcast_cols(Var a, std::size_t cols);
  Var broadcast_scalar(Var a, std::size_t rows, std::size_t cols);
  Var transpose(Var a);
  Var concat_cols(Var a, Var b);
  Var slice_cols(Var a, std::size_t begin, std::size_t width);
  // Embeds a into columns [begin, begin + a.cols) of a zero matrix with total columns.
  Var pad_cols(Var a, std::size_t begin, std::size_t total);
  // Identity on values, blocks gradient flow.
  Var detach(Var a);

  /// Records the gradient of the scalar `output` with respect to each leaf in
  /// `wrt` as new nodes and returns them. The returned nodes are ordinary,
  /// differentiable tape nodes. Leaves `output` does not depend on get a zero
  /// constant.
  std::vector<Var> gradients(Var output, std::span<const Var> wrt);

  /// Numeric gradients. Computes exactly what gradients() would, then drops
  /// the recorded nodes again.
  GradientSet backward(Var output, std::span<const Var> wrt);

  /// Recomputes every node from fresh leaf values without modifying the tape
  /// and returns the values of `outputs`. Every leaf must be bound.
  std::vector<Tensor> evaluate(const Bindings& bindings, std::span<const Var> outputs) const;

  const Tensor& value(Var v) const;
  Op op(Var v) const;
  std::size_t size() const { return nodes_.size(); }
  void truncate(std::size_t size);
  void clear() { truncate(0); }

  bool strict() const { return strict_; }
  std::size_t clamp_count() const { return clamp_count_; }

 private:
  struct Node {
    Op op = Op::Constant;
    int a = -1;
    int b = -1;
    double scalar = 0.0;
    std::size_t i0 = 0;
    std::size_t i1 = 0;
    bool ta = false;
    bool tb = false;
    Tensor value;
    std::string name;
  };

  Var push(Node node);
  Tensor compute(const Node& node, const Tensor* a, const Tensor* b, std::size_t* clamps) const;
  void check_var(Var v, std::string_view what) const;
  void accumulate(std::vector<Var>& adjoint, int id, Var contribution);

  std::vector<Node> nodes_;
  bool strict_;
  std::size_t clamp_count_ = 0;
};

Var operator+(Var a, Var b);
Var operator-(Var a, Var b);
Var operator*(Var a, Var b);
Var operator/(Var a, Var b);
Var operator-(Var a);
Var operator*(double c, Var a);

// Free-function spellings of the tape entry points.
inline std::vector<Tensor> evaluate(const Tape& tape, const Bindings& bindings, std::span<const Var> outputs) {
  return tape.evaluate(bindings, outputs);
}
inline GradientSet backward(Tape& tape, Var output, std::span<const Var> wrt) { return tape.backward(output, wrt); }
inline std::vector<Var> grad_as_graph(Tape& tape, Var output, std::span<const Var> wrt) {
  return tape.gradients(output, wrt);
}

}  // namespace comind::ad
