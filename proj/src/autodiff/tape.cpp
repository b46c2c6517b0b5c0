#include "comind/autodiff/tape.hpp"

#include "comind/error.hpp"

#include <cmath>
#include <string>

namespace comind::ad {

std::string_view op_name(Op op) {
  switch (op) {
    case Op::Leaf: return "leaf";
    case Op::Constant: return "constant";
    case Op::MatMul: return "matmul";
    case Op::Add: return "add";
    case Op::Sub: return "sub";
    case Op::Mul: return "mul";
    case Op::Div: return "div";
    case Op::Neg: return "neg";
    case Op::Scale: return "scale";
    case Op::AddScalar: return "add_scalar";
    case Op::Relu: return "relu";
    case Op::Step: return "step";
    case Op::Abs: return "abs";
    case Op::Sign: return "sign";
    case Op::Square: return "square";
    case Op::Sqrt: return "sqrt";
    case Op::Sum: return "sum";
    case Op::SumRows: return "sum_rows";
    case Op::SumCols: return "sum_cols";
    case Op::MeanRows: return "mean_rows";
    case Op::BroadcastRows: return "broadcast_rows";
    case Op::BroadcastCols: return "broadcast_cols";
    case Op::BroadcastScalar: return "broadcast_scalar";
    case Op::Transpose: return "transpose";
    case Op::ConcatCols: return "concat_cols";
    case Op::SliceCols: return "slice_cols";
    case Op::PadCols: return "pad_cols";
    case Op::Detach: return "detach";
  }
  return "?";
}

const Tensor& Var::value() const {
  if (!valid()) throw Error("access to an unset Var");
  return tape->value(*this);
}

const Tensor& LeafTensors::operator[](Var leaf) const {
  auto it = entries_.find(leaf.id);
  if (it == entries_.end()) throw Error("no tensor for leaf " + std::to_string(leaf.id));
  return it->second;
}

const Tensor* LeafTensors::find(int id) const {
  auto it = entries_.find(id);
  return it == entries_.end() ? nullptr : &it->second;
}

namespace {

bool is_differentiable(Op op) {
  switch (op) {
    case Op::Leaf:
    case Op::Constant:
    case Op::Step:
    case Op::Sign:
    case Op::Detach:
      return false;
    default:
      return true;
  }
}

void require_same_shape(const Tensor& a, const Tensor& b, Op op) {
  if (!a.same_shape(b)) {
    throw ShapeError(std::string(op_name(op)) + ": shape mismatch " + a.shape_string() + " vs " + b.shape_string());
  }
}

template <typename F>
Tensor map_unary(const Tensor& a, F f) {
  Tensor out({a.rows(), a.cols()});
  auto src = a.data();
  auto dst = out.data();
  for (std::size_t i = 0; i < src.size(); ++i) dst[i] = f(src[i]);
  return out;
}

template <typename F>
Tensor map_binary(const Tensor& a, const Tensor& b, F f) {
  Tensor out({a.rows(), a.cols()});
  auto x = a.data();
  auto y = b.data();
  auto dst = out.data();
  for (std::size_t i = 0; i < x.size(); ++i) dst[i] = f(x[i], y[i]);
  return out;
}

}  // namespace

Tensor Tape::compute(const Node& node, const Tensor* a, const Tensor* b, std::size_t* clamps) const {
  const Op op = node.op;
  switch (op) {
    case Op::Leaf:
    case Op::Constant:
      return node.value;
    case Op::MatMul: {
      const auto A = a->mat();
      const auto B = b->mat();
      const auto m = node.ta ? A.cols() : A.rows();
      const auto inner_a = node.ta ? A.rows() : A.cols();
      const auto inner_b = node.tb ? B.cols() : B.rows();
      const auto n = node.tb ? B.rows() : B.cols();
      if (inner_a != inner_b) {
        throw ShapeError("matmul: inner dimensions differ, " + a->shape_string() + (node.ta ? "^T" : "") + " x " +
                         b->shape_string() + (node.tb ? "^T" : ""));
      }
      Tensor out({static_cast<std::size_t>(m), static_cast<std::size_t>(n)});
      auto Y = out.mat();
      if (!node.ta && !node.tb) {
        Y.noalias() = A * B;
      } else if (node.ta && !node.tb) {
        Y.noalias() = A.transpose() * B;
      } else if (!node.ta && node.tb) {
        Y.noalias() = A * B.transpose();
      } else {
        Y.noalias() = A.transpose() * B.transpose();
      }
      return out;
    }
    case Op::Add:
      require_same_shape(*a, *b, op);
      return map_binary(*a, *b, [](double x, double y) { return x + y; });
    case Op::Sub:
      require_same_shape(*a, *b, op);
      return map_binary(*a, *b, [](double x, double y) { return x - y; });
    case Op::Mul:
      require_same_shape(*a, *b, op);
      return map_binary(*a, *b, [](double x, double y) { return x * y; });
    case Op::Div: {
      require_same_shape(*a, *b, op);
      std::size_t hits = 0;
      Tensor out = map_binary(*a, *b, [&hits](double x, double y) {
        if (std::abs(y) < kClamp) {
          ++hits;
          y = std::signbit(y) ? -kClamp : kClamp;
        }
        return x / y;
      });
      *clamps += hits;
      return out;
    }
    case Op::Neg:
      return map_unary(*a, [](double x) { return -x; });
    case Op::Scale: {
      const double c = node.scalar;
      return map_unary(*a, [c](double x) { return c * x; });
    }
    case Op::AddScalar: {
      const double c = node.scalar;
      return map_unary(*a, [c](double x) { return x + c; });
    }
    case Op::Relu:
      return map_unary(*a, [](double x) { return x > 0.0 ? x : 0.0; });
    case Op::Step:
      return map_unary(*a, [](double x) { return x > 0.0 ? 1.0 : 0.0; });
    case Op::Abs:
      return map_unary(*a, [](double x) { return std::abs(x); });
    case Op::Sign:
      return map_unary(*a, [](double x) { return x > 0.0 ? 1.0 : (x < 0.0 ? -1.0 : 0.0); });
    case Op::Square:
      return map_unary(*a, [](double x) { return x * x; });
    case Op::Sqrt: {
      std::size_t hits = 0;
      Tensor out = map_unary(*a, [&hits](double x) {
        if (x < kClamp) {
          ++hits;
          x = kClamp;
        }
        return std::sqrt(x);
      });
      *clamps += hits;
      return out;
    }
    case Op::Sum: {
      double total = 0.0;
      for (double v : a->data()) total += v;
      return Tensor::scalar(total);
    }
    case Op::SumRows: {
      Tensor out({1, a->cols()});
      out.mat() = a->mat().colwise().sum();
      return out;
    }
    case Op::SumCols: {
      Tensor out({a->rows(), 1});
      out.mat() = a->mat().rowwise().sum();
      return out;
    }
    case Op::MeanRows: {
      if (a->rows() == 0) throw ShapeError("mean_rows of an empty matrix");
      Tensor out({1, a->cols()});
      out.mat() = a->mat().colwise().sum() / static_cast<double>(a->rows());
      return out;
    }
    case Op::BroadcastRows: {
      if (a->rows() != 1) throw ShapeError("broadcast_rows expects a row vector, got " + a->shape_string());
      Tensor out({node.i0, a->cols()});
      out.mat().rowwise() = a->mat().row(0);
      return out;
    }
    case Op::BroadcastCols: {
      if (a->cols() != 1) throw ShapeError("broadcast_cols expects a column vector, got " + a->shape_string());
      Tensor out({a->rows(), node.i0});
      out.mat().colwise() = a->mat().col(0);
      return out;
    }
    case Op::BroadcastScalar:
      if (!a->is_scalar()) throw ShapeError("broadcast_scalar expects a scalar, got " + a->shape_string());
      return Tensor({node.i0, node.i1}, a->item());
    case Op::Transpose: {
      Tensor out({a->cols(), a->rows()});
      out.mat() = a->mat().transpose();
      return out;
    }
    case Op::ConcatCols: {
      if (a->rows() != b->rows()) {
        throw ShapeError("concat_cols: row counts differ, " + a->shape_string() + " vs " + b->shape_string());
      }
      Tensor out({a->rows(), a->cols() + b->cols()});
      auto Y = out.mat();
      Y.leftCols(static_cast<Eigen::Index>(a->cols())) = a->mat();
      Y.rightCols(static_cast<Eigen::Index>(b->cols())) = b->mat();
      return out;
    }
    case Op::SliceCols: {
      if (node.i0 + node.i1 > a->cols()) throw ShapeError("slice_cols out of range for " + a->shape_string());
      Tensor out({a->rows(), node.i1});
      out.mat() = a->mat().middleCols(static_cast<Eigen::Index>(node.i0), static_cast<Eigen::Index>(node.i1));
      return out;
    }
    case Op::PadCols: {
      if (node.i0 + a->cols() > node.i1) throw ShapeError("pad_cols out of range for " + a->shape_string());
      Tensor out({a->rows(), node.i1});
      out.mat().middleCols(static_cast<Eigen::Index>(node.i0), static_cast<Eigen::Index>(a->cols())) = a->mat();
      return out;
    }
    case Op::Detach:
      return *a;
  }
  throw Error("unknown op");
}

void Tape::check_var(Var v, std::string_view what) const {
  if (v.tape != this || v.id < 0 || static_cast<std::size_t>(v.id) >= nodes_.size()) {
    throw Error(std::string(what) + ": variable does not belong to this tape");
  }
}

Var Tape::push(Node node) {
  const Tensor* a = node.a >= 0 ? &nodes_[node.a].value : nullptr;
  const Tensor* b = node.b >= 0 ? &nodes_[node.b].value : nullptr;
  if (node.op != Op::Leaf && node.op != Op::Constant) {
    std::size_t clamps = 0;
    node.value = compute(node, a, b, &clamps);
    if (clamps != 0) {
      if (strict_) {
        throw NumericError(std::string(op_name(node.op)) + ": operand clamped at " + std::to_string(kClamp) +
                           " (strict mode)");
      }
      clamp_count_ += clamps;
    }
  }
  if (!node.value.all_finite()) {
    throw NumericError(std::string("non-finite value produced by ") + std::string(op_name(node.op)));
  }
  nodes_.push_back(std::move(node));
  return Var{this, static_cast<int>(nodes_.size() - 1)};
}

Var Tape::leaf(Tensor value, std::string name) {
  Node n;
  n.op = Op::Leaf;
  n.value = std::move(value);
  n.name = std::move(name);
  return push(std::move(n));
}

Var Tape::constant(Tensor value) {
  Node n;
  n.op = Op::Constant;
  n.value = std::move(value);
  return push(std::move(n));
}

namespace {

struct NodeSpec {
  Op op;
  int a = -1;
  int b = -1;
  double scalar = 0.0;
  std::size_t i0 = 0;
  std::size_t i1 = 0;
  bool ta = false;
  bool tb = false;
};

}  // namespace

#define COMIND_UNARY(fn, opcode)        \
  Var Tape::fn(Var a) {                 \
    check_var(a, #fn);                  \
    Node n;                             \
    n.op = Op::opcode;                  \
    n.a = a.id;                         \
    return push(std::move(n));          \
  }

#define COMIND_BINARY(fn, opcode)       \
  Var Tape::fn(Var a, Var b) {          \
    check_var(a, #fn);                  \
    check_var(b, #fn);                  \
    Node n;                             \
    n.op = Op::opcode;                  \
    n.a = a.id;                         \
    n.b = b.id;                         \
    return push(std::move(n));          \
  }

COMIND_BINARY(add, Add)
COMIND_BINARY(sub, Sub)
COMIND_BINARY(mul, Mul)
COMIND_BINARY(div, Div)
COMIND_BINARY(concat_cols, ConcatCols)
COMIND_UNARY(neg, Neg)
COMIND_UNARY(relu, Relu)
COMIND_UNARY(step, Step)
COMIND_UNARY(abs, Abs)
COMIND_UNARY(sign, Sign)
COMIND_UNARY(square, Square)
COMIND_UNARY(sqrt, Sqrt)
COMIND_UNARY(sum, Sum)
COMIND_UNARY(sum_rows, SumRows)
COMIND_UNARY(sum_cols, SumCols)
COMIND_UNARY(mean_rows, MeanRows)
COMIND_UNARY(transpose, Transpose)
COMIND_UNARY(detach, Detach)

#undef COMIND_UNARY
#undef COMIND_BINARY

Var Tape::matmul(Var a, Var b, bool transpose_a, bool transpose_b) {
  check_var(a, "matmul");
  check_var(b, "matmul");
  Node n;
  n.op = Op::MatMul;
  n.a = a.id;
  n.b = b.id;
  n.ta = transpose_a;
  n.tb = transpose_b;
  return push(std::move(n));
}

Var Tape::scale(Var a, double factor) {
  check_var(a, "scale");
  Node n;
  n.op = Op::Scale;
  n.a = a.id;
  n.scalar = factor;
  return push(std::move(n));
}

Var Tape::add_scalar(Var a, double offset) {
  check_var(a, "add_scalar");
  Node n;
  n.op = Op::AddScalar;
  n.a = a.id;
  n.scalar = offset;
  return push(std::move(n));
}

Var Tape::broadcast_rows(Var a, std::size_t rows) {
  check_var(a, "broadcast_rows");
  Node n;
  n.op = Op::BroadcastRows;
  n.a = a.id;
  n.i0 = rows;
  return push(std::move(n));
}

Var Tape::broadcast_cols(Var a, std::size_t cols) {
  check_var(a, "broadcast_cols");
  Node n;
  n.op = Op::BroadcastCols;
  n.a = a.id;
  n.i0 = cols;
  return push(std::move(n));
}

Var Tape::broadcast_scalar(Var a, std::size_t rows, std::size_t cols) {
  check_var(a, "broadcast_scalar");
  Node n;
  n.op = Op::BroadcastScalar;
  n.a = a.id;
  n.i0 = rows;
  n.i1 = cols;
  return push(std::move(n));
}

Var Tape::slice_cols(Var a, std::size_t begin, std::size_t width) {
  check_var(a, "slice_cols");
  Node n;
  n.op = Op::SliceCols;
  n.a = a.id;
  n.i0 = begin;
  n.i1 = width;
  return push(std::move(n));
}

Var Tape::pad_cols(Var a, std::size_t begin, std::size_t total) {
  check_var(a, "pad_cols");
  Node n;
  n.op = Op::PadCols;
  n.a = a.id;
  n.i0 = begin;
  n.i1 = total;
  return push(std::move(n));
}

const Tensor& Tape::value(Var v) const {
  check_var(v, "value");
  return nodes_[v.id].value;
}

Op Tape::op(Var v) const {
  check_var(v, "op");
  return nodes_[v.id].op;
}

void Tape::truncate(std::size_t size) {
  if (size < nodes_.size()) nodes_.resize(size);
}

void Tape::accumulate(std::vector<Var>& adjoint, int id, Var contribution) {
  Var& slot = adjoint[id];
  slot = slot.valid() ? add(slot, contribution) : contribution;
}

std::vector<Var> Tape::gradients(Var output, std::span<const Var> wrt) {
  check_var(output, "gradients");
  if (!nodes_[output.id].value.is_scalar()) {
    throw ShapeError("gradient of non-scalar output " + nodes_[output.id].value.shape_string());
  }
  const int last = output.id;
  std::vector<char> needed(static_cast<std::size_t>(last) + 1, 0);
  for (const Var& w : wrt) {
    check_var(w, "gradients");
    if (nodes_[w.id].op != Op::Leaf) throw Error("gradients: requested variable is not a leaf");
    if (w.id <= last) needed[w.id] = 1;
  }
  for (int i = 0; i <= last; ++i) {
    const Node& n = nodes_[i];
    if (!is_differentiable(n.op)) continue;
    needed[i] = (n.a >= 0 && needed[n.a]) || (n.b >= 0 && needed[n.b]);
  }

  std::vector<Var> adjoint(static_cast<std::size_t>(last) + 1);
  if (needed[last]) adjoint[last] = constant(Tensor::scalar(1.0));

  for (int i = last; i >= 0; --i) {
    if (!needed[i] || !adjoint[i].valid()) continue;
    // Copy what we need: recording new nodes may reallocate nodes_.
    const NodeSpec s{nodes_[i].op, nodes_[i].a, nodes_[i].b, nodes_[i].scalar,
                     nodes_[i].i0, nodes_[i].i1, nodes_[i].ta, nodes_[i].tb};
    if (s.op == Op::Leaf) continue;
    const Var g = adjoint[i];
    const Var y{this, i};
    const Var A{this, s.a};
    const Var B{this, s.b};
    const bool need_a = s.a >= 0 && needed[s.a];
    const bool need_b = s.b >= 0 && needed[s.b];
    const std::size_t a_rows = s.a >= 0 ? nodes_[s.a].value.rows() : 0;
    const std::size_t a_cols = s.a >= 0 ? nodes_[s.a].value.cols() : 0;

    switch (s.op) {
      case Op::MatMul:
        if (need_a) {
          accumulate(adjoint, s.a, s.ta ? matmul(B, g, s.tb, true) : matmul(g, B, false, !s.tb));
        }
        if (need_b) {
          accumulate(adjoint, s.b, s.tb ? matmul(g, A, true, s.ta) : matmul(A, g, !s.ta, false));
        }
        break;
      case Op::Add:
        if (need_a) accumulate(adjoint, s.a, g);
        if (need_b) accumulate(adjoint, s.b, g);
        break;
      case Op::Sub:
        if (need_a) accumulate(adjoint, s.a, g);
        if (need_b) accumulate(adjoint, s.b, neg(g));
        break;
      case Op::Mul:
        if (need_a) accumulate(adjoint, s.a, mul(g, B));
        if (need_b) accumulate(adjoint, s.b, mul(g, A));
        break;
      case Op::Div:
        if (need_a) accumulate(adjoint, s.a, div(g, B));
        if (need_b) accumulate(adjoint, s.b, neg(div(mul(g, y), B)));
        break;
      case Op::Neg:
        accumulate(adjoint, s.a, neg(g));
        break;
      case Op::Scale:
        accumulate(adjoint, s.a, scale(g, s.scalar));
        break;
      case Op::AddScalar:
        accumulate(adjoint, s.a, g);
        break;
      case Op::Relu:
        accumulate(adjoint, s.a, mul(g, step(A)));
        break;
      case Op::Abs:
        accumulate(adjoint, s.a, mul(g, sign(A)));
        break;
      case Op::Square:
        accumulate(adjoint, s.a, mul(g, scale(A, 2.0)));
        break;
      case Op::Sqrt:
        accumulate(adjoint, s.a, div(scale(g, 0.5), y));
        break;
      case Op::Sum:
        accumulate(adjoint, s.a, broadcast_scalar(g, a_rows, a_cols));
        break;
      case Op::SumRows:
        accumulate(adjoint, s.a, broadcast_rows(g, a_rows));
        break;
      case Op::SumCols:
        accumulate(adjoint, s.a, broadcast_cols(g, a_cols));
        break;
      case Op::MeanRows:
        accumulate(adjoint, s.a, scale(broadcast_rows(g, a_rows), 1.0 / static_cast<double>(a_rows)));
        break;
      case Op::BroadcastRows:
        accumulate(adjoint, s.a, sum_rows(g));
        break;
      case Op::BroadcastCols:
        accumulate(adjoint, s.a, sum_cols(g));
        break;
      case Op::BroadcastScalar:
        accumulate(adjoint, s.a, sum(g));
        break;
      case Op::Transpose:
        accumulate(adjoint, s.a, transpose(g));
        break;
      case Op::ConcatCols:
        if (need_a) accumulate(adjoint, s.a, slice_cols(g, 0, a_cols));
        if (need_b) accumulate(adjoint, s.b, slice_cols(g, a_cols, nodes_[s.b].value.cols()));
        break;
      case Op::SliceCols:
        accumulate(adjoint, s.a, pad_cols(g, s.i0, a_cols));
        break;
      case Op::PadCols:
        accumulate(adjoint, s.a, slice_cols(g, s.i0, a_cols));
        break;
      case Op::Leaf:
      case Op::Constant:
      case Op::Step:
      case Op::Sign:
      case Op::Detach:
        break;
    }
  }

  std::vector<Var> result;
  result.reserve(wrt.size());
  for (const Var& w : wrt) {
    if (w.id <= last && adjoint[w.id].valid()) {
      result.push_back(adjoint[w.id]);
    } else {
      const Tensor& v = nodes_[w.id].value;
      result.push_back(constant(Tensor({v.rows(), v.cols()})));
    }
  }
  return result;
}

GradientSet Tape::backward(Var output, std::span<const Var> wrt) {
  const std::size_t mark = nodes_.size();
  std::vector<Var> grads = gradients(output, wrt);
  GradientSet out;
  for (std::size_t i = 0; i < wrt.size(); ++i) out.set(wrt[i], nodes_[grads[i].id].value);
  truncate(mark);
  return out;
}

std::vector<Tensor> Tape::evaluate(const Bindings& bindings, std::span<const Var> outputs) const {
  for (const Var& v : outputs) check_var(v, "evaluate");
  std::vector<Tensor> values(nodes_.size());
  std::size_t clamps = 0;
  for (std::size_t i = 0; i < nodes_.size(); ++i) {
    const Node& n = nodes_[i];
    if (n.op == Op::Leaf) {
      const Tensor* bound = bindings.find(static_cast<int>(i));
      if (bound == nullptr) {
        throw Error("evaluate: unbound leaf " + (n.name.empty() ? std::to_string(i) : n.name));
      }
      if (!bound->same_shape(n.value)) {
        throw ShapeError("evaluate: leaf " + (n.name.empty() ? std::to_string(i) : n.name) + " expects " +
                         n.value.shape_string() + ", bound " + bound->shape_string());
      }
      values[i] = *bound;
    } else if (n.op == Op::Constant) {
      values[i] = n.value;
    } else {
      values[i] = compute(n, n.a >= 0 ? &values[n.a] : nullptr, n.b >= 0 ? &values[n.b] : nullptr, &clamps);
    }
    if (!values[i].all_finite()) {
      throw NumericError(std::string("evaluate: non-finite value produced by ") + std::string(op_name(n.op)));
    }
    if (clamps != 0 && strict_) {
      throw NumericError(std::string("evaluate: ") + std::string(op_name(n.op)) + " operand clamped (strict mode)");
    }
  }
  std::vector<Tensor> out;
  out.reserve(outputs.size());
  for (const Var& v : outputs) out.push_back(values[v.id]);
  return out;
}

namespace {

Tape& same_tape(Var a, Var b) {
  if (a.tape == nullptr || a.tape != b.tape) throw Error("operands live on different tapes");
  return *a.tape;
}

}  // namespace

Var operator+(Var a, Var b) { return same_tape(a, b).add(a, b); }
Var operator-(Var a, Var b) { return same_tape(a, b).sub(a, b); }
Var operator*(Var a, Var b) { return same_tape(a, b).mul(a, b); }
Var operator/(Var a, Var b) { return same_tape(a, b).div(a, b); }
Var operator-(Var a) { return a.tape->neg(a); }
Var operator*(double c, Var a) { return a.tape->scale(a, c); }

}  // namespace comind::ad
