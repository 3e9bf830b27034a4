#include "hexreg/autodiff.hpp"

#include <cmath>

namespace hexreg::ad {

std::string_view to_string(Op op) noexcept {
  switch (op) {
    case Op::Input: return "input";
    case Op::Constant: return "constant";
    case Op::MatMul: return "matmul";
    case Op::Add: return "add";
    case Op::Sub: return "sub";
    case Op::MulElem: return "mul_elem";
    case Op::DivElem: return "div_elem";
    case Op::ScalarMul: return "scalar_mul";
    case Op::Exp: return "exp";
    case Op::Log: return "log";
    case Op::Sum: return "sum";
    case Op::Mean: return "mean";
    case Op::RowL2Normalize: return "row_l2_normalize";
    case Op::Tanh: return "tanh";
    case Op::Relu: return "relu";
    case Op::Transpose: return "transpose";
    case Op::MaskedSum: return "masked_sum";
    case Op::ClampMin: return "clamp_min";
  }
  return "unknown";
}

namespace {

bool is_leaf(Op op) { return op == Op::Input || op == Op::Constant; }

// Right operand of a binary op, expanded to (rows x cols).
Matrix broadcast(const Matrix& b, Index rows, Index cols) {
  if (b.rows() == rows && b.cols() == cols) return b;
  if (b.rows() == 1 && b.cols() == 1) return Matrix::Constant(rows, cols, b(0, 0));
  if (b.rows() == 1) return b.replicate(rows, 1);
  return b.replicate(1, cols);
}

// Sums a full-shape gradient back down to the shape of a broadcast operand.
Matrix reduce_to(const Matrix& g, Index rows, Index cols) {
  if (g.rows() == rows && g.cols() == cols) return g;
  if (rows == 1 && cols == 1) return Matrix::Constant(1, 1, g.sum());
  if (rows == 1) return g.colwise().sum();
  return g.rowwise().sum();
}

}  // namespace

Var Tape::push(Node n) {
  require(nodes_.size() < 0xFFFFFFFFu, ErrorCode::BadGraph, "tape too large");
  nodes_.push_back(std::move(n));
  values_.emplace_back();
  grads_.emplace_back();
  consumed_.push_back(false);
  forward_done_ = false;
  backward_done_ = false;
  return Var{static_cast<std::uint32_t>(nodes_.size() - 1)};
}

const Tape::Node& Tape::node(Var v) const {
  require(v.id < nodes_.size(), ErrorCode::BadGraph, "unknown node " + std::to_string(v.id));
  return nodes_[v.id];
}

Var Tape::input(Matrix value, std::string name) {
  Node n{Op::Input, 0, 0, 0.0, value.rows(), value.cols(), std::move(name)};
  Var v = push(std::move(n));
  values_[v.id] = std::move(value);
  return v;
}

Var Tape::constant(Matrix value) {
  Node n{Op::Constant, 0, 0, 0.0, value.rows(), value.cols(), {}};
  Var v = push(std::move(n));
  values_[v.id] = std::move(value);
  return v;
}

Var Tape::binary(Op op, Var a, Var b) {
  const Node& na = node(a);
  const Node& nb = node(b);
  Index rows = 0, cols = 0;
  if (op == Op::MatMul) {
    require(na.cols == nb.rows, ErrorCode::ShapeMismatch,
            "matmul " + std::to_string(na.rows) + "x" + std::to_string(na.cols) + " by " +
                std::to_string(nb.rows) + "x" + std::to_string(nb.cols));
    rows = na.rows;
    cols = nb.cols;
  } else {
    const bool ok = (nb.rows == na.rows && nb.cols == na.cols) || (nb.rows == 1 && nb.cols == 1) ||
                    (nb.rows == 1 && nb.cols == na.cols) || (nb.cols == 1 && nb.rows == na.rows);
    require(ok, ErrorCode::ShapeMismatch,
            std::string(to_string(op)) + " cannot broadcast " + std::to_string(nb.rows) + "x" +
                std::to_string(nb.cols) + " onto " + std::to_string(na.rows) + "x" + std::to_string(na.cols));
    rows = na.rows;
    cols = na.cols;
  }
  consumed_[a.id] = true;
  consumed_[b.id] = true;
  return push(Node{op, a.id, b.id, 0.0, rows, cols, {}});
}

Var Tape::unary(Op op, Var a, Index rows, Index cols, double scalar) {
  node(a);
  consumed_[a.id] = true;
  return push(Node{op, a.id, a.id, scalar, rows, cols, {}});
}

Var Tape::matmul(Var a, Var b) { return binary(Op::MatMul, a, b); }
Var Tape::add(Var a, Var b) { return binary(Op::Add, a, b); }
Var Tape::sub(Var a, Var b) { return binary(Op::Sub, a, b); }
Var Tape::mul(Var a, Var b) { return binary(Op::MulElem, a, b); }
Var Tape::div(Var a, Var b) { return binary(Op::DivElem, a, b); }

Var Tape::scale(Var a, double factor) {
  const Node& n = node(a);
  return unary(Op::ScalarMul, a, n.rows, n.cols, factor);
}
Var Tape::exp(Var a) { return unary(Op::Exp, a, node(a).rows, node(a).cols); }
Var Tape::log(Var a) { return unary(Op::Log, a, node(a).rows, node(a).cols); }
Var Tape::sum(Var a) { return unary(Op::Sum, a, 1, 1); }
Var Tape::mean(Var a) { return unary(Op::Mean, a, 1, 1); }
Var Tape::row_l2_normalize(Var a) { return unary(Op::RowL2Normalize, a, node(a).rows, node(a).cols); }
Var Tape::tanh(Var a) { return unary(Op::Tanh, a, node(a).rows, node(a).cols); }
Var Tape::relu(Var a) { return unary(Op::Relu, a, node(a).rows, node(a).cols); }
Var Tape::transpose(Var a) { return unary(Op::Transpose, a, node(a).cols, node(a).rows); }
Var Tape::clamp_min(Var a, double bound) { return unary(Op::ClampMin, a, node(a).rows, node(a).cols, bound); }

Var Tape::masked_sum(Var a, Var mask) {
  const Node& na = node(a);
  const Node& nm = node(mask);
  require(nm.op == Op::Constant, ErrorCode::BadGraph, "masked_sum mask must be a constant node");
  require(nm.rows == na.rows && nm.cols == na.cols, ErrorCode::ShapeMismatch, "masked_sum mask shape");
  consumed_[a.id] = true;
  consumed_[mask.id] = true;
  return push(Node{Op::MaskedSum, a.id, mask.id, 0.0, na.rows, 1, {}});
}

void Tape::set_value(Var v, Matrix value) {
  const Node& n = node(v);
  require(is_leaf(n.op), ErrorCode::BadGraph, "set_value on a computed node");
  require(value.rows() == n.rows && value.cols() == n.cols, ErrorCode::ShapeMismatch, "set_value shape");
  values_[v.id] = std::move(value);
  forward_done_ = false;
  backward_done_ = false;
}

const Matrix& Tape::value(Var v) const {
  node(v);
  return values_[v.id];
}

const Matrix& Tape::grad(Var v) const {
  node(v);
  require(backward_done_, ErrorCode::BadGraph, "grad requested before backward");
  return grads_[v.id];
}

std::vector<Var> Tape::inputs() const {
  std::vector<Var> out;
  for (std::size_t i = 0; i < nodes_.size(); ++i)
    if (nodes_[i].op == Op::Input) out.push_back(Var{static_cast<std::uint32_t>(i)});
  return out;
}

Var Tape::terminal() const {
  std::size_t found = nodes_.size();
  int count = 0;
  for (std::size_t i = 0; i < nodes_.size(); ++i) {
    if (is_leaf(nodes_[i].op) || consumed_[i]) continue;
    found = i;
    ++count;
  }
  require(count == 1, ErrorCode::BadGraph, "graph has " + std::to_string(count) + " terminal nodes, expected 1");
  require(nodes_[found].rows == 1 && nodes_[found].cols == 1, ErrorCode::BadGraph, "terminal node is not scalar");
  return Var{static_cast<std::uint32_t>(found)};
}

void Tape::check_finite(std::size_t id, const Matrix& m, const char* phase) const {
  if (!m.allFinite())
    fail(ErrorCode::NonFinite, std::string(phase) + " of node " + std::to_string(id) + " (" +
                                   std::string(to_string(nodes_[id].op)) + ") is not finite");
}

void Tape::evaluate(std::size_t id) {
  const Node& n = nodes_[id];
  const Matrix& a = values_[n.a];
  Matrix& out = values_[id];
  switch (n.op) {
    case Op::Input:
    case Op::Constant:
      break;
    case Op::MatMul: out.noalias() = a * values_[n.b]; break;
    case Op::Add: out = a + broadcast(values_[n.b], n.rows, n.cols); break;
    case Op::Sub: out = a - broadcast(values_[n.b], n.rows, n.cols); break;
    case Op::MulElem: out = a.cwiseProduct(broadcast(values_[n.b], n.rows, n.cols)); break;
    case Op::DivElem: out = a.cwiseQuotient(broadcast(values_[n.b], n.rows, n.cols)); break;
    case Op::ScalarMul: out = n.scalar * a; break;
    case Op::Exp: out = a.array().exp().matrix(); break;
    case Op::Log: out = a.array().log().matrix(); break;
    case Op::Sum: out = Matrix::Constant(1, 1, a.sum()); break;
    case Op::Mean: out = Matrix::Constant(1, 1, a.mean()); break;
    case Op::RowL2Normalize: out = linalg::l2_normalize_rows(a); break;
    case Op::Tanh: out = a.array().tanh().matrix(); break;
    case Op::Relu: out = a.cwiseMax(0.0); break;
    case Op::Transpose: out = a.transpose(); break;
    case Op::MaskedSum: out = a.cwiseProduct(values_[n.b]).rowwise().sum(); break;
    case Op::ClampMin: out = a.cwiseMax(n.scalar); break;
  }
  check_finite(id, out, "value");
}

double Tape::forward() {
  const Var t = terminal();
  for (std::size_t i = 0; i < nodes_.size(); ++i) {
    if (is_leaf(nodes_[i].op)) check_finite(i, values_[i], "value");
    else evaluate(i);
  }
  forward_done_ = true;
  backward_done_ = false;
  return values_[t.id](0, 0);
}

void Tape::propagate(std::size_t id) {
  const Node& n = nodes_[id];
  const Matrix& g = grads_[id];
  const Matrix& out = values_[id];
  const Matrix& a = values_[n.a];
  Matrix& ga = grads_[n.a];
  switch (n.op) {
    case Op::Input:
    case Op::Constant:
      break;
    case Op::MatMul:
      ga.noalias() += g * values_[n.b].transpose();
      grads_[n.b].noalias() += a.transpose() * g;
      break;
    case Op::Add:
      ga += g;
      grads_[n.b] += reduce_to(g, nodes_[n.b].rows, nodes_[n.b].cols);
      break;
    case Op::Sub:
      ga += g;
      grads_[n.b] -= reduce_to(g, nodes_[n.b].rows, nodes_[n.b].cols);
      break;
    case Op::MulElem: {
      const Matrix bb = broadcast(values_[n.b], n.rows, n.cols);
      ga += g.cwiseProduct(bb);
      grads_[n.b] += reduce_to(g.cwiseProduct(a), nodes_[n.b].rows, nodes_[n.b].cols);
      break;
    }
    case Op::DivElem: {
      const Matrix bb = broadcast(values_[n.b], n.rows, n.cols);
      ga += g.cwiseQuotient(bb);
      const Matrix gb = -(g.cwiseProduct(out)).cwiseQuotient(bb);
      grads_[n.b] += reduce_to(gb, nodes_[n.b].rows, nodes_[n.b].cols);
      break;
    }
    case Op::ScalarMul: ga += n.scalar * g; break;
    case Op::Exp: ga += g.cwiseProduct(out); break;
    case Op::Log: ga += g.cwiseQuotient(a); break;
    case Op::Sum: ga.array() += g(0, 0); break;
    case Op::Mean: ga.array() += g(0, 0) / static_cast<double>(a.size()); break;
    case Op::RowL2Normalize:
      for (Index r = 0; r < a.rows(); ++r) {
        const double norm = a.row(r).norm();
        const double proj = out.row(r).dot(g.row(r));
        ga.row(r) += (g.row(r) - proj * out.row(r)) / norm;
      }
      break;
    case Op::Tanh: ga.array() += g.array() * (1.0 - out.array().square()); break;
    case Op::Relu: ga.array() += (a.array() > 0.0).select(g.array(), 0.0); break;
    case Op::Transpose: ga += g.transpose(); break;
    case Op::MaskedSum: {
      const Matrix& mask = values_[n.b];
      for (Index r = 0; r < a.rows(); ++r) ga.row(r) += g(r, 0) * mask.row(r);
      break;
    }
    case Op::ClampMin: ga.array() += (a.array() > n.scalar).select(g.array(), 0.0); break;
  }
}

void Tape::backward() {
  require(forward_done_, ErrorCode::BadGraph, "backward before forward");
  const Var t = terminal();
  for (std::size_t i = 0; i < nodes_.size(); ++i) grads_[i] = Matrix::Zero(nodes_[i].rows, nodes_[i].cols);
  grads_[t.id](0, 0) = 1.0;
  for (std::size_t i = t.id + 1; i-- > 0;) {
    if (is_leaf(nodes_[i].op)) continue;
    propagate(i);
    check_finite(i, grads_[nodes_[i].a], "gradient");
  }
  // Constants (including masks) never carry a gradient.
  for (std::size_t i = 0; i < nodes_.size(); ++i)
    if (nodes_[i].op == Op::Constant) grads_[i].setZero();
  backward_done_ = true;
}

}  // namespace hexreg::ad
