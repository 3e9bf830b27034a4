#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "hexreg/linalg.hpp"

namespace hexreg::ad {

enum class Op : std::uint8_t {
  Input,
  Constant,
  MatMul,
  Add,
  Sub,
  MulElem,
  DivElem,
  ScalarMul,
  Exp,
  Log,
  Sum,
  Mean,
  RowL2Normalize,
  Tanh,
  Relu,
  Transpose,
  MaskedSum,
  ClampMin,
};

std::string_view to_string(Op op) noexcept;

/// Handle to a node on a Tape. Only meaningful for the tape that issued it.
struct Var {
  std::uint32_t id = 0;
};

/// Reverse-mode tape over dense row-major matrices.
///
/// Nodes are appended in construction order, which is a topological order by
/// construction. Shapes are checked when a node is added. Binary elementwise ops
/// broadcast their right operand when it is 1x1, 1xC or Rx1.
///
/// `masked_sum(x, mask)` returns the R x 1 column of row sums of x .* mask; the
/// mask must be a constant node and never receives a gradient.
class Tape {
 public:
  Var input(Matrix value, std::string name = {});
  Var constant(Matrix value);

  Var matmul(Var a, Var b);
  Var add(Var a, Var b);
  Var sub(Var a, Var b);
  Var mul(Var a, Var b);
  Var div(Var a, Var b);
  Var scale(Var a, double factor);
  Var exp(Var a);
  Var log(Var a);
  Var sum(Var a);
  Var mean(Var a);
  Var row_l2_normalize(Var a);
  Var tanh(Var a);
  Var relu(Var a);
  Var transpose(Var a);
  Var masked_sum(Var a, Var mask);
  Var clamp_min(Var a, double bound);

  /// Evaluates every node in order and returns the terminal scalar.
  double forward();
  /// Accumulates d(terminal)/d(node) for every node. Requires forward().
  void backward();

  /// Replaces the value held by an input or constant node; shape must match.
  void set_value(Var v, Matrix value);

  const Matrix& value(Var v) const;
  const Matrix& grad(Var v) const;
  Op op(Var v) const { return nodes_.at(v.id).op; }
  Index rows(Var v) const { return nodes_.at(v.id).rows; }
  Index cols(Var v) const { return nodes_.at(v.id).cols; }
  std::size_t size() const { return nodes_.size(); }
  std::vector<Var> inputs() const;
  Var terminal() const;

 private:
  struct Node {
    Op op = Op::Input;
    std::uint32_t a = 0;
    std::uint32_t b = 0;
    double scalar = 0.0;
    Index rows = 0;
    Index cols = 0;
    std::string name;
  };

  Var push(Node node);
  Var binary(Op op, Var a, Var b);
  Var unary(Op op, Var a, Index rows, Index cols, double scalar = 0.0);
  const Node& node(Var v) const;
  void evaluate(std::size_t id);
  void propagate(std::size_t id);
  void check_finite(std::size_t id, const Matrix& m, const char* phase) const;

  std::vector<Node> nodes_;
  std::vector<Matrix> values_;
  std::vector<Matrix> grads_;
  std::vector<bool> consumed_;
  bool forward_done_ = false;
  bool backward_done_ = false;
};

}  // namespace hexreg::ad
