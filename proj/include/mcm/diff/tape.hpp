#pragma once

#include "mcm/diff/param_store.hpp"

#include <cstdint>
#include <span>
#include <vector>

namespace mcm::diff {

class Tape;

/// Handle to a node on a Tape. Cheap to copy; valid as long as the tape.
struct Var {
  Tape* tape = nullptr;
  int id = -1;

  const Matrix& value() const;
  double scalar() const;
  Eigen::Index rows() const { return value().rows(); }
  Eigen::Index cols() const { return value().cols(); }
};

enum class Op : std::uint8_t {
  Param,
  Const,
  Add,
  Sub,
  Mul,
  Div,
  Neg,
  Scale,
  Shift,
  MatMul,
  Dot,
  Exp,
  Log,
  Square,
  Softplus,
  Tanh,
  Relu,
  Sum,
  RowSum,
  ColSum,
  GatherRows,
  ScatterAddRows,
  SliceCols,
};

const char* op_name(Op op) noexcept;

/// Reverse-mode tape over dense matrices. Nodes are appended in evaluation
/// order, so node inputs always precede the node. Elementwise binary ops
/// broadcast a 1x1, 1xC or Rx1 operand against an RxC operand.
class Tape {
public:
  struct Node {
    Op op = Op::Const;
    int a = -1;
    int b = -1;
    double c = 0.0;
    std::size_t param = 0;
    std::vector<int> index;
    Eigen::Index extent = 0;
    Eigen::Index count = 0;
    Matrix value;
    Matrix grad;
  };

  explicit Tape(ParamStore* store = nullptr) : store_(store) {}

  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  ParamStore* store() const noexcept { return store_; }

  Var param(std::size_t index);
  Var param(std::string_view name);
  Var constant(Matrix value);
  Var scalar(double value);

  Var push(Node node);

  const Node& node(int id) const { return nodes_.at(static_cast<std::size_t>(id)); }
  std::size_t size() const noexcept { return nodes_.size(); }

  /// Propagates d(output)/d(node) for every node and accumulates the
  /// parameter gradients into the bound ParamStore. `output` must be 1x1.
  /// Returns false when any accumulated parameter gradient is non-finite.
  bool backward(Var output);

  /// Gradient of the last backward pass at a node (zero-sized if untouched).
  const Matrix& grad(Var v) const { return node(v.id).grad; }

  /// Recomputes every node value from the current parameter values and the
  /// recorded constants. Returns the value of `output`.
  const Matrix& replay(Var output);

  void clear() { nodes_.clear(); }

private:
  void evaluate(int id);
  void propagate(int id);

  ParamStore* store_;
  std::vector<Node> nodes_;
};

Var operator+(Var a, Var b);
Var operator-(Var a, Var b);
Var operator*(Var a, Var b);
Var operator/(Var a, Var b);
Var operator-(Var a);
Var operator+(Var a, double c);
Var operator+(double c, Var a);
Var operator-(Var a, double c);
Var operator-(double c, Var a);
Var operator*(Var a, double c);
Var operator*(double c, Var a);
Var operator/(Var a, double c);

Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);
Var div(Var a, Var b);
Var neg(Var a);
Var scale(Var a, double c);
Var shift(Var a, double c);
/// (R x K) * (K x C); a matrix-vector product is the C = 1 case.
Var matmul(Var a, Var b);
/// Inner product of two equally shaped arrays, 1x1 result.
Var dot(Var a, Var b);
Var exp(Var a);
Var log(Var a);
Var square(Var a);
/// ln(1 + e^x), evaluated as x + log1p(e^-x) for positive x.
Var softplus(Var a);
Var tanh(Var a);
Var relu(Var a);
Var sum(Var a);
Var row_sum(Var a);
Var col_sum(Var a);
Var gather_rows(Var a, std::span<const int> rows);
Var scatter_add_rows(Var a, std::span<const int> rows, Eigen::Index out_rows);
Var slice_cols(Var a, Eigen::Index start, Eigen::Index count);

} // namespace mcm::diff
