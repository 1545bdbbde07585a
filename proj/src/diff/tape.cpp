#include "mcm/diff/tape.hpp"

#include "mcm/errors.hpp"

#include <cmath>
#include <sstream>
#include <stdexcept>

namespace mcm::diff {

namespace {

Matrix expand(const Matrix& m, Eigen::Index rows, Eigen::Index cols) {
  if (m.rows() == rows && m.cols() == cols) return m;
  if (m.rows() == 1 && m.cols() == 1) return Matrix::Constant(rows, cols, m(0, 0));
  if (m.rows() == 1) return m.replicate(rows, 1);
  return m.replicate(1, cols);
}

Matrix reduce_to(const Matrix& g, Eigen::Index rows, Eigen::Index cols) {
  if (g.rows() == rows && g.cols() == cols) return g;
  if (rows == 1 && cols == 1) return Matrix::Constant(1, 1, g.sum());
  if (rows == 1) return g.colwise().sum();
  return g.rowwise().sum();
}

bool broadcastable(const Matrix& m, Eigen::Index rows, Eigen::Index cols) {
  return (m.rows() == rows || m.rows() == 1) && (m.cols() == cols || m.cols() == 1);
}

double softplus_scalar(double x) {
  return x > 0.0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x));
}

double sigmoid_scalar(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

std::string shape_str(const Matrix& m) {
  std::ostringstream os;
  os << m.rows() << "x" << m.cols();
  return os.str();
}

[[noreturn]] void shape_error(Op op, const Matrix& a, const Matrix& b) {
  throw std::invalid_argument(std::string(op_name(op)) + ": incompatible shapes " + shape_str(a) +
                              " and " + shape_str(b));
}

Tape& tape_of(Var a) {
  if (a.tape == nullptr) throw std::invalid_argument("Var is not attached to a tape");
  return *a.tape;
}

Tape& tape_of(Var a, Var b) {
  if (a.tape != b.tape) throw std::invalid_argument("Vars belong to different tapes");
  return tape_of(a);
}

Var unary(Op op, Var a, double c = 0.0) {
  Tape::Node n;
  n.op = op;
  n.a = a.id;
  n.c = c;
  return tape_of(a).push(std::move(n));
}

Var binary(Op op, Var a, Var b) {
  Tape::Node n;
  n.op = op;
  n.a = a.id;
  n.b = b.id;
  return tape_of(a, b).push(std::move(n));
}

} // namespace

const char* op_name(Op op) noexcept {
  switch (op) {
    case Op::Param: return "param";
    case Op::Const: return "const";
    case Op::Add: return "add";
    case Op::Sub: return "sub";
    case Op::Mul: return "mul";
    case Op::Div: return "div";
    case Op::Neg: return "neg";
    case Op::Scale: return "scale";
    case Op::Shift: return "shift";
    case Op::MatMul: return "matmul";
    case Op::Dot: return "dot";
    case Op::Exp: return "exp";
    case Op::Log: return "log";
    case Op::Square: return "square";
    case Op::Softplus: return "softplus";
    case Op::Tanh: return "tanh";
    case Op::Relu: return "relu";
    case Op::Sum: return "sum";
    case Op::RowSum: return "row_sum";
    case Op::ColSum: return "col_sum";
    case Op::GatherRows: return "gather_rows";
    case Op::ScatterAddRows: return "scatter_add_rows";
    case Op::SliceCols: return "slice_cols";
  }
  return "?";
}

const Matrix& Var::value() const { return tape->node(id).value; }

double Var::scalar() const {
  const Matrix& v = value();
  if (v.size() != 1) throw std::invalid_argument("Var::scalar on non-scalar " + shape_str(v));
  return v(0, 0);
}

Var Tape::param(std::size_t index) {
  if (store_ == nullptr) throw std::logic_error("tape has no parameter store");
  if (index >= store_->size()) throw std::out_of_range("parameter index out of range");
  Node n;
  n.op = Op::Param;
  n.param = index;
  return push(std::move(n));
}

Var Tape::param(std::string_view name) {
  if (store_ == nullptr) throw std::logic_error("tape has no parameter store");
  return param(store_->index_of(name));
}

Var Tape::constant(Matrix value) {
  Node n;
  n.op = Op::Const;
  n.value = std::move(value);
  return push(std::move(n));
}

Var Tape::scalar(double value) { return constant(Matrix::Constant(1, 1, value)); }

Var Tape::push(Node node) {
  const int id = static_cast<int>(nodes_.size());
  if ((node.a >= id) || (node.b >= id)) throw std::logic_error("tape inputs must precede node");
  nodes_.push_back(std::move(node));
  try {
    evaluate(id);
  } catch (...) {
    nodes_.pop_back();
    throw;
  }
  return Var{this, id};
}

void Tape::evaluate(int id) {
  Node& n = nodes_[static_cast<std::size_t>(id)];
  auto in = [&](int k) -> const Matrix& { return nodes_[static_cast<std::size_t>(k)].value; };

  switch (n.op) {
    case Op::Param: n.value = store_->entry(n.param).value; break;
    case Op::Const: break;
    case Op::Add:
    case Op::Sub:
    case Op::Mul:
    case Op::Div: {
      const Matrix& x = in(n.a);
      const Matrix& y = in(n.b);
      const Eigen::Index r = std::max(x.rows(), y.rows());
      const Eigen::Index c = std::max(x.cols(), y.cols());
      if (!broadcastable(x, r, c) || !broadcastable(y, r, c)) shape_error(n.op, x, y);
      const Matrix xe = expand(x, r, c);
      const Matrix ye = expand(y, r, c);
      if (n.op == Op::Add) n.value = xe + ye;
      else if (n.op == Op::Sub) n.value = xe - ye;
      else if (n.op == Op::Mul) n.value = xe.cwiseProduct(ye);
      else {
        for (Eigen::Index k = 0; k < ye.size(); ++k) {
          if (ye.data()[k] == 0.0) {
            throw DomainError("div: zero denominator at node " + std::to_string(id) +
                                  " (entry " + std::to_string(k) + ")",
                              id);
          }
        }
        n.value = xe.cwiseQuotient(ye);
      }
      break;
    }
    case Op::Neg: n.value = -in(n.a); break;
    case Op::Scale: n.value = n.c * in(n.a); break;
    case Op::Shift: n.value = in(n.a).array() + n.c; break;
    case Op::MatMul: {
      const Matrix& x = in(n.a);
      const Matrix& y = in(n.b);
      if (x.cols() != y.rows()) shape_error(n.op, x, y);
      n.value.noalias() = x * y;
      break;
    }
    case Op::Dot: {
      const Matrix& x = in(n.a);
      const Matrix& y = in(n.b);
      if (x.rows() != y.rows() || x.cols() != y.cols()) shape_error(n.op, x, y);
      n.value = Matrix::Constant(1, 1, x.cwiseProduct(y).sum());
      break;
    }
    case Op::Exp: n.value = in(n.a).array().exp(); break;
    case Op::Log: {
      const Matrix& x = in(n.a);
      for (Eigen::Index k = 0; k < x.size(); ++k) {
        if (!(x.data()[k] > 0.0)) {
          throw DomainError("log: nonpositive input at node " + std::to_string(id) + " (entry " +
                                std::to_string(k) + ")",
                            id);
        }
      }
      n.value = x.array().log();
      break;
    }
    case Op::Square: n.value = in(n.a).array().square(); break;
    case Op::Softplus: n.value = in(n.a).unaryExpr(&softplus_scalar); break;
    case Op::Tanh: n.value = in(n.a).array().tanh(); break;
    case Op::Relu: n.value = in(n.a).cwiseMax(0.0); break;
    case Op::Sum: n.value = Matrix::Constant(1, 1, in(n.a).sum()); break;
    case Op::RowSum: n.value = in(n.a).rowwise().sum(); break;
    case Op::ColSum: n.value = in(n.a).colwise().sum(); break;
    case Op::GatherRows: {
      const Matrix& x = in(n.a);
      n.value.resize(static_cast<Eigen::Index>(n.index.size()), x.cols());
      for (std::size_t r = 0; r < n.index.size(); ++r) {
        const int src = n.index[r];
        if (src < 0 || src >= x.rows()) throw std::out_of_range("gather_rows: row index out of range");
        n.value.row(static_cast<Eigen::Index>(r)) = x.row(src);
      }
      break;
    }
    case Op::ScatterAddRows: {
      const Matrix& x = in(n.a);
      if (static_cast<Eigen::Index>(n.index.size()) != x.rows()) {
        throw std::invalid_argument("scatter_add_rows: index count must equal input rows");
      }
      n.value = Matrix::Zero(n.extent, x.cols());
      for (std::size_t r = 0; r < n.index.size(); ++r) {
        const int dst = n.index[r];
        if (dst < 0 || dst >= n.extent) throw std::out_of_range("scatter_add_rows: row index out of range");
        n.value.row(dst) += x.row(static_cast<Eigen::Index>(r));
      }
      break;
    }
    case Op::SliceCols: {
      const Matrix& x = in(n.a);
      if (n.extent < 0 || n.count < 0 || n.extent + n.count > x.cols()) {
        throw std::out_of_range("slice_cols: column range out of bounds");
      }
      n.value = x.middleCols(n.extent, n.count);
      break;
    }
  }
}

void Tape::propagate(int id) {
  const Node& n = nodes_[static_cast<std::size_t>(id)];
  const Matrix& g = n.grad;
  auto acc = [&](int k, const Matrix& delta) {
    Node& t = nodes_[static_cast<std::size_t>(k)];
    if (t.grad.size() == 0) t.grad = delta;
    else t.grad += delta;
  };
  auto val = [&](int k) -> const Matrix& { return nodes_[static_cast<std::size_t>(k)].value; };

  switch (n.op) {
    case Op::Param:
    case Op::Const: break;
    case Op::Add: {
      acc(n.a, reduce_to(g, val(n.a).rows(), val(n.a).cols()));
      acc(n.b, reduce_to(g, val(n.b).rows(), val(n.b).cols()));
      break;
    }
    case Op::Sub: {
      acc(n.a, reduce_to(g, val(n.a).rows(), val(n.a).cols()));
      acc(n.b, reduce_to(-g, val(n.b).rows(), val(n.b).cols()));
      break;
    }
    case Op::Mul: {
      const Matrix& x = val(n.a);
      const Matrix& y = val(n.b);
      acc(n.a, reduce_to(g.cwiseProduct(expand(y, g.rows(), g.cols())), x.rows(), x.cols()));
      acc(n.b, reduce_to(g.cwiseProduct(expand(x, g.rows(), g.cols())), y.rows(), y.cols()));
      break;
    }
    case Op::Div: {
      const Matrix& x = val(n.a);
      const Matrix& y = val(n.b);
      const Matrix ye = expand(y, g.rows(), g.cols());
      acc(n.a, reduce_to(g.cwiseQuotient(ye), x.rows(), x.cols()));
      // d(x/y)/dy = -(x/y)/y
      const Matrix gy = -(g.cwiseProduct(n.value)).cwiseQuotient(ye);
      acc(n.b, reduce_to(gy, y.rows(), y.cols()));
      break;
    }
    case Op::Neg: acc(n.a, -g); break;
    case Op::Scale: acc(n.a, n.c * g); break;
    case Op::Shift: acc(n.a, g); break;
    case Op::MatMul: {
      acc(n.a, g * val(n.b).transpose());
      acc(n.b, val(n.a).transpose() * g);
      break;
    }
    case Op::Dot: {
      const double s = g(0, 0);
      acc(n.a, s * val(n.b));
      acc(n.b, s * val(n.a));
      break;
    }
    case Op::Exp: acc(n.a, g.cwiseProduct(n.value)); break;
    case Op::Log: acc(n.a, g.cwiseQuotient(val(n.a))); break;
    case Op::Square: acc(n.a, 2.0 * g.cwiseProduct(val(n.a))); break;
    case Op::Softplus: acc(n.a, g.cwiseProduct(val(n.a).unaryExpr(&sigmoid_scalar))); break;
    case Op::Tanh: {
      const Matrix d = (1.0 - n.value.array().square()).matrix();
      acc(n.a, g.cwiseProduct(d));
      break;
    }
    case Op::Relu: {
      const Matrix d = (val(n.a).array() > 0.0).cast<double>().matrix();
      acc(n.a, g.cwiseProduct(d));
      break;
    }
    case Op::Sum: {
      const Matrix& x = val(n.a);
      acc(n.a, Matrix::Constant(x.rows(), x.cols(), g(0, 0)));
      break;
    }
    case Op::RowSum: acc(n.a, g.replicate(1, val(n.a).cols())); break;
    case Op::ColSum: acc(n.a, g.replicate(val(n.a).rows(), 1)); break;
    case Op::GatherRows: {
      const Matrix& x = val(n.a);
      Matrix d = Matrix::Zero(x.rows(), x.cols());
      for (std::size_t r = 0; r < n.index.size(); ++r) d.row(n.index[r]) += g.row(static_cast<Eigen::Index>(r));
      acc(n.a, d);
      break;
    }
    case Op::ScatterAddRows: {
      Matrix d(static_cast<Eigen::Index>(n.index.size()), g.cols());
      for (std::size_t r = 0; r < n.index.size(); ++r) d.row(static_cast<Eigen::Index>(r)) = g.row(n.index[r]);
      acc(n.a, d);
      break;
    }
    case Op::SliceCols: {
      const Matrix& x = val(n.a);
      Matrix d = Matrix::Zero(x.rows(), x.cols());
      d.middleCols(n.extent, n.count) = g;
      acc(n.a, d);
      break;
    }
  }
}

bool Tape::backward(Var output) {
  if (output.tape != this) throw std::invalid_argument("backward: Var from another tape");
  const Matrix& out = node(output.id).value;
  if (out.size() != 1) throw std::invalid_argument("backward: output must be scalar, got " + shape_str(out));

  for (auto& n : nodes_) n.grad.resize(0, 0);
  nodes_[static_cast<std::size_t>(output.id)].grad = Matrix::Ones(1, 1);
  for (int id = output.id; id >= 0; --id) {
    if (nodes_[static_cast<std::size_t>(id)].grad.size() == 0) continue;
    propagate(id);
  }

  bool finite = true;
  for (const auto& n : nodes_) {
    if (n.op != Op::Param || n.grad.size() == 0) continue;
    Matrix& dst = store_->entry(n.param).grad;
    dst += n.grad;
    if (!n.grad.allFinite()) finite = false;
  }
  return finite;
}

const Matrix& Tape::replay(Var output) {
  if (output.tape != this) throw std::invalid_argument("replay: Var from another tape");
  for (int id = 0; id <= output.id; ++id) evaluate(id);
  return node(output.id).value;
}

Var operator+(Var a, Var b) { return add(a, b); }
Var operator-(Var a, Var b) { return sub(a, b); }
Var operator*(Var a, Var b) { return mul(a, b); }
Var operator/(Var a, Var b) { return div(a, b); }
Var operator-(Var a) { return neg(a); }
Var operator+(Var a, double c) { return shift(a, c); }
Var operator+(double c, Var a) { return shift(a, c); }
Var operator-(Var a, double c) { return shift(a, -c); }
Var operator-(double c, Var a) { return shift(neg(a), c); }
Var operator*(Var a, double c) { return scale(a, c); }
Var operator*(double c, Var a) { return scale(a, c); }
Var operator/(Var a, double c) { return scale(a, 1.0 / c); }

Var add(Var a, Var b) { return binary(Op::Add, a, b); }
Var sub(Var a, Var b) { return binary(Op::Sub, a, b); }
Var mul(Var a, Var b) { return binary(Op::Mul, a, b); }
Var div(Var a, Var b) { return binary(Op::Div, a, b); }
Var neg(Var a) { return unary(Op::Neg, a); }
Var scale(Var a, double c) { return unary(Op::Scale, a, c); }
Var shift(Var a, double c) { return unary(Op::Shift, a, c); }
Var matmul(Var a, Var b) { return binary(Op::MatMul, a, b); }
Var dot(Var a, Var b) { return binary(Op::Dot, a, b); }
Var exp(Var a) { return unary(Op::Exp, a); }
Var log(Var a) { return unary(Op::Log, a); }
Var square(Var a) { return unary(Op::Square, a); }
Var softplus(Var a) { return unary(Op::Softplus, a); }
Var tanh(Var a) { return unary(Op::Tanh, a); }
Var relu(Var a) { return unary(Op::Relu, a); }
Var sum(Var a) { return unary(Op::Sum, a); }
Var row_sum(Var a) { return unary(Op::RowSum, a); }
Var col_sum(Var a) { return unary(Op::ColSum, a); }

Var gather_rows(Var a, std::span<const int> rows) {
  Tape::Node n;
  n.op = Op::GatherRows;
  n.a = a.id;
  n.index.assign(rows.begin(), rows.end());
  return tape_of(a).push(std::move(n));
}

Var scatter_add_rows(Var a, std::span<const int> rows, Eigen::Index out_rows) {
  Tape::Node n;
  n.op = Op::ScatterAddRows;
  n.a = a.id;
  n.index.assign(rows.begin(), rows.end());
  n.extent = out_rows;
  return tape_of(a).push(std::move(n));
}

Var slice_cols(Var a, Eigen::Index start, Eigen::Index count) {
  Tape::Node n;
  n.op = Op::SliceCols;
  n.a = a.id;
  n.extent = start;
  n.count = count;
  return tape_of(a).push(std::move(n));
}

} // namespace mcm::diff
