#include "egan/grad_engine.hpp"

#include <cmath>
#include <limits>
#include <sstream>
#include <tuple>

namespace egan {

namespace {

std::string shape_str(Eigen::Index r, Eigen::Index c) {
  std::ostringstream os;
  os << r << "x" << c;
  return os.str();
}

// Shift-stabilized log(sum(exp(x))). All -inf gives -inf.
template <typename Derived>
double stable_lse(const Eigen::MatrixBase<Derived>& x) {
  const double mx = x.maxCoeff();
  if (!std::isfinite(mx)) return mx;
  return mx + std::log((x.array() - mx).exp().sum());
}

}  // namespace

const char* op_name(Op op) {
  switch (op) {
    case Op::Input: return "input";
    case Op::Constant: return "constant";
    case Op::Affine: return "affine";
    case Op::Exp: return "exp";
    case Op::Log: return "log";
    case Op::Square: return "square";
    case Op::Negate: return "negate";
    case Op::LeakyRelu: return "leaky_relu";
    case Op::LogSumExp: return "log_sum_exp";
    case Op::Sum: return "sum";
    case Op::Mean: return "mean";
    case Op::LinComb: return "lincomb";
  }
  return "?";
}

Eigen::Index Var::rows() const { return tape->value(*this).rows(); }
Eigen::Index Var::cols() const { return tape->value(*this).cols(); }

Var Tape::push(Node n) {
  n.value.resize(n.rows, n.cols);
  n.value.setZero();
  nodes_.push_back(std::move(n));
  forward_done_ = false;
  return Var{this, static_cast<int>(nodes_.size()) - 1};
}

void Tape::check_owner(Var v) const {
  if (v.tape != this || v.id < 0 || v.id >= static_cast<int>(nodes_.size())) {
    throw InvalidArgument("variable does not belong to this tape");
  }
}

Tape::Node& Tape::node(Var v) {
  check_owner(v);
  return nodes_[v.id];
}

const Tape::Node& Tape::node(Var v) const {
  check_owner(v);
  return nodes_[v.id];
}

std::string Tape::describe(int id) const {
  const Node& n = nodes_[id];
  std::ostringstream os;
  os << "node " << id << " (" << op_name(n.op);
  if (!n.name.empty()) os << " '" << n.name << "'";
  os << ")";
  return os.str();
}

Var Tape::input(Eigen::Index rows, Eigen::Index cols, std::string name) {
  Node n;
  n.op = Op::Input;
  n.rows = rows;
  n.cols = cols;
  n.requires_grad = true;
  n.name = std::move(name);
  Var v = push(std::move(n));
  leaves_.push_back(v.id);
  return v;
}

Var Tape::constant(Eigen::Index rows, Eigen::Index cols, std::string name) {
  Node n;
  n.op = Op::Constant;
  n.rows = rows;
  n.cols = cols;
  n.name = std::move(name);
  Var v = push(std::move(n));
  leaves_.push_back(v.id);
  return v;
}

Var Tape::fixed(Tensor value, std::string name) {
  Node n;
  n.op = Op::Constant;
  n.rows = value.rows();
  n.cols = value.cols();
  n.name = std::move(name);
  n.assigned = true;
  Var v = push(std::move(n));
  nodes_[v.id].value = std::move(value);
  return v;
}

Var Tape::affine(Var x, Var w) {
  const Node& nx = node(x);
  const Node& nw = node(w);
  if (nx.cols != nw.cols) {
    throw ShapeError("affine: x is " + shape_str(nx.rows, nx.cols) + " but w is " +
                     shape_str(nw.rows, nw.cols));
  }
  Node n;
  n.op = Op::Affine;
  n.a = x.id;
  n.b = w.id;
  n.rows = nx.rows;
  n.cols = nw.rows;
  n.requires_grad = nx.requires_grad || nw.requires_grad;
  return push(std::move(n));
}

Var Tape::affine(Var x, Var w, Var bias) {
  Var out = affine(x, w);
  const Node& nb = node(bias);
  Node& n = nodes_[out.id];
  if (nb.rows != 1 || nb.cols != n.cols) {
    throw ShapeError("affine: bias is " + shape_str(nb.rows, nb.cols) + ", expected 1x" +
                     std::to_string(n.cols));
  }
  n.c = bias.id;
  n.requires_grad = n.requires_grad || nb.requires_grad;
  return out;
}

#define EGAN_UNARY(fn, opcode)                      \
  Var Tape::fn(Var x) {                             \
    const Node& nx = node(x);                       \
    Node n;                                         \
    n.op = opcode;                                  \
    n.a = x.id;                                     \
    n.rows = nx.rows;                               \
    n.cols = nx.cols;                               \
    n.requires_grad = nx.requires_grad;             \
    return push(std::move(n));                      \
  }

EGAN_UNARY(exp, Op::Exp)
EGAN_UNARY(log, Op::Log)
EGAN_UNARY(square, Op::Square)
EGAN_UNARY(negate, Op::Negate)
#undef EGAN_UNARY

Var Tape::leaky_relu(Var x, double slope) {
  const Node& nx = node(x);
  Node n;
  n.op = Op::LeakyRelu;
  n.a = x.id;
  n.param = slope;
  n.rows = nx.rows;
  n.cols = nx.cols;
  n.requires_grad = nx.requires_grad;
  return push(std::move(n));
}

namespace {

std::pair<Eigen::Index, Eigen::Index> reduced_shape(Eigen::Index r, Eigen::Index c,
                                                    Axis axis) {
  switch (axis) {
    case Axis::All: return {1, 1};
    case Axis::Rows: return {r, 1};
    case Axis::Cols: return {1, c};
  }
  return {1, 1};
}

}  // namespace

#define EGAN_REDUCE(fn, opcode)                                   \
  Var Tape::fn(Var x, Axis axis) {                                \
    const Node& nx = node(x);                                     \
    Node n;                                                       \
    n.op = opcode;                                                \
    n.a = x.id;                                                   \
    n.axis = axis;                                                \
    std::tie(n.rows, n.cols) = reduced_shape(nx.rows, nx.cols, axis); \
    n.requires_grad = nx.requires_grad;                           \
    return push(std::move(n));                                    \
  }

EGAN_REDUCE(log_sum_exp, Op::LogSumExp)
EGAN_REDUCE(sum, Op::Sum)
EGAN_REDUCE(mean, Op::Mean)
#undef EGAN_REDUCE

Var Tape::lincomb(std::span<const std::pair<double, Var>> terms, double offset) {
  if (terms.empty()) throw InvalidArgument("lincomb: no terms");
  Node n;
  n.op = Op::LinComb;
  n.param = offset;
  const Node& first = node(terms.front().second);
  n.rows = first.rows;
  n.cols = first.cols;
  for (const auto& [coeff, v] : terms) {
    const Node& nv = node(v);
    if (nv.rows != n.rows || nv.cols != n.cols) {
      throw ShapeError("lincomb: term is " + shape_str(nv.rows, nv.cols) + ", expected " +
                       shape_str(n.rows, n.cols));
    }
    n.terms.emplace_back(coeff, v.id);
    n.requires_grad = n.requires_grad || nv.requires_grad;
  }
  return push(std::move(n));
}

void Tape::set_output(Var v) {
  check_owner(v);
  output_ = v.id;
  forward_done_ = false;
}

Var Tape::output() const {
  if (nodes_.empty()) throw StateError("empty tape has no output");
  return Var{const_cast<Tape*>(this), output_ >= 0 ? output_ : static_cast<int>(nodes_.size()) - 1};
}

void Tape::set(Var leaf, const Tensor& value) {
  Node& n = node(leaf);
  if (n.op != Op::Input && n.op != Op::Constant) {
    throw InvalidArgument("set: " + describe(leaf.id) + " is not a leaf");
  }
  if (value.rows() != n.rows || value.cols() != n.cols) {
    throw ShapeError("set: " + describe(leaf.id) + " declared " + shape_str(n.rows, n.cols) +
                     ", got " + shape_str(value.rows(), value.cols()));
  }
  n.value = value;
  n.assigned = true;
  forward_done_ = false;
}

const Tensor& Tape::value(Var v) const { return node(v).value; }

const Tensor& Tape::grad(Var v) const {
  const Node& n = node(v);
  if (n.grad.size() == 0) throw StateError("grad: backward has not been run");
  return n.grad;
}

const std::string& Tape::name(Var v) const { return node(v).name; }

const Tensor& Tape::forward(std::span<const Tensor> leaf_values) {
  if (leaf_values.size() != leaves_.size()) {
    throw ShapeError("forward: tape declares " + std::to_string(leaves_.size()) +
                     " leaves, got " + std::to_string(leaf_values.size()));
  }
  for (std::size_t i = 0; i < leaves_.size(); ++i) {
    set(Var{this, leaves_[i]}, leaf_values[i]);
  }
  return forward();
}

const Tensor& Tape::forward() {
  if (nodes_.empty()) throw StateError("forward: empty tape");
  for (std::size_t i = 0; i < nodes_.size(); ++i) {
    Node& n = nodes_[i];
    if (n.op == Op::Input || n.op == Op::Constant) {
      if (!n.assigned) throw StateError("forward: leaf " + describe(static_cast<int>(i)) + " has no value");
      if (!n.value.allFinite()) {
        throw NumericError("non-finite value in " + describe(static_cast<int>(i)));
      }
      continue;
    }
    eval(n);
    if (!n.value.allFinite()) {
      throw NumericError("non-finite value in " + describe(static_cast<int>(i)));
    }
  }
  forward_done_ = true;
  return nodes_[output().id].value;
}

void Tape::eval(Node& n) {
  switch (n.op) {
    case Op::Input:
    case Op::Constant:
      return;
    case Op::Affine: {
      const Tensor& x = nodes_[n.a].value;
      const Tensor& w = nodes_[n.b].value;
      n.value.noalias() = x * w.transpose();
      if (n.c >= 0) n.value.rowwise() += nodes_[n.c].value.row(0);
      return;
    }
    case Op::Exp:
      n.value = nodes_[n.a].value.array().exp();
      return;
    case Op::Log:
      n.value = nodes_[n.a].value.array().log();
      return;
    case Op::Square:
      n.value = nodes_[n.a].value.array().square();
      return;
    case Op::Negate:
      n.value = -nodes_[n.a].value;
      return;
    case Op::LeakyRelu: {
      const double s = n.param;
      n.value = nodes_[n.a].value.unaryExpr([s](double v) { return v > 0.0 ? v : s * v; });
      return;
    }
    case Op::LogSumExp: {
      const Tensor& x = nodes_[n.a].value;
      if (n.axis == Axis::All) {
        n.value(0, 0) = stable_lse(x);
      } else if (n.axis == Axis::Rows) {
        for (Eigen::Index i = 0; i < x.rows(); ++i) n.value(i, 0) = stable_lse(x.row(i));
      } else {
        for (Eigen::Index j = 0; j < x.cols(); ++j) n.value(0, j) = stable_lse(x.col(j));
      }
      return;
    }
    case Op::Sum:
    case Op::Mean: {
      const Tensor& x = nodes_[n.a].value;
      double scale = 1.0;
      if (n.axis == Axis::All) {
        if (n.op == Op::Mean) scale = 1.0 / static_cast<double>(x.size());
        n.value(0, 0) = x.sum() * scale;
      } else if (n.axis == Axis::Rows) {
        if (n.op == Op::Mean) scale = 1.0 / static_cast<double>(x.cols());
        n.value = x.rowwise().sum() * scale;
      } else {
        if (n.op == Op::Mean) scale = 1.0 / static_cast<double>(x.rows());
        n.value = x.colwise().sum() * scale;
      }
      return;
    }
    case Op::LinComb: {
      n.value.setConstant(n.param);
      for (const auto& [coeff, id] : n.terms) n.value += coeff * nodes_[id].value;
      return;
    }
  }
}

std::vector<Tensor> Tape::backward() {
  if (!forward_done_) throw StateError("backward: forward has not been run");
  const int out = output().id;
  const Node& on = nodes_[out];
  if (on.rows != 1 || on.cols != 1) {
    throw StateError("backward: output " + describe(out) + " is " + shape_str(on.rows, on.cols) +
                     ", expected a scalar");
  }
  for (Node& n : nodes_) {
    n.grad.resize(n.rows, n.cols);
    n.grad.setZero();
  }
  nodes_[out].grad(0, 0) = 1.0;
  for (int i = out; i >= 0; --i) {
    const Node& n = nodes_[i];
    if (!n.requires_grad) continue;
    accumulate(n);
  }
  std::vector<Tensor> grads;
  grads.reserve(leaves_.size());
  for (int id : leaves_) grads.push_back(nodes_[id].grad);
  return grads;
}

void Tape::accumulate(const Node& n) {
  const Tensor& g = n.grad;
  auto wants = [this](int id) { return id >= 0 && nodes_[id].requires_grad; };
  switch (n.op) {
    case Op::Input:
    case Op::Constant:
      return;
    case Op::Affine: {
      const Tensor& x = nodes_[n.a].value;
      const Tensor& w = nodes_[n.b].value;
      if (wants(n.a)) nodes_[n.a].grad.noalias() += g * w;
      if (wants(n.b)) nodes_[n.b].grad.noalias() += g.transpose() * x;
      if (wants(n.c)) nodes_[n.c].grad += g.colwise().sum();
      return;
    }
    case Op::Exp:
      nodes_[n.a].grad.array() += g.array() * n.value.array();
      return;
    case Op::Log:
      nodes_[n.a].grad.array() += g.array() / nodes_[n.a].value.array();
      return;
    case Op::Square:
      nodes_[n.a].grad.array() += 2.0 * g.array() * nodes_[n.a].value.array();
      return;
    case Op::Negate:
      nodes_[n.a].grad -= g;
      return;
    case Op::LeakyRelu: {
      const double s = n.param;
      nodes_[n.a].grad.array() +=
          g.array() * nodes_[n.a].value.array().unaryExpr([s](double v) { return v > 0.0 ? 1.0 : s; });
      return;
    }
    case Op::LogSumExp: {
      const Tensor& x = nodes_[n.a].value;
      Tensor& gx = nodes_[n.a].grad;
      if (n.axis == Axis::All) {
        gx.array() += g(0, 0) * (x.array() - n.value(0, 0)).exp();
      } else if (n.axis == Axis::Rows) {
        for (Eigen::Index i = 0; i < x.rows(); ++i) {
          gx.row(i).array() += g(i, 0) * (x.row(i).array() - n.value(i, 0)).exp();
        }
      } else {
        for (Eigen::Index j = 0; j < x.cols(); ++j) {
          gx.col(j).array() += g(0, j) * (x.col(j).array() - n.value(0, j)).exp();
        }
      }
      return;
    }
    case Op::Sum:
    case Op::Mean: {
      Tensor& gx = nodes_[n.a].grad;
      double scale = 1.0;
      if (n.axis == Axis::All) {
        if (n.op == Op::Mean) scale = 1.0 / static_cast<double>(gx.size());
        gx.array() += g(0, 0) * scale;
      } else if (n.axis == Axis::Rows) {
        if (n.op == Op::Mean) scale = 1.0 / static_cast<double>(gx.cols());
        gx.colwise() += g.col(0) * scale;
      } else {
        if (n.op == Op::Mean) scale = 1.0 / static_cast<double>(gx.rows());
        gx.rowwise() += g.row(0) * scale;
      }
      return;
    }
    case Op::LinComb:
      for (const auto& [coeff, id] : n.terms) {
        if (wants(id)) nodes_[id].grad += coeff * g;
      }
      return;
  }
}

Var operator+(Var a, Var b) {
  const std::pair<double, Var> t[] = {{1.0, a}, {1.0, b}};
  return a.tape->lincomb(t);
}

Var operator-(Var a, Var b) {
  const std::pair<double, Var> t[] = {{1.0, a}, {-1.0, b}};
  return a.tape->lincomb(t);
}

Var operator-(Var a) { return a.tape->negate(a); }

Var operator*(double c, Var a) {
  const std::pair<double, Var> t[] = {{c, a}};
  return a.tape->lincomb(t);
}

Var operator*(Var a, double c) { return c * a; }

Var operator+(Var a, double c) {
  const std::pair<double, Var> t[] = {{1.0, a}};
  return a.tape->lincomb(t, c);
}

Var operator-(Var a, double c) { return a + (-c); }

Var exp(Var a) { return a.tape->exp(a); }
Var log(Var a) { return a.tape->log(a); }
Var square(Var a) { return a.tape->square(a); }

Var broadcast_cols(Var column, Eigen::Index m) {
  Tape& t = *column.tape;
  Var ones = t.fixed(Tensor::Ones(m, 1), "ones");
  return t.affine(column, ones);
}

Var broadcast_rows(Var column, Eigen::Index n) {
  Tape& t = *column.tape;
  Var ones = t.fixed(Tensor::Ones(n, 1), "ones");
  return t.affine(ones, column);
}

std::vector<Tensor> finite_difference_gradient(Tape& tape,
                                               std::span<const Tensor> leaf_values,
                                               double h) {
  if (!(h > 0.0)) throw InvalidArgument("finite_difference_gradient: step must be positive");
  std::vector<Tensor> point(leaf_values.begin(), leaf_values.end());
  std::vector<Tensor> grads;
  grads.reserve(point.size());
  auto eval = [&]() {
    const Tensor& out = tape.forward(point);
    if (out.size() != 1) throw StateError("finite_difference_gradient: output is not scalar");
    return out(0, 0);
  };
  for (std::size_t k = 0; k < point.size(); ++k) {
    Tensor g = Tensor::Zero(point[k].rows(), point[k].cols());
    for (Eigen::Index i = 0; i < point[k].size(); ++i) {
      double& slot = point[k].data()[i];
      const double saved = slot;
      slot = saved + h;
      const double up = eval();
      slot = saved - h;
      const double down = eval();
      slot = saved;
      g.data()[i] = (up - down) / (2.0 * h);
    }
    grads.push_back(std::move(g));
  }
  tape.forward(point);
  return grads;
}

}  // namespace egan
