#ifndef EGAN_GRAD_ENGINE_HPP_
#define EGAN_GRAD_ENGINE_HPP_

#include <cstddef>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "egan/types.hpp"

namespace egan {

class Tape;

// Handle to a node recorded on a Tape. Cheap to copy; only valid for the tape
// that produced it.
struct Var {
  Tape* tape = nullptr;
  int id = -1;

  Eigen::Index rows() const;
  Eigen::Index cols() const;
};

enum class Axis {
  All,   // reduce to 1x1
  Rows,  // reduce each row, n x m -> n x 1
  Cols,  // reduce each column, n x m -> 1 x m
};

enum class Op {
  Input,
  Constant,
  Affine,
  Exp,
  Log,
  Square,
  Negate,
  LeakyRelu,
  LogSumExp,
  Sum,
  Mean,
  LinComb,
};

const char* op_name(Op op);

// Recorded computation graph over dense tensors.
//
// Recording only declares structure and static shapes; values are produced by
// forward(). A recorded tape can be replayed any number of times with new leaf
// values, which is how the trainers reuse one graph per minibatch shape.
//
// Leaves come in two flavours: input() leaves receive gradients, constant()
// leaves do not (and nothing downstream of constants alone is differentiated).
class Tape {
 public:
  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;
  // Vars hold a pointer to their tape, so tapes stay put.
  Tape(Tape&&) = delete;
  Tape& operator=(Tape&&) = delete;

  Var input(Eigen::Index rows, Eigen::Index cols, std::string name = {});
  Var constant(Eigen::Index rows, Eigen::Index cols, std::string name = {});
  // Constant leaf with a fixed value (ones vectors, masks, ...). Not part of
  // the leaf list passed to forward().
  Var fixed(Tensor value, std::string name = {});

  // x * w^T (+ bias broadcast over rows). x: n x k, w: m x k, bias: 1 x m.
  Var affine(Var x, Var w);
  Var affine(Var x, Var w, Var bias);
  Var exp(Var x);
  Var log(Var x);
  Var square(Var x);
  Var negate(Var x);
  Var leaky_relu(Var x, double slope);
  Var log_sum_exp(Var x, Axis axis = Axis::All);
  Var sum(Var x, Axis axis = Axis::All);
  Var mean(Var x, Axis axis = Axis::All);
  // sum_k coeffs[k] * terms[k] + offset; all terms share one shape.
  Var lincomb(std::span<const std::pair<double, Var>> terms, double offset = 0.0);

  void set_output(Var v);
  Var output() const;

  // Leaves in declaration order (input() and constant(), not fixed()).
  const std::vector<int>& leaves() const { return leaves_; }
  std::size_t leaf_count() const { return leaves_.size(); }

  void set(Var leaf, const Tensor& value);
  const Tensor& value(Var v) const;
  const Tensor& grad(Var v) const;
  const std::string& name(Var v) const;

  // Replays the graph. The span form assigns every leaf in declaration order
  // first; the no-argument form uses whatever was last set().
  const Tensor& forward(std::span<const Tensor> leaf_values);
  const Tensor& forward();

  // Reverse sweep from the (scalar) output. Returns d output / d leaf for
  // every leaf in declaration order; constant leaves get zeros.
  std::vector<Tensor> backward();

  std::size_t size() const { return nodes_.size(); }

 private:
  struct Node {
    Op op = Op::Input;
    int a = -1;
    int b = -1;
    int c = -1;
    double param = 0.0;
    Axis axis = Axis::All;
    std::vector<std::pair<double, int>> terms;
    Eigen::Index rows = 0;
    Eigen::Index cols = 0;
    bool requires_grad = false;
    bool assigned = false;
    std::string name;
    Tensor value;
    Tensor grad;
  };

  Var push(Node node);
  Node& node(Var v);
  const Node& node(Var v) const;
  void check_owner(Var v) const;
  void eval(Node& n);
  void accumulate(const Node& n);
  std::string describe(int id) const;

  std::vector<Node> nodes_;
  std::vector<int> leaves_;
  int output_ = -1;
  bool forward_done_ = false;
};

// Expression sugar. Every operand must live on the same tape.
Var operator+(Var a, Var b);
Var operator-(Var a, Var b);
Var operator-(Var a);
Var operator*(double c, Var a);
Var operator*(Var a, double c);
Var operator+(Var a, double c);
Var operator-(Var a, double c);
Var exp(Var a);
Var log(Var a);
Var square(Var a);

// n x 1 column -> n x m, repeating across columns.
Var broadcast_cols(Var column, Eigen::Index m);
// m x 1 column -> n x m, each row is the column transposed.
Var broadcast_rows(Var column, Eigen::Index n);

// Central-difference estimate of d output / d leaf for every leaf, using the
// leaf values given. Restores the tape to those values on return.
std::vector<Tensor> finite_difference_gradient(Tape& tape,
                                               std::span<const Tensor> leaf_values,
                                               double h);

}  // namespace egan

#endif  // EGAN_GRAD_ENGINE_HPP_
