#pragma once

#include <cstddef>
#include <cstdint>
#include <string_view>
#include <deque>
#include <vector>

#include "hydo/numerics/dense_array.hpp"

namespace hydo {

/// Handle to a node in a Graph.
struct Var {
  static constexpr std::size_t kInvalid = static_cast<std::size_t>(-1);
  std::size_t index = kInvalid;
  bool valid() const { return index != kInvalid; }
  bool operator==(const Var&) const = default;
};

enum class Op : std::uint8_t {
  constant,
  parameter,
  matmul,
  add,
  sub,
  mul,
  scale,
  add_scalar,
  tanh,
  relu,
  exp,
  log,
  square,
  log_cosh,
  sum,
  mean,
  row_sum,
  concat_cols,
  slice_cols,
  slice_rows,
  gather_rows,
  group_mean,
  repeat_rows,
  reshape,
  softmax_rows,
  log_softmax_rows,
  clip_st,
  gaussian_log_prob,
};

std::string_view op_name(Op op);

class Gradients;

/// Reverse-mode tape over rank-2 arrays.
///
/// Nodes are appended in evaluation order, so creation order is a valid
/// topological order. Every op evaluates eagerly and rejects non-finite
/// results with NumericFault. Binary elementwise ops accept a right operand
/// that broadcasts as a scalar (1x1), a row (1xC) or a column (Rx1).
class Graph {
 public:
  Var constant(DenseArray value);
  Var parameter(DenseArray value);

  Var matmul(Var a, Var b);
  Var add(Var a, Var b);
  Var sub(Var a, Var b);
  Var mul(Var a, Var b);
  Var scale(Var a, double factor);
  Var add_scalar(Var a, double offset);
  Var neg(Var a) { return scale(a, -1.0); }

  Var tanh(Var a);
  Var relu(Var a);
  Var exp(Var a);
  Var log(Var a);
  Var square(Var a);
  Var log_cosh(Var a);  // overflow-safe log(cosh(x))

  Var sum(Var a);
  Var mean(Var a);
  Var row_sum(Var a);

  Var concat_cols(const std::vector<Var>& parts);
  Var slice_cols(Var a, std::size_t begin, std::size_t end);
  Var slice_rows(Var a, std::size_t begin, std::size_t end);
  Var gather_rows(Var a, std::vector<std::size_t> rows);
  // Mean over consecutive blocks of `group` rows: (G*group x C) -> (G x C).
  Var group_mean(Var a, std::size_t group);
  // Each row repeated `times` times consecutively: (R x C) -> (R*times x C).
  Var repeat_rows(Var a, std::size_t times);
  Var reshape(Var a, std::size_t rows, std::size_t cols);

  // Row-wise softmax restricted to entries where mask != 0; masked entries
  // get probability 0. An empty mask means "all entries". Every row needs at
  // least one unmasked entry.
  Var softmax_rows(Var logits, const DenseArray& mask = {});
  // Row-wise log-softmax; masked entries are reported as 0 and receive no
  // gradient (callers weight them by a zero probability).
  Var log_softmax_rows(Var logits, const DenseArray& mask = {});

  // Forward clamps to [lo, hi]. Backward passes the gradient unchanged within
  // [lo - band, hi + band]; further out it only passes components whose
  // descent step points back toward the interval.
  Var clip_st(Var a, double lo, double hi, double band = 1e-6);

  // Per-row isotropic Gaussian log-density: sum over columns of
  // -0.5*log(2*pi*var) - (x - mean)^2 / (2*var). Output is (R x 1).
  Var gaussian_log_prob(Var x, Var mean, double variance);

  // Detached copy: same value, no gradient path.
  Var stop_gradient(Var a) { return constant(value(a)); }

  const DenseArray& value(Var v) const;
  bool requires_grad(Var v) const;
  std::size_t size() const { return nodes_.size(); }

  // Gradients of a 1x1 loss with respect to every node that requires them.
  Gradients backward(Var loss) const;

 private:
  struct Node {
    Op op = Op::constant;
    std::vector<std::size_t> inputs;
    DenseArray value;
    bool requires_grad = false;
    double s0 = 0.0, s1 = 0.0, s2 = 0.0;
    std::vector<std::size_t> ints;
    DenseArray aux;
  };

  Var push(Node node);
  const Node& node(Var v) const;
  void backward_node(const Node& n, const DenseArray& g, std::vector<DenseArray>& grads) const;

  std::deque<Node> nodes_;  // deque: value() references survive later pushes
};

class Gradients {
 public:
  // Gradient of the loss with respect to v; zeros when v is unreachable.
  DenseArray wrt(Var v) const;
  bool has(Var v) const;
  std::size_t visited() const { return visited_; }

 private:
  friend class Graph;
  std::vector<DenseArray> grads_;
  std::vector<std::vector<std::size_t>> shapes_;
  std::size_t visited_ = 0;
};

}  // namespace hydo
