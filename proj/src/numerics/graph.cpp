#include "hydo/numerics/graph.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <string>

#include "hydo/numerics/errors.hpp"

namespace hydo {

namespace {

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using ConstMap = Eigen::Map<const RowMatrix>;
using MutMap = Eigen::Map<RowMatrix>;

ConstMap as_matrix(const DenseArray& a) { return ConstMap(a.data(), a.rows(), a.cols()); }
MutMap as_matrix(DenseArray& a) { return MutMap(a.data(), a.rows(), a.cols()); }

void require_rank2(const DenseArray& a, std::string_view what) {
  if (a.rank() != 2) {
    throw UsageError(std::string(what) + ": expected rank-2 array, got " + shape_string(a.shape()));
  }
}

bool broadcasts_to(const DenseArray& b, const DenseArray& a) {
  return (b.rows() == a.rows() || b.rows() == 1) && (b.cols() == a.cols() || b.cols() == 1);
}

// f(out(r, c), b(r, c)) with b broadcast against out's shape.
template <class F>
void broadcast_apply(DenseArray& out, const DenseArray& b, F f) {
  const std::size_t R = out.rows(), C = out.cols(), bc = b.cols();
  const bool row_one = b.rows() == 1;
  double* o = out.data();
  const double* v = b.data();
  for (std::size_t r = 0; r < R; ++r) {
    const double* brow = v + (row_one ? 0 : r * bc);
    double* orow = o + r * C;
    if (bc == 1) {
      for (std::size_t c = 0; c < C; ++c) f(orow[c], brow[0]);
    } else {
      for (std::size_t c = 0; c < C; ++c) f(orow[c], brow[c]);
    }
  }
}

// Reduces a full-shape gradient down to b's (possibly broadcast) shape.
DenseArray reduce_to(const DenseArray& g, const DenseArray& like) {
  if (g.same_shape(like)) return g;
  DenseArray out(like.rows(), like.cols(), 0.0);
  const std::size_t R = g.rows(), C = g.cols(), lc = like.cols();
  const bool row_one = like.rows() == 1;
  for (std::size_t r = 0; r < R; ++r) {
    double* orow = out.data() + (row_one ? 0 : r * lc);
    const double* grow = g.data() + r * C;
    if (lc == 1) {
      double acc = 0.0;
      for (std::size_t c = 0; c < C; ++c) acc += grow[c];
      orow[0] += acc;
    } else {
      for (std::size_t c = 0; c < C; ++c) orow[c] += grow[c];
    }
  }
  return out;
}

void accumulate(std::vector<DenseArray>& grads, std::size_t index, const DenseArray& g) {
  DenseArray& slot = grads[index];
  if (slot.empty() && slot.rank() == 0) {
    slot = g;
    return;
  }
  auto dst = slot.values();
  auto src = g.values();
  for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += src[i];
}

bool mask_on(const DenseArray& mask, std::size_t i) { return mask.empty() || mask[i] != 0.0; }

}  // namespace

std::string_view op_name(Op op) {
  switch (op) {
    case Op::constant: return "constant";
    case Op::parameter: return "parameter";
    case Op::matmul: return "matmul";
    case Op::add: return "add";
    case Op::sub: return "sub";
    case Op::mul: return "mul";
    case Op::scale: return "scale";
    case Op::add_scalar: return "add_scalar";
    case Op::tanh: return "tanh";
    case Op::relu: return "relu";
    case Op::exp: return "exp";
    case Op::log: return "log";
    case Op::square: return "square";
    case Op::log_cosh: return "log_cosh";
    case Op::sum: return "sum";
    case Op::mean: return "mean";
    case Op::row_sum: return "row_sum";
    case Op::concat_cols: return "concat_cols";
    case Op::slice_cols: return "slice_cols";
    case Op::slice_rows: return "slice_rows";
    case Op::gather_rows: return "gather_rows";
    case Op::group_mean: return "group_mean";
    case Op::repeat_rows: return "repeat_rows";
    case Op::reshape: return "reshape";
    case Op::softmax_rows: return "softmax_rows";
    case Op::log_softmax_rows: return "log_softmax_rows";
    case Op::clip_st: return "clip_st";
    case Op::gaussian_log_prob: return "gaussian_log_prob";
  }
  return "unknown";
}

const Graph::Node& Graph::node(Var v) const {
  if (!v.valid() || v.index >= nodes_.size()) throw UsageError("invalid graph variable");
  return nodes_[v.index];
}

const DenseArray& Graph::value(Var v) const { return node(v).value; }
bool Graph::requires_grad(Var v) const { return node(v).requires_grad; }

Var Graph::push(Node n) {
  if (n.op != Op::constant && n.op != Op::parameter && !n.value.all_finite()) {
    throw NumericFault(std::string("non-finite value produced by ") + std::string(op_name(n.op)));
  }
  for (std::size_t in : n.inputs) n.requires_grad = n.requires_grad || nodes_[in].requires_grad;
  nodes_.push_back(std::move(n));
  return Var{nodes_.size() - 1};
}

Var Graph::constant(DenseArray value) {
  require_rank2(value, "constant");
  Node n;
  n.op = Op::constant;
  n.value = std::move(value);
  return push(std::move(n));
}

Var Graph::parameter(DenseArray value) {
  require_rank2(value, "parameter");
  if (!value.all_finite()) throw NumericFault("non-finite parameter value");
  Node n;
  n.op = Op::parameter;
  n.value = std::move(value);
  n.requires_grad = true;
  return push(std::move(n));
}

Var Graph::matmul(Var a, Var b) {
  const DenseArray& A = value(a);
  const DenseArray& B = value(b);
  if (A.cols() != B.rows()) {
    throw UsageError("matmul shape mismatch " + shape_string(A.shape()) + " x " +
                     shape_string(B.shape()));
  }
  Node n;
  n.op = Op::matmul;
  n.inputs = {a.index, b.index};
  n.value = DenseArray(A.rows(), B.cols());
  as_matrix(n.value).noalias() = as_matrix(A) * as_matrix(B);
  return push(std::move(n));
}

Var Graph::add(Var a, Var b) {
  const DenseArray& A = value(a);
  const DenseArray& B = value(b);
  if (!broadcasts_to(B, A)) {
    throw UsageError("add shape mismatch " + shape_string(A.shape()) + " + " +
                     shape_string(B.shape()));
  }
  Node n;
  n.op = Op::add;
  n.inputs = {a.index, b.index};
  n.value = A;
  if (A.same_shape(B)) {
    for (std::size_t i = 0; i < A.size(); ++i) n.value[i] += B[i];
  } else {
    broadcast_apply(n.value, B, [](double& o, double b) { o += b; });
  }
  return push(std::move(n));
}

Var Graph::sub(Var a, Var b) {
  const DenseArray& A = value(a);
  const DenseArray& B = value(b);
  if (!broadcasts_to(B, A)) {
    throw UsageError("sub shape mismatch " + shape_string(A.shape()) + " - " +
                     shape_string(B.shape()));
  }
  Node n;
  n.op = Op::sub;
  n.inputs = {a.index, b.index};
  n.value = A;
  broadcast_apply(n.value, B, [](double& o, double b) { o -= b; });
  return push(std::move(n));
}

Var Graph::mul(Var a, Var b) {
  const DenseArray& A = value(a);
  const DenseArray& B = value(b);
  if (!broadcasts_to(B, A)) {
    throw UsageError("mul shape mismatch " + shape_string(A.shape()) + " * " +
                     shape_string(B.shape()));
  }
  Node n;
  n.op = Op::mul;
  n.inputs = {a.index, b.index};
  n.value = A;
  broadcast_apply(n.value, B, [](double& o, double b) { o *= b; });
  return push(std::move(n));
}

Var Graph::scale(Var a, double factor) {
  Node n;
  n.op = Op::scale;
  n.inputs = {a.index};
  n.s0 = factor;
  n.value = value(a);
  for (double& x : n.value.values()) x *= factor;
  return push(std::move(n));
}

Var Graph::add_scalar(Var a, double offset) {
  Node n;
  n.op = Op::add_scalar;
  n.inputs = {a.index};
  n.value = value(a);
  for (double& x : n.value.values()) x += offset;
  return push(std::move(n));
}

namespace {

template <typename F>
DenseArray map_values(const DenseArray& a, F f) {
  DenseArray out = a;
  for (double& x : out.values()) x = f(x);
  return out;
}

}  // namespace

namespace {

// Odd Taylor coefficients of tanh, x^1 .. x^27.
constexpr double kTanhTaylor[] = {
    1.0,
    -0.33333333333333333333,
    0.13333333333333333333,
    -0.053968253968253968254,
    0.021869488536155202822,
    -0.0088632355299021965689,
    0.0035921280365724810169,
    -0.0014558343870513182682,
    0.00059002744094558598138,
    -0.00023912911424355248149,
    0.000096915379569294503256,
    -0.000039278323883316834053,
    0.000015918905069328964741,
    -6.4516892156554307632e-6,
};

// Vectorised tanh. (1 - e)/(1 + e) with e = exp(-2|x|) cancels near 0, so
// below |x| = 0.35 the Taylor series takes over (truncation < 1e-18).
DenseArray tanh_values(const DenseArray& in) {
  DenseArray out = in;
  const auto n = static_cast<Eigen::Index>(in.size());
  const Eigen::Map<const Eigen::ArrayXd> x(in.data(), n);
  Eigen::Map<Eigen::ArrayXd> y(out.data(), n);
  const Eigen::ArrayXd a = x.abs();
  const Eigen::ArrayXd e = (-2.0 * a.min(40.0)).exp();
  const Eigen::ArrayXd z = a.square();
  Eigen::ArrayXd p = Eigen::ArrayXd::Constant(n, kTanhTaylor[13]);
  for (int k = 12; k >= 0; --k) p = p * z + kTanhTaylor[k];
  y = (a < 0.35).select(a * p, (1.0 - e) / (1.0 + e)) * x.sign();
  return out;
}

}  // namespace

Var Graph::tanh(Var a) {
  Node n;
  n.op = Op::tanh;
  n.inputs = {a.index};
  n.value = tanh_values(value(a));
  return push(std::move(n));
}

Var Graph::relu(Var a) {
  Node n;
  n.op = Op::relu;
  n.inputs = {a.index};
  n.value = map_values(value(a), [](double x) { return x > 0.0 ? x : 0.0; });
  return push(std::move(n));
}

Var Graph::exp(Var a) {
  Node n;
  n.op = Op::exp;
  n.inputs = {a.index};
  n.value = map_values(value(a), [](double x) { return std::exp(x); });
  return push(std::move(n));
}

Var Graph::log(Var a) {
  for (double x : value(a).values()) {
    if (!(x > 0.0)) throw DomainError("log of non-positive value " + std::to_string(x));
  }
  Node n;
  n.op = Op::log;
  n.inputs = {a.index};
  n.value = map_values(value(a), [](double x) { return std::log(x); });
  return push(std::move(n));
}

Var Graph::square(Var a) {
  Node n;
  n.op = Op::square;
  n.inputs = {a.index};
  n.value = map_values(value(a), [](double x) { return x * x; });
  return push(std::move(n));
}

Var Graph::log_cosh(Var a) {
  Node n;
  n.op = Op::log_cosh;
  n.inputs = {a.index};
  n.value = map_values(value(a), [](double x) {
    const double ax = std::abs(x);
    return ax + std::log1p(std::exp(-2.0 * ax)) - std::numbers::ln2;
  });
  return push(std::move(n));
}

Var Graph::sum(Var a) {
  double total = 0.0;
  for (double x : value(a).values()) total += x;
  Node n;
  n.op = Op::sum;
  n.inputs = {a.index};
  n.value = DenseArray::scalar(total);
  return push(std::move(n));
}

Var Graph::mean(Var a) {
  const DenseArray& A = value(a);
  if (A.empty()) throw UsageError("mean of empty array");
  double total = 0.0;
  for (double x : A.values()) total += x;
  Node n;
  n.op = Op::mean;
  n.inputs = {a.index};
  n.value = DenseArray::scalar(total / static_cast<double>(A.size()));
  return push(std::move(n));
}

Var Graph::row_sum(Var a) {
  const DenseArray& A = value(a);
  Node n;
  n.op = Op::row_sum;
  n.inputs = {a.index};
  n.value = DenseArray(A.rows(), 1);
  for (std::size_t r = 0; r < A.rows(); ++r) {
    double total = 0.0;
    for (std::size_t c = 0; c < A.cols(); ++c) total += A(r, c);
    n.value[r] = total;
  }
  return push(std::move(n));
}

Var Graph::concat_cols(const std::vector<Var>& parts) {
  if (parts.empty()) throw UsageError("concat_cols of nothing");
  const std::size_t rows = value(parts.front()).rows();
  std::size_t cols = 0;
  for (Var p : parts) {
    if (value(p).rows() != rows) throw UsageError("concat_cols row mismatch");
    cols += value(p).cols();
  }
  Node n;
  n.op = Op::concat_cols;
  n.value = DenseArray(rows, cols);
  std::size_t offset = 0;
  for (Var p : parts) {
    const DenseArray& P = value(p);
    for (std::size_t r = 0; r < rows; ++r)
      std::copy_n(&P.data()[r * P.cols()], P.cols(), &n.value.data()[r * cols + offset]);
    n.inputs.push_back(p.index);
    n.ints.push_back(offset);
    offset += P.cols();
  }
  return push(std::move(n));
}

Var Graph::slice_cols(Var a, std::size_t begin, std::size_t end) {
  const DenseArray& A = value(a);
  if (begin > end || end > A.cols()) throw UsageError("slice_cols out of range");
  Node n;
  n.op = Op::slice_cols;
  n.inputs = {a.index};
  n.ints = {begin, end};
  n.value = DenseArray(A.rows(), end - begin);
  for (std::size_t r = 0; r < A.rows(); ++r)
    std::copy_n(&A.data()[r * A.cols() + begin], end - begin, &n.value.data()[r * (end - begin)]);
  return push(std::move(n));
}

Var Graph::slice_rows(Var a, std::size_t begin, std::size_t end) {
  const DenseArray& A = value(a);
  if (begin > end || end > A.rows()) throw UsageError("slice_rows out of range");
  Node n;
  n.op = Op::slice_rows;
  n.inputs = {a.index};
  n.ints = {begin, end};
  n.value = DenseArray(end - begin, A.cols());
  std::copy_n(&A.data()[begin * A.cols()], (end - begin) * A.cols(), n.value.data());
  return push(std::move(n));
}

Var Graph::gather_rows(Var a, std::vector<std::size_t> rows) {
  const DenseArray& A = value(a);
  Node n;
  n.op = Op::gather_rows;
  n.inputs = {a.index};
  n.value = DenseArray(rows.size(), A.cols());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (rows[i] >= A.rows()) throw UsageError("gather_rows index out of range");
    std::copy_n(&A.data()[rows[i] * A.cols()], A.cols(), &n.value.data()[i * A.cols()]);
  }
  n.ints = std::move(rows);
  return push(std::move(n));
}

Var Graph::group_mean(Var a, std::size_t group) {
  const DenseArray& A = value(a);
  if (group == 0 || A.rows() % group != 0) throw UsageError("group_mean: rows not divisible");
  const std::size_t groups = A.rows() / group;
  Node n;
  n.op = Op::group_mean;
  n.inputs = {a.index};
  n.ints = {group};
  n.value = DenseArray(groups, A.cols());
  const double inv = 1.0 / static_cast<double>(group);
  for (std::size_t g = 0; g < groups; ++g)
    for (std::size_t k = 0; k < group; ++k)
      for (std::size_t c = 0; c < A.cols(); ++c) n.value(g, c) += A(g * group + k, c) * inv;
  return push(std::move(n));
}

Var Graph::repeat_rows(Var a, std::size_t times) {
  const DenseArray& A = value(a);
  if (times == 0) throw UsageError("repeat_rows: zero repeats");
  Node n;
  n.op = Op::repeat_rows;
  n.inputs = {a.index};
  n.ints = {times};
  n.value = DenseArray(A.rows() * times, A.cols());
  for (std::size_t r = 0; r < A.rows(); ++r)
    for (std::size_t k = 0; k < times; ++k)
      std::copy_n(&A.data()[r * A.cols()], A.cols(), &n.value.data()[(r * times + k) * A.cols()]);
  return push(std::move(n));
}

Var Graph::reshape(Var a, std::size_t rows, std::size_t cols) {
  Node n;
  n.op = Op::reshape;
  n.inputs = {a.index};
  n.value = value(a).reshaped(rows, cols);
  return push(std::move(n));
}

namespace {

DenseArray masked_softmax(const DenseArray& z, const DenseArray& mask) {
  DenseArray p(z.rows(), z.cols(), 0.0);
  for (std::size_t r = 0; r < z.rows(); ++r) {
    double hi = -std::numeric_limits<double>::infinity();
    for (std::size_t c = 0; c < z.cols(); ++c)
      if (mask_on(mask, r * z.cols() + c)) hi = std::max(hi, z(r, c));
    if (!std::isfinite(hi)) throw UsageError("softmax row " + std::to_string(r) + " fully masked");
    double total = 0.0;
    for (std::size_t c = 0; c < z.cols(); ++c) {
      if (!mask_on(mask, r * z.cols() + c)) continue;
      p(r, c) = std::exp(z(r, c) - hi);
      total += p(r, c);
    }
    for (std::size_t c = 0; c < z.cols(); ++c) p(r, c) /= total;
  }
  return p;
}

}  // namespace

Var Graph::softmax_rows(Var logits, const DenseArray& mask) {
  const DenseArray& Z = value(logits);
  if (!mask.empty() && !mask.same_shape(Z)) throw UsageError("softmax mask shape mismatch");
  Node n;
  n.op = Op::softmax_rows;
  n.inputs = {logits.index};
  n.aux = mask;
  n.value = masked_softmax(Z, mask);
  return push(std::move(n));
}

Var Graph::log_softmax_rows(Var logits, const DenseArray& mask) {
  const DenseArray& Z = value(logits);
  if (!mask.empty() && !mask.same_shape(Z)) throw UsageError("log_softmax mask shape mismatch");
  Node n;
  n.op = Op::log_softmax_rows;
  n.inputs = {logits.index};
  n.aux = mask;
  n.value = DenseArray(Z.rows(), Z.cols(), 0.0);
  for (std::size_t r = 0; r < Z.rows(); ++r) {
    double hi = -std::numeric_limits<double>::infinity();
    for (std::size_t c = 0; c < Z.cols(); ++c)
      if (mask_on(mask, r * Z.cols() + c)) hi = std::max(hi, Z(r, c));
    if (!std::isfinite(hi)) throw UsageError("log_softmax row " + std::to_string(r) + " fully masked");
    double total = 0.0;
    for (std::size_t c = 0; c < Z.cols(); ++c)
      if (mask_on(mask, r * Z.cols() + c)) total += std::exp(Z(r, c) - hi);
    const double log_norm = hi + std::log(total);
    for (std::size_t c = 0; c < Z.cols(); ++c)
      if (mask_on(mask, r * Z.cols() + c)) n.value(r, c) = Z(r, c) - log_norm;
  }
  return push(std::move(n));
}

Var Graph::clip_st(Var a, double lo, double hi, double band) {
  if (!(lo < hi) || band < 0.0) throw UsageError("clip_st: invalid bounds");
  Node n;
  n.op = Op::clip_st;
  n.inputs = {a.index};
  n.s0 = lo;
  n.s1 = hi;
  n.s2 = band;
  n.value = map_values(value(a), [lo, hi](double x) { return std::clamp(x, lo, hi); });
  return push(std::move(n));
}

Var Graph::gaussian_log_prob(Var x, Var mean, double variance) {
  if (!(variance > 0.0)) throw DomainError("gaussian_log_prob: variance must be positive");
  const DenseArray& X = value(x);
  const DenseArray& M = value(mean);
  if (!X.same_shape(M)) throw UsageError("gaussian_log_prob shape mismatch");
  Node n;
  n.op = Op::gaussian_log_prob;
  n.inputs = {x.index, mean.index};
  n.s0 = variance;
  n.value = DenseArray(X.rows(), 1);
  const double norm = -0.5 * std::log(2.0 * std::numbers::pi * variance);
  for (std::size_t r = 0; r < X.rows(); ++r) {
    double total = 0.0;
    for (std::size_t c = 0; c < X.cols(); ++c) {
      const double d = X(r, c) - M(r, c);
      total += norm - d * d / (2.0 * variance);
    }
    n.value[r] = total;
  }
  return push(std::move(n));
}

Gradients Graph::backward(Var loss) const {
  const DenseArray& L = value(loss);
  if (L.size() != 1) throw UsageError("backward: loss must be scalar, got " + shape_string(L.shape()));
  Gradients out;
  out.grads_.resize(loss.index + 1);
  out.shapes_.resize(nodes_.size());
  for (std::size_t i = 0; i < nodes_.size(); ++i) out.shapes_[i] = nodes_[i].value.shape();
  if (!node(loss).requires_grad) return out;
  out.grads_[loss.index] = DenseArray(1, 1, 1.0);
  for (std::size_t i = loss.index + 1; i-- > 0;) {
    const Node& n = nodes_[i];
    if (out.grads_[i].rank() == 0) continue;
    ++out.visited_;
    if (n.op == Op::constant || n.op == Op::parameter) continue;
    backward_node(n, out.grads_[i], out.grads_);
  }
  return out;
}

void Graph::backward_node(const Node& n, const DenseArray& g, std::vector<DenseArray>& grads) const {
  auto wants = [&](std::size_t k) { return nodes_[n.inputs[k]].requires_grad; };
  auto in = [&](std::size_t k) -> const DenseArray& { return nodes_[n.inputs[k]].value; };
  auto give = [&](std::size_t k, const DenseArray& d) { accumulate(grads, n.inputs[k], d); };

  switch (n.op) {
    case Op::constant:
    case Op::parameter:
      return;
    case Op::matmul: {
      if (wants(0)) {
        DenseArray d(in(0).rows(), in(0).cols());
        as_matrix(d).noalias() = as_matrix(g) * as_matrix(in(1)).transpose();
        give(0, d);
      }
      if (wants(1)) {
        DenseArray d(in(1).rows(), in(1).cols());
        as_matrix(d).noalias() = as_matrix(in(0)).transpose() * as_matrix(g);
        give(1, d);
      }
      return;
    }
    case Op::add:
    case Op::sub: {
      if (wants(0)) give(0, g);
      if (wants(1)) {
        DenseArray d = reduce_to(g, in(1));
        if (n.op == Op::sub)
          for (double& x : d.values()) x = -x;
        give(1, d);
      }
      return;
    }
    case Op::mul: {
      const DenseArray& A = in(0);
      const DenseArray& B = in(1);
      if (wants(0)) {
        DenseArray d = g;
        broadcast_apply(d, B, [](double& o, double b) { o *= b; });
        give(0, d);
      }
      if (wants(1)) {
        DenseArray full = g;
        for (std::size_t i = 0; i < full.size(); ++i) full[i] *= A[i];
        give(1, reduce_to(full, B));
      }
      return;
    }
    case Op::scale: {
      DenseArray d = g;
      for (double& x : d.values()) x *= n.s0;
      give(0, d);
      return;
    }
    case Op::add_scalar:
      give(0, g);
      return;
    case Op::tanh: {
      DenseArray d = g;
      for (std::size_t i = 0; i < d.size(); ++i) d[i] *= 1.0 - n.value[i] * n.value[i];
      give(0, d);
      return;
    }
    case Op::relu: {
      DenseArray d = g;
      for (std::size_t i = 0; i < d.size(); ++i)
        if (!(in(0)[i] > 0.0)) d[i] = 0.0;
      give(0, d);
      return;
    }
    case Op::exp: {
      DenseArray d = g;
      for (std::size_t i = 0; i < d.size(); ++i) d[i] *= n.value[i];
      give(0, d);
      return;
    }
    case Op::log: {
      DenseArray d = g;
      for (std::size_t i = 0; i < d.size(); ++i) d[i] /= in(0)[i];
      give(0, d);
      return;
    }
    case Op::square: {
      DenseArray d = g;
      for (std::size_t i = 0; i < d.size(); ++i) d[i] *= 2.0 * in(0)[i];
      give(0, d);
      return;
    }
    case Op::log_cosh: {
      DenseArray d = g;
      for (std::size_t i = 0; i < d.size(); ++i) d[i] *= std::tanh(in(0)[i]);
      give(0, d);
      return;
    }
    case Op::sum:
      give(0, DenseArray(in(0).rows(), in(0).cols(), g.item()));
      return;
    case Op::mean:
      give(0, DenseArray(in(0).rows(), in(0).cols(), g.item() / static_cast<double>(in(0).size())));
      return;
    case Op::row_sum: {
      DenseArray d(in(0).rows(), in(0).cols());
      for (std::size_t r = 0; r < d.rows(); ++r)
        for (std::size_t c = 0; c < d.cols(); ++c) d(r, c) = g[r];
      give(0, d);
      return;
    }
    case Op::concat_cols: {
      for (std::size_t k = 0; k < n.inputs.size(); ++k) {
        if (!wants(k)) continue;
        const DenseArray& P = in(k);
        DenseArray d(P.rows(), P.cols());
        for (std::size_t r = 0; r < P.rows(); ++r)
          std::copy_n(&g.data()[r * g.cols() + n.ints[k]], P.cols(), &d.data()[r * P.cols()]);
        give(k, d);
      }
      return;
    }
    case Op::slice_cols: {
      const DenseArray& A = in(0);
      DenseArray d(A.rows(), A.cols(), 0.0);
      const std::size_t width = n.ints[1] - n.ints[0];
      for (std::size_t r = 0; r < A.rows(); ++r)
        std::copy_n(&g.data()[r * width], width, &d.data()[r * A.cols() + n.ints[0]]);
      give(0, d);
      return;
    }
    case Op::slice_rows: {
      const DenseArray& A = in(0);
      DenseArray d(A.rows(), A.cols(), 0.0);
      std::copy_n(g.data(), g.size(), &d.data()[n.ints[0] * A.cols()]);
      give(0, d);
      return;
    }
    case Op::gather_rows: {
      const DenseArray& A = in(0);
      DenseArray d(A.rows(), A.cols(), 0.0);
      for (std::size_t i = 0; i < n.ints.size(); ++i)
        for (std::size_t c = 0; c < A.cols(); ++c) d(n.ints[i], c) += g(i, c);
      give(0, d);
      return;
    }
    case Op::group_mean: {
      const DenseArray& A = in(0);
      const std::size_t group = n.ints[0];
      const double inv = 1.0 / static_cast<double>(group);
      DenseArray d(A.rows(), A.cols());
      for (std::size_t r = 0; r < A.rows(); ++r)
        for (std::size_t c = 0; c < A.cols(); ++c) d(r, c) = g(r / group, c) * inv;
      give(0, d);
      return;
    }
    case Op::repeat_rows: {
      const DenseArray& A = in(0);
      const std::size_t times = n.ints[0];
      DenseArray d(A.rows(), A.cols(), 0.0);
      for (std::size_t r = 0; r < g.rows(); ++r)
        for (std::size_t c = 0; c < A.cols(); ++c) d(r / times, c) += g(r, c);
      give(0, d);
      return;
    }
    case Op::reshape:
      give(0, g.reshaped(in(0).rows(), in(0).cols()));
      return;
    case Op::softmax_rows: {
      const DenseArray& P = n.value;
      DenseArray d(P.rows(), P.cols(), 0.0);
      for (std::size_t r = 0; r < P.rows(); ++r) {
        double dot = 0.0;
        for (std::size_t c = 0; c < P.cols(); ++c) dot += P(r, c) * g(r, c);
        for (std::size_t c = 0; c < P.cols(); ++c) d(r, c) = P(r, c) * (g(r, c) - dot);
      }
      give(0, d);
      return;
    }
    case Op::log_softmax_rows: {
      const DenseArray& Z = in(0);
      const DenseArray& mask = n.aux;
      DenseArray d(Z.rows(), Z.cols(), 0.0);
      for (std::size_t r = 0; r < Z.rows(); ++r) {
        double total = 0.0;
        for (std::size_t c = 0; c < Z.cols(); ++c)
          if (mask_on(mask, r * Z.cols() + c)) total += g(r, c);
        for (std::size_t c = 0; c < Z.cols(); ++c)
          if (mask_on(mask, r * Z.cols() + c)) d(r, c) = g(r, c) - std::exp(n.value(r, c)) * total;
      }
      give(0, d);
      return;
    }
    case Op::clip_st: {
      const DenseArray& A = in(0);
      const double lo = n.s0, hi = n.s1, band = n.s2;
      DenseArray d = g;
      for (std::size_t i = 0; i < d.size(); ++i) {
        const double x = A[i];
        if (x > hi + band && d[i] < 0.0) d[i] = 0.0;  // descent would push further up
        if (x < lo - band && d[i] > 0.0) d[i] = 0.0;  // descent would push further down
      }
      give(0, d);
      return;
    }
    case Op::gaussian_log_prob: {
      const DenseArray& X = in(0);
      const DenseArray& M = in(1);
      DenseArray dx(X.rows(), X.cols());
      for (std::size_t r = 0; r < X.rows(); ++r)
        for (std::size_t c = 0; c < X.cols(); ++c) dx(r, c) = -(X(r, c) - M(r, c)) / n.s0 * g[r];
      if (wants(0)) give(0, dx);
      if (wants(1)) {
        for (double& v : dx.values()) v = -v;
        give(1, dx);
      }
      return;
    }
  }
}

DenseArray Gradients::wrt(Var v) const {
  if (v.index < grads_.size() && grads_[v.index].rank() != 0) return grads_[v.index];
  if (v.index >= shapes_.size()) throw UsageError("gradient requested for unknown variable");
  return DenseArray(shapes_[v.index], 0.0);
}

bool Gradients::has(Var v) const { return v.index < grads_.size() && grads_[v.index].rank() != 0; }

}  // namespace hydo
