#pragma once

// Reverse-mode automatic differentiation over dense rank-2 tensors.
//
// Every operation records its parents and a vector-Jacobian product (VJP)
// expressed in terms of other differentiable operations. Running grad() with
// create_graph=true therefore yields gradients that are themselves graph
// nodes, which is how unrolled inner-loop updates are differentiated twice.
//
// Graphs are built per thread (grad mode is thread-local) and never mutate
// shared leaves, so independent graphs may be evaluated concurrently.

#include <Eigen/Core>
#include <functional>
#include <memory>
#include <span>
#include <vector>

namespace functa::ad {

using Tensor = Eigen::MatrixXd;
using Index = Eigen::Index;

struct Node;

class Value {
 public:
  Value() = default;
  explicit Value(std::shared_ptr<Node> node) : node_(std::move(node)) {}

  /// Leaf that does not require gradients.
  static Value constant(Tensor data);
  static Value scalar(double v);
  static Value zeros(Index rows, Index cols);
  static Value full(Index rows, Index cols, double v);
  /// Leaf that requires gradients (a trainable parameter).
  static Value parameter(Tensor data);

  bool defined() const { return static_cast<bool>(node_); }
  const Tensor& data() const;
  /// In-place access for optimiser updates; only valid on leaves.
  Tensor& mutable_data();
  /// Accumulator written by backward(). Same shape as data().
  Tensor& grad();
  const Tensor& grad() const;
  void zero_grad();

  Index rows() const { return data().rows(); }
  Index cols() const { return data().cols(); }
  Index size() const { return data().size(); }
  double item() const;
  bool requires_grad() const;
  bool is_leaf() const;
  const char* op() const;

  /// Same data, cut from the graph.
  Value detach() const { return constant(data()); }

  Node* node() const { return node_.get(); }
  const std::shared_ptr<Node>& shared() const { return node_; }

 private:
  std::shared_ptr<Node> node_;
};

/// Vector-Jacobian product: given the node's output and upstream gradient,
/// returns one gradient per parent (an undefined Value means "no gradient").
using VjpFn = std::function<std::vector<Value>(const Value& out, const Value& grad)>;

struct Node : std::enable_shared_from_this<Node> {
  Tensor data;
  Tensor grad;
  std::vector<Value> parents;
  VjpFn vjp;
  const char* op = "leaf";
  bool requires_grad = false;
  bool first_order_only = false;
  bool consumed = false;
};

// ---------------------------------------------------------------------------
// Grad mode

bool grad_enabled();

/// Scoped override of the thread-local recording flag.
class GradModeGuard {
 public:
  explicit GradModeGuard(bool enabled);
  ~GradModeGuard();
  GradModeGuard(const GradModeGuard&) = delete;
  GradModeGuard& operator=(const GradModeGuard&) = delete;

 private:
  bool previous_;
};

class NoGradGuard : public GradModeGuard {
 public:
  NoGradGuard() : GradModeGuard(false) {}
};

// ---------------------------------------------------------------------------
// Differentiation

/// Gradients of a scalar `root` with respect to `wrt`. Does not touch the
/// leaves' accumulators. With create_graph the returned values are
/// differentiable functions of the graph's leaves.
std::vector<Value> grad(const Value& root, std::span<const Value> wrt, bool create_graph = false);

/// Accumulates d(root)/d(leaf) into every reachable leaf's grad(). The root
/// must be scalar and can be back-propagated only once.
void backward(const Value& root);

/// Builds a node. Records parents only when grad mode is on and at least
/// one parent requires gradients.
Value make_node(Tensor data, std::vector<Value> parents, VjpFn vjp, const char* op);

/// Node whose VJP is computed numerically (no further differentiation).
/// `vjp` receives the upstream gradient and returns one tensor per input
/// (an empty tensor means "no gradient").
Value custom_op(std::vector<Value> inputs, Tensor output,
                std::function<std::vector<Tensor>(const Tensor& grad)> vjp, const char* op);

// ---------------------------------------------------------------------------
// Elementwise

Value add(const Value& a, const Value& b);
Value sub(const Value& a, const Value& b);
Value mul(const Value& a, const Value& b);
Value div(const Value& a, const Value& b);
Value neg(const Value& a);
Value scale(const Value& a, double c);
Value add_scalar(const Value& a, double c);
Value square(const Value& a);
Value sin(const Value& a);
Value cos(const Value& a);
Value exp(const Value& a);
Value log(const Value& a);
Value sqrt(const Value& a);
Value sigmoid(const Value& a);
Value softplus(const Value& a);
Value relu(const Value& a);
Value silu(const Value& a);
Value elu(const Value& a, double alpha);
/// Clamp to [lo, hi]; gradient is zero where clamped.
Value clip(const Value& a, double lo, double hi);
/// Elementwise minimum with a constant.
Value min_scalar(const Value& a, double c);
/// Multiplication by a constant 0/1 (or arbitrary) mask tensor.
Value mul_const(const Value& a, const Tensor& c);

// ---------------------------------------------------------------------------
// Linear algebra and shape

Value matmul(const Value& a, const Value& b);
Value transpose(const Value& a);
/// Sum of all entries, 1x1.
Value sum(const Value& a);
Value mean(const Value& a);
/// 1x1 -> rows x cols.
Value expand(const Value& s, Index rows, Index cols);
/// rows x cols -> 1 x cols.
Value sum_rows(const Value& a);
/// 1 x cols -> rows x cols.
Value repeat_rows(const Value& a, Index rows);
/// rows x cols -> rows x 1.
Value sum_cols(const Value& a);
/// rows x 1 -> rows x cols.
Value repeat_cols(const Value& a, Index cols);
/// x (n x k) + row (1 x k) broadcast over rows.
Value add_row(const Value& x, const Value& row);
Value mul_row(const Value& x, const Value& row);
Value slice_cols(const Value& a, Index start, Index count);
Value slice_rows(const Value& a, Index start, Index count);
/// Embeds `a` into zeros of width `total` starting at column `start`.
Value pad_cols(const Value& a, Index start, Index total);
Value pad_rows(const Value& a, Index start, Index total);
Value concat_cols(const std::vector<Value>& parts);
Value concat_rows(const std::vector<Value>& parts);
/// Row-major reshape.
Value reshape(const Value& a, Index rows, Index cols);
/// Rows selected by index (duplicates allowed).
Value gather_rows(const Value& a, const std::vector<int>& index);
/// Adjoint of gather_rows: scatters-and-adds rows into `rows` outputs.
Value scatter_rows(const Value& a, const std::vector<int>& index, Index rows);
/// Running sum/product along each row, left to right.
Value cumsum_cols(const Value& a);
/// Running sum along each row, right to left.
Value rcumsum_cols(const Value& a);
/// Requires strictly positive entries wherever gradients are taken.
Value cumprod_cols(const Value& a);
/// log(sum(exp(row))) for each row, rows x 1.
Value logsumexp_rows(const Value& a);

// Operators
inline Value operator+(const Value& a, const Value& b) { return add(a, b); }
inline Value operator-(const Value& a, const Value& b) { return sub(a, b); }
inline Value operator*(const Value& a, const Value& b) { return mul(a, b); }
inline Value operator/(const Value& a, const Value& b) { return div(a, b); }
inline Value operator-(const Value& a) { return neg(a); }
inline Value operator*(double c, const Value& a) { return scale(a, c); }
inline Value operator*(const Value& a, double c) { return scale(a, c); }
inline Value operator+(const Value& a, double c) { return add_scalar(a, c); }
inline Value operator-(const Value& a, double c) { return add_scalar(a, -c); }

}  // namespace functa::ad
