#include "functa/ad.hpp"

#include <cmath>
#include <string>
#include <unordered_map>
#include <unordered_set>

#include "functa/error.hpp"
#include "vmath.hpp"

namespace functa::ad {

namespace {

thread_local bool g_grad_enabled = true;

std::string shape_str(const Tensor& t) {
  return std::to_string(t.rows()) + "x" + std::to_string(t.cols());
}

void check_same_shape(const Value& a, const Value& b, const char* op) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    throw ContractViolation(std::string(op) + ": shape mismatch " + shape_str(a.data()) + " vs " +
                            shape_str(b.data()));
  }
}

Tensor ones_like(const Tensor& t) { return Tensor::Ones(t.rows(), t.cols()); }

// Post-order (parents first) over nodes that require gradients.
std::vector<Node*> topo_order(Node* root) {
  std::vector<Node*> order;
  std::unordered_set<Node*> visited;
  std::vector<std::pair<Node*, std::size_t>> stack;
  stack.emplace_back(root, 0);
  visited.insert(root);
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->parents.size()) {
      Node* p = node->parents[next++].node();
      if (p != nullptr && p->requires_grad && visited.insert(p).second) {
        stack.emplace_back(p, 0);
      }
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }
  return order;
}

// Reverse sweep shared by grad() and backward(). With `targets`, only nodes
// from which some target is reachable are visited.
std::unordered_map<Node*, Value> propagate(const Value& root, bool create_graph,
                                           const std::unordered_set<Node*>* targets = nullptr) {
  std::unordered_map<Node*, Value> grads;
  auto order = topo_order(root.node());
  std::unordered_set<Node*> needed;
  if (targets != nullptr) {
    for (Node* node : order) {
      bool keep = targets->count(node) > 0;
      for (const auto& p : node->parents) keep = keep || needed.count(p.node()) > 0;
      if (keep) needed.insert(node);
    }
    std::erase_if(order, [&](Node* n) { return needed.count(n) == 0; });
    if (needed.count(root.node()) == 0) return grads;
  }
  GradModeGuard mode(create_graph);
  grads[root.node()] = Value::constant(ones_like(root.data()));
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node* node = *it;
    auto found = grads.find(node);
    if (found == grads.end() || node->parents.empty()) continue;
    if (create_graph && node->first_order_only) {
      throw ContractViolation(std::string("cannot build a differentiable gradient through '") +
                              node->op + "'");
    }
    if (targets != nullptr) {
      bool any_parent = false;
      for (const auto& p : node->parents) any_parent = any_parent || needed.count(p.node()) > 0;
      if (!any_parent) continue;
    }
    const Value g = found->second;
    const auto parent_grads = node->vjp(Value(node->shared_from_this()), g);
    for (std::size_t i = 0; i < node->parents.size(); ++i) {
      const Value& p = node->parents[i];
      if (!p.defined() || !p.requires_grad() || i >= parent_grads.size() ||
          !parent_grads[i].defined()) {
        continue;
      }
      auto [slot, inserted] = grads.try_emplace(p.node(), parent_grads[i]);
      if (!inserted) slot->second = add(slot->second, parent_grads[i]);
    }
  }
  return grads;
}

}  // namespace

// ---------------------------------------------------------------------------
// Value

Value Value::constant(Tensor data) {
  auto n = std::make_shared<Node>();
  n->data = std::move(data);
  return Value(std::move(n));
}

Value Value::scalar(double v) { return constant(Tensor::Constant(1, 1, v)); }

Value Value::zeros(Index rows, Index cols) { return constant(Tensor::Zero(rows, cols)); }

Value Value::full(Index rows, Index cols, double v) {
  return constant(Tensor::Constant(rows, cols, v));
}

Value Value::parameter(Tensor data) {
  auto n = std::make_shared<Node>();
  n->data = std::move(data);
  n->requires_grad = true;
  return Value(std::move(n));
}

const Tensor& Value::data() const {
  require(defined(), "Value: access to undefined value");
  return node_->data;
}

Tensor& Value::mutable_data() {
  require(defined() && node_->parents.empty(), "Value::mutable_data: only leaves are mutable");
  return node_->data;
}

Tensor& Value::grad() {
  require(defined(), "Value: access to undefined value");
  if (node_->grad.rows() != node_->data.rows() || node_->grad.cols() != node_->data.cols()) {
    node_->grad = Tensor::Zero(node_->data.rows(), node_->data.cols());
  }
  return node_->grad;
}

const Tensor& Value::grad() const { return const_cast<Value*>(this)->grad(); }

void Value::zero_grad() { grad().setZero(); }

double Value::item() const {
  require(size() == 1, "Value::item: value is not scalar");
  return data()(0, 0);
}

bool Value::requires_grad() const { return defined() && node_->requires_grad; }

bool Value::is_leaf() const { return defined() && node_->parents.empty(); }

const char* Value::op() const { return defined() ? node_->op : "undefined"; }

// ---------------------------------------------------------------------------
// Grad mode

bool grad_enabled() { return g_grad_enabled; }

GradModeGuard::GradModeGuard(bool enabled) : previous_(g_grad_enabled) {
  g_grad_enabled = enabled;
}

GradModeGuard::~GradModeGuard() { g_grad_enabled = previous_; }

// ---------------------------------------------------------------------------
// Differentiation

std::vector<Value> grad(const Value& root, std::span<const Value> wrt, bool create_graph) {
  require(root.defined() && root.size() == 1, "grad: root must be a scalar");
  std::vector<Value> out;
  out.reserve(wrt.size());
  if (!root.requires_grad()) {
    for (const auto& w : wrt) out.push_back(Value::zeros(w.rows(), w.cols()));
    return out;
  }
  std::unordered_set<Node*> targets;
  for (const auto& w : wrt) targets.insert(w.node());
  const auto grads = propagate(root, create_graph, &targets);
  for (const auto& w : wrt) {
    auto it = grads.find(w.node());
    out.push_back(it == grads.end() ? Value::zeros(w.rows(), w.cols()) : it->second);
  }
  return out;
}

void backward(const Value& root) {
  require(root.defined() && root.size() == 1, "backward: root must be a scalar");
  require(!root.node()->consumed, "backward: graph was already back-propagated");
  if (root.requires_grad()) {
    const auto grads = propagate(root, false);
    for (const auto& [node, g] : grads) {
      if (!node->parents.empty() || !node->requires_grad) continue;
      Value leaf(node->shared_from_this());
      leaf.grad() += g.data();
    }
  }
  root.node()->consumed = true;
}

Value make_node(Tensor data, std::vector<Value> parents, VjpFn vjp, const char* op) {
  auto n = std::make_shared<Node>();
  n->data = std::move(data);
  n->op = op;
  if (g_grad_enabled) {
    bool any = false;
    for (const auto& p : parents) any = any || p.requires_grad();
    if (any) {
      n->requires_grad = true;
      n->parents = std::move(parents);
      n->vjp = std::move(vjp);
    }
  }
  return Value(std::move(n));
}

Value custom_op(std::vector<Value> inputs, Tensor output,
                std::function<std::vector<Tensor>(const Tensor& grad)> vjp, const char* op) {
  Value out = make_node(
      std::move(output), std::move(inputs),
      [vjp = std::move(vjp)](const Value&, const Value& g) {
        auto grads = vjp(g.data());
        std::vector<Value> result;
        result.reserve(grads.size());
        for (auto& t : grads) {
          result.push_back(t.size() == 0 ? Value() : Value::constant(std::move(t)));
        }
        return result;
      },
      op);
  out.node()->first_order_only = true;
  return out;
}

// ---------------------------------------------------------------------------
// Elementwise

Value add(const Value& a, const Value& b) {
  check_same_shape(a, b, "add");
  return make_node(a.data() + b.data(), {a, b},
                   [](const Value&, const Value& g) { return std::vector<Value>{g, g}; }, "add");
}

Value sub(const Value& a, const Value& b) {
  check_same_shape(a, b, "sub");
  return make_node(a.data() - b.data(), {a, b},
                   [](const Value&, const Value& g) { return std::vector<Value>{g, neg(g)}; },
                   "sub");
}

Value mul(const Value& a, const Value& b) {
  check_same_shape(a, b, "mul");
  return make_node(a.data().cwiseProduct(b.data()), {a, b},
                   [a, b](const Value&, const Value& g) {
                     return std::vector<Value>{a.requires_grad() ? mul(g, b) : Value(),
                                               b.requires_grad() ? mul(g, a) : Value()};
                   },
                   "mul");
}

Value div(const Value& a, const Value& b) {
  check_same_shape(a, b, "div");
  return make_node(a.data().cwiseQuotient(b.data()), {a, b},
                   [a, b](const Value& out, const Value& g) {
                     const Value ga = div(g, b);
                     return std::vector<Value>{ga, b.requires_grad() ? neg(mul(ga, out)) : Value()};
                   },
                   "div");
}

Value neg(const Value& a) {
  return make_node(-a.data(), {a},
                   [](const Value&, const Value& g) { return std::vector<Value>{neg(g)}; }, "neg");
}

Value scale(const Value& a, double c) {
  return make_node(a.data() * c, {a},
                   [c](const Value&, const Value& g) { return std::vector<Value>{scale(g, c)}; },
                   "scale");
}

Value add_scalar(const Value& a, double c) {
  return make_node(a.data().array() + c, {a},
                   [](const Value&, const Value& g) { return std::vector<Value>{g}; },
                   "add_scalar");
}

Value square(const Value& a) {
  return make_node(a.data().cwiseAbs2(), {a},
                   [a](const Value&, const Value& g) {
                     return std::vector<Value>{scale(mul(g, a), 2.0)};
                   },
                   "square");
}

Value sin(const Value& a) {
  Tensor out(a.rows(), a.cols());
  vmath::sin(a.data().data(), out.data(), static_cast<std::size_t>(a.size()));
  return make_node(std::move(out), {a},
                   [a](const Value&, const Value& g) { return std::vector<Value>{mul(g, cos(a))}; },
                   "sin");
}

Value cos(const Value& a) {
  Tensor out(a.rows(), a.cols());
  vmath::cos(a.data().data(), out.data(), static_cast<std::size_t>(a.size()));
  return make_node(std::move(out), {a},
                   [a](const Value&, const Value& g) {
                     return std::vector<Value>{neg(mul(g, sin(a)))};
                   },
                   "cos");
}

Value exp(const Value& a) {
  Tensor out(a.rows(), a.cols());
  vmath::exp(a.data().data(), out.data(), static_cast<std::size_t>(a.size()));
  return make_node(std::move(out), {a},
                   [](const Value& out, const Value& g) { return std::vector<Value>{mul(g, out)}; },
                   "exp");
}

Value log(const Value& a) {
  return make_node(a.data().array().log().matrix(), {a},
                   [a](const Value&, const Value& g) { return std::vector<Value>{div(g, a)}; },
                   "log");
}

Value sqrt(const Value& a) {
  return make_node(a.data().array().sqrt().matrix(), {a},
                   [](const Value& out, const Value& g) {
                     return std::vector<Value>{scale(div(g, out), 0.5)};
                   },
                   "sqrt");
}

Value sigmoid(const Value& a) {
  Tensor out = a.data().unaryExpr([](double x) {
    if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
    const double e = std::exp(x);
    return e / (1.0 + e);
  });
  return make_node(std::move(out), {a},
                   [](const Value& out, const Value& g) {
                     // s * (1 - s)
                     return std::vector<Value>{mul(g, mul(out, add_scalar(neg(out), 1.0)))};
                   },
                   "sigmoid");
}

Value softplus(const Value& a) {
  Tensor out = a.data().unaryExpr(
      [](double x) { return std::max(x, 0.0) + std::log1p(std::exp(-std::abs(x))); });
  return make_node(std::move(out), {a},
                   [a](const Value&, const Value& g) { return std::vector<Value>{mul(g, sigmoid(a))}; },
                   "softplus");
}

Value mul_const(const Value& a, const Tensor& c) {
  require(a.rows() == c.rows() && a.cols() == c.cols(), "mul_const: shape mismatch");
  return make_node(a.data().cwiseProduct(c), {a},
                   [c](const Value&, const Value& g) { return std::vector<Value>{mul_const(g, c)}; },
                   "mul_const");
}

Value relu(const Value& a) {
  const Tensor mask = (a.data().array() > 0.0).cast<double>().matrix();
  return mul_const(a, mask);
}

Value silu(const Value& a) { return mul(a, sigmoid(a)); }

Value elu(const Value& a, double alpha) {
  const Tensor pos = (a.data().array() > 0.0).cast<double>().matrix();
  const Tensor negm = Tensor::Ones(a.rows(), a.cols()) - pos;
  // exp is evaluated on the masked input so positive entries never overflow.
  const Value neg_part = mul_const(scale(add_scalar(exp(mul_const(a, negm)), -1.0), alpha), negm);
  return add(mul_const(a, pos), neg_part);
}

Value clip(const Value& a, double lo, double hi) {
  require(lo <= hi, "clip: lo > hi");
  const auto& x = a.data().array();
  const Tensor inside = ((x >= lo) && (x <= hi)).cast<double>().matrix();
  const Tensor fill = ((x < lo).cast<double>() * lo + (x > hi).cast<double>() * hi).matrix();
  return add(mul_const(a, inside), Value::constant(fill));
}

Value min_scalar(const Value& a, double c) {
  const auto& x = a.data().array();
  const Tensor keep = (x < c).cast<double>().matrix();
  const Tensor fill = ((x >= c).cast<double>() * c).matrix();
  return add(mul_const(a, keep), Value::constant(fill));
}

// ---------------------------------------------------------------------------
// Linear algebra and shape

Value matmul(const Value& a, const Value& b) {
  if (a.cols() != b.rows()) {
    throw ContractViolation("matmul: inner dimension mismatch " + shape_str(a.data()) + " * " +
                            shape_str(b.data()));
  }
  Tensor out(a.rows(), b.cols());
  out.noalias() = a.data() * b.data();
  return make_node(std::move(out), {a, b},
                   [a, b](const Value&, const Value& g) {
                     return std::vector<Value>{a.requires_grad() ? matmul(g, transpose(b)) : Value(),
                                               b.requires_grad() ? matmul(transpose(a), g) : Value()};
                   },
                   "matmul");
}

Value transpose(const Value& a) {
  return make_node(a.data().transpose(), {a},
                   [](const Value&, const Value& g) { return std::vector<Value>{transpose(g)}; },
                   "transpose");
}

Value sum(const Value& a) {
  const Index r = a.rows(), c = a.cols();
  return make_node(Tensor::Constant(1, 1, a.data().sum()), {a},
                   [r, c](const Value&, const Value& g) {
                     return std::vector<Value>{expand(g, r, c)};
                   },
                   "sum");
}

Value mean(const Value& a) {
  require(a.size() > 0, "mean: empty tensor");
  return scale(sum(a), 1.0 / static_cast<double>(a.size()));
}

Value expand(const Value& s, Index rows, Index cols) {
  require(s.size() == 1, "expand: input must be 1x1");
  return make_node(Tensor::Constant(rows, cols, s.item()), {s},
                   [](const Value&, const Value& g) { return std::vector<Value>{sum(g)}; },
                   "expand");
}

Value sum_rows(const Value& a) {
  const Index r = a.rows();
  return make_node(a.data().colwise().sum(), {a},
                   [r](const Value&, const Value& g) {
                     return std::vector<Value>{repeat_rows(g, r)};
                   },
                   "sum_rows");
}

Value repeat_rows(const Value& a, Index rows) {
  require(a.rows() == 1, "repeat_rows: input must be a row");
  return make_node(a.data().replicate(rows, 1), {a},
                   [](const Value&, const Value& g) { return std::vector<Value>{sum_rows(g)}; },
                   "repeat_rows");
}

Value sum_cols(const Value& a) {
  const Index c = a.cols();
  return make_node(a.data().rowwise().sum(), {a},
                   [c](const Value&, const Value& g) {
                     return std::vector<Value>{repeat_cols(g, c)};
                   },
                   "sum_cols");
}

Value repeat_cols(const Value& a, Index cols) {
  require(a.cols() == 1, "repeat_cols: input must be a column");
  return make_node(a.data().replicate(1, cols), {a},
                   [](const Value&, const Value& g) { return std::vector<Value>{sum_cols(g)}; },
                   "repeat_cols");
}

Value add_row(const Value& x, const Value& row) {
  require(row.rows() == 1 && row.cols() == x.cols(), "add_row: row must be 1 x cols(x)");
  Tensor out = x.data();
  out.rowwise() += row.data().row(0);
  return make_node(std::move(out), {x, row},
                   [row](const Value&, const Value& g) {
                     return std::vector<Value>{g, row.requires_grad() ? sum_rows(g) : Value()};
                   },
                   "add_row");
}

Value mul_row(const Value& x, const Value& row) {
  require(row.rows() == 1 && row.cols() == x.cols(), "mul_row: row must be 1 x cols(x)");
  Tensor out = (x.data().array().rowwise() * row.data().row(0).array()).matrix();
  return make_node(std::move(out), {x, row},
                   [x, row](const Value&, const Value& g) {
                     return std::vector<Value>{mul_row(g, row),
                                               row.requires_grad() ? sum_rows(mul(g, x)) : Value()};
                   },
                   "mul_row");
}

Value slice_cols(const Value& a, Index start, Index count) {
  require(start >= 0 && count >= 0 && start + count <= a.cols(), "slice_cols: out of range");
  const Index total = a.cols();
  return make_node(a.data().middleCols(start, count), {a},
                   [start, total](const Value&, const Value& g) {
                     return std::vector<Value>{pad_cols(g, start, total)};
                   },
                   "slice_cols");
}

Value pad_cols(const Value& a, Index start, Index total) {
  require(start >= 0 && start + a.cols() <= total, "pad_cols: out of range");
  Tensor out = Tensor::Zero(a.rows(), total);
  out.middleCols(start, a.cols()) = a.data();
  const Index count = a.cols();
  return make_node(std::move(out), {a},
                   [start, count](const Value&, const Value& g) {
                     return std::vector<Value>{slice_cols(g, start, count)};
                   },
                   "pad_cols");
}

Value slice_rows(const Value& a, Index start, Index count) {
  require(start >= 0 && count >= 0 && start + count <= a.rows(), "slice_rows: out of range");
  const Index total = a.rows();
  return make_node(a.data().middleRows(start, count), {a},
                   [start, total](const Value&, const Value& g) {
                     return std::vector<Value>{pad_rows(g, start, total)};
                   },
                   "slice_rows");
}

Value pad_rows(const Value& a, Index start, Index total) {
  require(start >= 0 && start + a.rows() <= total, "pad_rows: out of range");
  Tensor out = Tensor::Zero(total, a.cols());
  out.middleRows(start, a.rows()) = a.data();
  const Index count = a.rows();
  return make_node(std::move(out), {a},
                   [start, count](const Value&, const Value& g) {
                     return std::vector<Value>{slice_rows(g, start, count)};
                   },
                   "pad_rows");
}

Value concat_cols(const std::vector<Value>& parts) {
  require(!parts.empty(), "concat_cols: no inputs");
  const Index rows = parts.front().rows();
  Index total = 0;
  for (const auto& p : parts) {
    require(p.rows() == rows, "concat_cols: row count mismatch");
    total += p.cols();
  }
  Tensor out(rows, total);
  std::vector<Index> offsets;
  Index off = 0;
  for (const auto& p : parts) {
    out.middleCols(off, p.cols()) = p.data();
    offsets.push_back(off);
    off += p.cols();
  }
  std::vector<Index> widths;
  for (const auto& p : parts) widths.push_back(p.cols());
  return make_node(std::move(out), parts,
                   [offsets, widths](const Value&, const Value& g) {
                     std::vector<Value> r;
                     for (std::size_t i = 0; i < offsets.size(); ++i) {
                       r.push_back(slice_cols(g, offsets[i], widths[i]));
                     }
                     return r;
                   },
                   "concat_cols");
}

Value concat_rows(const std::vector<Value>& parts) {
  require(!parts.empty(), "concat_rows: no inputs");
  const Index cols = parts.front().cols();
  Index total = 0;
  for (const auto& p : parts) {
    require(p.cols() == cols, "concat_rows: column count mismatch");
    total += p.rows();
  }
  Tensor out(total, cols);
  std::vector<Index> offsets, heights;
  Index off = 0;
  for (const auto& p : parts) {
    out.middleRows(off, p.rows()) = p.data();
    offsets.push_back(off);
    heights.push_back(p.rows());
    off += p.rows();
  }
  return make_node(std::move(out), parts,
                   [offsets, heights](const Value&, const Value& g) {
                     std::vector<Value> r;
                     for (std::size_t i = 0; i < offsets.size(); ++i) {
                       r.push_back(slice_rows(g, offsets[i], heights[i]));
                     }
                     return r;
                   },
                   "concat_rows");
}

Value reshape(const Value& a, Index rows, Index cols) {
  require(rows * cols == a.size(), "reshape: element count mismatch");
  using RowMajor = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
  const RowMajor src = a.data();
  Tensor out = Eigen::Map<const RowMajor>(src.data(), rows, cols);
  const Index r0 = a.rows(), c0 = a.cols();
  return make_node(std::move(out), {a},
                   [r0, c0](const Value&, const Value& g) {
                     return std::vector<Value>{reshape(g, r0, c0)};
                   },
                   "reshape");
}

Value gather_rows(const Value& a, const std::vector<int>& index) {
  Tensor out(static_cast<Index>(index.size()), a.cols());
  for (std::size_t i = 0; i < index.size(); ++i) {
    require(index[i] >= 0 && index[i] < a.rows(), "gather_rows: index out of range");
    out.row(static_cast<Index>(i)) = a.data().row(index[i]);
  }
  const Index rows = a.rows();
  return make_node(std::move(out), {a},
                   [index, rows](const Value&, const Value& g) {
                     return std::vector<Value>{scatter_rows(g, index, rows)};
                   },
                   "gather_rows");
}

Value scatter_rows(const Value& a, const std::vector<int>& index, Index rows) {
  require(static_cast<Index>(index.size()) == a.rows(), "scatter_rows: index size mismatch");
  Tensor out = Tensor::Zero(rows, a.cols());
  for (std::size_t i = 0; i < index.size(); ++i) {
    require(index[i] >= 0 && index[i] < rows, "scatter_rows: index out of range");
    out.row(index[i]) += a.data().row(static_cast<Index>(i));
  }
  return make_node(std::move(out), {a},
                   [index](const Value&, const Value& g) {
                     return std::vector<Value>{gather_rows(g, index)};
                   },
                   "scatter_rows");
}

Value cumsum_cols(const Value& a) {
  Tensor out = a.data();
  for (Index j = 1; j < out.cols(); ++j) out.col(j) += out.col(j - 1);
  return make_node(std::move(out), {a},
                   [](const Value&, const Value& g) { return std::vector<Value>{rcumsum_cols(g)}; },
                   "cumsum_cols");
}

Value rcumsum_cols(const Value& a) {
  Tensor out = a.data();
  for (Index j = out.cols() - 2; j >= 0; --j) out.col(j) += out.col(j + 1);
  return make_node(std::move(out), {a},
                   [](const Value&, const Value& g) { return std::vector<Value>{cumsum_cols(g)}; },
                   "rcumsum_cols");
}

Value cumprod_cols(const Value& a) {
  Tensor out = a.data();
  for (Index j = 1; j < out.cols(); ++j) out.col(j) = out.col(j).cwiseProduct(out.col(j - 1));
  return make_node(std::move(out), {a},
                   [a](const Value& out, const Value& g) {
                     // d out_j / d a_i = out_j / a_i for j >= i.
                     return std::vector<Value>{div(rcumsum_cols(mul(g, out)), a)};
                   },
                   "cumprod_cols");
}

Value logsumexp_rows(const Value& a) {
  const Tensor& x = a.data();
  Tensor out(x.rows(), 1);
  for (Index i = 0; i < x.rows(); ++i) {
    const double m = x.row(i).maxCoeff();
    out(i, 0) = m + std::log((x.row(i).array() - m).exp().sum());
  }
  const Index k = x.cols();
  return make_node(std::move(out), {a},
                   [a, k](const Value& out, const Value& g) {
                     const Value softmax = exp(sub(a, repeat_cols(out, k)));
                     return std::vector<Value>{mul(repeat_cols(g, k), softmax)};
                   },
                   "logsumexp_rows");
}

}  // namespace functa::ad
