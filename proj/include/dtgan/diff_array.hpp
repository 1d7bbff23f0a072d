#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <limits>
#include <memory>
#include <stdexcept>
#include <string>
#include <unordered_set>
#include <utility>
#include <vector>

namespace dtgan {

using Shape = std::vector<int>;

inline int shape_numel(const Shape& s) {
  int n = 1;
  for (int d : s) n *= d;
  return n;
}

inline std::string shape_str(const Shape& s) {
  std::string out = "[";
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (i) out += " x ";
    out += std::to_string(s[i]);
  }
  return out + "]";
}

inline void check_shape_positive(const Shape& s, const char* op) {
  for (int d : s) {
    if (d <= 0) {
      throw std::invalid_argument(std::string(op) +
                                  ": non-positive dimension in shape " +
                                  shape_str(s));
    }
  }
}

// Dense 64-bit real array participating in reverse-mode differentiation.
// A DiffArray is a value-semantic handle onto a shared graph node; ops build
// fresh nodes that keep their operands alive, and backward() walks the
// recorded graph once in reverse topological order.
//
// Values are treated as immutable once an op has consumed them; only leaf
// values (parameters) are updated in place by the optimizers, between graph
// constructions. Gradients accumulate until zero_grad().
class DiffArray {
 public:
  struct Node {
    Shape shape;
    std::vector<double> val;
    std::vector<double> grad;  // always same size as val, zero-initialized
    bool requires_grad = false;
    std::vector<std::shared_ptr<Node>> parents;
    // Pulls this node's grad into the parents' grads. Null for leaves.
    std::function<void(Node&)> backprop;

    int numel() const { return static_cast<int>(val.size()); }
  };

  DiffArray() = default;

  static DiffArray from(Shape shape, std::vector<double> values,
                        bool requires_grad = false) {
    check_shape_positive(shape, "DiffArray::from");
    if (shape_numel(shape) != static_cast<int>(values.size())) {
      throw std::invalid_argument("DiffArray::from: shape " +
                                  shape_str(shape) + " wants " +
                                  std::to_string(shape_numel(shape)) +
                                  " values, got " +
                                  std::to_string(values.size()));
    }
    auto n = std::make_shared<Node>();
    n->shape = std::move(shape);
    n->val = std::move(values);
    n->grad.assign(n->val.size(), 0.0);
    n->requires_grad = requires_grad;
    return DiffArray(std::move(n));
  }

  static DiffArray full(Shape shape, double v, bool requires_grad = false) {
    check_shape_positive(shape, "DiffArray::full");
    std::vector<double> vals(static_cast<std::size_t>(shape_numel(shape)), v);
    return from(std::move(shape), std::move(vals), requires_grad);
  }

  static DiffArray zeros(Shape shape, bool requires_grad = false) {
    return full(std::move(shape), 0.0, requires_grad);
  }

  static DiffArray scalar(double v, bool requires_grad = false) {
    return from({1}, {v}, requires_grad);
  }

  bool defined() const { return static_cast<bool>(n_); }
  const Shape& shape() const { return n_->shape; }
  int rank() const { return static_cast<int>(n_->shape.size()); }
  int dim(int axis) const { return n_->shape[static_cast<std::size_t>(axis)]; }
  int size() const { return n_->numel(); }
  bool requires_grad() const { return n_->requires_grad; }
  void set_requires_grad(bool b) { n_->requires_grad = b; }

  const std::vector<double>& values() const { return n_->val; }
  std::vector<double>& mutable_values() { return n_->val; }
  const std::vector<double>& grad() const { return n_->grad; }
  std::vector<double>& mutable_grad() { return n_->grad; }

  double item() const {
    if (size() != 1) {
      throw std::invalid_argument("DiffArray::item: array of shape " +
                                  shape_str(shape()) + " is not scalar");
    }
    return n_->val[0];
  }

  void zero_grad() { std::fill(n_->grad.begin(), n_->grad.end(), 0.0); }

  // Leaf copy of the current values, cut off from the graph.
  DiffArray detach() const { return from(n_->shape, n_->val, false); }

  // Reverse-mode accumulation from a scalar. Gradients of every node that
  // requires grad and is reachable from this one get += d(this)/d(node).
  void backward() const {
    if (size() != 1) {
      throw std::invalid_argument(
          "backward: loss must be scalar, got shape " + shape_str(shape()));
    }
    if (!n_->requires_grad) return;  // nothing reachable needs gradients

    // Iterative post-order DFS: parents first, root last.
    std::vector<Node*> order;
    std::unordered_set<Node*> visited;
    std::vector<std::pair<Node*, std::size_t>> stack;
    stack.emplace_back(n_.get(), 0);
    visited.insert(n_.get());
    while (!stack.empty()) {
      auto& [node, next] = stack.back();
      if (next < node->parents.size()) {
        Node* p = node->parents[next++].get();
        if (p->requires_grad && !visited.count(p)) {
          visited.insert(p);
          stack.emplace_back(p, 0);
        }
      } else {
        order.push_back(node);
        stack.pop_back();
      }
    }

    n_->grad[0] += 1.0;
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
      Node* node = *it;
      if (node->backprop) node->backprop(*node);
    }
  }

  std::shared_ptr<Node> node() const { return n_; }

  // Builder used by the op implementations.
  static DiffArray make_op(Shape shape, std::vector<double> values,
                           std::vector<std::shared_ptr<Node>> parents,
                           std::function<void(Node&)> backprop) {
    auto n = std::make_shared<Node>();
    n->shape = std::move(shape);
    n->val = std::move(values);
    n->grad.assign(n->val.size(), 0.0);
    for (const auto& p : parents) {
      if (p->requires_grad) {
        n->requires_grad = true;
        break;
      }
    }
    if (n->requires_grad) {
      n->parents = std::move(parents);
      n->backprop = std::move(backprop);
    }
    return DiffArray(std::move(n));
  }

 private:
  explicit DiffArray(std::shared_ptr<Node> n) : n_(std::move(n)) {}
  std::shared_ptr<Node> n_;
};

namespace detail {

// Row-major strides of a shape.
inline std::vector<int> strides_of(const Shape& s) {
  std::vector<int> st(s.size());
  int acc = 1;
  for (int i = static_cast<int>(s.size()) - 1; i >= 0; --i) {
    st[static_cast<std::size_t>(i)] = acc;
    acc *= s[static_cast<std::size_t>(i)];
  }
  return st;
}

// Broadcast plan between two shapes, numpy rules. Strides are per output
// dimension and zero along broadcast dimensions.
struct BroadcastPlan {
  Shape out;
  std::vector<int> a_stride;
  std::vector<int> b_stride;
};

inline BroadcastPlan broadcast_plan(const Shape& a, const Shape& b,
                                    const char* op) {
  const std::size_t ra = a.size(), rb = b.size();
  const std::size_t r = std::max(ra, rb);
  BroadcastPlan plan;
  plan.out.resize(r);
  Shape ap(r, 1), bp(r, 1);
  std::copy(a.begin(), a.end(), ap.begin() + static_cast<long>(r - ra));
  std::copy(b.begin(), b.end(), bp.begin() + static_cast<long>(r - rb));
  for (std::size_t i = 0; i < r; ++i) {
    if (ap[i] == bp[i] || ap[i] == 1 || bp[i] == 1) {
      plan.out[i] = std::max(ap[i], bp[i]);
    } else {
      throw std::invalid_argument(std::string(op) +
                                  ": shapes not broadcastable: " +
                                  shape_str(a) + " vs " + shape_str(b));
    }
  }
  auto ast = strides_of(ap), bst = strides_of(bp);
  plan.a_stride.resize(r);
  plan.b_stride.resize(r);
  for (std::size_t i = 0; i < r; ++i) {
    plan.a_stride[i] = (ap[i] == 1 && plan.out[i] > 1) ? 0 : ast[i];
    plan.b_stride[i] = (bp[i] == 1 && plan.out[i] > 1) ? 0 : bst[i];
  }
  return plan;
}

// Calls fn(out_flat, a_flat, b_flat) for every element of the broadcast
// output, in row-major order.
template <class Fn>
inline void for_each_broadcast(const BroadcastPlan& plan, Fn&& fn) {
  const std::size_t r = plan.out.size();
  const int n = shape_numel(plan.out);
  std::vector<int> idx(r, 0);
  int ai = 0, bi = 0;
  for (int flat = 0; flat < n; ++flat) {
    fn(flat, ai, bi);
    for (int d = static_cast<int>(r) - 1; d >= 0; --d) {
      auto du = static_cast<std::size_t>(d);
      ++idx[du];
      ai += plan.a_stride[du];
      bi += plan.b_stride[du];
      if (idx[du] < plan.out[du]) break;
      ai -= plan.a_stride[du] * plan.out[du];
      bi -= plan.b_stride[du] * plan.out[du];
      idx[du] = 0;
    }
  }
}

inline void require_same_numel_shape(const DiffArray& a, const DiffArray& b,
                                     const char* op) {
  if (a.shape() != b.shape()) {
    throw std::invalid_argument(std::string(op) + ": shape mismatch " +
                                shape_str(a.shape()) + " vs " +
                                shape_str(b.shape()));
  }
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Elementwise binary ops with broadcasting
// ---------------------------------------------------------------------------

namespace detail {

// dfa/dfb give the partials w.r.t. the two operands at one element.
template <class FwdFn, class DaFn, class DbFn>
inline DiffArray broadcast_binary(const char* name, const DiffArray& a,
                                  const DiffArray& b, FwdFn fwd, DaFn dfa,
                                  DbFn dfb) {
  auto plan = broadcast_plan(a.shape(), b.shape(), name);
  std::vector<double> out(static_cast<std::size_t>(shape_numel(plan.out)));
  const auto& av = a.values();
  const auto& bv = b.values();
  for_each_broadcast(plan, [&](int o, int ai, int bi) {
    out[static_cast<std::size_t>(o)] = fwd(av[static_cast<std::size_t>(ai)],
                                           bv[static_cast<std::size_t>(bi)]);
  });
  auto backprop = [plan, dfa, dfb](DiffArray::Node& self) {
    auto& pa = *self.parents[0];
    auto& pb = *self.parents[1];
    for_each_broadcast(plan, [&](int o, int ai, int bi) {
      const double go = self.grad[static_cast<std::size_t>(o)];
      const double x = pa.val[static_cast<std::size_t>(ai)];
      const double y = pb.val[static_cast<std::size_t>(bi)];
      if (pa.requires_grad) pa.grad[static_cast<std::size_t>(ai)] += dfa(x, y) * go;
      if (pb.requires_grad) pb.grad[static_cast<std::size_t>(bi)] += dfb(x, y) * go;
    });
  };
  return DiffArray::make_op(plan.out, std::move(out), {a.node(), b.node()},
                            std::move(backprop));
}

}  // namespace detail

inline DiffArray add(const DiffArray& a, const DiffArray& b) {
  return detail::broadcast_binary(
      "add", a, b, [](double x, double y) { return x + y; },
      [](double, double) { return 1.0; }, [](double, double) { return 1.0; });
}

inline DiffArray sub(const DiffArray& a, const DiffArray& b) {
  return detail::broadcast_binary(
      "sub", a, b, [](double x, double y) { return x - y; },
      [](double, double) { return 1.0; }, [](double, double) { return -1.0; });
}

inline DiffArray mul(const DiffArray& a, const DiffArray& b) {
  return detail::broadcast_binary(
      "mul", a, b, [](double x, double y) { return x * y; },
      [](double, double y) { return y; }, [](double x, double) { return x; });
}

inline DiffArray div(const DiffArray& a, const DiffArray& b) {
  return detail::broadcast_binary(
      "div", a, b, [](double x, double y) { return x / y; },
      [](double, double y) { return 1.0 / y; },
      [](double x, double y) { return -x / (y * y); });
}

// ---------------------------------------------------------------------------
// Elementwise unary ops
// ---------------------------------------------------------------------------

namespace detail {

// dval(x, y) gives df/dx at one element given input x and output y.
template <class FwdFn, class DFn>
inline DiffArray unary(const char* /*name*/, const DiffArray& a, FwdFn fwd,
                       DFn dval) {
  const auto& av = a.values();
  std::vector<double> out(av.size());
  for (std::size_t i = 0; i < av.size(); ++i) out[i] = fwd(av[i]);
  auto backprop = [dval](DiffArray::Node& self) {
    auto& p = *self.parents[0];
    if (!p.requires_grad) return;
    for (std::size_t i = 0; i < self.val.size(); ++i) {
      p.grad[i] += dval(p.val[i], self.val[i]) * self.grad[i];
    }
  };
  return DiffArray::make_op(a.shape(), std::move(out), {a.node()},
                            std::move(backprop));
}

}  // namespace detail

inline DiffArray scale(const DiffArray& a, double c) {
  return detail::unary(
      "scale", a, [c](double x) { return c * x; },
      [c](double, double) { return c; });
}

inline DiffArray neg(const DiffArray& a) { return scale(a, -1.0); }

inline DiffArray add_scalar(const DiffArray& a, double c) {
  return detail::unary(
      "add_scalar", a, [c](double x) { return x + c; },
      [](double, double) { return 1.0; });
}

inline DiffArray relu(const DiffArray& a) {
  return detail::unary(
      "relu", a, [](double x) { return x > 0.0 ? x : 0.0; },
      [](double x, double) { return x > 0.0 ? 1.0 : 0.0; });
}

inline DiffArray leaky_relu(const DiffArray& a, double slope = 0.2) {
  return detail::unary(
      "leaky_relu", a,
      [slope](double x) { return x >= 0.0 ? x : slope * x; },
      [slope](double x, double) { return x >= 0.0 ? 1.0 : slope; });
}

inline DiffArray sigmoid(const DiffArray& a) {
  return detail::unary(
      "sigmoid", a, [](double x) { return 1.0 / (1.0 + std::exp(-x)); },
      [](double, double y) { return y * (1.0 - y); });
}

inline DiffArray tanh(const DiffArray& a) {
  return detail::unary(
      "tanh", a, [](double x) { return std::tanh(x); },
      [](double, double y) { return 1.0 - y * y; });
}

inline DiffArray exp(const DiffArray& a) {
  return detail::unary(
      "exp", a, [](double x) { return std::exp(x); },
      [](double, double y) { return y; });
}

inline DiffArray log(const DiffArray& a) {
  return detail::unary(
      "log", a, [](double x) { return std::log(x); },
      [](double x, double) { return 1.0 / x; });
}

inline DiffArray sqrt(const DiffArray& a) {
  return detail::unary(
      "sqrt", a, [](double x) { return std::sqrt(x); },
      [](double, double y) { return 0.5 / y; });
}

// ---------------------------------------------------------------------------
// Matrix multiply
// ---------------------------------------------------------------------------

inline DiffArray matmul(const DiffArray& a, const DiffArray& b) {
  if (a.rank() != 2 || b.rank() != 2 || a.dim(1) != b.dim(0)) {
    throw std::invalid_argument("matmul: incompatible shapes " +
                                shape_str(a.shape()) + " and " +
                                shape_str(b.shape()));
  }
  const int m = a.dim(0), k = a.dim(1), n = b.dim(1);
  std::vector<double> out(static_cast<std::size_t>(m * n), 0.0);
  const auto& av = a.values();
  const auto& bv = b.values();
  for (int i = 0; i < m; ++i) {
    for (int p = 0; p < k; ++p) {
      const double x = av[static_cast<std::size_t>(i * k + p)];
      if (x == 0.0) continue;
      for (int j = 0; j < n; ++j) {
        out[static_cast<std::size_t>(i * n + j)] +=
            x * bv[static_cast<std::size_t>(p * n + j)];
      }
    }
  }
  auto backprop = [m, k, n](DiffArray::Node& self) {
    auto& pa = *self.parents[0];
    auto& pb = *self.parents[1];
    // dA = dC B^T, dB = A^T dC
    if (pa.requires_grad) {
      for (int i = 0; i < m; ++i)
        for (int j = 0; j < n; ++j) {
          const double g = self.grad[static_cast<std::size_t>(i * n + j)];
          if (g == 0.0) continue;
          for (int p = 0; p < k; ++p)
            pa.grad[static_cast<std::size_t>(i * k + p)] +=
                g * pb.val[static_cast<std::size_t>(p * n + j)];
        }
    }
    if (pb.requires_grad) {
      for (int i = 0; i < m; ++i)
        for (int p = 0; p < k; ++p) {
          const double x = pa.val[static_cast<std::size_t>(i * k + p)];
          if (x == 0.0) continue;
          for (int j = 0; j < n; ++j)
            pb.grad[static_cast<std::size_t>(p * n + j)] +=
                x * self.grad[static_cast<std::size_t>(i * n + j)];
        }
    }
  };
  return DiffArray::make_op({m, n}, std::move(out), {a.node(), b.node()},
                            std::move(backprop));
}

// ---------------------------------------------------------------------------
// Shape ops: reshape, permute, slice, concat, stack
// ---------------------------------------------------------------------------

inline DiffArray reshape(const DiffArray& a, Shape new_shape) {
  check_shape_positive(new_shape, "reshape");
  if (shape_numel(new_shape) != a.size()) {
    throw std::invalid_argument("reshape: cannot view " +
                                shape_str(a.shape()) + " as " +
                                shape_str(new_shape));
  }
  auto backprop = [](DiffArray::Node& self) {
    auto& p = *self.parents[0];
    if (!p.requires_grad) return;
    for (std::size_t i = 0; i < self.grad.size(); ++i) p.grad[i] += self.grad[i];
  };
  return DiffArray::make_op(std::move(new_shape), a.values(), {a.node()},
                            std::move(backprop));
}

inline DiffArray permute(const DiffArray& a, const std::vector<int>& axes) {
  const auto r = static_cast<std::size_t>(a.rank());
  if (axes.size() != r) {
    throw std::invalid_argument("permute: axes count " +
                                std::to_string(axes.size()) +
                                " does not match rank of " +
                                shape_str(a.shape()));
  }
  std::vector<bool> seen(r, false);
  Shape out_shape(r);
  for (std::size_t i = 0; i < r; ++i) {
    int ax = axes[i];
    if (ax < 0 || ax >= static_cast<int>(r) || seen[static_cast<std::size_t>(ax)]) {
      throw std::invalid_argument("permute: invalid axes for " +
                                  shape_str(a.shape()));
    }
    seen[static_cast<std::size_t>(ax)] = true;
    out_shape[i] = a.dim(ax);
  }
  const auto in_strides = detail::strides_of(a.shape());
  // For each output element, the matching input flat index.
  const int n = a.size();
  std::vector<int> src(static_cast<std::size_t>(n));
  std::vector<int> idx(r, 0);
  for (int flat = 0; flat < n; ++flat) {
    int s = 0;
    for (std::size_t i = 0; i < r; ++i)
      s += idx[i] * in_strides[static_cast<std::size_t>(axes[i])];
    src[static_cast<std::size_t>(flat)] = s;
    for (int d = static_cast<int>(r) - 1; d >= 0; --d) {
      auto du = static_cast<std::size_t>(d);
      if (++idx[du] < out_shape[du]) break;
      idx[du] = 0;
    }
  }
  const auto& av = a.values();
  std::vector<double> out(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i)
    out[static_cast<std::size_t>(i)] = av[static_cast<std::size_t>(src[static_cast<std::size_t>(i)])];
  auto backprop = [src](DiffArray::Node& self) {
    auto& p = *self.parents[0];
    if (!p.requires_grad) return;
    for (std::size_t i = 0; i < self.grad.size(); ++i)
      p.grad[static_cast<std::size_t>(src[i])] += self.grad[i];
  };
  return DiffArray::make_op(std::move(out_shape), std::move(out), {a.node()},
                            std::move(backprop));
}

inline DiffArray slice(const DiffArray& a, int axis, int start, int len) {
  if (axis < 0 || axis >= a.rank()) {
    throw std::invalid_argument("slice: axis " + std::to_string(axis) +
                                " out of range for " + shape_str(a.shape()));
  }
  if (start < 0 || len <= 0 || start + len > a.dim(axis)) {
    throw std::invalid_argument(
        "slice: range [" + std::to_string(start) + ", " +
        std::to_string(start + len) + ") invalid for axis " +
        std::to_string(axis) + " of " + shape_str(a.shape()));
  }
  Shape out_shape = a.shape();
  out_shape[static_cast<std::size_t>(axis)] = len;
  // outer x len x inner layout
  int outer = 1, inner = 1;
  for (int i = 0; i < axis; ++i) outer *= a.dim(i);
  for (int i = axis + 1; i < a.rank(); ++i) inner *= a.dim(i);
  const int in_len = a.dim(axis);
  const auto& av = a.values();
  std::vector<double> out(static_cast<std::size_t>(outer * len * inner));
  for (int o = 0; o < outer; ++o)
    for (int l = 0; l < len; ++l)
      std::copy_n(av.begin() + (o * in_len + start + l) * inner, inner,
                  out.begin() + (o * len + l) * inner);
  auto backprop = [outer, len, inner, in_len, start](DiffArray::Node& self) {
    auto& p = *self.parents[0];
    if (!p.requires_grad) return;
    for (int o = 0; o < outer; ++o)
      for (int l = 0; l < len; ++l) {
        const auto dst = static_cast<std::size_t>((o * in_len + start + l) * inner);
        const auto srcb = static_cast<std::size_t>((o * len + l) * inner);
        for (int i = 0; i < inner; ++i)
          p.grad[dst + static_cast<std::size_t>(i)] +=
              self.grad[srcb + static_cast<std::size_t>(i)];
      }
  };
  return DiffArray::make_op(std::move(out_shape), std::move(out), {a.node()},
                            std::move(backprop));
}

inline DiffArray concat(const std::vector<DiffArray>& parts, int axis) {
  if (parts.empty()) throw std::invalid_argument("concat: no operands");
  const auto& first = parts.front();
  if (axis < 0 || axis >= first.rank()) {
    throw std::invalid_argument("concat: axis " + std::to_string(axis) +
                                " out of range for " +
                                shape_str(first.shape()));
  }
  Shape out_shape = first.shape();
  int total = first.dim(axis);
  for (std::size_t k = 1; k < parts.size(); ++k) {
    Shape s = parts[k].shape();
    if (static_cast<int>(s.size()) != first.rank()) {
      throw std::invalid_argument("concat: rank mismatch " +
                                  shape_str(first.shape()) + " vs " +
                                  shape_str(s));
    }
    for (int i = 0; i < first.rank(); ++i) {
      if (i != axis && s[static_cast<std::size_t>(i)] != first.dim(i)) {
        throw std::invalid_argument("concat: shape mismatch " +
                                    shape_str(first.shape()) + " vs " +
                                    shape_str(s));
      }
    }
    total += parts[k].dim(axis);
  }
  out_shape[static_cast<std::size_t>(axis)] = total;

  int outer = 1, inner = 1;
  for (int i = 0; i < axis; ++i) outer *= first.dim(i);
  for (int i = axis + 1; i < first.rank(); ++i) inner *= first.dim(i);

  std::vector<double> out(static_cast<std::size_t>(outer * total * inner));
  std::vector<int> lens;
  lens.reserve(parts.size());
  int off = 0;
  for (const auto& p : parts) {
    const int len = p.dim(axis);
    lens.push_back(len);
    const auto& pv = p.values();
    for (int o = 0; o < outer; ++o)
      std::copy_n(pv.begin() + o * len * inner, len * inner,
                  out.begin() + (o * total + off) * inner);
    off += len;
  }
  std::vector<std::shared_ptr<DiffArray::Node>> nodes;
  nodes.reserve(parts.size());
  for (const auto& p : parts) nodes.push_back(p.node());
  auto backprop = [outer, inner, total, lens](DiffArray::Node& self) {
    int off2 = 0;
    for (std::size_t k = 0; k < self.parents.size(); ++k) {
      auto& p = *self.parents[k];
      const int len = lens[k];
      if (p.requires_grad) {
        for (int o = 0; o < outer; ++o) {
          const auto srcb = static_cast<std::size_t>((o * total + off2) * inner);
          const auto dstb = static_cast<std::size_t>(o * len * inner);
          for (int i = 0; i < len * inner; ++i)
            p.grad[dstb + static_cast<std::size_t>(i)] +=
                self.grad[srcb + static_cast<std::size_t>(i)];
        }
      }
      off2 += len;
    }
  };
  return DiffArray::make_op(std::move(out_shape), std::move(out),
                            std::move(nodes), std::move(backprop));
}

inline DiffArray concat(const DiffArray& a, const DiffArray& b, int axis) {
  return concat(std::vector<DiffArray>{a, b}, axis);
}

// Stack equally-shaped arrays along a new leading axis.
inline DiffArray stack0(const std::vector<DiffArray>& parts) {
  if (parts.empty()) throw std::invalid_argument("stack0: no operands");
  const Shape& s = parts.front().shape();
  for (const auto& p : parts) detail::require_same_numel_shape(parts.front(), p, "stack0");
  const int inner = shape_numel(s);
  Shape out_shape;
  out_shape.push_back(static_cast<int>(parts.size()));
  out_shape.insert(out_shape.end(), s.begin(), s.end());
  std::vector<double> out;
  out.reserve(static_cast<std::size_t>(inner) * parts.size());
  for (const auto& p : parts)
    out.insert(out.end(), p.values().begin(), p.values().end());
  std::vector<std::shared_ptr<DiffArray::Node>> nodes;
  nodes.reserve(parts.size());
  for (const auto& p : parts) nodes.push_back(p.node());
  auto backprop = [inner](DiffArray::Node& self) {
    for (std::size_t k = 0; k < self.parents.size(); ++k) {
      auto& p = *self.parents[k];
      if (!p.requires_grad) continue;
      const std::size_t base = k * static_cast<std::size_t>(inner);
      for (int i = 0; i < inner; ++i)
        p.grad[static_cast<std::size_t>(i)] += self.grad[base + static_cast<std::size_t>(i)];
    }
  };
  return DiffArray::make_op(std::move(out_shape), std::move(out),
                            std::move(nodes), std::move(backprop));
}

// ---------------------------------------------------------------------------
// Reductions
// ---------------------------------------------------------------------------

inline DiffArray sum(const DiffArray& a) {
  double s = 0.0;
  for (double v : a.values()) s += v;
  auto backprop = [](DiffArray::Node& self) {
    auto& p = *self.parents[0];
    if (!p.requires_grad) return;
    const double g = self.grad[0];
    for (auto& pg : p.grad) pg += g;
  };
  return DiffArray::make_op({1}, {s}, {a.node()}, std::move(backprop));
}

inline DiffArray mean(const DiffArray& a) {
  const double inv = 1.0 / a.size();
  double s = 0.0;
  for (double v : a.values()) s += v;
  auto backprop = [inv](DiffArray::Node& self) {
    auto& p = *self.parents[0];
    if (!p.requires_grad) return;
    const double g = self.grad[0] * inv;
    for (auto& pg : p.grad) pg += g;
  };
  return DiffArray::make_op({1}, {s * inv}, {a.node()}, std::move(backprop));
}

inline DiffArray sum_axis(const DiffArray& a, int axis) {
  if (axis < 0 || axis >= a.rank()) {
    throw std::invalid_argument("sum_axis: axis " + std::to_string(axis) +
                                " out of range for " + shape_str(a.shape()));
  }
  if (a.rank() == 1) return sum(a);
  Shape out_shape;
  for (int i = 0; i < a.rank(); ++i)
    if (i != axis) out_shape.push_back(a.dim(i));
  int outer = 1, inner = 1;
  for (int i = 0; i < axis; ++i) outer *= a.dim(i);
  for (int i = axis + 1; i < a.rank(); ++i) inner *= a.dim(i);
  const int len = a.dim(axis);
  const auto& av = a.values();
  std::vector<double> out(static_cast<std::size_t>(outer * inner), 0.0);
  for (int o = 0; o < outer; ++o)
    for (int l = 0; l < len; ++l)
      for (int i = 0; i < inner; ++i)
        out[static_cast<std::size_t>(o * inner + i)] +=
            av[static_cast<std::size_t>((o * len + l) * inner + i)];
  auto backprop = [outer, inner, len](DiffArray::Node& self) {
    auto& p = *self.parents[0];
    if (!p.requires_grad) return;
    for (int o = 0; o < outer; ++o)
      for (int l = 0; l < len; ++l)
        for (int i = 0; i < inner; ++i)
          p.grad[static_cast<std::size_t>((o * len + l) * inner + i)] +=
              self.grad[static_cast<std::size_t>(o * inner + i)];
  };
  return DiffArray::make_op(std::move(out_shape), std::move(out), {a.node()},
                            std::move(backprop));
}

// Minimum along the leading axis; gradient is routed to the first argmin.
inline DiffArray min_axis0(const DiffArray& a) {
  if (a.rank() < 2) {
    throw std::invalid_argument("min_axis0: need rank >= 2, got " +
                                shape_str(a.shape()));
  }
  const int k = a.dim(0);
  const int inner = a.size() / k;
  Shape out_shape(a.shape().begin() + 1, a.shape().end());
  const auto& av = a.values();
  std::vector<double> out(static_cast<std::size_t>(inner));
  std::vector<int> arg(static_cast<std::size_t>(inner), 0);
  for (int i = 0; i < inner; ++i) {
    double best = av[static_cast<std::size_t>(i)];
    int bestk = 0;
    for (int kk = 1; kk < k; ++kk) {
      const double v = av[static_cast<std::size_t>(kk * inner + i)];
      if (v < best) {
        best = v;
        bestk = kk;
      }
    }
    out[static_cast<std::size_t>(i)] = best;
    arg[static_cast<std::size_t>(i)] = bestk;
  }
  auto backprop = [arg, inner](DiffArray::Node& self) {
    auto& p = *self.parents[0];
    if (!p.requires_grad) return;
    for (int i = 0; i < inner; ++i)
      p.grad[static_cast<std::size_t>(arg[static_cast<std::size_t>(i)] * inner + i)] +=
          self.grad[static_cast<std::size_t>(i)];
  };
  return DiffArray::make_op(std::move(out_shape), std::move(out), {a.node()},
                            std::move(backprop));
}

// ---------------------------------------------------------------------------
// Softmax over one axis
// ---------------------------------------------------------------------------

inline DiffArray softmax(const DiffArray& a, int axis) {
  if (axis < 0 || axis >= a.rank()) {
    throw std::invalid_argument("softmax: axis " + std::to_string(axis) +
                                " out of range for " + shape_str(a.shape()));
  }
  int outer = 1, inner = 1;
  for (int i = 0; i < axis; ++i) outer *= a.dim(i);
  for (int i = axis + 1; i < a.rank(); ++i) inner *= a.dim(i);
  const int len = a.dim(axis);
  const auto& av = a.values();
  std::vector<double> out(av.size());
  for (int o = 0; o < outer; ++o) {
    for (int i = 0; i < inner; ++i) {
      double m = -std::numeric_limits<double>::infinity();
      for (int l = 0; l < len; ++l)
        m = std::max(m, av[static_cast<std::size_t>((o * len + l) * inner + i)]);
      double z = 0.0;
      for (int l = 0; l < len; ++l) {
        const auto ix = static_cast<std::size_t>((o * len + l) * inner + i);
        out[ix] = std::exp(av[ix] - m);
        z += out[ix];
      }
      for (int l = 0; l < len; ++l)
        out[static_cast<std::size_t>((o * len + l) * inner + i)] /= z;
    }
  }
  auto backprop = [outer, inner, len](DiffArray::Node& self) {
    auto& p = *self.parents[0];
    if (!p.requires_grad) return;
    for (int o = 0; o < outer; ++o)
      for (int i = 0; i < inner; ++i) {
        double dot = 0.0;
        for (int l = 0; l < len; ++l) {
          const auto ix = static_cast<std::size_t>((o * len + l) * inner + i);
          dot += self.grad[ix] * self.val[ix];
        }
        for (int l = 0; l < len; ++l) {
          const auto ix = static_cast<std::size_t>((o * len + l) * inner + i);
          p.grad[ix] += self.val[ix] * (self.grad[ix] - dot);
        }
      }
  };
  return DiffArray::make_op(a.shape(), std::move(out), {a.node()},
                            std::move(backprop));
}

// ---------------------------------------------------------------------------
// 1-D convolution along the trailing axis
// ---------------------------------------------------------------------------

// x: [B, C_in, L], w: [C_out, C_in, K], bias: [C_out].
// out[b, co, t] = bias[co] + sum_{ci,k} w[co,ci,k] * xpad[b, ci, t + k*dilation]
// where xpad is x zero-padded by (pad_left, pad_right) along the last axis.
inline DiffArray conv1d(const DiffArray& x, const DiffArray& w,
                        const DiffArray& bias, int dilation = 1,
                        int pad_left = 0, int pad_right = 0) {
  if (x.rank() != 3 || w.rank() != 3 || bias.rank() != 1) {
    throw std::invalid_argument("conv1d: want x[B,C,L], w[Co,Ci,K], b[Co]; got " +
                                shape_str(x.shape()) + ", " +
                                shape_str(w.shape()) + ", " +
                                shape_str(bias.shape()));
  }
  const int B = x.dim(0), Ci = x.dim(1), L = x.dim(2);
  const int Co = w.dim(0), K = w.dim(2);
  if (w.dim(1) != Ci || bias.dim(0) != Co) {
    throw std::invalid_argument("conv1d: channel mismatch between x " +
                                shape_str(x.shape()) + ", w " +
                                shape_str(w.shape()) + ", b " +
                                shape_str(bias.shape()));
  }
  if (dilation < 1 || pad_left < 0 || pad_right < 0) {
    throw std::invalid_argument("conv1d: bad dilation/padding");
  }
  const int Lp = L + pad_left + pad_right;
  const int Lo = Lp - dilation * (K - 1);
  if (Lo < 1) {
    throw std::invalid_argument(
        "conv1d: kernel " + std::to_string(K) + " (dilation " +
        std::to_string(dilation) + ") does not fit input of length " +
        std::to_string(L) + " with padding");
  }
  const auto& xv = x.values();
  const auto& wv = w.values();
  const auto& bv = bias.values();
  std::vector<double> out(static_cast<std::size_t>(B * Co * Lo));
  auto xat = [&](int b, int ci, int tp) -> double {
    const int t = tp - pad_left;
    if (t < 0 || t >= L) return 0.0;
    return xv[static_cast<std::size_t>((b * Ci + ci) * L + t)];
  };
  for (int b = 0; b < B; ++b)
    for (int co = 0; co < Co; ++co)
      for (int t = 0; t < Lo; ++t) {
        double acc = bv[static_cast<std::size_t>(co)];
        for (int ci = 0; ci < Ci; ++ci)
          for (int k = 0; k < K; ++k)
            acc += wv[static_cast<std::size_t>((co * Ci + ci) * K + k)] *
                   xat(b, ci, t + k * dilation);
        out[static_cast<std::size_t>((b * Co + co) * Lo + t)] = acc;
      }
  auto backprop = [B, Ci, L, Co, K, Lo, dilation, pad_left](DiffArray::Node& self) {
    auto& px = *self.parents[0];
    auto& pw = *self.parents[1];
    auto& pb = *self.parents[2];
    for (int b = 0; b < B; ++b)
      for (int co = 0; co < Co; ++co)
        for (int t = 0; t < Lo; ++t) {
          const double g = self.grad[static_cast<std::size_t>((b * Co + co) * Lo + t)];
          if (g == 0.0) continue;
          if (pb.requires_grad) pb.grad[static_cast<std::size_t>(co)] += g;
          for (int ci = 0; ci < Ci; ++ci)
            for (int k = 0; k < K; ++k) {
              const int tin = t + k * dilation - pad_left;
              if (tin < 0 || tin >= L) continue;
              const auto xix = static_cast<std::size_t>((b * Ci + ci) * L + tin);
              const auto wix = static_cast<std::size_t>((co * Ci + ci) * K + k);
              if (pw.requires_grad) pw.grad[wix] += g * px.val[xix];
              if (px.requires_grad) px.grad[xix] += g * pw.val[wix];
            }
        }
  };
  return DiffArray::make_op({B, Co, Lo}, std::move(out),
                            {x.node(), w.node(), bias.node()},
                            std::move(backprop));
}

}  // namespace dtgan
