#pragma once

// Dense row-major tensors with define-by-run reverse-mode differentiation.
//
// A Tensor is a cheap handle onto a shared graph node. Operations record
// their parents and a backward closure while gradient recording is enabled;
// calling backward() on a scalar walks the recorded graph in reverse
// topological order. Leaf tensors (parameters) accumulate gradients across
// backward calls until zero_grad(); interior nodes are reset on each call.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <memory>
#include <numeric>
#include <span>
#include <sstream>
#include <string>
#include <unordered_set>
#include <utility>
#include <vector>

#include "ccs/errors.hpp"

namespace ccs {

using Shape = std::vector<std::size_t>;

inline std::size_t shape_size(const Shape& s) {
  return std::accumulate(s.begin(), s.end(), std::size_t{1}, std::multiplies<>());
}

inline std::string shape_str(const Shape& s) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < s.size(); ++i) os << (i ? "," : "") << s[i];
  os << ']';
  return os.str();
}

namespace detail {
inline bool& grad_enabled_flag() {
  thread_local bool enabled = true;
  return enabled;
}
}  // namespace detail

inline bool grad_enabled() { return detail::grad_enabled_flag(); }

/// Disables graph recording for the current thread while in scope.
class NoGradGuard {
 public:
  NoGradGuard() : prev_(detail::grad_enabled_flag()) { detail::grad_enabled_flag() = false; }
  ~NoGradGuard() { detail::grad_enabled_flag() = prev_; }
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool prev_;
};

template <typename T>
struct Node {
  Shape shape;
  std::vector<T> value;
  std::vector<T> grad;
  bool requires_grad = false;
  bool is_leaf = true;
  std::vector<std::shared_ptr<Node>> parents;
  std::function<void(Node&)> backward;

  void ensure_grad() {
    if (grad.size() != value.size()) grad.assign(value.size(), T(0));
  }
};

template <typename T>
class Tensor {
 public:
  using Scalar = T;
  using NodePtr = std::shared_ptr<Node<T>>;
  using BackwardFn = std::function<void(Node<T>&)>;

  Tensor() = default;

  static Tensor constant(Shape shape, std::vector<T> values) {
    if (shape_size(shape) != values.size()) {
      throw DimensionError("tensor shape " + shape_str(shape) + " does not match " +
                           std::to_string(values.size()) + " values");
    }
    auto n = std::make_shared<Node<T>>();
    n->shape = std::move(shape);
    n->value = std::move(values);
    return Tensor(std::move(n));
  }

  static Tensor zeros(Shape shape) {
    const auto sz = shape_size(shape);
    return constant(std::move(shape), std::vector<T>(sz, T(0)));
  }

  static Tensor filled(Shape shape, T v) {
    const auto sz = shape_size(shape);
    return constant(std::move(shape), std::vector<T>(sz, v));
  }

  static Tensor scalar(T v) { return constant({1}, {v}); }

  static Tensor vector(std::vector<T> values) {
    const auto n = values.size();
    return constant({n}, std::move(values));
  }

  /// Trainable leaf: participates in differentiation and accumulates grads.
  static Tensor parameter(Shape shape, std::vector<T> values) {
    Tensor t = constant(std::move(shape), std::move(values));
    t.node_->requires_grad = true;
    t.node_->ensure_grad();
    return t;
  }

  /// Builds the result node of an operation. Records the graph edge only if
  /// recording is enabled and some parent requires a gradient.
  static Tensor from_op(Shape shape, std::vector<T> values, std::vector<Tensor> parents,
                        BackwardFn backward) {
    Tensor out = constant(std::move(shape), std::move(values));
    if (!grad_enabled()) return out;
    bool any = false;
    for (const auto& p : parents) any = any || p.requires_grad();
    if (!any) return out;
    out.node_->requires_grad = true;
    out.node_->is_leaf = false;
    out.node_->parents.reserve(parents.size());
    for (auto& p : parents) out.node_->parents.push_back(p.node_);
    out.node_->backward = std::move(backward);
    return out;
  }

  bool defined() const { return static_cast<bool>(node_); }
  const Shape& shape() const { return node_->shape; }
  std::size_t rank() const { return node_->shape.size(); }
  std::size_t size() const { return node_->value.size(); }
  std::size_t dim(std::size_t i) const { return node_->shape.at(i); }
  bool requires_grad() const { return node_ && node_->requires_grad; }
  bool is_leaf() const { return node_->is_leaf; }

  std::span<const T> data() const& { return node_->value; }
  // A temporary's values are copied so range-for over them stays valid.
  std::vector<T> data() && { return node_->value; }
  /// Direct write access; intended for parameter initialization and updates.
  std::span<T> mutable_data() { return node_->value; }
  std::span<const T> grad() const { return node_->grad; }
  std::span<T> mutable_grad() {
    node_->ensure_grad();
    return node_->grad;
  }
  bool has_grad() const { return node_->grad.size() == node_->value.size(); }

  T item() const {
    if (size() != 1) throw UsageError("item() on tensor of shape " + shape_str(shape()));
    return node_->value[0];
  }
  T operator[](std::size_t i) const { return node_->value.at(i); }
  T at(std::size_t r, std::size_t c) const {
    return node_->value.at(r * node_->shape.at(1) + c);
  }

  void zero_grad() {
    if (node_->requires_grad) node_->grad.assign(node_->value.size(), T(0));
  }

  /// Detached copy of the values (no graph edge).
  Tensor detach() const { return constant(shape(), node_->value); }

  /// Reverse-mode sweep from this scalar.
  void backward() const {
    if (size() != 1) {
      throw UsageError("backward() requires a scalar, got shape " + shape_str(shape()));
    }
    if (!node_->requires_grad) return;
    std::vector<Node<T>*> order;
    std::unordered_set<Node<T>*> seen;
    // Iterative post-order DFS.
    std::vector<std::pair<Node<T>*, std::size_t>> stack{{node_.get(), 0}};
    seen.insert(node_.get());
    while (!stack.empty()) {
      auto& [n, next] = stack.back();
      if (next < n->parents.size()) {
        Node<T>* p = n->parents[next++].get();
        if (p->requires_grad && seen.insert(p).second) stack.push_back({p, 0});
      } else {
        order.push_back(n);
        stack.pop_back();
      }
    }
    for (Node<T>* n : order) {
      if (!n->is_leaf) n->grad.assign(n->value.size(), T(0));
    }
    node_->ensure_grad();
    node_->grad[0] += T(1);
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
      Node<T>* n = *it;
      if (!n->is_leaf && n->backward) n->backward(*n);
    }
  }

  const NodePtr& node() const { return node_; }

 private:
  explicit Tensor(NodePtr n) : node_(std::move(n)) {}
  NodePtr node_;
};

namespace detail {

template <typename T>
using RowMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using ConstMap = Eigen::Map<const RowMat<T>>;
template <typename T>
using MutMap = Eigen::Map<RowMat<T>>;

template <typename T>
inline std::vector<T>* parent_grad(Node<T>& self, std::size_t i) {
  auto& p = *self.parents[i];
  if (!p.requires_grad) return nullptr;
  p.ensure_grad();
  return &p.grad;
}

template <typename T>
inline const std::vector<T>& parent_value(const Node<T>& self, std::size_t i) {
  return self.parents[i]->value;
}

inline void require_same_shape(const Shape& a, const Shape& b, const char* op) {
  if (a != b) {
    throw DimensionError(std::string(op) + ": shape mismatch " + shape_str(a) + " vs " +
                         shape_str(b));
  }
}

inline std::size_t normalize_axis(long axis, std::size_t rank) {
  const long r = static_cast<long>(rank);
  if (axis < 0) axis += r;
  if (axis < 0 || axis >= r) {
    throw DimensionError("axis " + std::to_string(axis) + " out of range for rank " +
                         std::to_string(rank));
  }
  return static_cast<std::size_t>(axis);
}

// outer * axis_len * inner decomposition of a shape around one axis.
struct AxisSplit {
  std::size_t outer = 1, len = 1, inner = 1;
};

inline AxisSplit split_axis(const Shape& s, std::size_t axis) {
  AxisSplit a;
  for (std::size_t i = 0; i < axis; ++i) a.outer *= s[i];
  a.len = s[axis];
  for (std::size_t i = axis + 1; i < s.size(); ++i) a.inner *= s[i];
  return a;
}

template <typename T, typename Fwd, typename Dfdx>
Tensor<T> unary(const Tensor<T>& x, Fwd fwd, Dfdx dfdx) {
  std::vector<T> out(x.size());
  const auto in = x.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = fwd(in[i]);
  return Tensor<T>::from_op(x.shape(), std::move(out), {x}, [dfdx](Node<T>& self) {
    auto* g = parent_grad(self, 0);
    if (!g) return;
    const auto& xv = parent_value(self, 0);
    for (std::size_t i = 0; i < self.grad.size(); ++i) {
      (*g)[i] += self.grad[i] * dfdx(xv[i], self.value[i]);
    }
  });
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Linear algebra

/// [m,k] x [k,n] -> [m,n]; [m,k] x [k] -> [m].
template <typename T>
Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b) {
  if (a.rank() != 2 || (b.rank() != 1 && b.rank() != 2) || a.dim(1) != b.dim(0)) {
    throw DimensionError("matmul: incompatible shapes " + shape_str(a.shape()) + " and " +
                         shape_str(b.shape()));
  }
  const std::size_t m = a.dim(0), k = a.dim(1), n = b.rank() == 2 ? b.dim(1) : 1;
  std::vector<T> out(m * n);
  using detail::ConstMap;
  using detail::MutMap;
  MutMap<T>(out.data(), m, n).noalias() =
      ConstMap<T>(a.data().data(), m, k) * ConstMap<T>(b.data().data(), k, n);
  Shape shape = b.rank() == 2 ? Shape{m, n} : Shape{m};
  return Tensor<T>::from_op(std::move(shape), std::move(out), {a, b},
                            [m, k, n](Node<T>& self) {
    ConstMap<T> dc(self.grad.data(), m, n);
    if (auto* ga = detail::parent_grad(self, 0)) {
      MutMap<T>(ga->data(), m, k).noalias() +=
          dc * ConstMap<T>(detail::parent_value(self, 1).data(), k, n).transpose();
    }
    if (auto* gb = detail::parent_grad(self, 1)) {
      MutMap<T>(gb->data(), k, n).noalias() +=
          ConstMap<T>(detail::parent_value(self, 0).data(), m, k).transpose() * dc;
    }
  });
}

template <typename T>
Tensor<T> transpose(const Tensor<T>& a) {
  if (a.rank() != 2) throw DimensionError("transpose: expected rank 2, got " + shape_str(a.shape()));
  const std::size_t r = a.dim(0), c = a.dim(1);
  std::vector<T> out(r * c);
  const auto in = a.data();
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < c; ++j) out[j * r + i] = in[i * c + j];
  return Tensor<T>::from_op({c, r}, std::move(out), {a}, [r, c](Node<T>& self) {
    if (auto* g = detail::parent_grad(self, 0)) {
      for (std::size_t i = 0; i < r; ++i)
        for (std::size_t j = 0; j < c; ++j) (*g)[i * c + j] += self.grad[j * r + i];
    }
  });
}

// ---------------------------------------------------------------------------
// Elementwise arithmetic. Either operand may be a single-element tensor, which
// is broadcast over the other.

namespace detail {

template <typename T, typename F, typename DA, typename DB>
Tensor<T> binary(const Tensor<T>& a, const Tensor<T>& b, const char* name, F f, DA da, DB db) {
  const bool bcast_a = a.size() == 1 && b.size() != 1;
  const bool bcast_b = b.size() == 1 && a.size() != 1;
  if (!bcast_a && !bcast_b) require_same_shape(a.shape(), b.shape(), name);
  const Shape shape = bcast_a ? b.shape() : a.shape();
  const std::size_t n = shape_size(shape);
  std::vector<T> out(n);
  const auto av = a.data();
  const auto bv = b.data();
  for (std::size_t i = 0; i < n; ++i) out[i] = f(av[bcast_a ? 0 : i], bv[bcast_b ? 0 : i]);
  return Tensor<T>::from_op(shape, std::move(out), {a, b},
                            [bcast_a, bcast_b, da, db](Node<T>& self) {
    const auto& av = parent_value(self, 0);
    const auto& bv = parent_value(self, 1);
    auto* ga = parent_grad(self, 0);
    auto* gb = parent_grad(self, 1);
    for (std::size_t i = 0; i < self.grad.size(); ++i) {
      const T x = av[bcast_a ? 0 : i], y = bv[bcast_b ? 0 : i];
      if (ga) (*ga)[bcast_a ? 0 : i] += self.grad[i] * da(x, y);
      if (gb) (*gb)[bcast_b ? 0 : i] += self.grad[i] * db(x, y);
    }
  });
}

}  // namespace detail

template <typename T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b) {
  return detail::binary(
      a, b, "add", [](T x, T y) { return x + y; }, [](T, T) { return T(1); },
      [](T, T) { return T(1); });
}

template <typename T>
Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b) {
  return detail::binary(
      a, b, "sub", [](T x, T y) { return x - y; }, [](T, T) { return T(1); },
      [](T, T) { return T(-1); });
}

template <typename T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b) {
  return detail::binary(
      a, b, "mul", [](T x, T y) { return x * y; }, [](T, T y) { return y; },
      [](T x, T) { return x; });
}

template <typename T>
Tensor<T> operator+(const Tensor<T>& a, const Tensor<T>& b) { return add(a, b); }
template <typename T>
Tensor<T> operator-(const Tensor<T>& a, const Tensor<T>& b) { return sub(a, b); }
template <typename T>
Tensor<T> operator*(const Tensor<T>& a, const Tensor<T>& b) { return mul(a, b); }

template <typename T>
Tensor<T> scale(const Tensor<T>& x, T c) {
  return detail::unary(x, [c](T v) { return c * v; }, [c](T, T) { return c; });
}

template <typename T>
Tensor<T> add_scalar(const Tensor<T>& x, T c) {
  return detail::unary(x, [c](T v) { return v + c; }, [](T, T) { return T(1); });
}

/// 1 - x
template <typename T>
Tensor<T> one_minus(const Tensor<T>& x) {
  return detail::unary(x, [](T v) { return T(1) - v; }, [](T, T) { return T(-1); });
}

template <typename T>
Tensor<T> sigmoid(const Tensor<T>& x) {
  return detail::unary(
      x,
      [](T v) {
        // Branching keeps exp() from overflowing for large |v|.
        if (v >= 0) return T(1) / (T(1) + std::exp(-v));
        const T e = std::exp(v);
        return e / (T(1) + e);
      },
      [](T, T y) { return y * (T(1) - y); });
}

template <typename T>
Tensor<T> tanh(const Tensor<T>& x) {
  return detail::unary(x, [](T v) { return std::tanh(v); }, [](T, T y) { return T(1) - y * y; });
}

template <typename T>
Tensor<T> exp(const Tensor<T>& x) {
  return detail::unary(x, [](T v) { return std::exp(v); }, [](T, T y) { return y; });
}

/// log(max(x, floor)); the gradient is zero where the floor is active.
template <typename T>
Tensor<T> log(const Tensor<T>& x, T floor = T(0)) {
  return detail::unary(
      x, [floor](T v) { return std::log(std::max(v, floor)); },
      [floor](T v, T) { return v > floor ? T(1) / v : T(0); });
}

// ---------------------------------------------------------------------------
// Reductions

template <typename T>
Tensor<T> sum(const Tensor<T>& x) {
  const auto v = x.data();
  const T s = std::accumulate(v.begin(), v.end(), T(0));
  return Tensor<T>::from_op({1}, {s}, {x}, [](Node<T>& self) {
    if (auto* g = detail::parent_grad(self, 0)) {
      for (auto& gi : *g) gi += self.grad[0];
    }
  });
}

/// Sum over the leading axis: [n, d...] -> [d...].
template <typename T>
Tensor<T> sum_rows(const Tensor<T>& x) {
  if (x.rank() < 2) throw DimensionError("sum_rows expects rank >= 2, got " + shape_str(x.shape()));
  const std::size_t n = x.dim(0), inner = x.size() / n;
  Shape shape(x.shape().begin() + 1, x.shape().end());
  std::vector<T> out(inner, T(0));
  const auto in = x.data();
  for (std::size_t r = 0; r < n; ++r)
    for (std::size_t i = 0; i < inner; ++i) out[i] += in[r * inner + i];
  return Tensor<T>::from_op(std::move(shape), std::move(out), {x}, [n, inner](Node<T>& self) {
    if (auto* g = detail::parent_grad(self, 0)) {
      for (std::size_t r = 0; r < n; ++r)
        for (std::size_t i = 0; i < inner; ++i) (*g)[r * inner + i] += self.grad[i];
    }
  });
}

template <typename T>
Tensor<T> mean(const Tensor<T>& x) {
  if (x.size() == 0) throw DimensionError("mean of empty tensor");
  return scale(sum(x), T(1) / static_cast<T>(x.size()));
}

template <typename T>
Tensor<T> dot(const Tensor<T>& a, const Tensor<T>& b) {
  detail::require_same_shape(a.shape(), b.shape(), "dot");
  const auto av = a.data();
  const auto bv = b.data();
  T s = 0;
  for (std::size_t i = 0; i < av.size(); ++i) s += av[i] * bv[i];
  return Tensor<T>::from_op({1}, {s}, {a, b}, [](Node<T>& self) {
    const T g = self.grad[0];
    if (auto* ga = detail::parent_grad(self, 0)) {
      const auto& bv = detail::parent_value(self, 1);
      for (std::size_t i = 0; i < bv.size(); ++i) (*ga)[i] += g * bv[i];
    }
    if (auto* gb = detail::parent_grad(self, 1)) {
      const auto& av = detail::parent_value(self, 0);
      for (std::size_t i = 0; i < av.size(); ++i) (*gb)[i] += g * av[i];
    }
  });
}

// ---------------------------------------------------------------------------
// Normalization

/// Numerically stable softmax along `axis` (max-subtracted).
template <typename T>
Tensor<T> softmax(const Tensor<T>& x, long axis = -1) {
  if (x.rank() == 0) throw DimensionError("softmax of rank-0 tensor");
  const auto ax = detail::normalize_axis(axis, x.rank());
  const auto sp = detail::split_axis(x.shape(), ax);
  if (sp.len == 0) throw DimensionError("softmax over empty axis");
  std::vector<T> out(x.size());
  const auto in = x.data();
  for (std::size_t o = 0; o < sp.outer; ++o) {
    for (std::size_t i = 0; i < sp.inner; ++i) {
      const std::size_t base = o * sp.len * sp.inner + i;
      T mx = in[base];
      for (std::size_t j = 1; j < sp.len; ++j) mx = std::max(mx, in[base + j * sp.inner]);
      T z = 0;
      for (std::size_t j = 0; j < sp.len; ++j) {
        const T e = std::exp(in[base + j * sp.inner] - mx);
        out[base + j * sp.inner] = e;
        z += e;
      }
      for (std::size_t j = 0; j < sp.len; ++j) out[base + j * sp.inner] /= z;
    }
  }
  return Tensor<T>::from_op(x.shape(), std::move(out), {x}, [sp](Node<T>& self) {
    auto* g = detail::parent_grad(self, 0);
    if (!g) return;
    const auto& y = self.value;
    for (std::size_t o = 0; o < sp.outer; ++o) {
      for (std::size_t i = 0; i < sp.inner; ++i) {
        const std::size_t base = o * sp.len * sp.inner + i;
        T d = 0;
        for (std::size_t j = 0; j < sp.len; ++j) {
          const auto k = base + j * sp.inner;
          d += self.grad[k] * y[k];
        }
        for (std::size_t j = 0; j < sp.len; ++j) {
          const auto k = base + j * sp.inner;
          (*g)[k] += y[k] * (self.grad[k] - d);
        }
      }
    }
  });
}

/// log(softmax(x)) along the last axis of a vector.
template <typename T>
Tensor<T> log_softmax(const Tensor<T>& x) {
  if (x.rank() != 1 || x.size() == 0) {
    throw DimensionError("log_softmax expects a non-empty vector, got " + shape_str(x.shape()));
  }
  const auto in = x.data();
  const T mx = *std::max_element(in.begin(), in.end());
  T z = 0;
  for (T v : in) z += std::exp(v - mx);
  const T lz = mx + std::log(z);
  std::vector<T> out(in.size());
  for (std::size_t i = 0; i < in.size(); ++i) out[i] = in[i] - lz;
  return Tensor<T>::from_op(x.shape(), std::move(out), {x}, [](Node<T>& self) {
    auto* g = detail::parent_grad(self, 0);
    if (!g) return;
    T gs = 0;
    for (T v : self.grad) gs += v;
    for (std::size_t i = 0; i < self.value.size(); ++i) {
      (*g)[i] += self.grad[i] - std::exp(self.value[i]) * gs;
    }
  });
}

// ---------------------------------------------------------------------------
// Structural ops

template <typename T>
Tensor<T> reshape(const Tensor<T>& x, Shape shape) {
  if (shape_size(shape) != x.size()) {
    throw DimensionError("reshape: cannot view " + shape_str(x.shape()) + " as " +
                         shape_str(shape));
  }
  std::vector<T> v(x.data().begin(), x.data().end());
  return Tensor<T>::from_op(std::move(shape), std::move(v), {x}, [](Node<T>& self) {
    if (auto* g = detail::parent_grad(self, 0)) {
      for (std::size_t i = 0; i < self.grad.size(); ++i) (*g)[i] += self.grad[i];
    }
  });
}

/// Concatenates tensors that agree on every dimension except `axis`.
template <typename T>
Tensor<T> concat(const std::vector<Tensor<T>>& parts, long axis = 0) {
  if (parts.empty()) throw DimensionError("concat of zero tensors");
  const std::size_t rank = parts[0].rank();
  const auto ax = detail::normalize_axis(axis, rank);
  Shape out_shape = parts[0].shape();
  out_shape[ax] = 0;
  for (const auto& p : parts) {
    Shape a = p.shape(), b = parts[0].shape();
    if (a.size() != rank) {
      throw DimensionError("concat: rank mismatch " + shape_str(a) + " vs " + shape_str(b));
    }
    a[ax] = b[ax] = 0;
    if (a != b) {
      throw DimensionError("concat: shape mismatch " + shape_str(p.shape()) + " vs " +
                           shape_str(parts[0].shape()));
    }
    out_shape[ax] += p.dim(ax);
  }
  const auto sp = detail::split_axis(out_shape, ax);
  std::vector<T> out(shape_size(out_shape));
  std::vector<std::size_t> offsets;
  std::size_t off = 0;
  for (const auto& p : parts) {
    offsets.push_back(off);
    const std::size_t chunk = p.dim(ax) * sp.inner;
    const auto in = p.data();
    for (std::size_t o = 0; o < sp.outer; ++o) {
      std::copy_n(in.begin() + o * chunk, chunk, out.begin() + o * sp.len * sp.inner + off);
    }
    off += chunk;
  }
  std::vector<std::size_t> chunks;
  for (const auto& p : parts) chunks.push_back(p.dim(ax) * sp.inner);
  return Tensor<T>::from_op(std::move(out_shape), std::move(out), parts,
                            [sp, offsets, chunks](Node<T>& self) {
    for (std::size_t k = 0; k < offsets.size(); ++k) {
      auto* g = detail::parent_grad(self, k);
      if (!g) continue;
      for (std::size_t o = 0; o < sp.outer; ++o) {
        const T* src = self.grad.data() + o * sp.len * sp.inner + offsets[k];
        T* dst = g->data() + o * chunks[k];
        for (std::size_t i = 0; i < chunks[k]; ++i) dst[i] += src[i];
      }
    }
  });
}

/// Stacks same-shape tensors along a new leading axis.
template <typename T>
Tensor<T> stack(const std::vector<Tensor<T>>& parts) {
  if (parts.empty()) throw DimensionError("stack of zero tensors");
  std::vector<Tensor<T>> rows;
  rows.reserve(parts.size());
  Shape row_shape = parts[0].shape();
  row_shape.insert(row_shape.begin(), 1);
  for (const auto& p : parts) {
    detail::require_same_shape(p.shape(), parts[0].shape(), "stack");
    rows.push_back(reshape(p, row_shape));
  }
  return concat(rows, 0);
}

/// Rows [begin, end) along the leading axis.
template <typename T>
Tensor<T> slice(const Tensor<T>& x, std::size_t begin, std::size_t end) {
  if (x.rank() == 0 || begin > end || end > x.dim(0)) {
    throw DimensionError("slice [" + std::to_string(begin) + "," + std::to_string(end) +
                         ") out of range for " + shape_str(x.shape()));
  }
  const std::size_t inner = x.size() / std::max<std::size_t>(x.dim(0), 1);
  Shape shape = x.shape();
  shape[0] = end - begin;
  std::vector<T> out(x.data().begin() + begin * inner, x.data().begin() + end * inner);
  const std::size_t off = begin * inner;
  return Tensor<T>::from_op(std::move(shape), std::move(out), {x}, [off](Node<T>& self) {
    if (auto* g = detail::parent_grad(self, 0)) {
      for (std::size_t i = 0; i < self.grad.size(); ++i) (*g)[off + i] += self.grad[i];
    }
  });
}

/// Rows of `table` [V,d] selected by `ids` -> [n,d].
template <typename T>
Tensor<T> embedding_lookup(const Tensor<T>& table, std::span<const int> ids) {
  if (table.rank() != 2) {
    throw DimensionError("embedding_lookup: table must be rank 2, got " +
                         shape_str(table.shape()));
  }
  const std::size_t rows = table.dim(0), d = table.dim(1);
  std::vector<int> idv(ids.begin(), ids.end());
  std::vector<T> out(idv.size() * d);
  const auto tv = table.data();
  for (std::size_t k = 0; k < idv.size(); ++k) {
    if (idv[k] < 0 || static_cast<std::size_t>(idv[k]) >= rows) {
      throw IndexError("embedding id " + std::to_string(idv[k]) + " outside table of " +
                       std::to_string(rows) + " rows");
    }
    std::copy_n(tv.begin() + idv[k] * d, d, out.begin() + k * d);
  }
  return Tensor<T>::from_op({idv.size(), d}, std::move(out), {table},
                            [idv, d](Node<T>& self) {
    if (auto* g = detail::parent_grad(self, 0)) {
      for (std::size_t k = 0; k < idv.size(); ++k) {
        for (std::size_t j = 0; j < d; ++j) (*g)[idv[k] * d + j] += self.grad[k * d + j];
      }
    }
  });
}

/// Single embedding row as a [d] vector.
template <typename T>
Tensor<T> embedding_row(const Tensor<T>& table, int id) {
  const int ids[1] = {id};
  auto rows = embedding_lookup(table, std::span<const int>(ids, 1));
  return reshape(rows, {table.dim(1)});
}

/// Elements of a vector at `ids` -> [k].
template <typename T>
Tensor<T> gather(const Tensor<T>& x, std::span<const int> ids) {
  if (x.rank() != 1) throw DimensionError("gather expects a vector, got " + shape_str(x.shape()));
  std::vector<int> idv(ids.begin(), ids.end());
  std::vector<T> out(idv.size());
  for (std::size_t k = 0; k < idv.size(); ++k) {
    if (idv[k] < 0 || static_cast<std::size_t>(idv[k]) >= x.size()) {
      throw IndexError("gather index " + std::to_string(idv[k]) + " outside vector of " +
                       std::to_string(x.size()));
    }
    out[k] = x.data()[idv[k]];
  }
  return Tensor<T>::from_op({idv.size()}, std::move(out), {x}, [idv](Node<T>& self) {
    if (auto* g = detail::parent_grad(self, 0)) {
      for (std::size_t k = 0; k < idv.size(); ++k) (*g)[idv[k]] += self.grad[k];
    }
  });
}

template <typename T>
Tensor<T> pick(const Tensor<T>& x, int index) {
  const int ids[1] = {index};
  return gather(x, std::span<const int>(ids, 1));
}

/// out[ids[j]] += src[j] over an output vector of length `size`.
template <typename T>
Tensor<T> scatter_add(const Tensor<T>& src, std::span<const int> ids, std::size_t size) {
  if (src.rank() != 1 || src.size() != ids.size()) {
    throw DimensionError("scatter_add: " + shape_str(src.shape()) + " values for " +
                         std::to_string(ids.size()) + " indices");
  }
  std::vector<int> idv(ids.begin(), ids.end());
  std::vector<T> out(size, T(0));
  for (std::size_t k = 0; k < idv.size(); ++k) {
    if (idv[k] < 0 || static_cast<std::size_t>(idv[k]) >= size) {
      throw IndexError("scatter index " + std::to_string(idv[k]) + " outside " +
                       std::to_string(size));
    }
    out[idv[k]] += src.data()[k];
  }
  return Tensor<T>::from_op({size}, std::move(out), {src}, [idv](Node<T>& self) {
    if (auto* g = detail::parent_grad(self, 0)) {
      for (std::size_t k = 0; k < idv.size(); ++k) (*g)[k] += self.grad[idv[k]];
    }
  });
}

/// -log_probs[target]
template <typename T>
Tensor<T> cross_entropy(const Tensor<T>& log_probs, int target) {
  if (log_probs.rank() != 1) {
    throw DimensionError("cross_entropy expects a vector, got " + shape_str(log_probs.shape()));
  }
  if (target < 0 || static_cast<std::size_t>(target) >= log_probs.size()) {
    throw IndexError("target " + std::to_string(target) + " outside distribution of " +
                     std::to_string(log_probs.size()));
  }
  return scale(pick(log_probs, target), T(-1));
}

}  // namespace ccs
