#include "flowcaps/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <set>
#include <sstream>

#include "op_common.hpp"

namespace fc {

using detail::alloc_node;
using detail::attach;
using detail::wrap;

int64_t numel(const Shape& s) {
  int64_t n = 1;
  for (auto d : s) n *= d;
  return n;
}

std::string shape_str(const Shape& s) {
  std::ostringstream os;
  os << "[";
  for (size_t i = 0; i < s.size(); ++i) os << (i ? "," : "") << s[i];
  os << "]";
  return os.str();
}

template <class T>
Node<T>::Node() : seq(detail::g_node_seq.fetch_add(1, std::memory_order_relaxed)) {}

namespace {

void check_extents(const Shape& s) {
  if (s.empty()) throw ShapeError("empty shape");
  for (auto d : s)
    if (d < 1) throw ShapeError("non-positive extent in shape " + shape_str(s));
}

}  // namespace

template <class T>
Tensor<T> Tensor<T>::zeros(const Shape& s) {
  check_extents(s);
  return wrap(alloc_node<T>(s));
}

template <class T>
Tensor<T> Tensor<T>::full(const Shape& s, T v) {
  check_extents(s);
  auto n = alloc_node<T>(s);
  std::fill(n->value.begin(), n->value.end(), v);
  return wrap(std::move(n));
}

template <class T>
Tensor<T> Tensor<T>::from_data(const Shape& s, std::vector<T> data) {
  check_extents(s);
  if (static_cast<int64_t>(data.size()) != fc::numel(s))
    throw ShapeError("data length " + std::to_string(data.size()) + " does not match shape " + shape_str(s));
  auto n = std::make_shared<Node<T>>();
  n->shape = s;
  n->value = std::move(data);
  return wrap(std::move(n));
}

template <class T>
Tensor<T> create(const Shape& s, const Init& init, Rng& rng) {
  check_extents(s);
  auto n = alloc_node<T>(s);
  switch (init.kind) {
    case InitKind::kZeros:
      break;
    case InitKind::kConstant:
      std::fill(n->value.begin(), n->value.end(), static_cast<T>(init.a));
      break;
    case InitKind::kUniform: {
      if (!(init.a < init.b)) throw DomainError("uniform init requires a < b");
      for (auto& v : n->value) v = static_cast<T>(rng.uniform(init.a, init.b));
      break;
    }
    case InitKind::kNormal: {
      if (init.b < 0) throw DomainError("normal init requires sigma >= 0");
      for (auto& v : n->value) v = static_cast<T>(rng.normal(init.a, init.b));
      break;
    }
    case InitKind::kHeFanIn: {
      int64_t fan = init.fan_in;
      if (fan == 0) {
        // conv weights [O,C,kh,kw] -> C*kh*kw; matrices [in,out] -> in
        if (s.size() >= 2) {
          fan = 1;
          for (size_t i = 1; i < s.size(); ++i) fan *= s[i];
          if (s.size() == 2) fan = s[0];
        } else {
          fan = s[0];
        }
      }
      double sigma = std::sqrt(2.0 / static_cast<double>(fan));
      for (auto& v : n->value) v = static_cast<T>(rng.normal(0.0, sigma));
      break;
    }
  }
  return wrap(std::move(n));
}

// ---------------------------------------------------------------------------
// elementwise
// ---------------------------------------------------------------------------

namespace {

// Accumulate dy (shaped like out) into parent grad with broadcast reduction.
template <class T, class Fn>
void bcast_accumulate(Node<T>& out, const std::shared_ptr<Node<T>>& parent, Fn local) {
  parent->ensure_grad();
  auto pst = detail::broadcast_strides(parent->shape, out.shape);
  detail::for_each_mapped(out.shape, pst, [&](int64_t o, int64_t pi) {
    parent->grad[static_cast<size_t>(pi)] += local(o);
  });
}

template <class T, class FwdFn, class BwdFn>
Tensor<T> binary_op(const Tensor<T>& a, const Tensor<T>& b, FwdFn fwd, BwdFn bwd) {
  Shape os = detail::broadcast_shape(a.shape(), b.shape());
  auto out = alloc_node<T>(os);
  const T* pa = a.data().data();
  const T* pb = b.data().data();
  T* po = out->value.data();
  if (a.shape() == b.shape()) {
    int64_t n = numel(os);
    for (int64_t i = 0; i < n; ++i) po[i] = fwd(pa[i], pb[i]);
  } else {
    auto astr = detail::broadcast_strides(a.shape(), os);
    auto bstr = detail::broadcast_strides(b.shape(), os);
    detail::for_each_broadcast(os, astr, bstr, [&](int64_t o, int64_t ai, int64_t bi) {
      po[o] = fwd(pa[ai], pb[bi]);
    });
  }
  auto an = a.node();
  auto bn = b.node();
  attach(out, std::vector<Tensor<T>>{a, b}, [an, bn, bwd](Node<T>& self) {
    auto astr = detail::broadcast_strides(an->shape, self.shape);
    auto bstr = detail::broadcast_strides(bn->shape, self.shape);
    if (an->requires_grad) an->ensure_grad();
    if (bn->requires_grad) bn->ensure_grad();
    detail::for_each_broadcast(self.shape, astr, bstr, [&](int64_t o, int64_t ai, int64_t bi) {
      T da = 0, db = 0;
      bwd(self.grad[static_cast<size_t>(o)], an->value[static_cast<size_t>(ai)],
          bn->value[static_cast<size_t>(bi)], self.value[static_cast<size_t>(o)], da, db);
      if (an->requires_grad) an->grad[static_cast<size_t>(ai)] += da;
      if (bn->requires_grad) bn->grad[static_cast<size_t>(bi)] += db;
    });
  });
  return wrap(std::move(out));
}

template <class T, class FwdFn, class GradFn>
Tensor<T> unary_op(const Tensor<T>& x, FwdFn fwd, GradFn grad) {
  auto out = alloc_node<T>(x.shape());
  const T* px = x.data().data();
  T* po = out->value.data();
  int64_t n = x.numel();
  for (int64_t i = 0; i < n; ++i) po[i] = fwd(px[i]);
  auto xn = x.node();
  attach(out, std::vector<Tensor<T>>{x}, [xn, grad](Node<T>& self) {
    xn->ensure_grad();
    int64_t m = static_cast<int64_t>(self.value.size());
    for (int64_t i = 0; i < m; ++i) {
      size_t u = static_cast<size_t>(i);
      xn->grad[u] += self.grad[u] * grad(xn->value[u], self.value[u]);
    }
  });
  return wrap(std::move(out));
}

}  // namespace

template <class T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b) {
  return binary_op(a, b, [](T x, T y) { return x + y; },
                   [](T dy, T, T, T, T& da, T& db) { da = dy; db = dy; });
}

template <class T>
Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b) {
  return binary_op(a, b, [](T x, T y) { return x - y; },
                   [](T dy, T, T, T, T& da, T& db) { da = dy; db = -dy; });
}

template <class T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b) {
  return binary_op(a, b, [](T x, T y) { return x * y; },
                   [](T dy, T x, T y, T, T& da, T& db) { da = dy * y; db = dy * x; });
}

template <class T>
Tensor<T> divide(const Tensor<T>& a, const Tensor<T>& b) {
  return binary_op(a, b, [](T x, T y) { return x / y; },
                   [](T dy, T x, T y, T, T& da, T& db) {
                     da = dy / y;
                     db = -dy * x / (y * y);
                   });
}

template <class T>
Tensor<T> add_scalar(const Tensor<T>& a, T c) {
  return unary_op(a, [c](T x) { return x + c; }, [](T, T) { return T(1); });
}

template <class T>
Tensor<T> scale(const Tensor<T>& a, T c) {
  return unary_op(a, [c](T x) { return x * c; }, [c](T, T) { return c; });
}

template <class T>
Tensor<T> exp(const Tensor<T>& x) {
  return unary_op(x, [](T v) { return std::exp(v); }, [](T, T y) { return y; });
}

template <class T>
Tensor<T> log(const Tensor<T>& x) {
  for (T v : x.data())
    if (!(v > 0)) throw DomainError("log requires strictly positive inputs");
  return unary_op(x, [](T v) { return std::log(v); }, [](T v, T) { return T(1) / v; });
}

template <class T>
Tensor<T> sqrt(const Tensor<T>& x, bool zero_grad_at_zero) {
  for (T v : x.data())
    if (v < 0) throw DomainError("sqrt requires nonnegative inputs");
  return unary_op(x, [](T v) { return std::sqrt(v); },
                  [zero_grad_at_zero](T v, T y) {
                    if (v == 0) {
                      if (zero_grad_at_zero) return T(0);
                      return std::numeric_limits<T>::infinity();
                    }
                    return T(0.5) / y;
                  });
}

template <class T>
Tensor<T> cosh(const Tensor<T>& x) {
  return unary_op(x, [](T v) { return std::cosh(v); }, [](T v, T) { return std::sinh(v); });
}

template <class T>
Tensor<T> square(const Tensor<T>& x) {
  return unary_op(x, [](T v) { return v * v; }, [](T v, T) { return T(2) * v; });
}

template <class T>
Tensor<T> neg(const Tensor<T>& x) {
  return unary_op(x, [](T v) { return -v; }, [](T, T) { return T(-1); });
}

template <class T>
Tensor<T> abs(const Tensor<T>& x) {
  // gradient at 0 defined as 0
  return unary_op(x, [](T v) { return std::abs(v); },
                  [](T v, T) { return v > 0 ? T(1) : (v < 0 ? T(-1) : T(0)); });
}

// ---------------------------------------------------------------------------
// shape ops
// ---------------------------------------------------------------------------

template <class T>
Tensor<T> reshape(const Tensor<T>& x, const Shape& s) {
  check_extents(s);
  if (numel(s) != x.numel())
    throw ShapeError("reshape " + shape_str(x.shape()) + " -> " + shape_str(s) + " changes element count");
  auto out = alloc_node<T>(s);
  out->value = std::vector<T>(x.data().begin(), x.data().end());
  auto xn = x.node();
  attach(out, std::vector<Tensor<T>>{x}, [xn](Node<T>& self) {
    xn->ensure_grad();
    for (size_t i = 0; i < self.grad.size(); ++i) xn->grad[i] += self.grad[i];
  });
  return wrap(std::move(out));
}

template <class T>
Tensor<T> concat(const std::vector<Tensor<T>>& xs, int axis) {
  if (xs.empty()) throw ShapeError("concat of zero tensors");
  int r = xs[0].rank();
  if (axis < 0) axis += r;
  if (axis < 0 || axis >= r) throw ShapeError("concat axis out of range");
  Shape os = xs[0].shape();
  int64_t total_axis = 0;
  for (const auto& x : xs) {
    if (x.rank() != r) throw ShapeError("concat rank mismatch");
    for (int d = 0; d < r; ++d)
      if (d != axis && x.shape()[static_cast<size_t>(d)] != os[static_cast<size_t>(d)])
        throw ShapeError("concat shape mismatch: " + shape_str(x.shape()) + " vs " + shape_str(os));
    total_axis += x.dim(axis);
  }
  os[static_cast<size_t>(axis)] = total_axis;
  auto out = alloc_node<T>(os);

  int64_t outer = 1, inner = 1;
  for (int d = 0; d < axis; ++d) outer *= os[static_cast<size_t>(d)];
  for (int d = axis + 1; d < r; ++d) inner *= os[static_cast<size_t>(d)];

  std::vector<int64_t> offsets;  // start of each input along axis
  {
    int64_t off = 0;
    for (const auto& x : xs) {
      offsets.push_back(off);
      off += x.dim(axis);
    }
  }
  for (size_t k = 0; k < xs.size(); ++k) {
    const T* px = xs[k].data().data();
    int64_t ax = xs[k].dim(axis);
    for (int64_t ou = 0; ou < outer; ++ou) {
      T* dst = out->value.data() + (ou * total_axis + offsets[k]) * inner;
      const T* src = px + ou * ax * inner;
      std::copy(src, src + ax * inner, dst);
    }
  }
  std::vector<std::shared_ptr<Node<T>>> pnodes;
  for (const auto& x : xs) pnodes.push_back(x.node());
  auto out_t = wrap(std::move(out));
  detail::attach(out_t.node(), xs, [pnodes, offsets, outer, inner, total_axis](Node<T>& self) {
    for (size_t k = 0; k < pnodes.size(); ++k) {
      auto& p = pnodes[k];
      if (!p->requires_grad) continue;
      p->ensure_grad();
      int64_t ax = static_cast<int64_t>(p->value.size()) / (outer * inner);
      for (int64_t ou = 0; ou < outer; ++ou) {
        const T* src = self.grad.data() + (ou * total_axis + offsets[k]) * inner;
        T* dst = p->grad.data() + ou * ax * inner;
        for (int64_t i = 0; i < ax * inner; ++i) dst[i] += src[i];
      }
    }
  });
  return out_t;
}

template <class T>
Tensor<T> reduce_sum(const Tensor<T>& x, std::vector<int> axes, bool keepdim) {
  int r = x.rank();
  std::set<int> ax;
  for (int a : axes) {
    if (a < 0) a += r;
    if (a < 0 || a >= r) throw ShapeError("reduce axis out of range");
    if (!ax.insert(a).second) throw ShapeError("duplicate reduce axis");
  }
  if (ax.empty()) return reshape(x, x.shape());  // identity (fresh node)

  Shape kshape = x.shape();  // keepdim shape
  for (int a : ax) kshape[static_cast<size_t>(a)] = 1;
  auto out = alloc_node<T>(kshape);
  auto ostr = detail::broadcast_strides(kshape, x.shape());
  const T* px = x.data().data();
  T* po = out->value.data();
  detail::for_each_mapped(x.shape(), ostr, [&](int64_t i, int64_t oi) {
    po[oi] += px[i];
  });
  auto xn = x.node();
  Shape xshape = x.shape();
  attach(out, std::vector<Tensor<T>>{x}, [xn, kshape, xshape](Node<T>& self) {
    xn->ensure_grad();
    auto ostr = detail::broadcast_strides(kshape, xshape);
    detail::for_each_mapped(xshape, ostr, [&](int64_t i, int64_t oi) {
      xn->grad[static_cast<size_t>(i)] += self.grad[static_cast<size_t>(oi)];
    });
  });
  auto out_t = wrap(std::move(out));
  if (!keepdim) {
    Shape fshape;
    for (int d = 0; d < r; ++d)
      if (!ax.count(d)) fshape.push_back(x.shape()[static_cast<size_t>(d)]);
    if (fshape.empty()) fshape = {1};
    out_t = reshape(out_t, fshape);
  }
  return out_t;
}

template <class T>
Tensor<T> reduce_mean(const Tensor<T>& x, std::vector<int> axes, bool keepdim) {
  if (axes.empty()) return reshape(x, x.shape());
  int r = x.rank();
  int64_t cnt = 1;
  for (int a : axes) {
    int aa = a < 0 ? a + r : a;
    if (aa < 0 || aa >= r) throw ShapeError("reduce axis out of range");
    cnt *= x.shape()[static_cast<size_t>(aa)];
  }
  return scale(reduce_sum(x, std::move(axes), keepdim), T(1) / static_cast<T>(cnt));
}

// ---------------------------------------------------------------------------
// backward
// ---------------------------------------------------------------------------

template <class T>
void backward(const Tensor<T>& loss) {
  if (loss.numel() != 1) throw ShapeError("backward requires a scalar loss, got " + shape_str(loss.shape()));
  auto root = loss.node();
  if (root->backward_done)
    throw StateError("backward already called on this graph; rebuild the graph or reset gradients");
  root->backward_done = true;
  if (!root->requires_grad) return;

  // Collect reachable grad-requiring nodes; process in reverse insertion order.
  std::vector<Node<T>*> order;
  std::vector<Node<T>*> stack{root.get()};
  std::set<Node<T>*> seen{root.get()};
  while (!stack.empty()) {
    Node<T>* n = stack.back();
    stack.pop_back();
    order.push_back(n);
    for (auto& p : n->parents) {
      if (p->requires_grad && seen.insert(p.get()).second) stack.push_back(p.get());
    }
  }
  std::sort(order.begin(), order.end(),
            [](const Node<T>* a, const Node<T>* b) { return a->seq > b->seq; });

  root->ensure_grad();
  root->grad[0] = T(1);
  for (Node<T>* n : order) {
    if (n->backprop && !n->grad.empty()) n->backprop(*n);
  }
}

template <class T>
T finite_diff_check(const std::function<Tensor<T>(Tensor<T>&)>& f, Tensor<T> x,
                    T eps, int sample_coords, uint64_t seed) {
  x.set_requires_grad(true);
  x.zero_grad();
  Tensor<T> loss = f(x);
  if (loss.numel() != 1) throw ShapeError("finite_diff_check requires a scalar function");
  backward(loss);
  std::vector<T> g(x.grad().begin(), x.grad().end());

  std::vector<int64_t> coords;
  int64_t n = x.numel();
  if (sample_coords < 0 || sample_coords >= n) {
    coords.resize(static_cast<size_t>(n));
    std::iota(coords.begin(), coords.end(), 0);
  } else {
    Rng rng(seed ^ 0xfd1fUL);
    std::set<int64_t> picked;
    while (static_cast<int>(picked.size()) < sample_coords)
      picked.insert(static_cast<int64_t>(rng.uniform01() * static_cast<double>(n)));
    coords.assign(picked.begin(), picked.end());
  }

  T max_rel = 0;
  auto data = x.raw_data();
  for (int64_t c : coords) {
    size_t u = static_cast<size_t>(c);
    T orig = data[u];
    data[u] = orig + eps;
    T fp = f(x).item();
    data[u] = orig - eps;
    T fm = f(x).item();
    data[u] = orig;
    T fd = (fp - fm) / (T(2) * eps);
    T denom = std::max(T(1), std::max(std::abs(fd), std::abs(g[u])));
    max_rel = std::max(max_rel, std::abs(fd - g[u]) / denom);
  }
  return max_rel;
}

// ---------------------------------------------------------------------------
// explicit instantiation
// ---------------------------------------------------------------------------

#define FC_INSTANTIATE(T)                                                              \
  template struct Node<T>;                                                             \
  template class Tensor<T>;                                                            \
  template Tensor<T> create<T>(const Shape&, const Init&, Rng&);                       \
  template Tensor<T> add<T>(const Tensor<T>&, const Tensor<T>&);                       \
  template Tensor<T> sub<T>(const Tensor<T>&, const Tensor<T>&);                       \
  template Tensor<T> mul<T>(const Tensor<T>&, const Tensor<T>&);                       \
  template Tensor<T> divide<T>(const Tensor<T>&, const Tensor<T>&);                    \
  template Tensor<T> add_scalar<T>(const Tensor<T>&, T);                               \
  template Tensor<T> scale<T>(const Tensor<T>&, T);                                    \
  template Tensor<T> exp<T>(const Tensor<T>&);                                         \
  template Tensor<T> log<T>(const Tensor<T>&);                                         \
  template Tensor<T> sqrt<T>(const Tensor<T>&, bool);                                  \
  template Tensor<T> cosh<T>(const Tensor<T>&);                                        \
  template Tensor<T> square<T>(const Tensor<T>&);                                      \
  template Tensor<T> neg<T>(const Tensor<T>&);                                         \
  template Tensor<T> abs<T>(const Tensor<T>&);                                         \
  template Tensor<T> reshape<T>(const Tensor<T>&, const Shape&);                       \
  template Tensor<T> concat<T>(const std::vector<Tensor<T>>&, int);                    \
  template Tensor<T> reduce_sum<T>(const Tensor<T>&, std::vector<int>, bool);          \
  template Tensor<T> reduce_mean<T>(const Tensor<T>&, std::vector<int>, bool);         \
  template void backward<T>(const Tensor<T>&);                                         \
  template T finite_diff_check<T>(const std::function<Tensor<T>(Tensor<T>&)>&,         \
                                  Tensor<T>, T, int, uint64_t);

FC_INSTANTIATE(float)
FC_INSTANTIATE(double)

#undef FC_INSTANTIATE

}  // namespace fc
