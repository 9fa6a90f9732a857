#pragma once

// Shared helpers for op implementations.

#include <algorithm>
#include <atomic>
#include <cstdint>
#include <memory>
#include <vector>

#include "flowcaps/tensor.hpp"

namespace fc::detail {

inline std::atomic<uint64_t> g_node_seq{1};

template <class T>
std::shared_ptr<Node<T>> alloc_node(const Shape& shape) {
  auto n = std::make_shared<Node<T>>();
  n->shape = shape;
  n->value.assign(static_cast<size_t>(numel(shape)), T(0));
  return n;
}

template <class T>
Tensor<T> wrap(std::shared_ptr<Node<T>> n) {
  Tensor<T> t;
  t.node() = std::move(n);
  return t;
}

template <class T>
bool any_requires_grad(const std::vector<Tensor<T>>& xs) {
  for (const auto& x : xs)
    if (x.requires_grad()) return true;
  return false;
}

// Finish wiring an op's output node: requires_grad propagation and backprop.
template <class T, class F>
void attach(std::shared_ptr<Node<T>>& out, const std::vector<Tensor<T>>& parents, F backprop) {
  bool req = false;
  for (const auto& p : parents) {
    out->parents.push_back(p.node());
    req = req || p.requires_grad();
  }
  out->requires_grad = req;
  if (req) out->backprop = std::move(backprop);
}

inline std::vector<int64_t> row_major_strides(const Shape& s) {
  std::vector<int64_t> st(s.size());
  int64_t acc = 1;
  for (int i = static_cast<int>(s.size()) - 1; i >= 0; --i) {
    st[static_cast<size_t>(i)] = acc;
    acc *= s[static_cast<size_t>(i)];
  }
  return st;
}

// Strides for reading `in` at indices of `out`; broadcast dims get stride 0.
inline std::vector<int64_t> broadcast_strides(const Shape& in, const Shape& out) {
  auto st = row_major_strides(in);
  for (size_t i = 0; i < in.size(); ++i)
    if (in[i] == 1 && out[i] != 1) st[i] = 0;
  return st;
}

inline Shape broadcast_shape(const Shape& a, const Shape& b) {
  if (a.size() != b.size())
    throw ShapeError("broadcast requires equal ranks: " + shape_str(a) + " vs " + shape_str(b));
  Shape out(a.size());
  for (size_t i = 0; i < a.size(); ++i) {
    if (a[i] == b[i] || a[i] == 1 || b[i] == 1) {
      out[i] = std::max(a[i], b[i]);
    } else {
      throw ShapeError("incompatible shapes " + shape_str(a) + " and " + shape_str(b));
    }
  }
  return out;
}

// Odometer over `oshape`, calling fn(o_linear, a_linear, b_linear).
template <class Fn>
void for_each_broadcast(const Shape& oshape, const std::vector<int64_t>& astr,
                        const std::vector<int64_t>& bstr, Fn fn) {
  const size_t r = oshape.size();
  std::vector<int64_t> idx(r, 0);
  int64_t total = numel(oshape);
  int64_t ai = 0, bi = 0;
  for (int64_t o = 0; o < total; ++o) {
    fn(o, ai, bi);
    for (int d = static_cast<int>(r) - 1; d >= 0; --d) {
      size_t ud = static_cast<size_t>(d);
      ++idx[ud];
      ai += astr[ud];
      bi += bstr[ud];
      if (idx[ud] < oshape[ud]) break;
      ai -= astr[ud] * oshape[ud];
      bi -= bstr[ud] * oshape[ud];
      idx[ud] = 0;
    }
  }
}

// Odometer with a single companion stride set.
template <class Fn>
void for_each_mapped(const Shape& oshape, const std::vector<int64_t>& astr, Fn fn) {
  const size_t r = oshape.size();
  std::vector<int64_t> idx(r, 0);
  int64_t total = numel(oshape);
  int64_t ai = 0;
  for (int64_t o = 0; o < total; ++o) {
    fn(o, ai);
    for (int d = static_cast<int>(r) - 1; d >= 0; --d) {
      size_t ud = static_cast<size_t>(d);
      ++idx[ud];
      ai += astr[ud];
      if (idx[ud] < oshape[ud]) break;
      ai -= astr[ud] * oshape[ud];
      idx[ud] = 0;
    }
  }
}

}  // namespace fc::detail
