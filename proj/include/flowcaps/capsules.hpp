#pragma once

#include <vector>

#include "flowcaps/tensor.hpp"

namespace fc {

// (N, c*n, h, w) tensor viewed as c capsule types of dimensionality n.
template <class T>
struct CapsuleGrid {
  Tensor<T> tensor;  // [N, c*n, h, w]
  int c = 0;
  int n = 0;

  CapsuleGrid() = default;
  CapsuleGrid(Tensor<T> t, int c_, int n_) : tensor(std::move(t)), c(c_), n(n_) {
    if (tensor.dim(1) != static_cast<int64_t>(c) * n)
      throw ShapeError("capsule grid channel extent " + std::to_string(tensor.dim(1)) +
                       " != c*n = " + std::to_string(c * n));
  }
};

// Per-iteration routing coupling snapshots, for invariant tests.
template <class T>
struct RoutingTrace {
  std::vector<Tensor<T>> couplings;  // each [N, c1, c2, 1, h, w]
};

// Conv to c_out*n_out channels viewed as capsules; no routing, no squash.
template <class T>
CapsuleGrid<T> primary_caps(const Tensor<T>& x, const Tensor<T>& w, int c_out, int n_out,
                            int stride, int padding);

// Grouped convolution producing per-input-type prediction vectors
// u_hat[j|i]: output [N, c1, c2, n2, h2, w2].
template <class T>
Tensor<T> caps_predictions(const CapsuleGrid<T>& in, const Tensor<T>& w, int c2, int n2,
                           int stride, int padding);

// Agreement routing without squashing. pred is [N, c1, c2, n2, h, w].
template <class T>
CapsuleGrid<T> dynamic_route(const Tensor<T>& pred, int r = 3, RoutingTrace<T>* trace = nullptr);

// caps_predictions followed by dynamic_route.
template <class T>
CapsuleGrid<T> caps_layer(const CapsuleGrid<T>& in, const Tensor<T>& w, int c2, int n2,
                          int stride, int padding, int r, RoutingTrace<T>* trace = nullptr);

}  // namespace fc
