#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "flowcaps/errors.hpp"
#include "flowcaps/rng.hpp"

namespace fc {

using Shape = std::vector<int64_t>;

int64_t numel(const Shape& s);
std::string shape_str(const Shape& s);

// One vertex of the define-by-run graph. Rebuilt on every forward pass;
// parameters are long-lived leaf nodes whose grad accumulates across graphs
// until zero_grad().
template <class T>
struct Node {
  Shape shape;
  std::vector<T> value;
  std::vector<T> grad;  // empty until first accumulation
  bool requires_grad = false;
  bool backward_done = false;
  uint64_t seq = 0;  // insertion order; backward runs in decreasing seq
  std::vector<std::shared_ptr<Node>> parents;
  std::function<void(Node&)> backprop;

  Node();
  void ensure_grad() {
    if (grad.empty()) grad.assign(value.size(), T(0));
  }
};

// Dense row-major tensor handle. Copies alias the same buffer/graph node.
template <class T>
class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(const Shape& s);
  static Tensor full(const Shape& s, T v);
  static Tensor from_data(const Shape& s, std::vector<T> data);
  static Tensor scalar(T v) { return full({1}, v); }

  bool defined() const { return node_ != nullptr; }
  const Shape& shape() const { return node_->shape; }
  int64_t numel() const { return static_cast<int64_t>(node_->value.size()); }
  int rank() const { return static_cast<int>(node_->shape.size()); }
  int64_t dim(int i) const {
    int r = rank();
    if (i < 0) i += r;
    if (i < 0 || i >= r) throw ShapeError("dim index out of range");
    return node_->shape[static_cast<size_t>(i)];
  }

  std::span<const T> data() const { return node_->value; }
  // In-place mutation without graph tracking; for leaves and optimizers only.
  T* raw_data() { return node_->value.data(); }
  const T* raw_data() const { return node_->value.data(); }
  T item() const {
    if (numel() != 1) throw ShapeError("item() requires a single-element tensor, got " + shape_str(shape()));
    return node_->value[0];
  }

  Tensor& set_requires_grad(bool b) {
    node_->requires_grad = b;
    return *this;
  }
  bool requires_grad() const { return node_->requires_grad; }
  bool has_grad() const { return !node_->grad.empty(); }
  std::span<const T> grad() const {
    if (node_->grad.empty()) throw StateError("tensor has no gradient");
    return node_->grad;
  }
  // nullptr until a backward pass has written a gradient.
  const T* raw_grad() const { return node_->grad.empty() ? nullptr : node_->grad.data(); }
  void zero_grad() { node_->grad.clear(); }

  // Value copy detached from the graph.
  Tensor detached() const { return from_data(shape(), node_->value); }

  std::shared_ptr<Node<T>>& node() { return node_; }
  const std::shared_ptr<Node<T>>& node() const { return node_; }

 private:
  std::shared_ptr<Node<T>> node_;
};

enum class InitKind { kZeros, kConstant, kUniform, kNormal, kHeFanIn };

struct Init {
  InitKind kind = InitKind::kZeros;
  double a = 0.0;       // constant value / uniform lo / normal mean
  double b = 0.0;       // uniform hi / normal sigma
  int64_t fan_in = 0;   // he_fan_in override; 0 derives from shape

  static Init zeros() { return {}; }
  static Init constant(double c) { return {InitKind::kConstant, c, 0.0, 0}; }
  static Init uniform(double lo, double hi) { return {InitKind::kUniform, lo, hi, 0}; }
  static Init normal(double mu, double sigma) { return {InitKind::kNormal, mu, sigma, 0}; }
  static Init he_fan_in(int64_t fan = 0) { return {InitKind::kHeFanIn, 0.0, 0.0, fan}; }
};

template <class T>
Tensor<T> create(const Shape& s, const Init& init, Rng& rng);

// ---- elementwise (identical shapes, size-1 broadcast, or scalar forms) ----
template <class T> Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b);
template <class T> Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b);
template <class T> Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b);
template <class T> Tensor<T> divide(const Tensor<T>& a, const Tensor<T>& b);
template <class T> Tensor<T> add_scalar(const Tensor<T>& a, T c);
template <class T> Tensor<T> scale(const Tensor<T>& a, T c);
template <class T> Tensor<T> exp(const Tensor<T>& x);
template <class T> Tensor<T> log(const Tensor<T>& x);
// zero_grad_at_zero: d/dx sqrt at x == 0 is defined as 0 (loss guards).
template <class T> Tensor<T> sqrt(const Tensor<T>& x, bool zero_grad_at_zero = false);
template <class T> Tensor<T> cosh(const Tensor<T>& x);
template <class T> Tensor<T> square(const Tensor<T>& x);
template <class T> Tensor<T> neg(const Tensor<T>& x);
template <class T> Tensor<T> abs(const Tensor<T>& x);

// ---- shape ----
template <class T> Tensor<T> reshape(const Tensor<T>& x, const Shape& s);
template <class T> Tensor<T> concat(const std::vector<Tensor<T>>& xs, int axis);
template <class T> Tensor<T> reduce_sum(const Tensor<T>& x, std::vector<int> axes, bool keepdim = false);
template <class T> Tensor<T> reduce_mean(const Tensor<T>& x, std::vector<int> axes, bool keepdim = false);

// ---- linear algebra / nn primitives ----
template <class T> Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b);
template <class T>
Tensor<T> conv2d(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>* bias,
                 int stride, int padding, int groups = 1);
template <class T>
Tensor<T> conv_transpose2d(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>* bias,
                           int stride, int padding);
template <class T>
Tensor<T> maxpool2d(const Tensor<T>& x, int k = 2, int stride = 2,
                    std::vector<int64_t>* argmax_out = nullptr);
template <class T>
Tensor<T> batchnorm2d(const Tensor<T>& x, const Tensor<T>& gamma, const Tensor<T>& beta,
                      Tensor<T>& running_mean, Tensor<T>& running_var, bool train,
                      double momentum = 0.1, double eps = 1e-5);
template <class T> Tensor<T> relu(const Tensor<T>& x);
template <class T> Tensor<T> leaky_relu(const Tensor<T>& x, double slope = 0.1);
template <class T> Tensor<T> softmax(const Tensor<T>& x, int axis);
template <class T> Tensor<T> bilinear_resize(const Tensor<T>& x, int64_t h2, int64_t w2);

// ---- autodiff ----
template <class T> void backward(const Tensor<T>& loss);

// Central finite differences against the autodiff gradient. Returns the max
// relative error over the checked coordinates; sample_coords < 0 checks all.
template <class T>
T finite_diff_check(const std::function<Tensor<T>(Tensor<T>&)>& f, Tensor<T> x,
                    T eps = T(1e-4), int sample_coords = -1, uint64_t seed = 0);

}  // namespace fc
