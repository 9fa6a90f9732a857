#include "flowcaps/losses.hpp"

#include <cmath>

namespace fc {

namespace {

template <class T>
void check_flow_pair(const Tensor<T>& pred, const Tensor<T>& gt) {
  if (pred.rank() != 4 || pred.dim(1) != 2)
    throw ShapeError("expected flow [N,2,H,W], got " + shape_str(pred.shape()));
  if (pred.shape() != gt.shape())
    throw ShapeError("flow shapes differ: " + shape_str(pred.shape()) + " vs " +
                     shape_str(gt.shape()));
}

template <class T>
T pixel_count(const Tensor<T>& pred) {
  return static_cast<T>(pred.dim(0) * pred.dim(2) * pred.dim(3));
}

// logcosh(x) = |x| + log(1 + exp(-2|x|)) - log 2, elementwise.
template <class T>
Tensor<T> logcosh(const Tensor<T>& x) {
  Tensor<T> a = abs(x);
  Tensor<T> soft = log(add_scalar(exp(scale(a, T(-2))), T(1)));
  return add_scalar(add(a, soft), -static_cast<T>(std::log(2.0)));
}

}  // namespace

template <class T>
Tensor<T> epe(const Tensor<T>& pred, const Tensor<T>& gt) {
  check_flow_pair(pred, gt);
  Tensor<T> d = sub(pred, gt.detached());
  Tensor<T> sq = reduce_sum(square(d), {1}, /*keepdim=*/false);  // [N,H,W]
  Tensor<T> dist = sqrt(sq, /*zero_grad_at_zero=*/true);
  return scale(reduce_sum(dist, {0, 1, 2}, false), T(1) / pixel_count(pred));
}

template <class T>
Tensor<T> l_mag(const Tensor<T>& pred, const Tensor<T>& gt) {
  check_flow_pair(pred, gt);
  Tensor<T> lc = logcosh(sub(pred, gt.detached()));
  return scale(reduce_sum(lc, {0, 1, 2, 3}, false), T(1) / pixel_count(pred));
}

template <class T>
Tensor<T> l_ang(const Tensor<T>& pred, const Tensor<T>& gt) {
  check_flow_pair(pred, gt);
  Tensor<T> t = gt.detached();
  Tensor<T> dot = reduce_sum(mul(pred, t), {1}, /*keepdim=*/true);        // [N,1,H,W]
  Tensor<T> np = sqrt(reduce_sum(square(pred), {1}, true), true);         // |P|
  Tensor<T> nt = sqrt(reduce_sum(square(t), {1}, true), true);            // |T|, constant
  Tensor<T> cosd = divide(dot, add_scalar(mul(np, nt), T(1e-8)));
  Tensor<T> term = mul(add_scalar(scale(cosd, T(-1)), T(1)), nt);         // (1 - cos) * |T|
  return scale(reduce_sum(term, {0, 1, 2, 3}, false), T(1) / pixel_count(pred));
}

template <class T>
Tensor<T> combined_loss(const Tensor<T>& pred, const Tensor<T>& gt, double alpha) {
  return add(l_mag(pred, gt), scale(l_ang(pred, gt), static_cast<T>(alpha)));
}

#define FC_INSTANTIATE_LOSS(T)                                        \
  template Tensor<T> epe<T>(const Tensor<T>&, const Tensor<T>&);      \
  template Tensor<T> l_mag<T>(const Tensor<T>&, const Tensor<T>&);    \
  template Tensor<T> l_ang<T>(const Tensor<T>&, const Tensor<T>&);    \
  template Tensor<T> combined_loss<T>(const Tensor<T>&, const Tensor<T>&, double);

FC_INSTANTIATE_LOSS(float)
FC_INSTANTIATE_LOSS(double)

#undef FC_INSTANTIATE_LOSS

}  // namespace fc
