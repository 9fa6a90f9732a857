#include "flowcaps/capsules.hpp"

namespace fc {

template <class T>
CapsuleGrid<T> primary_caps(const Tensor<T>& x, const Tensor<T>& w, int c_out, int n_out,
                            int stride, int padding) {
  if (w.dim(0) != static_cast<int64_t>(c_out) * n_out)
    throw ShapeError("primary_caps weight produces " + std::to_string(w.dim(0)) +
                     " channels, expected " + std::to_string(c_out * n_out));
  Tensor<T> y = conv2d(x, w, static_cast<const Tensor<T>*>(nullptr), stride, padding, 1);
  return CapsuleGrid<T>(y, c_out, n_out);
}

template <class T>
Tensor<T> caps_predictions(const CapsuleGrid<T>& in, const Tensor<T>& w, int c2, int n2,
                           int stride, int padding) {
  const int c1 = in.c;
  if (w.dim(0) != static_cast<int64_t>(c1) * c2 * n2 || w.dim(1) != in.n)
    throw ShapeError("caps_predictions weight must be [c1*c2*n2, n1, kh, kw], got " +
                     shape_str(w.shape()));
  // groups = c1: each input type independently projects to all output types.
  Tensor<T> y = conv2d(in.tensor, w, static_cast<const Tensor<T>*>(nullptr), stride, padding, c1);
  return reshape(y, {y.dim(0), c1, c2, n2, y.dim(2), y.dim(3)});
}

template <class T>
CapsuleGrid<T> dynamic_route(const Tensor<T>& pred, int r, RoutingTrace<T>* trace) {
  if (r < 1) throw ConfigError("dynamic_route requires r >= 1");
  if (pred.rank() != 6) throw ShapeError("dynamic_route expects [N,c1,c2,n2,h,w]");
  const int64_t N = pred.dim(0), c1 = pred.dim(1), c2 = pred.dim(2), n2 = pred.dim(3);
  const int64_t h = pred.dim(4), w = pred.dim(5);

  Tensor<T> b = Tensor<T>::zeros({N, c1, c2, 1, h, w});
  Tensor<T> phi;
  for (int it = 0; it < r; ++it) {
    Tensor<T> c = softmax(b, 2);  // couplings over output types j
    if (trace) trace->couplings.push_back(c);
    phi = reduce_sum(mul(pred, c), {1}, /*keepdim=*/true);  // [N,1,c2,n2,h,w]
    if (it + 1 < r) {
      Tensor<T> agreement = reduce_sum(mul(pred, phi), {3}, /*keepdim=*/true);
      b = add(b, agreement);
    }
  }
  Tensor<T> out = reshape(phi, {N, c2 * n2, h, w});
  return CapsuleGrid<T>(out, static_cast<int>(c2), static_cast<int>(n2));
}

template <class T>
CapsuleGrid<T> caps_layer(const CapsuleGrid<T>& in, const Tensor<T>& w, int c2, int n2,
                          int stride, int padding, int r, RoutingTrace<T>* trace) {
  return dynamic_route(caps_predictions(in, w, c2, n2, stride, padding), r, trace);
}

#define FC_INSTANTIATE_CAPS(T)                                                                \
  template struct CapsuleGrid<T>;                                                             \
  template CapsuleGrid<T> primary_caps<T>(const Tensor<T>&, const Tensor<T>&, int, int, int, \
                                          int);                                               \
  template Tensor<T> caps_predictions<T>(const CapsuleGrid<T>&, const Tensor<T>&, int, int,  \
                                         int, int);                                           \
  template CapsuleGrid<T> dynamic_route<T>(const Tensor<T>&, int, RoutingTrace<T>*);          \
  template CapsuleGrid<T> caps_layer<T>(const CapsuleGrid<T>&, const Tensor<T>&, int, int,   \
                                        int, int, int, RoutingTrace<T>*);

FC_INSTANTIATE_CAPS(float)
FC_INSTANTIATE_CAPS(double)

#undef FC_INSTANTIATE_CAPS

}  // namespace fc
