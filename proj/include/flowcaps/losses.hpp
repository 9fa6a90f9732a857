#pragma once

#include "flowcaps/tensor.hpp"

namespace fc {

// All losses take predicted and ground-truth flow [N, 2, H, W] and reduce to a
// scalar by averaging over batch and pixels. Ground truth is treated as
// constant; gradients flow through the prediction only.

// Mean endpoint error: mean_{n,h,w} sqrt(du^2 + dv^2).
template <class T>
Tensor<T> epe(const Tensor<T>& pred, const Tensor<T>& gt);

// Magnitude loss: mean_{n,h,w} [logcosh(du) + logcosh(dv)], with
// logcosh(x) = |x| + log(1 + exp(-2|x|)) - log 2 for overflow safety.
template <class T>
Tensor<T> l_mag(const Tensor<T>& pred, const Tensor<T>& gt);

// Angular loss: mean_{n,h,w} (1 - <P,T> / (|P||T| + 1e-8)) * |T|.
// Pixels with zero ground-truth flow contribute exactly zero, in value and
// in gradient.
template <class T>
Tensor<T> l_ang(const Tensor<T>& pred, const Tensor<T>& gt);

// l_mag + alpha * l_ang.
template <class T>
Tensor<T> combined_loss(const Tensor<T>& pred, const Tensor<T>& gt, double alpha = 0.15);

}  // namespace fc
