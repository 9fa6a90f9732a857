#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <cstring>
#include <limits>

#include "flowcaps/tensor.hpp"
#include "op_common.hpp"

namespace fc {

using detail::alloc_node;
using detail::attach;
using detail::wrap;

namespace {

template <class T>
using MatMap = Eigen::Map<Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;
template <class T>
using CMatMap = Eigen::Map<const Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;

struct ConvDims {
  int64_t N, C, H, W, O, Cg, kh, kw;
  int stride, pad, groups;
  int64_t Ho, Wo, Og;
};

template <class T>
ConvDims conv_dims(const Tensor<T>& x, const Tensor<T>& w, int stride, int pad, int groups) {
  if (x.rank() != 4 || w.rank() != 4)
    throw ShapeError("conv2d expects 4-D input and weight, got " + shape_str(x.shape()) + " and " +
                     shape_str(w.shape()));
  ConvDims d{};
  d.N = x.dim(0);
  d.C = x.dim(1);
  d.H = x.dim(2);
  d.W = x.dim(3);
  d.O = w.dim(0);
  d.Cg = w.dim(1);
  d.kh = w.dim(2);
  d.kw = w.dim(3);
  d.stride = stride;
  d.pad = pad;
  d.groups = groups;
  if (stride < 1) throw ConfigError("conv2d stride must be >= 1");
  if (pad < 0) throw ConfigError("conv2d padding must be >= 0");
  if (groups < 1 || d.C % groups != 0 || d.O % groups != 0)
    throw ConfigError("conv2d: channels " + std::to_string(d.C) + " / filters " + std::to_string(d.O) +
                      " not divisible by groups " + std::to_string(groups));
  if (d.Cg != d.C / groups)
    throw ShapeError("conv2d weight expects " + std::to_string(d.C / groups) + " channels per group, got " +
                     std::to_string(d.Cg));
  d.Ho = (d.H + 2 * pad - d.kh) / stride + 1;
  d.Wo = (d.W + 2 * pad - d.kw) / stride + 1;
  if (d.Ho < 1 || d.Wo < 1)
    throw ShapeError("conv2d output extent degenerate for input " + shape_str(x.shape()));
  d.Og = d.O / groups;
  return d;
}

// col[(Cg*kh*kw) x (Ho*Wo)] from one sample's group slice.
template <class T>
void im2col(const T* x, const ConvDims& d, T* col) {
  for (int64_t c = 0; c < d.Cg; ++c) {
    for (int64_t ki = 0; ki < d.kh; ++ki) {
      for (int64_t kj = 0; kj < d.kw; ++kj) {
        T* row = col + ((c * d.kh + ki) * d.kw + kj) * d.Ho * d.Wo;
        for (int64_t oy = 0; oy < d.Ho; ++oy) {
          int64_t iy = oy * d.stride - d.pad + ki;
          if (iy < 0 || iy >= d.H) {
            std::fill(row + oy * d.Wo, row + (oy + 1) * d.Wo, T(0));
            continue;
          }
          for (int64_t ox = 0; ox < d.Wo; ++ox) {
            int64_t ix = ox * d.stride - d.pad + kj;
            row[oy * d.Wo + ox] = (ix >= 0 && ix < d.W) ? x[(c * d.H + iy) * d.W + ix] : T(0);
          }
        }
      }
    }
  }
}

// Adjoint of im2col: scatter-add col back into the image.
template <class T>
void col2im(const T* col, const ConvDims& d, T* x) {
  for (int64_t c = 0; c < d.Cg; ++c) {
    for (int64_t ki = 0; ki < d.kh; ++ki) {
      for (int64_t kj = 0; kj < d.kw; ++kj) {
        const T* row = col + ((c * d.kh + ki) * d.kw + kj) * d.Ho * d.Wo;
        for (int64_t oy = 0; oy < d.Ho; ++oy) {
          int64_t iy = oy * d.stride - d.pad + ki;
          if (iy < 0 || iy >= d.H) continue;
          for (int64_t ox = 0; ox < d.Wo; ++ox) {
            int64_t ix = ox * d.stride - d.pad + kj;
            if (ix >= 0 && ix < d.W) x[(c * d.H + iy) * d.W + ix] += row[oy * d.Wo + ox];
          }
        }
      }
    }
  }
}

}  // namespace

// ---------------------------------------------------------------------------
// matmul
// ---------------------------------------------------------------------------

template <class T>
Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b) {
  if (a.rank() != 2 || b.rank() != 2)
    throw ShapeError("matmul expects 2-D tensors");
  int64_t m = a.dim(0), k = a.dim(1), k2 = b.dim(0), n = b.dim(1);
  if (k != k2)
    throw ShapeError("matmul inner dimensions disagree: " + shape_str(a.shape()) + " x " + shape_str(b.shape()));
  auto out = alloc_node<T>({m, n});
  {
    CMatMap<T> A(a.data().data(), m, k), B(b.data().data(), k, n);
    MatMap<T> C(out->value.data(), m, n);
    C.noalias() = A * B;
  }
  auto an = a.node();
  auto bn = b.node();
  attach(out, std::vector<Tensor<T>>{a, b}, [an, bn, m, k, n](Node<T>& self) {
    CMatMap<T> dC(self.grad.data(), m, n);
    CMatMap<T> A(an->value.data(), m, k), B(bn->value.data(), k, n);
    if (an->requires_grad) {
      an->ensure_grad();
      MatMap<T> dA(an->grad.data(), m, k);
      dA.noalias() += dC * B.transpose();
    }
    if (bn->requires_grad) {
      bn->ensure_grad();
      MatMap<T> dB(bn->grad.data(), k, n);
      dB.noalias() += A.transpose() * dC;
    }
  });
  return wrap(std::move(out));
}

// ---------------------------------------------------------------------------
// conv2d
// ---------------------------------------------------------------------------

template <class T>
Tensor<T> conv2d(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>* bias,
                 int stride, int padding, int groups) {
  ConvDims d = conv_dims(x, w, stride, padding, groups);
  if (bias && (bias->rank() != 1 || bias->dim(0) != d.O))
    throw ShapeError("conv2d bias must be [O]");
  auto out = alloc_node<T>({d.N, d.O, d.Ho, d.Wo});
  const int64_t colsz = d.Cg * d.kh * d.kw;
  const int64_t osp = d.Ho * d.Wo;

#pragma omp parallel
  {
    std::vector<T> col(static_cast<size_t>(colsz * osp));
#pragma omp for collapse(2) schedule(static)
    for (int64_t n = 0; n < d.N; ++n) {
      for (int64_t g = 0; g < d.groups; ++g) {
        const T* xs = x.data().data() + (n * d.C + g * d.Cg) * d.H * d.W;
        im2col(xs, d, col.data());
        CMatMap<T> Wm(w.data().data() + g * d.Og * colsz, d.Og, colsz);
        CMatMap<T> Cm(col.data(), colsz, osp);
        MatMap<T> Om(out->value.data() + (n * d.O + g * d.Og) * osp, d.Og, osp);
        Om.noalias() = Wm * Cm;
      }
    }
  }
  if (bias) {
    const T* pb = bias->data().data();
    T* po = out->value.data();
    for (int64_t n = 0; n < d.N; ++n)
      for (int64_t o = 0; o < d.O; ++o) {
        T b = pb[o];
        T* row = po + (n * d.O + o) * osp;
        for (int64_t i = 0; i < osp; ++i) row[i] += b;
      }
  }

  std::vector<Tensor<T>> parents{x, w};
  if (bias) parents.push_back(*bias);
  auto xn = x.node();
  auto wn = w.node();
  std::shared_ptr<Node<T>> bnode = bias ? bias->node() : nullptr;
  attach(out, parents, [xn, wn, bnode, d, colsz, osp](Node<T>& self) {
    if (bnode && bnode->requires_grad) {
      bnode->ensure_grad();
      for (int64_t n = 0; n < d.N; ++n)
        for (int64_t o = 0; o < d.O; ++o) {
          const T* row = self.grad.data() + (n * d.O + o) * osp;
          T acc = 0;
          for (int64_t i = 0; i < osp; ++i) acc += row[i];
          bnode->grad[static_cast<size_t>(o)] += acc;
        }
    }
    // Per-sample weight partials reduced in sample order: deterministic for
    // any thread count.
    std::vector<std::vector<T>> dw_partial;
    if (wn->requires_grad) dw_partial.assign(static_cast<size_t>(d.N), std::vector<T>(wn->value.size(), T(0)));
    if (xn->requires_grad) xn->ensure_grad();

#pragma omp parallel
    {
      std::vector<T> col(static_cast<size_t>(colsz * osp));
      std::vector<T> dcol(static_cast<size_t>(colsz * osp));
#pragma omp for collapse(2) schedule(static)
      for (int64_t n = 0; n < d.N; ++n) {
        for (int64_t g = 0; g < d.groups; ++g) {
          CMatMap<T> dO(self.grad.data() + (n * d.O + g * d.Og) * osp, d.Og, osp);
          CMatMap<T> Wm(wn->value.data() + g * d.Og * colsz, d.Og, colsz);
          if (wn->requires_grad) {
            const T* xs = xn->value.data() + (n * d.C + g * d.Cg) * d.H * d.W;
            im2col(xs, d, col.data());
            CMatMap<T> Cm(col.data(), colsz, osp);
            MatMap<T> dW(dw_partial[static_cast<size_t>(n)].data() + g * d.Og * colsz, d.Og, colsz);
            dW.noalias() += dO * Cm.transpose();
          }
          if (xn->requires_grad) {
            MatMap<T> dCm(dcol.data(), colsz, osp);
            dCm.noalias() = Wm.transpose() * dO;
            T* dxs = xn->grad.data() + (n * d.C + g * d.Cg) * d.H * d.W;
            col2im(dcol.data(), d, dxs);
          }
        }
      }
    }
    if (wn->requires_grad) {
      wn->ensure_grad();
      for (int64_t n = 0; n < d.N; ++n)
        for (size_t i = 0; i < wn->grad.size(); ++i) wn->grad[i] += dw_partial[static_cast<size_t>(n)][i];
    }
  });
  return wrap(std::move(out));
}

// ---------------------------------------------------------------------------
// conv_transpose2d  (weight layout [Cin, Cout, kh, kw])
// ---------------------------------------------------------------------------

template <class T>
Tensor<T> conv_transpose2d(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>* bias,
                           int stride, int padding) {
  if (x.rank() != 4 || w.rank() != 4)
    throw ShapeError("conv_transpose2d expects 4-D input and weight");
  int64_t N = x.dim(0), Cin = x.dim(1), H = x.dim(2), W = x.dim(3);
  int64_t wCin = w.dim(0), Cout = w.dim(1), kh = w.dim(2), kw = w.dim(3);
  if (Cin != wCin) throw ShapeError("conv_transpose2d channel mismatch");
  if (stride < 1) throw ConfigError("conv_transpose2d stride must be >= 1");
  int64_t Ho = (H - 1) * stride - 2 * padding + kh;
  int64_t Wo = (W - 1) * stride - 2 * padding + kw;
  if (Ho < 1 || Wo < 1) throw ShapeError("conv_transpose2d degenerate output extent");
  if (bias && (bias->rank() != 1 || bias->dim(0) != Cout))
    throw ShapeError("conv_transpose2d bias must be [Cout]");

  auto out = alloc_node<T>({N, Cout, Ho, Wo});
  const int64_t colsz = Cout * kh * kw;
  const int64_t isp = H * W;

  // Dims describing the matched *forward* convolution whose adjoint this is:
  // output of that conv has extent (H, W); its input is (Ho, Wo).
  ConvDims d{};
  d.N = N;
  d.C = Cout;
  d.Cg = Cout;
  d.H = Ho;
  d.W = Wo;
  d.kh = kh;
  d.kw = kw;
  d.stride = stride;
  d.pad = padding;
  d.groups = 1;
  d.Ho = H;
  d.Wo = W;

#pragma omp parallel
  {
    std::vector<T> col(static_cast<size_t>(colsz * isp));
#pragma omp for schedule(static)
    for (int64_t n = 0; n < N; ++n) {
      CMatMap<T> Wm(w.data().data(), Cin, colsz);
      CMatMap<T> Xm(x.data().data() + n * Cin * isp, Cin, isp);
      MatMap<T> Cm(col.data(), colsz, isp);
      Cm.noalias() = Wm.transpose() * Xm;
      col2im(col.data(), d, out->value.data() + n * Cout * Ho * Wo);
    }
  }
  if (bias) {
    const T* pb = bias->data().data();
    for (int64_t n = 0; n < N; ++n)
      for (int64_t o = 0; o < Cout; ++o) {
        T b = pb[o];
        T* row = out->value.data() + (n * Cout + o) * Ho * Wo;
        for (int64_t i = 0; i < Ho * Wo; ++i) row[i] += b;
      }
  }

  std::vector<Tensor<T>> parents{x, w};
  if (bias) parents.push_back(*bias);
  auto xn = x.node();
  auto wn = w.node();
  std::shared_ptr<Node<T>> bnode = bias ? bias->node() : nullptr;
  attach(out, parents, [xn, wn, bnode, d, N, Cin, Cout, Ho, Wo, colsz, isp](Node<T>& self) {
    if (bnode && bnode->requires_grad) {
      bnode->ensure_grad();
      for (int64_t n = 0; n < N; ++n)
        for (int64_t o = 0; o < Cout; ++o) {
          const T* row = self.grad.data() + (n * Cout + o) * Ho * Wo;
          T acc = 0;
          for (int64_t i = 0; i < Ho * Wo; ++i) acc += row[i];
          bnode->grad[static_cast<size_t>(o)] += acc;
        }
    }
    std::vector<std::vector<T>> dw_partial;
    if (wn->requires_grad) dw_partial.assign(static_cast<size_t>(N), std::vector<T>(wn->value.size(), T(0)));
    if (xn->requires_grad) xn->ensure_grad();

#pragma omp parallel
    {
      std::vector<T> col(static_cast<size_t>(colsz * isp));
#pragma omp for schedule(static)
      for (int64_t n = 0; n < N; ++n) {
        // dcol = im2col(dout); dx = W * dcol; dW = x * dcol^T
        im2col(self.grad.data() + n * Cout * Ho * Wo, d, col.data());
        CMatMap<T> dCm(col.data(), colsz, isp);
        if (xn->requires_grad) {
          CMatMap<T> Wm(wn->value.data(), Cin, colsz);
          MatMap<T> dX(xn->grad.data() + n * Cin * isp, Cin, isp);
          dX.noalias() += Wm * dCm;
        }
        if (wn->requires_grad) {
          CMatMap<T> Xm(xn->value.data() + n * Cin * isp, Cin, isp);
          MatMap<T> dW(dw_partial[static_cast<size_t>(n)].data(), Cin, colsz);
          dW.noalias() += Xm * dCm.transpose();
        }
      }
    }
    if (wn->requires_grad) {
      wn->ensure_grad();
      for (int64_t n = 0; n < N; ++n)
        for (size_t i = 0; i < wn->grad.size(); ++i) wn->grad[i] += dw_partial[static_cast<size_t>(n)][i];
    }
  });
  return wrap(std::move(out));
}

// ---------------------------------------------------------------------------
// maxpool2d
// ---------------------------------------------------------------------------

template <class T>
Tensor<T> maxpool2d(const Tensor<T>& x, int k, int stride, std::vector<int64_t>* argmax_out) {
  if (x.rank() != 4) throw ShapeError("maxpool2d expects 4-D input");
  if (k != stride) throw ConfigError("maxpool2d supports k == stride (pad-free policy)");
  int64_t N = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
  if (H % stride != 0 || W % stride != 0)
    throw ShapeError("maxpool2d requires extents divisible by stride " + std::to_string(stride) +
                     ", got " + shape_str(x.shape()));
  int64_t Ho = H / stride, Wo = W / stride;
  auto out = alloc_node<T>({N, C, Ho, Wo});
  auto idx = std::make_shared<std::vector<int64_t>>(static_cast<size_t>(N * C * Ho * Wo));
  const T* px = x.data().data();
  T* po = out->value.data();
  for (int64_t nc = 0; nc < N * C; ++nc) {
    const T* plane = px + nc * H * W;
    for (int64_t oy = 0; oy < Ho; ++oy)
      for (int64_t ox = 0; ox < Wo; ++ox) {
        T best = -std::numeric_limits<T>::infinity();
        int64_t bi = -1;
        for (int64_t ki = 0; ki < k; ++ki)
          for (int64_t kj = 0; kj < k; ++kj) {
            int64_t ii = (oy * stride + ki) * W + ox * stride + kj;
            if (plane[ii] > best) {  // strict: ties go to first row-major element
              best = plane[ii];
              bi = ii;
            }
          }
        po[nc * Ho * Wo + oy * Wo + ox] = best;
        (*idx)[static_cast<size_t>(nc * Ho * Wo + oy * Wo + ox)] = nc * H * W + bi;
      }
  }
  if (argmax_out) *argmax_out = *idx;
  auto xn = x.node();
  attach(out, std::vector<Tensor<T>>{x}, [xn, idx](Node<T>& self) {
    xn->ensure_grad();
    for (size_t i = 0; i < self.grad.size(); ++i)
      xn->grad[static_cast<size_t>((*idx)[i])] += self.grad[i];
  });
  return wrap(std::move(out));
}

// ---------------------------------------------------------------------------
// batchnorm2d
// ---------------------------------------------------------------------------

template <class T>
Tensor<T> batchnorm2d(const Tensor<T>& x, const Tensor<T>& gamma, const Tensor<T>& beta,
                      Tensor<T>& running_mean, Tensor<T>& running_var, bool train,
                      double momentum, double eps) {
  if (x.rank() != 4) throw ShapeError("batchnorm2d expects 4-D input");
  int64_t N = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
  if (gamma.numel() != C || beta.numel() != C || running_mean.numel() != C || running_var.numel() != C)
    throw ShapeError("batchnorm2d parameter extent must equal channel count");
  if (train && N < 2) throw ConfigError("batchnorm2d train mode requires batch size >= 2");

  auto out = alloc_node<T>(x.shape());
  const int64_t sp = H * W;
  const int64_t m = N * sp;
  const T* px = x.data().data();
  const T* pg = gamma.data().data();
  const T* pb = beta.data().data();
  T* po = out->value.data();

  auto mean = std::make_shared<std::vector<T>>(static_cast<size_t>(C));
  auto invstd = std::make_shared<std::vector<T>>(static_cast<size_t>(C));

  if (train) {
#pragma omp parallel for schedule(static)
    for (int64_t c = 0; c < C; ++c) {
      T mu = 0;
      for (int64_t n = 0; n < N; ++n) {
        const T* row = px + (n * C + c) * sp;
        for (int64_t i = 0; i < sp; ++i) mu += row[i];
      }
      mu /= static_cast<T>(m);
      T var = 0;
      for (int64_t n = 0; n < N; ++n) {
        const T* row = px + (n * C + c) * sp;
        for (int64_t i = 0; i < sp; ++i) {
          T dmu = row[i] - mu;
          var += dmu * dmu;
        }
      }
      var /= static_cast<T>(m);
      (*mean)[static_cast<size_t>(c)] = mu;
      (*invstd)[static_cast<size_t>(c)] = T(1) / std::sqrt(var + static_cast<T>(eps));
      // running stats (unbiased variance)
      T mom = static_cast<T>(momentum);
      running_mean.raw_data()[static_cast<size_t>(c)] =
          (T(1) - mom) * running_mean.data()[static_cast<size_t>(c)] + mom * mu;
      T uvar = var * static_cast<T>(m) / static_cast<T>(m - 1);
      running_var.raw_data()[static_cast<size_t>(c)] =
          (T(1) - mom) * running_var.data()[static_cast<size_t>(c)] + mom * uvar;
    }
  } else {
    for (int64_t c = 0; c < C; ++c) {
      (*mean)[static_cast<size_t>(c)] = running_mean.data()[static_cast<size_t>(c)];
      (*invstd)[static_cast<size_t>(c)] =
          T(1) / std::sqrt(running_var.data()[static_cast<size_t>(c)] + static_cast<T>(eps));
    }
  }

#pragma omp parallel for collapse(2) schedule(static)
  for (int64_t n = 0; n < N; ++n)
    for (int64_t c = 0; c < C; ++c) {
      const T* row = px + (n * C + c) * sp;
      T* orow = po + (n * C + c) * sp;
      T mu = (*mean)[static_cast<size_t>(c)], is = (*invstd)[static_cast<size_t>(c)];
      T g = pg[c], b = pb[c];
      for (int64_t i = 0; i < sp; ++i) orow[i] = g * (row[i] - mu) * is + b;
    }

  auto xn = x.node();
  auto gn = gamma.node();
  auto bn = beta.node();
  attach(out, std::vector<Tensor<T>>{x, gamma, beta},
         [xn, gn, bn, mean, invstd, train, N, C, sp, m](Node<T>& self) {
           if (gn->requires_grad) gn->ensure_grad();
           if (bn->requires_grad) bn->ensure_grad();
           if (xn->requires_grad) xn->ensure_grad();
#pragma omp parallel for schedule(static)
           for (int64_t c = 0; c < C; ++c) {
             T mu = (*mean)[static_cast<size_t>(c)], is = (*invstd)[static_cast<size_t>(c)];
             T g = gn->value[static_cast<size_t>(c)];
             T sum_dy = 0, sum_dy_xhat = 0;
             for (int64_t n = 0; n < N; ++n) {
               const T* dyr = self.grad.data() + (n * C + c) * sp;
               const T* xr = xn->value.data() + (n * C + c) * sp;
               for (int64_t i = 0; i < sp; ++i) {
                 sum_dy += dyr[i];
                 sum_dy_xhat += dyr[i] * (xr[i] - mu) * is;
               }
             }
             if (bn->requires_grad) bn->grad[static_cast<size_t>(c)] += sum_dy;
             if (gn->requires_grad) gn->grad[static_cast<size_t>(c)] += sum_dy_xhat;
             if (!xn->requires_grad) continue;
             if (train) {
               T inv_m = T(1) / static_cast<T>(m);
               for (int64_t n = 0; n < N; ++n) {
                 const T* dyr = self.grad.data() + (n * C + c) * sp;
                 const T* xr = xn->value.data() + (n * C + c) * sp;
                 T* dxr = xn->grad.data() + (n * C + c) * sp;
                 for (int64_t i = 0; i < sp; ++i) {
                   T xhat = (xr[i] - mu) * is;
                   dxr[i] += g * is * (dyr[i] - inv_m * sum_dy - xhat * inv_m * sum_dy_xhat);
                 }
               }
             } else {
               for (int64_t n = 0; n < N; ++n) {
                 const T* dyr = self.grad.data() + (n * C + c) * sp;
                 T* dxr = xn->grad.data() + (n * C + c) * sp;
                 for (int64_t i = 0; i < sp; ++i) dxr[i] += g * is * dyr[i];
               }
             }
           }
         });
  return wrap(std::move(out));
}

// ---------------------------------------------------------------------------
// activations
// ---------------------------------------------------------------------------

template <class T>
Tensor<T> relu(const Tensor<T>& x) {
  auto out = alloc_node<T>(x.shape());
  const T* px = x.data().data();
  T* po = out->value.data();
  int64_t n = x.numel();
  for (int64_t i = 0; i < n; ++i) po[i] = px[i] > 0 ? px[i] : T(0);
  auto xn = x.node();
  attach(out, std::vector<Tensor<T>>{x}, [xn](Node<T>& self) {
    xn->ensure_grad();
    for (size_t i = 0; i < self.grad.size(); ++i)
      if (xn->value[i] > 0) xn->grad[i] += self.grad[i];
  });
  return wrap(std::move(out));
}

template <class T>
Tensor<T> leaky_relu(const Tensor<T>& x, double slope) {
  T s = static_cast<T>(slope);
  auto out = alloc_node<T>(x.shape());
  const T* px = x.data().data();
  T* po = out->value.data();
  int64_t n = x.numel();
#pragma omp parallel for schedule(static)
  for (int64_t i = 0; i < n; ++i) po[i] = px[i] > 0 ? px[i] : s * px[i];
  auto xn = x.node();
  attach(out, std::vector<Tensor<T>>{x}, [xn, s](Node<T>& self) {
    xn->ensure_grad();
    int64_t m = static_cast<int64_t>(self.grad.size());
#pragma omp parallel for schedule(static)
    for (int64_t i = 0; i < m; ++i) {
      size_t u = static_cast<size_t>(i);
      xn->grad[u] += self.grad[u] * (xn->value[u] > 0 ? T(1) : s);
    }
  });
  return wrap(std::move(out));
}

template <class T>
Tensor<T> softmax(const Tensor<T>& x, int axis) {
  int r = x.rank();
  if (axis < 0) axis += r;
  if (axis < 0 || axis >= r) throw ShapeError("softmax axis out of range");
  int64_t outer = 1, n = x.dim(axis), inner = 1;
  for (int d = 0; d < axis; ++d) outer *= x.dim(d);
  for (int d = axis + 1; d < r; ++d) inner *= x.dim(d);

  auto out = alloc_node<T>(x.shape());
  const T* px = x.data().data();
  T* po = out->value.data();
#pragma omp parallel for collapse(2) schedule(static)
  for (int64_t ou = 0; ou < outer; ++ou)
    for (int64_t in = 0; in < inner; ++in) {
      const T* src = px + ou * n * inner + in;
      T* dst = po + ou * n * inner + in;
      T mx = src[0];
      for (int64_t j = 1; j < n; ++j) mx = std::max(mx, src[j * inner]);
      T sum = 0;
      for (int64_t j = 0; j < n; ++j) {
        T e = std::exp(src[j * inner] - mx);
        dst[j * inner] = e;
        sum += e;
      }
      T isum = T(1) / sum;
      for (int64_t j = 0; j < n; ++j) dst[j * inner] *= isum;
    }
  auto xn = x.node();
  attach(out, std::vector<Tensor<T>>{x}, [xn, outer, n, inner](Node<T>& self) {
    xn->ensure_grad();
#pragma omp parallel for collapse(2) schedule(static)
    for (int64_t ou = 0; ou < outer; ++ou)
      for (int64_t in = 0; in < inner; ++in) {
        const T* y = self.value.data() + ou * n * inner + in;
        const T* dy = self.grad.data() + ou * n * inner + in;
        T* dx = xn->grad.data() + ou * n * inner + in;
        T dot = 0;
        for (int64_t j = 0; j < n; ++j) dot += dy[j * inner] * y[j * inner];
        for (int64_t j = 0; j < n; ++j) dx[j * inner] += y[j * inner] * (dy[j * inner] - dot);
      }
  });
  return wrap(std::move(out));
}

// ---------------------------------------------------------------------------
// bilinear_resize (align_corners = false)
// ---------------------------------------------------------------------------

template <class T>
Tensor<T> bilinear_resize(const Tensor<T>& x, int64_t h2, int64_t w2) {
  if (x.rank() != 4) throw ShapeError("bilinear_resize expects 4-D input");
  if (h2 < 1 || w2 < 1) throw ShapeError("bilinear_resize target extents must be >= 1");
  int64_t N = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
  auto out = alloc_node<T>({N, C, h2, w2});

  // Precompute sampling positions.
  struct Tap {
    int64_t i0, i1;
    T w0, w1;
  };
  auto taps = [](int64_t src, int64_t dst) {
    std::vector<Tap> t(static_cast<size_t>(dst));
    double r = static_cast<double>(src) / static_cast<double>(dst);
    for (int64_t o = 0; o < dst; ++o) {
      double s = (static_cast<double>(o) + 0.5) * r - 0.5;
      s = std::max(0.0, std::min(s, static_cast<double>(src - 1)));
      int64_t i0 = static_cast<int64_t>(std::floor(s));
      int64_t i1 = std::min(i0 + 1, src - 1);
      T f = static_cast<T>(s - static_cast<double>(i0));
      t[static_cast<size_t>(o)] = {i0, i1, T(1) - f, f};
    }
    return t;
  };
  auto ty = std::make_shared<std::vector<Tap>>(taps(H, h2));
  auto tx = std::make_shared<std::vector<Tap>>(taps(W, w2));

  const T* px = x.data().data();
  T* po = out->value.data();
#pragma omp parallel for schedule(static)
  for (int64_t nc = 0; nc < N * C; ++nc) {
    const T* plane = px + nc * H * W;
    T* oplane = po + nc * h2 * w2;
    for (int64_t oy = 0; oy < h2; ++oy) {
      const Tap& a = (*ty)[static_cast<size_t>(oy)];
      for (int64_t ox = 0; ox < w2; ++ox) {
        const Tap& b = (*tx)[static_cast<size_t>(ox)];
        oplane[oy * w2 + ox] = a.w0 * (b.w0 * plane[a.i0 * W + b.i0] + b.w1 * plane[a.i0 * W + b.i1]) +
                               a.w1 * (b.w0 * plane[a.i1 * W + b.i0] + b.w1 * plane[a.i1 * W + b.i1]);
      }
    }
  }
  auto xn = x.node();
  attach(out, std::vector<Tensor<T>>{x}, [xn, ty, tx, N, C, H, W, h2, w2](Node<T>& self) {
    xn->ensure_grad();
#pragma omp parallel for schedule(static)
    for (int64_t nc = 0; nc < N * C; ++nc) {
      T* dplane = xn->grad.data() + nc * H * W;
      const T* gplane = self.grad.data() + nc * h2 * w2;
      for (int64_t oy = 0; oy < h2; ++oy) {
        const Tap& a = (*ty)[static_cast<size_t>(oy)];
        for (int64_t ox = 0; ox < w2; ++ox) {
          const Tap& b = (*tx)[static_cast<size_t>(ox)];
          T g = gplane[oy * w2 + ox];
          dplane[a.i0 * W + b.i0] += a.w0 * b.w0 * g;
          dplane[a.i0 * W + b.i1] += a.w0 * b.w1 * g;
          dplane[a.i1 * W + b.i0] += a.w1 * b.w0 * g;
          dplane[a.i1 * W + b.i1] += a.w1 * b.w1 * g;
        }
      }
    }
  });
  return wrap(std::move(out));
}

// ---------------------------------------------------------------------------
// explicit instantiation
// ---------------------------------------------------------------------------

#define FC_INSTANTIATE_NN(T)                                                                \
  template Tensor<T> matmul<T>(const Tensor<T>&, const Tensor<T>&);                         \
  template Tensor<T> conv2d<T>(const Tensor<T>&, const Tensor<T>&, const Tensor<T>*, int,  \
                               int, int);                                                   \
  template Tensor<T> conv_transpose2d<T>(const Tensor<T>&, const Tensor<T>&,               \
                                         const Tensor<T>*, int, int);                       \
  template Tensor<T> maxpool2d<T>(const Tensor<T>&, int, int, std::vector<int64_t>*);       \
  template Tensor<T> batchnorm2d<T>(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&,  \
                                    Tensor<T>&, Tensor<T>&, bool, double, double);          \
  template Tensor<T> relu<T>(const Tensor<T>&);                                             \
  template Tensor<T> leaky_relu<T>(const Tensor<T>&, double);                               \
  template Tensor<T> softmax<T>(const Tensor<T>&, int);                                     \
  template Tensor<T> bilinear_resize<T>(const Tensor<T>&, int64_t, int64_t);

FC_INSTANTIATE_NN(float)
FC_INSTANTIATE_NN(double)

#undef FC_INSTANTIATE_NN

}  // namespace fc
