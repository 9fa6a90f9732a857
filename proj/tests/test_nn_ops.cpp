#include <cmath>
#include <vector>

#include "doctest.h"
#include "flowcaps/tensor.hpp"

using fc::Rng;
using Td = fc::Tensor<double>;

namespace {

// Straightforward loop conv, the oracle the fast path must match.
std::vector<double> naive_conv(const Td& x, const Td& w, const double* bias, int stride,
                               int pad, int groups) {
  int64_t N = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
  int64_t O = w.dim(0), Cg = w.dim(1), kh = w.dim(2), kw = w.dim(3);
  int64_t Ho = (H + 2 * pad - kh) / stride + 1;
  int64_t Wo = (W + 2 * pad - kw) / stride + 1;
  int64_t Og = O / groups;
  std::vector<double> out(static_cast<size_t>(N * O * Ho * Wo), 0.0);
  for (int64_t n = 0; n < N; ++n)
    for (int64_t o = 0; o < O; ++o) {
      int64_t g = o / Og;
      for (int64_t i = 0; i < Ho; ++i)
        for (int64_t j = 0; j < Wo; ++j) {
          double acc = bias ? bias[o] : 0.0;
          for (int64_t c = 0; c < Cg; ++c)
            for (int64_t u = 0; u < kh; ++u)
              for (int64_t v = 0; v < kw; ++v) {
                int64_t y = i * stride + u - pad, z = j * stride + v - pad;
                if (y < 0 || y >= H || z < 0 || z >= W) continue;
                acc += x.data()[((n * C + g * Cg + c) * H + y) * W + z] *
                       w.data()[((o * Cg + c) * kh + u) * kw + v];
              }
          out[static_cast<size_t>(((n * O + o) * Ho + i) * Wo + j)] = acc;
        }
    }
  return out;
}

double dot(std::span<const double> a, std::span<const double> b) {
  double s = 0;
  for (size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

}  // namespace

TEST_CASE("conv2d matches naive oracle across strides, padding, groups") {
  Rng rng(3);
  struct Case {
    int N, C, H, W, O, k, stride, pad, groups;
    bool bias;
  };
  for (Case cs : {Case{2, 3, 7, 8, 4, 3, 1, 1, 1, true}, Case{1, 4, 9, 9, 6, 5, 2, 2, 2, false},
                  Case{2, 6, 6, 5, 6, 1, 1, 0, 3, true}, Case{1, 2, 8, 8, 5, 7, 2, 3, 1, true}}) {
    Td x = fc::create<double>({cs.N, cs.C, cs.H, cs.W}, fc::Init::uniform(-1, 1), rng);
    Td w = fc::create<double>({cs.O, cs.C / cs.groups, cs.k, cs.k}, fc::Init::uniform(-1, 1), rng);
    Td b = fc::create<double>({cs.O}, fc::Init::uniform(-1, 1), rng);
    Td y = fc::conv2d(x, w, cs.bias ? &b : nullptr, cs.stride, cs.pad, cs.groups);
    auto want = naive_conv(x, w, cs.bias ? b.raw_data() : nullptr, cs.stride, cs.pad, cs.groups);
    REQUIRE(static_cast<size_t>(y.numel()) == want.size());
    for (size_t i = 0; i < want.size(); ++i)
      CHECK(y.data()[i] == doctest::Approx(want[i]).epsilon(1e-10));
  }
}

TEST_CASE("conv2d shape and config validation") {
  Td x = Td::zeros({1, 3, 8, 8});
  Td w = Td::zeros({4, 3, 3, 3});
  CHECK_THROWS_AS(fc::conv2d(x, Td::zeros({4, 2, 3, 3}), static_cast<const Td*>(nullptr), 1, 1), fc::ShapeError);
  CHECK_THROWS_AS(fc::conv2d(x, w, static_cast<const Td*>(nullptr), 0, 1), fc::ConfigError);
  CHECK_THROWS_AS(fc::conv2d(x, w, static_cast<const Td*>(nullptr), 1, 1, 2), fc::ConfigError);
  Td b3 = Td::zeros({3});
  CHECK_THROWS_AS(fc::conv2d(x, w, &b3, 1, 1), fc::ShapeError);
}

TEST_CASE("conv_transpose2d is the adjoint of conv2d") {
  // <conv(x), y> == <x, convT(y)> with the same weights defines the op.
  Rng rng(5);
  for (int stride : {1, 2}) {
    int pad = 1, k = stride == 1 ? 3 : 4;  // geometries that invert exactly
    Td x = fc::create<double>({2, 3, 8, 8}, fc::Init::uniform(-1, 1), rng);
    Td w = fc::create<double>({5, 3, k, k}, fc::Init::uniform(-1, 1), rng);
    Td y = fc::conv2d(x, w, static_cast<const Td*>(nullptr), stride, pad);
    Td u = fc::create<double>(y.shape(), fc::Init::uniform(-1, 1), rng);
    // conv_transpose2d weight layout is [Cin, Cout, kh, kw] = w as-is.
    Td xt = fc::conv_transpose2d(u, w, static_cast<const Td*>(nullptr), stride, pad);
    REQUIRE(xt.shape() == x.shape());
    CHECK(dot(y.data(), u.data()) == doctest::Approx(dot(x.data(), xt.data())).epsilon(1e-10));
  }
}

TEST_CASE("maxpool2d values, strict tie-break, validation") {
  Td x = Td::from_data({1, 1, 4, 4},
                       {1, 2, 5, 5, 3, 4, 5, 5, -1, -1, 0, 9, -1, -1, 8, 9});
  std::vector<int64_t> argmax;
  Td y = fc::maxpool2d(x, 2, 2, &argmax);
  REQUIRE(y.numel() == 4);
  CHECK(y.data()[0] == 4.0);
  CHECK(y.data()[1] == 5.0);
  CHECK(y.data()[3] == 9.0);
  // Ties resolve to the first scan-order occurrence (strict >).
  CHECK(argmax[1] == 2);   // flat index of the first 5 in its window's row-major scan
  CHECK(argmax[3] == 11);  // first 9
  CHECK_THROWS_AS(fc::maxpool2d(Td::zeros({1, 1, 5, 4})), fc::ShapeError);
  CHECK_THROWS_AS(fc::maxpool2d(x, 3, 2), fc::ConfigError);
}

TEST_CASE("batchnorm2d normalizes in train mode and tracks running stats") {
  Rng rng(9);
  int64_t N = 4, C = 3, H = 5, W = 5;
  Td x = fc::create<double>({N, C, H, W}, fc::Init::normal(2.0, 3.0), rng);
  Td gamma = Td::full({C}, 1.0), beta = Td::zeros({C});
  Td rmean = Td::zeros({C}), rvar = Td::full({C}, 1.0);
  Td y = fc::batchnorm2d(x, gamma, beta, rmean, rvar, true, 0.1, 1e-5);

  int64_t per = N * H * W;
  for (int64_t c = 0; c < C; ++c) {
    double mean = 0, var = 0, bmean = 0, bvar = 0;
    for (int64_t n = 0; n < N; ++n)
      for (int64_t p = 0; p < H * W; ++p) {
        double xv = x.data()[(n * C + c) * H * W + p];
        double yv = y.data()[(n * C + c) * H * W + p];
        mean += yv;
        var += yv * yv;
        bmean += xv;
      }
    mean /= static_cast<double>(per);
    var = var / static_cast<double>(per) - mean * mean;
    bmean /= static_cast<double>(per);
    for (int64_t n = 0; n < N; ++n)
      for (int64_t p = 0; p < H * W; ++p) {
        double xv = x.data()[(n * C + c) * H * W + p];
        bvar += (xv - bmean) * (xv - bmean);
      }
    bvar /= static_cast<double>(per);
    CHECK(mean == doctest::Approx(0.0).epsilon(1e-9));
    CHECK(var == doctest::Approx(1.0).epsilon(1e-3));  // eps in denominator
    CHECK(rmean.data()[c] == doctest::Approx(0.9 * 0.0 + 0.1 * bmean));
    CHECK(rvar.data()[c] ==
          doctest::Approx(0.9 * 1.0 + 0.1 * bvar * static_cast<double>(per) /
                                          static_cast<double>(per - 1)));
  }

  // Eval mode reads the running stats and ignores batch statistics.
  Td x2 = Td::full({1, C, 2, 2}, 0.0);
  Td y2 = fc::batchnorm2d(x2, gamma, beta, rmean, rvar, false, 0.1, 1e-5);
  for (int64_t c = 0; c < C; ++c)
    CHECK(y2.data()[c * 4] ==
          doctest::Approx((0.0 - rmean.data()[c]) / std::sqrt(rvar.data()[c] + 1e-5)));

  CHECK_THROWS_AS(fc::batchnorm2d(Td::zeros({1, C, 2, 2}), gamma, beta, rmean, rvar, true),
                  fc::ConfigError);
}

TEST_CASE("relu and leaky_relu") {
  Td x = Td::from_data({4}, {-2, -0.5, 0, 3}).set_requires_grad(true);
  Td r = fc::relu(x);
  CHECK(r.data()[0] == 0.0);
  CHECK(r.data()[3] == 3.0);
  Td l = fc::leaky_relu(x, 0.1);
  CHECK(l.data()[0] == doctest::Approx(-0.2));
  CHECK(l.data()[3] == 3.0);
}

TEST_CASE("softmax rows form a simplex and are shift-invariant") {
  Rng rng(13);
  Td x = fc::create<double>({3, 5}, fc::Init::uniform(-4, 4), rng);
  Td y = fc::softmax(x, 1);
  for (int i = 0; i < 3; ++i) {
    double s = 0;
    for (int j = 0; j < 5; ++j) {
      double v = y.data()[i * 5 + j];
      CHECK(v > 0.0);
      s += v;
    }
    CHECK(s == doctest::Approx(1.0).epsilon(1e-12));
  }
  Td y2 = fc::softmax(fc::add_scalar(x, 100.0), 1);
  for (int i = 0; i < 15; ++i) CHECK(y.data()[i] == doctest::Approx(y2.data()[i]).epsilon(1e-10));
  CHECK_THROWS_AS(fc::softmax(x, 2), fc::ShapeError);
}

TEST_CASE("bilinear_resize is exact on constants and matches hand oracle") {
  Td c = Td::full({1, 2, 3, 3}, 4.25);
  Td up = fc::bilinear_resize(c, 7, 9);
  for (double v : up.data()) CHECK(v == doctest::Approx(4.25));

  // 2x2 -> 4x4, align_corners=false: source coord = (i+0.5)/2 - 0.5.
  Td x = Td::from_data({1, 1, 2, 2}, {0, 1, 2, 3});
  Td y = fc::bilinear_resize(x, 4, 4);
  std::vector<double> want = {0, 0.25, 0.75, 1, 0.5, 0.75, 1.25, 1.5,
                              1.5, 1.75, 2.25, 2.5, 2, 2.25, 2.75, 3};
  for (int i = 0; i < 16; ++i) CHECK(y.data()[i] == doctest::Approx(want[i]).epsilon(1e-12));
}

TEST_CASE("gradients of spatial ops agree with finite differences") {
  Rng rng(21);
  Td w = fc::create<double>({4, 3, 3, 3}, fc::Init::uniform(-0.5, 0.5), rng);
  Td x0 = fc::create<double>({2, 3, 6, 6}, fc::Init::uniform(-1, 1), rng);
  auto conv_loss = [&](Td& t) {
    return fc::reduce_mean(fc::square(fc::conv2d(t, w, static_cast<const Td*>(nullptr), 2, 1)), {0, 1, 2, 3});
  };
  CHECK(fc::finite_diff_check<double>(conv_loss, x0, 1e-5, 24) < 1e-6);

  auto pool_loss = [](Td& t) { return fc::reduce_mean(fc::square(fc::maxpool2d(t)), {0, 1, 2, 3}); };
  Td xp = fc::create<double>({1, 2, 4, 4}, fc::Init::uniform(-1, 1), rng);
  CHECK(fc::finite_diff_check<double>(pool_loss, xp, 1e-5) < 1e-6);
}
