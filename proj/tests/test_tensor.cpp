#include <cmath>
#include <vector>

#include "doctest.h"
#include "flowcaps/tensor.hpp"

using fc::Rng;
using fc::Shape;
using Td = fc::Tensor<double>;

TEST_CASE("tensor construction and accessors") {
  Td z = Td::zeros({2, 3});
  CHECK(z.numel() == 6);
  CHECK(z.rank() == 2);
  CHECK(z.dim(0) == 2);
  CHECK(z.dim(-1) == 3);
  CHECK_THROWS_AS(z.dim(2), fc::ShapeError);
  for (double v : z.data()) CHECK(v == 0.0);

  Td f = Td::full({4}, 2.5);
  for (double v : f.data()) CHECK(v == 2.5);

  CHECK_THROWS_AS(Td::from_data({2, 2}, {1.0, 2.0, 3.0}), fc::ShapeError);
  CHECK_THROWS_AS(f.item(), fc::ShapeError);
  CHECK(Td::scalar(7.0).item() == 7.0);
}

TEST_CASE("create initializers are deterministic per seed") {
  Rng r1(42), r2(42), r3(43);
  Td a = fc::create<double>({3, 3}, fc::Init::uniform(-1, 1), r1);
  Td b = fc::create<double>({3, 3}, fc::Init::uniform(-1, 1), r2);
  Td c = fc::create<double>({3, 3}, fc::Init::uniform(-1, 1), r3);
  bool same = true, diff = false;
  for (int i = 0; i < 9; ++i) {
    same = same && a.data()[i] == b.data()[i];
    diff = diff || a.data()[i] != c.data()[i];
    CHECK(a.data()[i] >= -1.0);
    CHECK(a.data()[i] <= 1.0);
  }
  CHECK(same);
  CHECK(diff);
}

TEST_CASE("elementwise forward values") {
  Td a = Td::from_data({2, 2}, {1, 2, 3, 4});
  Td b = Td::from_data({2, 2}, {10, 20, 30, 40});
  Td s = fc::add(a, b);
  Td d = fc::sub(b, a);
  Td m = fc::mul(a, b);
  Td q = fc::divide(b, a);
  CHECK(s.data()[3] == 44.0);
  CHECK(d.data()[0] == 9.0);
  CHECK(m.data()[2] == 90.0);
  CHECK(q.data()[1] == 10.0);
  CHECK(fc::add_scalar(a, 0.5).data()[0] == 1.5);
  CHECK(fc::scale(a, -2.0).data()[3] == -8.0);
  CHECK(fc::neg(a).data()[1] == -2.0);
  CHECK(fc::square(a).data()[3] == 16.0);
  CHECK(fc::abs(Td::from_data({2}, {-3, 3})).data()[0] == 3.0);
  CHECK(fc::exp(Td::scalar(1.0)).item() == doctest::Approx(std::exp(1.0)));
  CHECK(fc::log(Td::scalar(std::exp(2.0))).item() == doctest::Approx(2.0));
  CHECK(fc::sqrt(Td::scalar(9.0)).item() == doctest::Approx(3.0));
  CHECK(fc::cosh(Td::scalar(1.0)).item() == doctest::Approx(std::cosh(1.0)));
}

TEST_CASE("size-1 broadcast in binary ops") {
  Td a = Td::from_data({2, 2}, {1, 2, 3, 4});
  Td c = Td::from_data({1, 1}, {10.0});
  Td out = fc::mul(a, c);
  CHECK(out.data()[2] == 30.0);
  Td out2 = fc::add(c, a);
  CHECK(out2.data()[0] == 11.0);
  Td col = Td::from_data({2, 1}, {100.0, 200.0});
  Td out3 = fc::add(a, col);
  CHECK(out3.data()[1] == 102.0);
  CHECK(out3.data()[2] == 203.0);
  CHECK_THROWS_AS(fc::add(a, Td::zeros({3, 2})), fc::ShapeError);
  CHECK_THROWS_AS(fc::add(a, Td::zeros({4})), fc::ShapeError);  // ranks must match
}

TEST_CASE("reshape and concat") {
  Td a = Td::from_data({2, 3}, {1, 2, 3, 4, 5, 6});
  Td r = fc::reshape(a, {3, 2});
  CHECK(r.dim(0) == 3);
  CHECK(r.data()[5] == 6.0);
  CHECK_THROWS_AS(fc::reshape(a, {4, 2}), fc::ShapeError);

  Td b = Td::from_data({2, 1}, {7, 8});
  Td c = fc::concat(std::vector<Td>{fc::reshape(a, {2, 3}), b}, 1);
  CHECK(c.dim(1) == 4);
  std::vector<double> want = {1, 2, 3, 7, 4, 5, 6, 8};
  for (int i = 0; i < 8; ++i) CHECK(c.data()[i] == want[i]);
  CHECK_THROWS_AS(fc::concat(std::vector<Td>{a, Td::zeros({3, 3})}, 1), fc::ShapeError);
}

TEST_CASE("reductions") {
  Td a = Td::from_data({2, 3}, {1, 2, 3, 4, 5, 6});
  Td s0 = fc::reduce_sum(a, {0});
  CHECK(s0.dim(0) == 3);
  CHECK(s0.data()[0] == 5.0);
  CHECK(s0.data()[2] == 9.0);
  Td s1 = fc::reduce_sum(a, {1}, true);
  CHECK(s1.rank() == 2);
  CHECK(s1.dim(1) == 1);
  CHECK(s1.data()[1] == 15.0);
  Td m = fc::reduce_mean(a, {0, 1});
  CHECK(m.item() == doctest::Approx(3.5));
}

TEST_CASE("matmul matches naive oracle") {
  Rng rng(7);
  Td a = fc::create<double>({3, 4}, fc::Init::uniform(-1, 1), rng);
  Td b = fc::create<double>({4, 5}, fc::Init::uniform(-1, 1), rng);
  Td c = fc::matmul(a, b);
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 5; ++j) {
      double want = 0;
      for (int k = 0; k < 4; ++k) want += a.data()[i * 4 + k] * b.data()[k * 5 + j];
      CHECK(c.data()[i * 5 + j] == doctest::Approx(want).epsilon(1e-12));
    }
  CHECK_THROWS_AS(fc::matmul(a, a), fc::ShapeError);
}

TEST_CASE("backward accumulates through shared subexpression") {
  Td x = Td::scalar(3.0).set_requires_grad(true);
  Td y = fc::add(fc::square(x), fc::scale(x, 2.0));  // x^2 + 2x
  fc::backward(y);
  CHECK(x.grad()[0] == doctest::Approx(8.0));  // 2*3 + 2
}

TEST_CASE("repeated backward on the same graph throws") {
  Td x = Td::scalar(1.0).set_requires_grad(true);
  Td y = fc::square(x);
  fc::backward(y);
  CHECK_THROWS_AS(fc::backward(y), fc::StateError);
}

TEST_CASE("backward requires scalar and grads accumulate across graphs") {
  Td x = Td::from_data({2}, {1, 2}).set_requires_grad(true);
  CHECK_THROWS_AS(fc::backward(fc::scale(x, 2.0)), fc::ShapeError);

  Td l1 = fc::reduce_sum(fc::square(x), {0});
  fc::backward(l1);
  Td l2 = fc::reduce_sum(fc::scale(x, 10.0), {0});
  fc::backward(l2);  // fresh graph, same leaf
  CHECK(x.grad()[0] == doctest::Approx(2.0 + 10.0));
  x.zero_grad();
  CHECK(x.raw_grad() == nullptr);
}

TEST_CASE("detached copies value but not graph") {
  Td x = Td::scalar(2.0).set_requires_grad(true);
  Td d = x.detached();
  CHECK(d.item() == 2.0);
  CHECK_FALSE(d.requires_grad());
  Td y = fc::mul(fc::square(x), d);
  fc::backward(y);
  CHECK(x.grad()[0] == doctest::Approx(8.0));
  CHECK(d.raw_grad() == nullptr);
}

TEST_CASE("sqrt gradient guard at zero") {
  Td x = Td::from_data({2}, {0.0, 4.0}).set_requires_grad(true);
  Td y = fc::reduce_sum(fc::sqrt(x, true), {0});
  fc::backward(y);
  CHECK(x.grad()[0] == 0.0);
  CHECK(x.grad()[1] == doctest::Approx(0.25));
}

TEST_CASE("finite_diff_check agrees on a composite expression") {
  Rng rng(11);
  Td x = fc::create<double>({4, 4}, fc::Init::uniform(0.2, 1.5), rng);
  auto f = [](Td& t) {
    return fc::reduce_sum(fc::mul(fc::log(t), fc::exp(fc::scale(t, 0.3))), {0, 1});
  };
  double err = fc::finite_diff_check<double>(f, x, 1e-5);
  CHECK(err < 1e-6);
}
