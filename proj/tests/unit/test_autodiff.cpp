// Copyright 2026 The acadj Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include <doctest.h>

#include <cmath>
#include <random>
#include <vector>

#include "acadj/autodiff.hpp"
#include "acadj/error.hpp"
#include "oracles.hpp"

using namespace acadj;
using namespace acadj::ad;

namespace {

Tensor random_tensor(std::size_t r, std::size_t c, std::mt19937_64& rng, double scale = 1.0) {
  std::normal_distribution<double> g(0.0, scale);
  Tensor t(r, c);
  for (double& x : t.data) x = g(rng);
  return t;
}

// Analytic gradient of every coordinate compared against the shared
// central-difference oracle.
double max_fd_error(const RecordedFn& f, Parameter& p) {
  p.zero_grad();
  Tape tape;
  tape.backward(f(tape));
  double worst = 0.0;
  for (std::size_t i = 0; i < p.value.size(); ++i) {
    const double saved = p.value.data[i];
    const double numeric = oracle::central_difference(
        [&](double x) {
          p.value.data[i] = x;
          Tape t;
          return f(t).value().item();
        },
        saved, 1e-5);
    p.value.data[i] = saved;
    worst = std::max(worst, oracle::rel_error(numeric, p.grad.data[i]));
  }
  return worst;
}

}  // namespace

TEST_SUITE("autodiff") {
  TEST_CASE("tanh at zero") {
    Parameter x(Tensor::scalar(0.0));
    Tape t;
    const Var y = tanh(t.param(x));
    CHECK(y.value().item() == 0.0);
    t.backward(y);
    CHECK(x.grad.item() == 1.0);
  }

  TEST_CASE("relu values and subgradient") {
    Parameter x(Tensor(1, 3, std::vector<double>{-2.0, 3.0, 0.0}));
    Tape t;
    const Var y = relu(t.param(x));
    CHECK(y.value().data == std::vector<double>{0.0, 3.0, 0.0});
    Parameter w(Tensor(3, 1, std::vector<double>{1.0, 1.0, 1.0}));
    t.backward(matmul(y, t.param(w)));
    CHECK(x.grad.data == std::vector<double>{0.0, 1.0, 0.0});
  }

  TEST_CASE("square of three") {
    Parameter x(Tensor::scalar(3.0));
    Tape t;
    t.backward(square(t.param(x)));
    CHECK(x.grad.item() == 6.0);
  }

  TEST_CASE("mean of constants leaves parameters at zero") {
    Parameter x(Tensor::scalar(1.5));
    Tape t;
    t.param(x);
    t.backward(mean(t.constant(Tensor(2, 2, 4.0))));
    CHECK(x.grad.item() == 0.0);
  }

  TEST_CASE("backward requires a scalar loss") {
    Parameter x(Tensor(2, 1, 1.0));
    Tape t;
    CHECK_THROWS_AS(t.backward(t.param(x)), ShapeError);
  }

  TEST_CASE("shape mismatches are rejected") {
    Tape t;
    const Var a = t.constant(Tensor(2, 3));
    const Var b = t.constant(Tensor(2, 2));
    CHECK_THROWS_AS(add(a, b), ShapeError);
    CHECK_THROWS_AS(matmul(a, a), ShapeError);
    CHECK_THROWS_AS(slice(a, 0, 3, 0, 1), ShapeError);
  }

  TEST_CASE("non-finite outputs raise") {
    Tape t;
    const Var a = t.constant(Tensor::scalar(1e200));
    CHECK_THROWS_AS(square(square(a)), NonFiniteError);
  }

  TEST_CASE("matmul gradient against finite differences") {
    std::mt19937_64 rng(3);
    Parameter a(random_tensor(2, 3, rng)), b(random_tensor(3, 1, rng));
    const RecordedFn f = [&](Tape& t) { return mean(square(matmul(t.param(a), t.param(b)))); };
    CHECK(max_fd_error(f, a) < 1e-6);
    CHECK(max_fd_error(f, b) < 1e-6);
  }

  TEST_CASE("every primitive against finite differences") {
    std::mt19937_64 rng(8);
    Parameter a(random_tensor(3, 4, rng)), b(random_tensor(3, 4, rng)), s(Tensor::scalar(0.7)),
        v(random_tensor(1, 4, rng));
    const RecordedFn f = [&](Tape& t) {
      const Var pa = t.param(a), pb = t.param(b);
      const Var x = add(mul(pa, pb), scalar_mul(0.5, sub(pa, pb)));
      const Var y = scale_columns(tanh(x), t.param(v));
      const Var z = scale(t.param(s), relu(add(y, t.constant(Tensor(3, 4, 0.1)))));
      const Var parts[] = {z, slice(pa, 0, 2, 0, 4)};
      const Var cat = concat(parts, 0);
      const Var parts2[] = {cat, square(cat)};
      return mse(concat(parts2, 1), t.constant(Tensor(5, 8, 0.25)));
    };
    for (Parameter* p : {&a, &b, &s, &v}) CHECK(max_fd_error(f, *p) < 1e-6);
  }

  TEST_CASE("linear model gradients are exact") {
    std::mt19937_64 rng(4);
    Parameter w(random_tensor(3, 1, rng)), c(Tensor::scalar(0.2));
    const Tensor x = random_tensor(10, 3, rng), y = random_tensor(10, 1, rng);
    const RecordedFn f = [&](Tape& t) {
      const Var pred = add(matmul(t.constant(x), t.param(w)), matmul(t.constant(Tensor(10, 1, 1.0)), t.param(c)));
      return mse(pred, t.constant(y));
    };
    Parameter* ps[] = {&w, &c};
    const GradCheckReport r = grad_check(f, ps, 1e-5, 1e-8);
    CHECK(r.passed);
    CHECK(r.max_rel_error < 1e-8);
  }

  TEST_CASE("grad_check excludes a relu kink at the base point") {
    Parameter x(Tensor(1, 2, std::vector<double>{0.0, 1.0}));
    const RecordedFn f = [&](Tape& t) { return mean(relu(t.param(x))); };
    Parameter* ps[] = {&x};
    const GradCheckReport r = grad_check(f, ps);
    CHECK(r.at_kink);
    CHECK_FALSE(r.passed);
    Parameter y(Tensor(1, 2, std::vector<double>{0.5, 1.0}));
    const RecordedFn g = [&](Tape& t) { return mean(relu(t.param(y))); };
    Parameter* qs[] = {&y};
    CHECK(grad_check(g, qs).passed);
  }

  TEST_CASE("gradient of a sum is the sum of gradients") {
    std::mt19937_64 rng(12);
    for (int rep = 0; rep < 20; ++rep) {
      Parameter w(random_tensor(4, 3, rng));
      const Tensor x = random_tensor(5, 4, rng);
      auto f1 = [&](Tape& t) { return mean(tanh(matmul(t.constant(x), t.param(w)))); };
      auto f2 = [&](Tape& t) { return mean(square(matmul(t.constant(x), t.param(w)))); };
      w.zero_grad();
      {
        Tape t;
        t.backward(f1(t));
      }
      const Tensor g1 = w.grad;
      w.zero_grad();
      {
        Tape t;
        t.backward(f2(t));
      }
      const Tensor g2 = w.grad;
      w.zero_grad();
      {
        Tape t;
        t.backward(add(f1(t), f2(t)));
      }
      for (std::size_t i = 0; i < g1.size(); ++i)
        CHECK(w.grad.data[i] == doctest::Approx(g1.data[i] + g2.data[i]).epsilon(1e-12));
    }
  }

  TEST_CASE("repeated backward after zeroing is idempotent; otherwise additive") {
    std::mt19937_64 rng(13);
    Parameter w(random_tensor(3, 2, rng));
    const Tensor x = random_tensor(4, 3, rng);
    Tape t;
    const Var loss = mean(square(tanh(matmul(t.constant(x), t.param(w)))));
    t.backward(loss);
    const Tensor first = w.grad;
    w.zero_grad();
    t.backward(loss);
    CHECK(w.grad == first);
    t.backward(loss);
    for (std::size_t i = 0; i < first.size(); ++i) CHECK(w.grad.data[i] == 2.0 * first.data[i]);
  }

  TEST_CASE("same seed and op sequence give bit-identical values") {
    auto run = [] {
      std::mt19937_64 rng(99);
      Parameter w(random_tensor(6, 6, rng));
      const Tensor x = random_tensor(7, 6, rng);
      Tape t;
      const Var loss = mean(relu(matmul(tanh(matmul(t.constant(x), t.param(w))), t.param(w))));
      t.backward(loss);
      return std::make_pair(loss.value().item(), w.grad);
    };
    const auto a = run(), b = run();
    CHECK(a.first == b.first);
    CHECK(a.second == b.second);
  }

  TEST_CASE("parameter ids are unique") {
    Parameter a(Tensor::scalar(1.0)), b(Tensor::scalar(1.0));
    CHECK(a.id() != b.id());
  }
}
