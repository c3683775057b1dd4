// Copyright 2026 the molgen authors
// SPDX-License-Identifier: Apache-2.0

#include <cmath>

#include "doctest.h"
#include "molgen/rng.hpp"
#include "molgen/tape.hpp"

using namespace molgen;

namespace {

Tensor random_tensor(int r, int c, Rng& rng, float scale = 0.5f) {
  Tensor t(r, c);
  for (auto& x : t.v) x = rng.uniform(-scale, scale);
  return t;
}

}  // namespace

TEST_CASE("elementwise forward values") {
  Tape t;
  Val x = t.constant(Tensor::row({-1.0f, 2.0f}));
  Val y = t.relu(x);
  CHECK(t.value(y).v[0] == 0.0f);
  CHECK(t.value(y).v[1] == 2.0f);

  Val s = t.softmax(t.constant(Tensor::row({3.7f})), 1);
  CHECK(t.value(s).v[0] == doctest::Approx(1.0f));  // singleton softmax normalizes to 1

  Val lk = t.leaky_relu(t.constant(Tensor::row({-2.0f, 4.0f})), 0.1f);
  CHECK(t.value(lk).v[0] == doctest::Approx(-0.2f));
  CHECK(t.value(lk).v[1] == doctest::Approx(4.0f));
}

TEST_CASE("matmul and broadcasting") {
  Tape t;
  Tensor a(2, 3);
  for (int i = 0; i < 6; ++i) a.v[i] = static_cast<float>(i + 1);
  Tensor b(3, 2);
  for (int i = 0; i < 6; ++i) b.v[i] = static_cast<float>(i);
  Val c = t.matmul(t.constant(a), t.constant(b));
  // [[1,2,3],[4,5,6]] x [[0,1],[2,3],[4,5]] = [[16,22],[34,49]]
  CHECK(t.value(c).at(0, 0) == doctest::Approx(16.0f));
  CHECK(t.value(c).at(0, 1) == doctest::Approx(22.0f));
  CHECK(t.value(c).at(1, 0) == doctest::Approx(34.0f));
  CHECK(t.value(c).at(1, 1) == doctest::Approx(49.0f));

  Val bias = t.add(c, t.constant(Tensor::row({1.0f, -1.0f})));
  CHECK(t.value(bias).at(1, 0) == doctest::Approx(35.0f));
  CHECK(t.value(bias).at(1, 1) == doctest::Approx(48.0f));

  Tensor colv(2, 1);
  colv.v = {2.0f, 3.0f};
  Val scaled = t.mul(c, t.constant(colv));
  CHECK(t.value(scaled).at(0, 1) == doctest::Approx(44.0f));
  CHECK(t.value(scaled).at(1, 1) == doctest::Approx(147.0f));
}

TEST_CASE("shape errors") {
  Tape t;
  Val a = t.constant(Tensor::zeros(2, 3));
  Val b = t.constant(Tensor::zeros(2, 2));
  CHECK_THROWS_AS(t.matmul(a, b), ShapeMismatch);
  CHECK_THROWS_AS(t.add(a, b), ShapeMismatch);
}

TEST_CASE("non-finite detection") {
  Tape t;
  Val x = t.constant(Tensor::row({-1.0f}));
  CHECK_THROWS_AS(t.log(x), NonFiniteValue);
  Val big = t.constant(Tensor::row({200.0f}));
  CHECK_THROWS_AS(t.exp(big), NonFiniteValue);
}

TEST_CASE("gradient of sum(x*x) matches 2x") {
  // d/dx sum(x∘x) at [1,2,3] = [2,4,6]; oracle: central differences, 1e-3.
  Tensor x = Tensor::row({1.0f, 2.0f, 3.0f});
  auto f = [](Tape& t, Val v) { return t.sum(t.mul(v, v)); };
  Parameter p("x", x);
  Tape t;
  Val y = f(t, t.param(p));
  t.backward(y);
  CHECK(p.grad.v[0] == doctest::Approx(2.0f).epsilon(1e-4));
  CHECK(p.grad.v[1] == doctest::Approx(4.0f).epsilon(1e-4));
  CHECK(p.grad.v[2] == doctest::Approx(6.0f).epsilon(1e-4));
  CHECK(grad_check(f, x, 1e-3f) < 1e-3);
}

TEST_CASE("grad_check on sum is exact up to float32 rounding") {
  Tensor x = Tensor::row({0.3f, -0.7f, 1.2f, 0.0f});
  auto f = [](Tape& t, Val v) { return t.sum(v); };
  CHECK(grad_check(f, x, 1e-2f) < 1e-4);
}

TEST_CASE("grad_check through tanh of a linear map") {
  Rng rng = make_rng(7);
  Tensor w = random_tensor(4, 3, rng);
  Tensor x = random_tensor(1, 4, rng);
  auto f = [&w](Tape& t, Val v) { return t.sum(t.tanh(t.matmul(v, t.constant(w)))); };
  CHECK(grad_check(f, x, 1e-2f) < 1e-3);
}

TEST_CASE("grad_check off the relu kink") {
  // Shift inputs away from zero so central differences do not straddle it.
  Rng rng = make_rng(9);
  Tensor x(1, 6);
  for (auto& v : x.v) {
    v = rng.uniform(-1.0f, 1.0f);
    v += v >= 0.0f ? 0.1f : -0.1f;
  }
  auto f = [](Tape& t, Val v) { return t.sum(t.relu(v)); };
  CHECK(grad_check(f, x, 1e-2f) < 1e-3);
}

TEST_CASE("grad_check across the smooth primitives") {
  Rng rng = make_rng(42);
  for (int trial = 0; trial < 5; ++trial) {
    Tensor x = random_tensor(3, 4, rng);
    Tensor w = random_tensor(4, 4, rng);
    auto f = [&](Tape& t, Val v) {
      Val m = t.matmul(v, t.constant(w));
      Val sm = t.softmax(m, 1);
      Val lg = t.log_softmax(m, 1);
      Val a = t.sum(t.mul(sm, sm));
      Val b = t.sum(t.exp(t.scale(lg, 0.5f)));
      Val c = t.sum(t.sigmoid(m), -1);
      Val d = t.sum(t.log_sigmoid(m));
      Val e = t.sum(t.sqrt(t.add_scalar(t.mul(m, m), 0.3f)));
      return t.add(t.add(t.add(a, b), t.add(c, d)), e);
    };
    CHECK(grad_check(f, x, 3e-3f) < 1e-3);
  }
}

TEST_CASE("grad_check on kinked primitives away from their kinks") {
  // Values chosen so no central-difference step straddles a kink:
  // relu/minimum kinks at 0, clamp edges at +-0.3, max ties avoided.
  Tensor x = Tensor::row({0.5f, -0.45f, 0.2f, -0.11f, 0.62f, 0.07f});
  auto f = [](Tape& t, Val v) {
    Val a = t.sum(t.relu(v));
    Val b = t.sum(t.leaky_relu(v, 0.2f));
    Val c = t.sum(t.max(v, 1));
    Val d = t.sum(t.minimum(v, t.scale(v, 0.5f)));
    Val e = t.sum(t.clamp(v, -0.3f, 0.3f));
    return t.add(t.add(a, b), t.add(c, t.add(d, e)));
  };
  CHECK(grad_check(f, x, 1e-3f) < 1e-3);
}

TEST_CASE("grad_check through gather/scatter/concat/transpose") {
  Rng rng = make_rng(11);
  Tensor x = random_tensor(4, 3, rng);
  auto f = [](Tape& t, Val v) {
    Val g1 = t.index_select(v, {0, 2, 2, 3});
    Val s = t.scatter_add(g1, {1, 0, 1, 2}, 3);
    Val c = t.concat(1, s, t.transpose(t.constant(Tensor::zeros(3, 3))));
    Val p = t.pick(c, 1, 1);
    return t.add(t.sum(t.mul(c, c)), p);
  };
  CHECK(grad_check(f, x, 1e-2f) < 1e-3);
}

TEST_CASE("batch_norm train-mode gradients") {
  Rng rng = make_rng(13);
  Tensor x = random_tensor(5, 3, rng);
  BatchNorm bn("bn", 3);
  bn.gamma.value.v = {1.2f, 0.8f, 1.0f};
  bn.beta.value.v = {0.1f, -0.2f, 0.0f};
  auto f = [&bn](Tape& t, Val v) {
    Val y = t.batch_norm(v, bn, true);
    return t.sum(t.mul(y, t.add_scalar(y, 0.5f)));
  };
  CHECK(grad_check(f, x, 1e-2f) < 1e-3);

  // And with respect to gamma.
  auto fg = [&bn, &x](Tape& t) {
    Val y = t.batch_norm(t.constant(x), bn, true);
    return t.sum(t.mul(y, y));
  };
  CHECK(grad_check_param(fg, bn.gamma, 1e-2f) < 1e-3);
  CHECK(grad_check_param(fg, bn.beta, 1e-2f) < 1e-3);
}

TEST_CASE("batch_norm eval mode is affine") {
  // Superposition: f(ax + by) = a f(x) + b f(y) for the centered map.
  BatchNorm bn("bn", 2);
  bn.running_mean.v = {0.3f, -0.4f};
  bn.running_var.v = {1.5f, 0.7f};
  bn.gamma.value.v = {1.1f, 0.9f};
  bn.beta.value.v = {0.2f, -0.1f};
  Rng rng = make_rng(3);
  Tensor x = random_tensor(3, 2, rng), y = random_tensor(3, 2, rng);
  auto eval = [&bn](const Tensor& in) {
    Tape t(false);
    return t.value(t.batch_norm(t.constant(in), bn, false));
  };
  Tensor zero(3, 2);
  Tensor fx = eval(x), fy = eval(y), f0 = eval(zero);
  Tensor mix(3, 2);
  for (int i = 0; i < 6; ++i) mix.v[i] = 0.25f * x.v[i] + 0.75f * y.v[i];
  Tensor fmix = eval(mix);
  for (int i = 0; i < 6; ++i) {
    float affine = 0.25f * fx.v[i] + 0.75f * fy.v[i];  // affine part cancels: 0.25+0.75 = 1
    CHECK(fmix.v[i] == doctest::Approx(affine).epsilon(1e-4));
  }
  // Running statistics must not move in eval mode.
  CHECK(bn.running_mean.v[0] == doctest::Approx(0.3f));
  CHECK(f0.v[0] != 0.0f);  // beta/mean offset present
}

TEST_CASE("adam: zero gradient leaves parameters unchanged") {
  Parameter p("p", Tensor::row({1.0f, -2.0f}));
  Adam opt(0.01f);
  Parameter* ps[] = {&p};
  opt.step(ps);
  CHECK(p.value.v[0] == doctest::Approx(1.0f));
  CHECK(p.value.v[1] == doctest::Approx(-2.0f));
}

TEST_CASE("adam: constant gradient moves against its sign") {
  Parameter p("p", Tensor::row({0.0f, 0.0f}));
  Adam opt(0.01f);
  Parameter* ps[] = {&p};
  for (int i = 0; i < 50; ++i) {
    p.grad.v[0] = 1.0f;
    p.grad.v[1] = -2.5f;
    opt.step(ps);
  }
  CHECK(p.value.v[0] < 0.0f);
  CHECK(p.value.v[1] > 0.0f);
}

TEST_CASE("adam: first step matches the bias-corrected recurrence") {
  // With m=v=0 and gradient g: m1=(1-b1)g, v1=(1-b2)g^2, mhat=g, vhat=g^2,
  // so the update is -lr * g / (|g| + eps).
  float g = 0.37f, lr = 0.05f, eps = 1e-8f;
  Parameter p("p", Tensor::row({1.0f}));
  p.grad.v[0] = g;
  Adam opt(lr, 0.9f, 0.999f, eps);
  Parameter* ps[] = {&p};
  opt.step(ps);
  float expect = 1.0f - lr * g / (std::abs(g) + eps);
  CHECK(p.value.v[0] == doctest::Approx(expect).epsilon(1e-5));
  CHECK(p.grad.v[0] == 0.0f);  // gradients zeroed after the step
}

TEST_CASE("reductions are deterministic") {
  Rng rng = make_rng(1234);
  Tensor x = random_tensor(17, 9, rng);
  Tape t1, t2;
  Tensor a = t1.value(t1.sum(t1.constant(x), 0));
  Tensor b = t2.value(t2.sum(t2.constant(x), 0));
  CHECK(a.v == b.v);
}
