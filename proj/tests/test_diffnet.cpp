// Copyright (c) 2026 the itsa-lab authors
// SPDX-License-Identifier: Apache-2.0

#include <doctest.h>

#include <cmath>

#include "diffnet/adam.hpp"
#include "diffnet/gradcheck.hpp"
#include "diffnet/losses.hpp"
#include "diffnet/model.hpp"
#include "oracles.hpp"

using namespace diffnet;

namespace {

Sequential<double> tiny_convnet(std::uint64_t seed, std::size_t cin = 1) {
  Sequential<double> m;
  m.emplace<Conv2d<double>>(cin, 3, 3, 1, 1);
  m.emplace<LeakyRelu<double>>();
  m.emplace<Conv2d<double>>(3, 4, 3, 2, 1);
  m.emplace<LeakyRelu<double>>();
  m.emplace<Conv2d<double>>(4, 2, 3, 1, 0);
  m.init_params(seed);
  return m;
}

template <typename T>
Tensor<T> random_tensor(Shape shape, std::uint64_t seed, T lo = T{-1}, T hi = T{1}) {
  Tensor<T> t(std::move(shape));
  Rng rng(seed);
  fill_uniform(t, rng, lo, hi);
  return t;
}

}  // namespace

TEST_CASE("tensor: shape/data invariant enforced") {
  CHECK_THROWS_AS(Tensor<double>({2, 3}, {1.0, 2.0}), std::invalid_argument);
  Tensor<double> t({2, 3});
  CHECK(t.size() == 6);
  CHECK_THROWS_AS(t.reshaped({4}), std::invalid_argument);
  CHECK(t.reshaped({3, 2}).dim(0) == 3);
}

TEST_CASE("forward: identity model returns input") {
  Sequential<double> identity;
  Tensor<double> x({3}, {1.0, 2.0, 3.0});
  Tensor<double> y = identity.forward(x);
  CHECK(y.vec() == x.vec());
}

TEST_CASE("forward: linear model is a matrix-vector product") {
  Sequential<double> m;
  auto& lin = m.emplace<Linear<double>>(2, 2);
  lin.weight() = Tensor<double>({2, 2}, {2.0, 0.0, 0.0, 3.0});
  Tensor<double> y = m.forward(Tensor<double>({2}, {1.0, 1.0}));
  CHECK(y[0] == doctest::Approx(2.0));
  CHECK(y[1] == doctest::Approx(3.0));
}

TEST_CASE("forward: shape mismatch names the offending dimension") {
  Sequential<double> m;
  m.emplace<Linear<double>>(3, 2);
  try {
    m.forward(Tensor<double>({2}, {1.0, 1.0}));
    FAIL("expected a shape diagnostic");
  } catch (const std::invalid_argument& e) {
    CHECK(std::string(e.what()).find("feature dimension") != std::string::npos);
  }
  Sequential<double> c;
  c.emplace<Conv2d<double>>(3, 4, 3, 1, 1);
  CHECK_THROWS_WITH_AS(c.forward(Tensor<double>({1, 2, 5, 5})),
                       "conv2d: input channel dimension mismatch (got 2, expected 3)",
                       std::invalid_argument);
}

TEST_CASE("forward: 3-layer convnet matches an independent straight-line oracle") {
  Sequential<double> m = tiny_convnet(11);
  Tensor<double> x = random_tensor<double>({1, 1, 8, 8}, 5);
  Tensor<double> y = m.forward(x);

  // Re-run the same computation through the from-scratch implementation.
  auto w_of = [&](std::size_t layer) { return m.layer(layer).params()[0]->vec(); };
  auto b_of = [&](std::size_t layer) { return m.layer(layer).params()[1]->vec(); };
  std::size_t h = 8, w = 8;
  std::vector<double> a(x.vec());
  a = oracles::ref_conv2d(a, 1, 8, 8, w_of(0), b_of(0), 3, 3, 1, 1, h, w);
  oracles::ref_leaky(a, 0.01);
  a = oracles::ref_conv2d(a, 3, h, w, w_of(2), b_of(2), 4, 3, 2, 1, h, w);
  oracles::ref_leaky(a, 0.01);
  a = oracles::ref_conv2d(a, 4, h, w, w_of(4), b_of(4), 2, 3, 1, 0, h, w);

  REQUIRE(y.size() == a.size());
  for (std::size_t i = 0; i < a.size(); ++i) CHECK(y[i] == doctest::Approx(a[i]).epsilon(1e-6));
}

TEST_CASE("input_vjp: linear Jacobian transpose") {
  Sequential<double> m;
  auto& lin = m.emplace<Linear<double>>(2, 2);
  lin.weight() = Tensor<double>({2, 2}, {1.0, 2.0, 3.0, 4.0});
  Tensor<double> g = m.input_vjp(Tensor<double>({2}, {0.3, -0.7}), Tensor<double>({2}, {1.0, 1.0}));
  CHECK(g[0] == doctest::Approx(4.0));
  CHECK(g[1] == doctest::Approx(6.0));
}

TEST_CASE("input_vjp: zero cotangent gives zero gradient") {
  Sequential<double> m = tiny_convnet(3);
  Tensor<double> x = random_tensor<double>({2, 1, 6, 6}, 9);
  Tensor<double> zero(m.forward(x).shape());
  Tensor<double> g = m.input_vjp(x, zero);
  for (std::size_t i = 0; i < g.size(); ++i) CHECK(g[i] == 0.0);
}

TEST_CASE("input_vjp: matches finite differences of sum(forward)") {
  Sequential<double> m = tiny_convnet(17);
  Tensor<double> x = random_tensor<double>({1, 1, 7, 7}, 21);
  Tensor<double> ones(m.forward(x).shape());
  ones.fill(1.0);
  Tensor<double> g = m.input_vjp(x, ones);
  Tensor<double> fd = oracles::fd_gradient<double>(
      [&](const Tensor<double>& p) {
        Tensor<double> y = m.forward(p);
        double s = 0;
        for (std::size_t i = 0; i < y.size(); ++i) s += y[i];
        return s;
      },
      x, 1e-5);
  for (std::size_t i = 0; i < g.size(); ++i) CHECK(rel_err(g[i], fd[i]) < 1e-4);
}

TEST_CASE("input_vjp: linear in the cotangent") {
  Sequential<double> m = tiny_convnet(23);
  Tensor<double> x = random_tensor<double>({1, 1, 6, 6}, 2);
  const Shape out = m.forward(x).shape();
  Tensor<double> c1 = random_tensor<double>(out, 31);
  Tensor<double> c2 = random_tensor<double>(out, 37);
  const double a = 0.7, b = -1.3;
  Tensor<double> combo = c1;
  scale(combo, a);
  axpy(combo, c2, b);
  Tensor<double> lhs = m.input_vjp(x, combo);
  Tensor<double> g1 = m.input_vjp(x, c1);
  Tensor<double> g2 = m.input_vjp(x, c2);
  for (std::size_t i = 0; i < lhs.size(); ++i) {
    CHECK(rel_err(lhs[i], a * g1[i] + b * g2[i]) < 1e-6);
  }
}

TEST_CASE("grad_check: passes for every primitive op (small sample)") {
  // Exhaustive >= 20-instance sweeps live in the acceptance suite.
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    Sequential<double> conv = tiny_convnet(seed);
    CHECK(grad_check(conv, random_tensor<double>({2, 1, 6, 6}, seed + 100), 1e-5, 1e-4).pass);

    Sequential<double> mlp;
    mlp.emplace<Linear<double>>(5, 4);
    mlp.emplace<LeakyRelu<double>>();
    mlp.emplace<Linear<double>>(4, 3);
    mlp.emplace<Softmax<double>>();
    mlp.init_params(seed);
    CHECK(grad_check(mlp, random_tensor<double>({3, 5}, seed + 200), 1e-5, 1e-4).pass);

    Sequential<double> vol;
    vol.emplace<Conv3d<double>>(2, 3, 3, 1, 1);
    vol.emplace<LeakyRelu<double>>();
    vol.emplace<Conv3d<double>>(3, 1, 3, 1, 1);
    vol.init_params(seed);
    CHECK(grad_check(vol, random_tensor<double>({1, 2, 4, 4, 5}, seed + 300), 1e-5, 1e-4).pass);

    Sequential<double> pooled;
    pooled.emplace<Conv2d<double>>(1, 2, 3, 1, 1);
    pooled.emplace<AvgPool2d<double>>(2);
    pooled.emplace<Flatten<double>>();
    pooled.emplace<Linear<double>>(2 * 3 * 3, 2);
    pooled.init_params(seed);
    CHECK(grad_check(pooled, random_tensor<double>({2, 1, 6, 6}, seed + 400), 1e-5, 1e-4).pass);
  }
}

TEST_CASE("grad_check: linear model is exact to tight tolerance") {
  Sequential<double> m;
  m.emplace<Linear<double>>(4, 3);
  m.init_params(77);
  GradCheckReport r = grad_check(m, random_tensor<double>({2, 4}, 78), 1e-5, 1e-6);
  CHECK(r.pass);
}

namespace {

// Negative control: y = 2x with a deliberately wrong backward rule (x3).
class BrokenDouble final : public Layer<double> {
 public:
  const char* kind() const override { return "broken_double"; }
  Shape output_shape(const Shape& in) const override { return in; }
  Tensor<double> forward(const Tensor<double>& x, LayerContext<double>* ctx) const override {
    Tensor<double> y = x;
    scale(y, 2.0);
    if (ctx) ctx->input = x;
    return y;
  }
  Tensor<double> backward_data(const Tensor<double>& dy, const LayerContext<double>&) const override {
    Tensor<double> dx = dy;
    scale(dx, 3.0);
    return dx;
  }
  Tensor<double> apply_linear(const Tensor<double>& t, const LayerContext<double>&) const override {
    Tensor<double> y = t;
    scale(y, 2.0);
    return y;
  }
};

}  // namespace

TEST_CASE("grad_check: deliberately corrupted gradient rule is caught") {
  Sequential<double> m;
  m.emplace<BrokenDouble>();
  m.emplace<Linear<double>>(3, 2);
  m.init_params(5);
  GradCheckReport r = grad_check(m, random_tensor<double>({2, 3}, 6), 1e-5, 1e-4);
  CHECK_FALSE(r.pass);
  CHECK(r.max_rel_err_input > 0.01);
}

TEST_CASE("determinism: same seed, same trajectory bits") {
  auto run = [](std::uint64_t seed) {
    Sequential<double> m;
    m.emplace<Linear<double>>(4, 4);
    m.emplace<LeakyRelu<double>>();
    m.emplace<Linear<double>>(4, 1);
    m.init_params(seed);
    Adam<double> opt({}, m.parameters(), m.parameter_names());
    Tensor<double> x = random_tensor<double>({3, 4}, seed + 1);
    for (int i = 0; i < 5; ++i) {
      Tape<double> tape;
      m.forward(x, tape);
      Tensor<double> cot(tape.output.shape());
      cot.fill(1.0);
      std::vector<Tensor<double>> grads = m.zero_grads();
      m.backward(cot, tape, grads);
      opt.step(m.parameters(), grads);
    }
    std::vector<double> out;
    for (const Tensor<double>* p : m.parameters())
      out.insert(out.end(), p->vec().begin(), p->vec().end());
    return out;
  };
  CHECK(run(42) == run(42));
  CHECK(run(42) != run(43));
}

TEST_CASE("adam: first-step magnitude for a unit gradient") {
  Tensor<double> p({1}, {0.0});
  Adam<double> opt({}, {&p});
  std::vector<Tensor<double>> g;
  g.push_back(Tensor<double>({1}, {1.0}));
  opt.step({&p}, g);
  CHECK(std::abs(std::abs(p[0]) - 1e-3 / (1.0 + 1e-8)) < 1e-12);  // |update| = lr*g/(|g|+eps)
  CHECK(opt.step_count() == 1);
}

TEST_CASE("adam: zero gradient leaves parameters unchanged, step still counts") {
  Tensor<double> p({3}, {1.0, -2.0, 0.5});
  Adam<double> opt({}, {&p});
  std::vector<Tensor<double>> g;
  g.push_back(Tensor<double>({3}));
  opt.step({&p}, g);
  CHECK(p.vec() == std::vector<double>{1.0, -2.0, 0.5});
  CHECK(opt.step_count() == 1);
}

TEST_CASE("adam: 3-step scalar trajectory matches a hand-rolled recurrence") {
  const double lr = 0.05, b1 = 0.9, b2 = 0.999, eps = 1e-8;
  Tensor<double> p({1}, {2.0});
  Adam<double> opt({lr, b1, b2, eps}, {&p});
  // Hand recurrence on gradient g = p (so the gradient changes with p).
  double ph = 2.0, m = 0.0, v = 0.0;
  for (int t = 1; t <= 3; ++t) {
    std::vector<Tensor<double>> g;
    g.push_back(Tensor<double>({1}, {p[0]}));
    opt.step({&p}, g);

    const double gh = ph;
    m = b1 * m + (1 - b1) * gh;
    v = b2 * v + (1 - b2) * gh * gh;
    const double mhat = m / (1 - std::pow(b1, t));
    const double vhat = v / (1 - std::pow(b2, t));
    ph -= lr * mhat / (std::sqrt(vhat) + eps);
    CHECK(std::abs(p[0] - ph) < 1e-10);
  }
}

TEST_CASE("adam: non-finite gradient aborts naming the parameter") {
  Sequential<double> m;
  m.emplace<Linear<double>>(2, 1);
  m.init_params(1);
  Adam<double> opt({}, m.parameters(), m.parameter_names());
  std::vector<Tensor<double>> g = m.zero_grads();
  g[0][0] = std::numeric_limits<double>::quiet_NaN();
  try {
    opt.step(m.parameters(), g);
    FAIL("expected abort");
  } catch (const std::runtime_error& e) {
    CHECK(std::string(e.what()).find("l0.linear.weight") != std::string::npos);
  }
}

TEST_CASE("smooth_l1: spec cases") {
  Tensor<double> ones({1}, {1.0});
  CHECK(smooth_l1(Tensor<double>({1}, {2.5}), Tensor<double>({1}, {2.5}), ones) == 0.0);
  CHECK(smooth_l1(Tensor<double>({1}, {1.0}), Tensor<double>({1}, {0.5}), ones) == doctest::Approx(0.125));
  CHECK(smooth_l1(Tensor<double>({1}, {2.0}), Tensor<double>({1}, {0.0}), ones) == doctest::Approx(1.5));
  // Empty mask -> 0 and zero gradient.
  Tensor<double> none({1}, {0.0});
  CHECK(smooth_l1(Tensor<double>({1}, {3.0}), Tensor<double>({1}, {0.0}), none) == 0.0);
  CHECK(smooth_l1_backward(Tensor<double>({1}, {3.0}), Tensor<double>({1}, {0.0}), none)[0] == 0.0);
}

TEST_CASE("smooth_l1: C1 junction at |d| = 1") {
  // Value: 0.5 d^2 and |d| - 0.5 both give 0.5; derivative: d and sign(d) both 1.
  CHECK(std::abs(0.5 * 1.0 * 1.0 - 0.5) < 1e-12);
  CHECK(std::abs((1.0 - 0.5) - 0.5) < 1e-12);
  Tensor<double> ones({1}, {1.0});
  const double below = smooth_l1_backward(Tensor<double>({1}, {1.0 - 1e-9}), Tensor<double>({1}, {0.0}), ones)[0];
  const double above = smooth_l1_backward(Tensor<double>({1}, {1.0 + 1e-9}), Tensor<double>({1}, {0.0}), ones)[0];
  CHECK(std::abs(below - 1.0) < 1e-8);
  CHECK(std::abs(above - 1.0) < 1e-12);
}

TEST_CASE("smooth_l1: gradient matches finite differences") {
  Tensor<double> pred = random_tensor<double>({4, 5}, 3, -2.0, 2.0);
  Tensor<double> target = random_tensor<double>({4, 5}, 4, -2.0, 2.0);
  Tensor<double> mask({4, 5});
  Rng rng(5);
  std::bernoulli_distribution coin(0.7);
  for (std::size_t i = 0; i < mask.size(); ++i) mask[i] = coin(rng) ? 1.0 : 0.0;
  Tensor<double> d = smooth_l1_backward(pred, target, mask);
  Tensor<double> fd = oracles::fd_gradient<double>(
      [&](const Tensor<double>& p) { return smooth_l1(p, target, mask); }, pred, 1e-6);
  for (std::size_t i = 0; i < d.size(); ++i) CHECK(rel_err(d[i], fd[i]) < 1e-6);
}

TEST_CASE("softmax cross-entropy: gradient matches finite differences") {
  Tensor<double> logits = random_tensor<double>({3, 6}, 8, -2.0, 2.0);
  std::vector<std::uint8_t> labels = {2, 0, 5};
  Tensor<double> d = softmax_cross_entropy_backward(logits, labels);
  Tensor<double> fd = oracles::fd_gradient<double>(
      [&](const Tensor<double>& l) { return softmax_cross_entropy(l, labels); }, logits, 1e-6);
  for (std::size_t i = 0; i < d.size(); ++i) CHECK(rel_err(d[i], fd[i]) < 1e-6);
}

TEST_CASE("vjp_squared_norm_grad: parameter gradient of ||J^T v||^2 matches finite differences") {
  Sequential<double> m;
  m.emplace<Linear<double>>(4, 5);
  m.emplace<LeakyRelu<double>>();
  m.emplace<Linear<double>>(5, 3);
  m.init_params(91);
  Tensor<double> x = random_tensor<double>({2, 4}, 92);
  Tensor<double> v = random_tensor<double>({2, 3}, 93);

  std::vector<Tensor<double>> grads = m.zero_grads();
  vjp_squared_norm_grad(m, x, v, grads);

  auto params = m.parameters();
  for (std::size_t k = 0; k < params.size(); ++k) {
    Tensor<double>& p = *params[k];
    for (std::size_t i = 0; i < p.size(); ++i) {
      const double saved = p[i];
      auto eval = [&](double val) {
        p[i] = val;
        Tensor<double> g = m.input_vjp(x, v);
        p[i] = saved;
        return squared_norm(g);
      };
      const double fd = (eval(saved + 1e-6) - eval(saved - 1e-6)) / 2e-6;
      CHECK(rel_err(grads[k][i], fd) < 1e-4);
    }
  }
}
