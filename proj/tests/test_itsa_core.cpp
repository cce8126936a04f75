// Copyright (c) 2026 the itsa-lab authors
// SPDX-License-Identifier: Apache-2.0

#include <doctest.h>

#include <cmath>

#include "diffnet/gradcheck.hpp"
#include "itsa/itsa.hpp"
#include "oracles.hpp"

using namespace diffnet;
using namespace itsa;

namespace {

template <typename T>
Tensor<T> random_tensor(Shape shape, std::uint64_t seed, T lo = T{-1}, T hi = T{1}) {
  Tensor<T> t(std::move(shape));
  Rng rng(seed);
  fill_uniform(t, rng, lo, hi);
  return t;
}

Sequential<double> tiny_extractor(std::uint64_t seed) {
  Sequential<double> m;
  m.emplace<Conv2d<double>>(1, 3, 3, 1, 1);
  m.emplace<LeakyRelu<double>>();
  m.emplace<Conv2d<double>>(3, 2, 3, 2, 1);
  m.init_params(seed);
  return m;
}

}  // namespace

TEST_CASE("scp_direction: scalar linear extractor gives the unit sign") {
  // z = 3x (one sample, one feature): gradient of sum(z) is 3, normalized to 1.
  Sequential<double> m;
  auto& lin = m.emplace<Linear<double>>(1, 1);
  lin.weight() = Tensor<double>({1, 1}, {3.0});
  Tensor<double> x({4, 1}, {0.2, -0.5, 1.0, 7.0});
  std::vector<std::uint8_t> degen;
  Tensor<double> u = scp_direction(m, x, 1e-12, &degen);
  for (std::size_t s = 0; s < 4; ++s) {
    CHECK(u[s] == doctest::Approx(1.0));
    CHECK(degen[s] == 0);
  }
}

TEST_CASE("scp_direction: constant extractor is flagged degenerate with u = 0") {
  Sequential<double> m;
  auto& lin = m.emplace<Linear<double>>(2, 3);
  lin.weight().fill(0.0);
  lin.bias() = Tensor<double>({3}, {1.0, -2.0, 0.5});
  Tensor<double> x = random_tensor<double>({2, 2}, 3);
  std::vector<std::uint8_t> degen;
  Tensor<double> u = scp_direction(m, x, 1e-12, &degen);
  for (std::size_t i = 0; i < u.size(); ++i) CHECK(u[i] == 0.0);
  CHECK(degen == std::vector<std::uint8_t>{1, 1});
}

TEST_CASE("scp_direction: unit norm and parallel to the finite-difference gradient") {
  Sequential<double> m = tiny_extractor(41);
  Tensor<double> x = random_tensor<double>({1, 1, 6, 6}, 42);
  Tensor<double> u = scp_direction(m, x, 1e-12);
  CHECK(std::abs(l2_norm(u) - 1.0) < 1e-6);

  Tensor<double> fd = oracles::fd_gradient<double>(
      [&](const Tensor<double>& p) {
        Tensor<double> z = m.forward(p);
        double s = 0;
        for (std::size_t i = 0; i < z.size(); ++i) s += z[i];
        return s;
      },
      x, 1e-5);
  CHECK(oracles::cosine(u.vec(), fd.vec()) > 0.999);
}

TEST_CASE("scp_perturb: spec arithmetic") {
  Tensor<double> x({1, 2}, {0.0, 0.0});
  Tensor<double> u({1, 2}, {0.6, 0.8});
  SUBCASE("epsilon = 0 leaves x untouched") {
    Tensor<double> same = scp_perturb(x, u, 0.0);
    CHECK(same.vec() == x.vec());
  }
  SUBCASE("exact displacement") {
    Tensor<double> xs = scp_perturb(x, u, 0.5);
    CHECK(xs[0] == doctest::Approx(0.3));
    CHECK(xs[1] == doctest::Approx(0.4));
  }
}

TEST_CASE("scp_perturb: per-sample displacement norm equals epsilon") {
  Sequential<double> m = tiny_extractor(6);
  Tensor<double> x = random_tensor<double>({8, 1, 6, 6}, 7);
  const double eps = 0.5;
  std::vector<std::uint8_t> degen;
  Tensor<double> u = scp_direction(m, x, 1e-12, &degen);
  Tensor<double> xs = scp_perturb(x, u, eps);
  const std::size_t stride = x.size() / 8;
  for (std::size_t s = 0; s < 8; ++s) {
    REQUIRE(degen[s] == 0);
    double n2 = 0;
    for (std::size_t i = 0; i < stride; ++i) {
      const double d = xs[s * stride + i] - x[s * stride + i];
      n2 += d * d;
    }
    CHECK(std::abs(std::sqrt(n2) - eps) < 1e-6);
  }
}

TEST_CASE("fisher_loss: spec cases and reductions") {
  Tensor<double> z({1, 2}, {1.0, 2.0});
  CHECK(fisher_loss(z, z) == 0.0);
  Tensor<double> z2({1, 2}, {4.0, 6.0});  // diff (3,4)
  CHECK(fisher_loss(z, z2) == doctest::Approx(5.0));
  Tensor<double> a({2, 2}, {3.0, 4.0, 12.0, 0.0});
  Tensor<double> b({2, 2}, {0.0, 0.0, 0.0, 0.0});
  CHECK(fisher_loss(a, b, Reduction::kMean) == doctest::Approx(8.5));
  CHECK(fisher_loss(a, b, Reduction::kSum) == doctest::Approx(17.0));
}

TEST_CASE("fisher_loss: non-negativity, symmetry, homogeneity") {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    Tensor<double> z = random_tensor<double>({3, 5}, seed);
    Tensor<double> zs = random_tensor<double>({3, 5}, seed + 1000);
    const double f = fisher_loss(z, zs);
    CHECK(f >= 0.0);
    CHECK(fisher_loss(zs, z) == doctest::Approx(f));
    const double c = -2.75;
    Tensor<double> cz = z, czs = zs;
    scale(cz, c);
    scale(czs, c);
    CHECK(rel_err(fisher_loss(cz, czs), std::abs(c) * f) < 1e-6);
  }
}

TEST_CASE("fisher_loss_backward: matches finite differences and flows through both sides") {
  Tensor<double> z = random_tensor<double>({2, 4}, 9);
  Tensor<double> zs = random_tensor<double>({2, 4}, 10);
  auto [dz, dzs] = fisher_loss_backward(z, zs);
  Tensor<double> fdz = oracles::fd_gradient<double>(
      [&](const Tensor<double>& p) { return fisher_loss(p, zs); }, z, 1e-6);
  Tensor<double> fdzs = oracles::fd_gradient<double>(
      [&](const Tensor<double>& p) { return fisher_loss(z, p); }, zs, 1e-6);
  for (std::size_t i = 0; i < dz.size(); ++i) {
    CHECK(rel_err(dz[i], fdz[i]) < 1e-5);
    CHECK(rel_err(dzs[i], fdzs[i]) < 1e-5);
    CHECK(dz[i] == -dzs[i]);
  }
  // Coincident features: subgradient 0, exactly.
  auto [d0, d0s] = fisher_loss_backward(z, z);
  for (std::size_t i = 0; i < d0.size(); ++i) {
    CHECK(d0[i] == 0.0);
    CHECK(d0s[i] == 0.0);
  }
}

TEST_CASE("wasserstein_degenerate: collapses to the L2 distance for every order") {
  Tensor<double> z = random_tensor<double>({1, 6}, 12);
  Tensor<double> zs = random_tensor<double>({1, 6}, 13);
  CHECK(std::abs(wasserstein_degenerate(z, zs, 1.0) - wasserstein_degenerate(z, zs, 2.0)) < 1e-12);
  CHECK(wasserstein_degenerate(z, z, 2.0) == 0.0);
  Tensor<double> a({3}, {1.0, 0.0, 0.0});
  Tensor<double> b({3}, {0.0, 0.0, 0.0});
  CHECK(wasserstein_degenerate(b, a, 3.0) == doctest::Approx(1.0));
  CHECK_THROWS_AS(wasserstein_degenerate(z, zs, 0.5), std::invalid_argument);
}

TEST_CASE("itsa_total_loss: arithmetic") {
  CHECK(itsa_total_loss(2.25, 0.7, 0.9, 0.0) == 2.25);
  CHECK(itsa_total_loss(1.0, 0.2, 0.4, 0.1) == doctest::Approx(1.03));
  CHECK(itsa_total_loss(0.75, 0.0, 0.0, 0.1) == 0.75);
  CHECK(itsa_total_loss(1.0, 0.5, 0.1) == doctest::Approx(1.05));  // single-input form
}

TEST_CASE("first-order consistency: L_FI(z, z(x+eps*u))/eps -> ||J u||_2") {
  // Smooth nonlinear extractor: linear -> softmax -> linear.
  Sequential<double> m;
  m.emplace<Linear<double>>(4, 6);
  m.emplace<Softmax<double>>();
  m.emplace<Linear<double>>(6, 3);
  m.init_params(55);
  Tensor<double> x = random_tensor<double>({1, 4}, 56);
  Tensor<double> u = random_tensor<double>({1, 4}, 57);
  scale(u, 1.0 / l2_norm(u));

  // ||J u|| from the dense VJP-built Jacobian.
  auto jac = oracles::dense_jacobian(m, x);
  double ju2 = 0;
  for (const auto& row : jac) {
    double r = 0;
    for (std::size_t c = 0; c < row.size(); ++c) r += row[c] * u[c];
    ju2 += r * r;
  }
  const double directional = std::sqrt(ju2);

  Tensor<double> z = m.forward(x);
  auto ratio_at = [&](double eps) {
    Tensor<double> zs = m.forward(scp_perturb(x, u, eps));
    return fisher_loss(z, zs) / eps;
  };
  const double err2 = std::abs(ratio_at(1e-2) - directional) / directional;
  const double err3 = std::abs(ratio_at(1e-3) - directional) / directional;
  CHECK(err3 < err2);
  CHECK(err3 < 1e-2);
}

TEST_CASE("make_perturbed_pair: invariants hold") {
  Sequential<double> m = tiny_extractor(71);
  Tensor<double> x = random_tensor<double>({4, 1, 6, 6}, 72);
  ScpConfig cfg;
  PerturbedPair<double> pair = make_perturbed_pair(m, x, cfg);
  const std::size_t stride = x.size() / 4;
  for (std::size_t s = 0; s < 4; ++s) {
    if (pair.degenerate[s]) continue;
    double un2 = 0, dn2 = 0;
    for (std::size_t i = 0; i < stride; ++i) {
      un2 += pair.u[s * stride + i] * pair.u[s * stride + i];
      const double d = pair.x_star[s * stride + i] - pair.x[s * stride + i];
      dn2 += d * d;
    }
    CHECK(std::abs(std::sqrt(un2) - 1.0) < 1e-6);
    CHECK(std::abs(std::sqrt(dn2) - cfg.epsilon) / cfg.epsilon < 1e-6);
  }
  CHECK(pair.z.shape() == m.forward(x).shape());
}

TEST_CASE("scp config: invariant validation") {
  ScpConfig bad;
  bad.epsilon = -0.1;
  CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
  bad = ScpConfig{};
  bad.grad_norm_floor = 0.0;
  CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
}
