// Copyright (c) 2026 the itsa-lab authors
// SPDX-License-Identifier: Apache-2.0
//
// Fisher information of Gaussian encoders z | x ~ Normal(mu(x), sigma^2 I):
// closed form for linear mu, Monte-Carlo with explicit Jacobians, and the
// differentiable Hutchinson sign-probe estimator used by the RIB baseline.
// The variational-IB KL term lives here too.

#pragma once

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <vector>

#include "diffnet/model.hpp"
#include "diffnet/random.hpp"

namespace fisherlab {

using diffnet::Rng;
using diffnet::Sequential;
using diffnet::Tensor;

/// Stochastic encoder: z = mu(x) + sigma * eta, isotropic fixed sigma.
template <typename T>
struct GaussianEncoder {
  Sequential<T> mu_model;
  T sigma = T{1};

  void validate() const {
    if (!(sigma > T{0})) throw std::invalid_argument("gaussian encoder: sigma must be > 0");
  }

  Tensor<T> sample(const Tensor<T>& x, Rng& rng) const {
    validate();
    Tensor<T> z = mu_model.forward(x);
    Tensor<T> eta(z.shape());
    diffnet::fill_normal(eta, rng, T{0}, T{1});
    diffnet::axpy(z, eta, sigma);
    return z;
  }
};

struct IbConfig {
  double beta = 1e-3;         // IB trade-off weight
  double beta_fisher = 1e-3;  // RIB Fisher-penalty weight
  int n_probes = 1;           // Hutchinson probes per step

  void validate() const {
    if (beta < 0) throw std::invalid_argument("ib: beta must be >= 0");
    if (beta_fisher < 0) throw std::invalid_argument("ib: beta_fisher must be >= 0");
    if (n_probes < 1) throw std::invalid_argument("ib: n_probes must be >= 1");
  }
};

struct McEstimate {
  double value = 0.0;
  double std_error = 0.0;
  std::size_t n_samples = 0;
};

/// Phi for a linear-Gaussian encoder mu(x) = A x: ||A||_F^2 / sigma^2.
/// (Confirmed against the 1-D numerical-integration oracle in the tests
/// before anything relies on it.)
inline double fisher_info_linear_closed(const Tensor<double>& a, double sigma) {
  if (!(sigma > 0)) throw std::invalid_argument("fisher_info_linear_closed: sigma must be > 0");
  return diffnet::squared_norm(a) / (sigma * sigma);
}

/// Monte-Carlo estimate of Phi(Z | X = x) = E_z ||grad_x log p(z|x)||^2 with
/// grad_x log p = J_mu^T (z - mu) / sigma^2. The Jacobian is built row by row
/// from basis-cotangent VJPs (input and latent dims capped at 32), sampling
/// is sharded with counter-derived seeds, and shard moments are combined by
/// pairwise summation so the result is independent of evaluation order.
inline McEstimate fisher_info_mc(const GaussianEncoder<double>& enc, const Tensor<double>& x,
                                 std::size_t n_samples, std::uint64_t seed) {
  enc.validate();
  if (n_samples < 1) throw std::invalid_argument("fisher_info_mc: n_samples must be >= 1");
  const Tensor<double> mu = enc.mu_model.forward(x);
  const std::size_t latent = mu.size(), input = x.size();
  if (latent > 32 || input > 32) {
    throw std::invalid_argument("fisher_info_mc: explicit Jacobian limited to dims <= 32");
  }

  std::vector<Tensor<double>> rows;
  rows.reserve(latent);
  for (std::size_t k = 0; k < latent; ++k) {
    Tensor<double> basis(mu.shape());
    basis[k] = 1.0;
    rows.push_back(enc.mu_model.input_vjp(x, basis));
  }
  // Gram matrix G = J J^T; then ||J^T eta||^2 = eta^T G eta.
  std::vector<double> gram(latent * latent);
  for (std::size_t i = 0; i < latent; ++i)
    for (std::size_t j = 0; j < latent; ++j) gram[i * latent + j] = diffnet::dot(rows[i], rows[j]);

  constexpr std::size_t kShard = 8192;
  const std::size_t n_shards = (n_samples + kShard - 1) / kShard;
  std::vector<double> shard_sum(n_shards), shard_sum2(n_shards);
  const double inv_s2 = 1.0 / (enc.sigma * enc.sigma);
  std::vector<double> eta(latent);
  for (std::size_t sh = 0; sh < n_shards; ++sh) {
    Rng rng(diffnet::derive_seed(seed, sh));
    std::normal_distribution<double> gauss(0.0, 1.0);
    const std::size_t count = std::min(kShard, n_samples - sh * kShard);
    double acc = 0.0, acc2 = 0.0;
    for (std::size_t s = 0; s < count; ++s) {
      for (std::size_t k = 0; k < latent; ++k) eta[k] = gauss(rng);
      double quad = 0.0;
      for (std::size_t i = 0; i < latent; ++i) {
        double gi = 0.0;
        for (std::size_t j = 0; j < latent; ++j) gi += gram[i * latent + j] * eta[j];
        quad += eta[i] * gi;
      }
      const double v = quad * inv_s2;
      acc += v;
      acc2 += v * v;
    }
    shard_sum[sh] = acc;
    shard_sum2[sh] = acc2;
  }
  const double total = diffnet::pairwise_sum(shard_sum);
  const double total2 = diffnet::pairwise_sum(shard_sum2);
  const double n = static_cast<double>(n_samples);
  McEstimate est;
  est.value = total / n;
  est.n_samples = n_samples;
  const double var = std::max(0.0, total2 / n - est.value * est.value);
  est.std_error = std::sqrt(var / n);
  return est;
}

/// Hutchinson estimate of Phi averaged over the batch, one input-VJP per
/// sign probe: E_v ||J_mu^T v||^2 / sigma^2. When grads is non-null,
/// weight * d(estimate)/dparams is accumulated into it (exact a.e.), which
/// is what makes the RIB baseline trainable.
template <typename T>
double rib_penalty(const Sequential<T>& mu_model, T sigma, const Tensor<T>& x, int n_probes,
                   std::uint64_t seed, std::vector<Tensor<T>>* grads = nullptr,
                   double weight = 1.0) {
  if (!(sigma > T{0})) throw std::invalid_argument("rib_penalty: sigma must be > 0");
  if (n_probes < 1) throw std::invalid_argument("rib_penalty: n_probes must be >= 1");
  const std::size_t batch = x.dim(0);
  const diffnet::Shape latent_shape = mu_model.forward(x).shape();
  const double scale_all = 1.0 / (static_cast<double>(n_probes) * static_cast<double>(batch) *
                                  static_cast<double>(sigma) * static_cast<double>(sigma));

  double acc = 0.0;
  std::vector<Tensor<T>> probe_grads;
  if (grads) probe_grads = mu_model.zero_grads();
  for (int p = 0; p < n_probes; ++p) {
    Tensor<T> v(latent_shape);
    Rng rng(diffnet::derive_seed(seed, static_cast<std::uint64_t>(p)));
    diffnet::fill_rademacher(v, rng);
    if (grads) {
      for (Tensor<T>& g : probe_grads) g.fill(T{0});
      Tensor<T> score = diffnet::vjp_squared_norm_grad(mu_model, x, v, probe_grads);
      acc += diffnet::squared_norm(score);
      for (std::size_t k = 0; k < grads->size(); ++k) {
        diffnet::axpy((*grads)[k], probe_grads[k], static_cast<T>(scale_all * weight));
      }
    } else {
      acc += diffnet::squared_norm(mu_model.input_vjp(x, v));
    }
  }
  return acc * scale_all;
}

template <typename T>
double rib_penalty(const GaussianEncoder<T>& enc, const Tensor<T>& x, int n_probes,
                   std::uint64_t seed, std::vector<Tensor<T>>* grads = nullptr) {
  enc.validate();
  return rib_penalty(enc.mu_model, enc.sigma, x, n_probes, seed, grads);
}

/// KL(N(mu, diag(sigma^2)) || N(0, I)) = 0.5 sum(sigma_i^2 + mu_i^2 - 1
/// - 2 log sigma_i), averaged over the batch (leading axis).
template <typename T>
double vib_kl(const Tensor<T>& mu, const Tensor<T>& sigma_vec) {
  diffnet::check_same_shape(mu, sigma_vec, "vib_kl");
  const std::size_t n = mu.rank() >= 2 ? mu.dim(0) : 1;
  double acc = 0.0;
  for (std::size_t i = 0; i < mu.size(); ++i) {
    const double s = static_cast<double>(sigma_vec[i]);
    if (!(s > 0)) throw std::invalid_argument("vib_kl: sigma must be > 0 elementwise");
    const double m = static_cast<double>(mu[i]);
    acc += 0.5 * (s * s + m * m - 1.0 - 2.0 * std::log(s));
  }
  return acc / static_cast<double>(n);
}

/// Gradients of vib_kl w.r.t. (mu, sigma_vec).
template <typename T>
std::pair<Tensor<T>, Tensor<T>> vib_kl_backward(const Tensor<T>& mu, const Tensor<T>& sigma_vec) {
  diffnet::check_same_shape(mu, sigma_vec, "vib_kl");
  const std::size_t n = mu.rank() >= 2 ? mu.dim(0) : 1;
  const T inv = T{1} / static_cast<T>(n);
  Tensor<T> dmu(mu.shape());
  Tensor<T> dsigma(mu.shape());
  for (std::size_t i = 0; i < mu.size(); ++i) {
    dmu[i] = mu[i] * inv;
    dsigma[i] = (sigma_vec[i] - T{1} / sigma_vec[i]) * inv;
  }
  return {std::move(dmu), std::move(dsigma)};
}

}  // namespace fisherlab
