// Copyright (c) 2026 the itsa-lab authors
// SPDX-License-Identifier: Apache-2.0
//
// Shortcut perturbation and the Fisher-information surrogate loss: the
// perturbation direction u (normalized input gradient of the summed
// features), the per-sample feature-distance loss L_FI, its reduction to a
// Wasserstein distance between degenerate latents, and the total objective.

#pragma once

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <utility>
#include <vector>

#include "diffnet/model.hpp"

namespace itsa {

using diffnet::Sequential;
using diffnet::Tensor;

struct ScpConfig {
  double epsilon = 0.5;           // perturbation magnitude, normalized-input units
  double grad_norm_floor = 1e-12; // below this input-gradient norm the sample is skipped
  double lambda = 0.1;            // FI loss weight

  void validate() const {
    if (epsilon < 0) throw std::invalid_argument("scp: epsilon must be >= 0");
    if (lambda < 0) throw std::invalid_argument("scp: lambda must be >= 0");
    if (grad_norm_floor <= 0) throw std::invalid_argument("scp: grad_norm_floor must be > 0");
  }
};

enum class Reduction { kMean, kSum };

namespace detail {

template <typename T>
std::size_t batch_of(const Tensor<T>& t) {
  if (t.rank() == 0 || t.dim(0) == 0) throw std::invalid_argument("expected a non-empty batch");
  return t.dim(0);
}

}  // namespace detail

/// Unit perturbation direction per sample: u = g / ||g||_2 with
/// g = input_vjp(extractor, x, all-ones). Samples whose gradient norm falls
/// below the floor get u = 0 and a raised flag. u is a constant of the step:
/// no parameter gradient flows through it.
template <typename T>
Tensor<T> scp_direction(const Sequential<T>& extractor, const Tensor<T>& x, double grad_norm_floor,
                        std::vector<std::uint8_t>* degenerate = nullptr) {
  const std::size_t n = detail::batch_of(x);
  const std::size_t stride = x.size() / n;
  Tensor<T> ones(extractor.forward(x).shape());
  ones.fill(T{1});
  Tensor<T> g = extractor.input_vjp(x, ones);
  if (degenerate) degenerate->assign(n, 0);
  for (std::size_t s = 0; s < n; ++s) {
    T* gs = g.data() + s * stride;
    double norm2 = 0.0;
    for (std::size_t i = 0; i < stride; ++i) norm2 += static_cast<double>(gs[i]) * static_cast<double>(gs[i]);
    const double norm = std::sqrt(norm2);
    if (norm < grad_norm_floor) {
      for (std::size_t i = 0; i < stride; ++i) gs[i] = T{0};
      if (degenerate) (*degenerate)[s] = 1;
    } else {
      const T inv = static_cast<T>(1.0 / norm);
      for (std::size_t i = 0; i < stride; ++i) gs[i] *= inv;
    }
  }
  return g;
}

/// x* = x + epsilon * u (u zero where the direction was degenerate).
template <typename T>
Tensor<T> scp_perturb(const Tensor<T>& x, const Tensor<T>& u, double epsilon) {
  diffnet::check_same_shape(x, u, "scp_perturb direction");
  Tensor<T> out = x;
  diffnet::axpy(out, u, static_cast<T>(epsilon));
  return out;
}

/// Per-sample L2 norm of the flattened feature difference, reduced over the
/// batch (mean by default; sum matches the raw summation form).
template <typename T>
double fisher_loss(const Tensor<T>& z, const Tensor<T>& z_star, Reduction reduction = Reduction::kMean) {
  diffnet::check_same_shape(z, z_star, "fisher_loss");
  const std::size_t n = detail::batch_of(z);
  const std::size_t stride = z.size() / n;
  double acc = 0.0;
  for (std::size_t s = 0; s < n; ++s) {
    const T* a = z.data() + s * stride;
    const T* b = z_star.data() + s * stride;
    double norm2 = 0.0;
    for (std::size_t i = 0; i < stride; ++i) {
      const double d = static_cast<double>(a[i]) - static_cast<double>(b[i]);
      norm2 += d * d;
    }
    acc += std::sqrt(norm2);
  }
  return reduction == Reduction::kMean ? acc / static_cast<double>(n) : acc;
}

/// Gradients of fisher_loss w.r.t. (z, z_star); they are exact negatives.
/// Samples with coincident features contribute zero (subgradient at 0).
template <typename T>
std::pair<Tensor<T>, Tensor<T>> fisher_loss_backward(const Tensor<T>& z, const Tensor<T>& z_star,
                                                     Reduction reduction = Reduction::kMean) {
  diffnet::check_same_shape(z, z_star, "fisher_loss");
  const std::size_t n = detail::batch_of(z);
  const std::size_t stride = z.size() / n;
  Tensor<T> dz(z.shape());
  Tensor<T> dz_star(z.shape());
  const double red = reduction == Reduction::kMean ? static_cast<double>(n) : 1.0;
  for (std::size_t s = 0; s < n; ++s) {
    const T* a = z.data() + s * stride;
    const T* b = z_star.data() + s * stride;
    double norm2 = 0.0;
    for (std::size_t i = 0; i < stride; ++i) {
      const double d = static_cast<double>(a[i]) - static_cast<double>(b[i]);
      norm2 += d * d;
    }
    const double norm = std::sqrt(norm2);
    if (norm == 0.0) continue;
    const T c = static_cast<T>(1.0 / (norm * red));
    T* da = dz.data() + s * stride;
    T* db = dz_star.data() + s * stride;
    for (std::size_t i = 0; i < stride; ++i) {
      const T d = (a[i] - b[i]) * c;
      da[i] = d;
      db[i] = -d;
    }
  }
  return {std::move(dz), std::move(dz_star)};
}

/// Wasserstein-p distance between the degenerate (Dirac) latent
/// distributions at z and z_star: (||z* - z||_2^p)^(1/p), which collapses to
/// the plain L2 distance for every p >= 1. Kept literal so the identity is
/// testable.
template <typename T>
double wasserstein_degenerate(const Tensor<T>& z, const Tensor<T>& z_star, double p) {
  if (p < 1.0) throw std::invalid_argument("wasserstein_degenerate: order p must be >= 1");
  diffnet::check_same_shape(z, z_star, "wasserstein_degenerate");
  double norm2 = 0.0;
  for (std::size_t i = 0; i < z.size(); ++i) {
    const double d = static_cast<double>(z_star[i]) - static_cast<double>(z[i]);
    norm2 += d * d;
  }
  const double norm = std::sqrt(norm2);
  return std::pow(std::pow(norm, p), 1.0 / p);
}

/// Two-view objective: task + (lambda/2) (L_FI(left) + L_FI(right)).
inline double itsa_total_loss(double task_loss, double fi_left, double fi_right, double lambda) {
  return task_loss + 0.5 * lambda * (fi_left + fi_right);
}

/// Single-input degenerate form: task + lambda * L_FI.
inline double itsa_total_loss(double task_loss, double fi, double lambda) {
  return task_loss + lambda * fi;
}

/// Clean/perturbed bundle for one batch; the convenience path used by
/// evaluation-time perturbation and the invariants' tests.
template <typename T>
struct PerturbedPair {
  Tensor<T> x, x_star, u;
  Tensor<T> z, z_star;
  std::vector<std::uint8_t> degenerate;  // per-sample: direction below floor
};

template <typename T>
PerturbedPair<T> make_perturbed_pair(const Sequential<T>& extractor, const Tensor<T>& x,
                                     const ScpConfig& cfg) {
  cfg.validate();
  PerturbedPair<T> pair;
  pair.x = x;
  pair.u = scp_direction(extractor, x, cfg.grad_norm_floor, &pair.degenerate);
  pair.x_star = scp_perturb(x, pair.u, cfg.epsilon);
  pair.z = extractor.forward(x);
  pair.z_star = extractor.forward(pair.x_star);
  return pair;
}

}  // namespace itsa
