// Copyright (c) 2026 the itsa-lab authors
// SPDX-License-Identifier: Apache-2.0
//
// Task losses: masked smooth-L1 and softmax cross-entropy, each with its
// analytic gradient.

#pragma once

#include <cmath>
#include <cstdint>
#include <vector>

#include "diffnet/tensor.hpp"

namespace diffnet {

/// Mean over masked elements of rho(pred - target) with
/// rho(d) = 0.5 d^2 for |d| < 1, |d| - 0.5 otherwise. Empty mask -> 0.
template <typename T>
double smooth_l1(const Tensor<T>& pred, const Tensor<T>& target, const Tensor<T>& mask) {
  check_same_shape(pred, target, "smooth_l1 target");
  check_same_shape(pred, mask, "smooth_l1 mask");
  double acc = 0.0;
  double count = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    if (mask[i] == T{0}) continue;
    const double d = static_cast<double>(pred[i]) - static_cast<double>(target[i]);
    const double a = std::abs(d);
    acc += a < 1.0 ? 0.5 * d * d : a - 0.5;
    count += 1.0;
  }
  return count > 0.0 ? acc / count : 0.0;
}

/// d(smooth_l1)/d(pred); zero tensor when the mask is empty.
template <typename T>
Tensor<T> smooth_l1_backward(const Tensor<T>& pred, const Tensor<T>& target, const Tensor<T>& mask) {
  check_same_shape(pred, target, "smooth_l1 target");
  check_same_shape(pred, mask, "smooth_l1 mask");
  std::size_t count = 0;
  for (std::size_t i = 0; i < mask.size(); ++i)
    if (mask[i] != T{0}) ++count;
  Tensor<T> dpred(pred.shape());
  if (count == 0) return dpred;
  const T inv = T{1} / static_cast<T>(count);
  for (std::size_t i = 0; i < pred.size(); ++i) {
    if (mask[i] == T{0}) continue;
    const T d = pred[i] - target[i];
    dpred[i] = (std::abs(static_cast<double>(d)) < 1.0 ? d : (d > T{0} ? T{1} : T{-1})) * inv;
  }
  return dpred;
}

/// Mean negative log-likelihood of labels under softmax(logits).
/// logits: [N, K]; labels: class ids in [0, K).
template <typename T>
double softmax_cross_entropy(const Tensor<T>& logits, const std::vector<std::uint8_t>& labels) {
  const std::size_t n = logits.dim(0), k = logits.dim(1);
  if (labels.size() != n) throw std::invalid_argument("cross_entropy: label count mismatch");
  double acc = 0.0;
  for (std::size_t s = 0; s < n; ++s) {
    const T* row = logits.data() + s * k;
    double m = static_cast<double>(row[0]);
    for (std::size_t i = 1; i < k; ++i) m = std::max(m, static_cast<double>(row[i]));
    double z = 0.0;
    for (std::size_t i = 0; i < k; ++i) z += std::exp(static_cast<double>(row[i]) - m);
    acc += std::log(z) + m - static_cast<double>(row[labels[s]]);
  }
  return acc / static_cast<double>(n);
}

/// (softmax - onehot) / N.
template <typename T>
Tensor<T> softmax_cross_entropy_backward(const Tensor<T>& logits,
                                         const std::vector<std::uint8_t>& labels) {
  const std::size_t n = logits.dim(0), k = logits.dim(1);
  Tensor<T> d(logits.shape());
  const T inv = T{1} / static_cast<T>(n);
  for (std::size_t s = 0; s < n; ++s) {
    const T* row = logits.data() + s * k;
    T* dr = d.data() + s * k;
    double m = static_cast<double>(row[0]);
    for (std::size_t i = 1; i < k; ++i) m = std::max(m, static_cast<double>(row[i]));
    double z = 0.0;
    for (std::size_t i = 0; i < k; ++i) z += std::exp(static_cast<double>(row[i]) - m);
    for (std::size_t i = 0; i < k; ++i) {
      dr[i] = static_cast<T>(std::exp(static_cast<double>(row[i]) - m) / z) * inv;
    }
    dr[labels[s]] -= inv;
  }
  return d;
}

}  // namespace diffnet
