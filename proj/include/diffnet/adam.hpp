// Copyright (c) 2026 the itsa-lab authors
// SPDX-License-Identifier: Apache-2.0
//
// Bias-corrected Adam.

#pragma once

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "diffnet/tensor.hpp"

namespace diffnet {

template <typename T>
struct AdamConfig {
  T lr = static_cast<T>(1e-3);
  T beta1 = static_cast<T>(0.9);
  T beta2 = static_cast<T>(0.999);
  T eps = static_cast<T>(1e-8);
};

template <typename T>
class Adam {
 public:
  Adam(AdamConfig<T> cfg, const std::vector<Tensor<T>*>& params,
       std::vector<std::string> param_names = {})
      : cfg_(cfg), names_(std::move(param_names)) {
    for (const Tensor<T>* p : params) {
      first_moment_.emplace_back(p->shape());
      second_moment_.emplace_back(p->shape());
    }
  }

  /// In-place update; step increments by exactly 1. Non-finite gradients
  /// abort the run with a diagnostic naming the parameter.
  void step(const std::vector<Tensor<T>*>& params, const std::vector<Tensor<T>>& grads) {
    if (params.size() != first_moment_.size() || grads.size() != first_moment_.size()) {
      throw std::invalid_argument("adam: parameter/gradient count mismatch");
    }
    ++step_;
    const double bc1 = 1.0 - std::pow(static_cast<double>(cfg_.beta1), static_cast<double>(step_));
    const double bc2 = 1.0 - std::pow(static_cast<double>(cfg_.beta2), static_cast<double>(step_));
    for (std::size_t k = 0; k < params.size(); ++k) {
      if (!grads[k].all_finite()) {
        throw std::runtime_error("adam: non-finite gradient for parameter '" + name_of(k) +
                                 "' at step " + std::to_string(step_));
      }
      Tensor<T>& p = *params[k];
      Tensor<T>& m = first_moment_[k];
      Tensor<T>& v = second_moment_[k];
      check_same_shape(p, grads[k], "adam gradient");
      for (std::size_t i = 0; i < p.size(); ++i) {
        const T g = grads[k][i];
        m[i] = cfg_.beta1 * m[i] + (T{1} - cfg_.beta1) * g;
        v[i] = cfg_.beta2 * v[i] + (T{1} - cfg_.beta2) * g * g;
        const T mhat = static_cast<T>(static_cast<double>(m[i]) / bc1);
        const T vhat = static_cast<T>(static_cast<double>(v[i]) / bc2);
        p[i] -= cfg_.lr * mhat / (std::sqrt(vhat) + cfg_.eps);
      }
    }
  }

  std::uint64_t step_count() const { return step_; }
  const AdamConfig<T>& config() const { return cfg_; }
  const std::vector<Tensor<T>>& first_moment() const { return first_moment_; }
  const std::vector<Tensor<T>>& second_moment() const { return second_moment_; }

 private:
  std::string name_of(std::size_t k) const {
    return k < names_.size() ? names_[k] : ("#" + std::to_string(k));
  }

  AdamConfig<T> cfg_;
  std::vector<std::string> names_;
  std::vector<Tensor<T>> first_moment_, second_moment_;
  std::uint64_t step_ = 0;
};

}  // namespace diffnet
