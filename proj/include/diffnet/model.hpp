// Copyright (c) 2026 the itsa-lab authors
// SPDX-License-Identifier: Apache-2.0
//
// Sequential model over the primitive op set, with taped reverse-mode
// gradients w.r.t. parameters and inputs, plus the second-order pass needed
// to differentiate squared VJP norms (Fisher penalties).

#pragma once

#include <memory>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "diffnet/layers.hpp"

namespace diffnet {

/// Per-forward cached activations; owned by the caller so a const model can
/// serve many concurrent forwards.
template <typename T>
struct Tape {
  std::vector<LayerContext<T>> ctx;
  Tensor<T> output;
};

template <typename T>
class Sequential {
 public:
  Sequential() = default;
  Sequential(Sequential&&) noexcept = default;
  Sequential& operator=(Sequential&&) noexcept = default;
  Sequential(const Sequential&) = delete;
  Sequential& operator=(const Sequential&) = delete;

  template <typename L, typename... Args>
  L& emplace(Args&&... args) {
    auto layer = std::make_unique<L>(std::forward<Args>(args)...);
    L& ref = *layer;
    layers_.push_back(std::move(layer));
    rebuild_index();
    return ref;
  }

  std::size_t num_layers() const { return layers_.size(); }
  Layer<T>& layer(std::size_t i) { return *layers_.at(i); }
  const Layer<T>& layer(std::size_t i) const { return *layers_.at(i); }

  /// Deterministic given parameters and x.
  Tensor<T> forward(const Tensor<T>& x) const {
    Tensor<T> a = x;
    for (const auto& l : layers_) a = l->forward(a, nullptr);
    return a;
  }

  Tensor<T> forward(const Tensor<T>& x, Tape<T>& tape) const {
    tape.ctx.assign(layers_.size(), LayerContext<T>{});
    Tensor<T> a = x;
    for (std::size_t i = 0; i < layers_.size(); ++i) a = layers_[i]->forward(a, &tape.ctx[i]);
    tape.output = a;
    return a;
  }

  /// Reverse pass over a tape. Returns dL/dinput; when grads is non-empty it
  /// must be parameter-aligned (see zero_grads) and receives accumulated
  /// dL/dparams.
  Tensor<T> backward(const Tensor<T>& cotangent, const Tape<T>& tape,
                     std::span<Tensor<T>> grads = {}) const {
    check_same_shape(cotangent, tape.output, "backward cotangent");
    Tensor<T> c = cotangent;
    for (std::size_t i = layers_.size(); i-- > 0;) {
      if (!grads.empty() && param_counts_[i] > 0) {
        layers_[i]->accumulate_param_grads(tape.ctx[i].input, c,
                                           grads.subspan(param_offsets_[i], param_counts_[i]), true);
      }
      c = layers_[i]->backward_data(c, tape.ctx[i]);
    }
    return c;
  }

  /// g = J^T * cotangent where J is the Jacobian of forward at x.
  Tensor<T> input_vjp(const Tensor<T>& x, const Tensor<T>& cotangent) const {
    Tape<T> tape;
    forward(x, tape);
    check_finite(tape.output, "input_vjp forward output");
    Tensor<T> g = backward(cotangent, tape);
    check_finite(g, "input_vjp gradient");
    return g;
  }

  std::vector<Tensor<T>*> parameters() {
    std::vector<Tensor<T>*> out;
    for (auto& l : layers_)
      for (Tensor<T>* p : l->params()) out.push_back(p);
    return out;
  }

  std::vector<const Tensor<T>*> parameters() const {
    std::vector<const Tensor<T>*> out;
    for (const auto& l : layers_)
      for (const Tensor<T>* p : l->params()) out.push_back(p);
    return out;
  }

  /// "l<i>.<kind>.<param>" in parameter order.
  std::vector<std::string> parameter_names() const {
    std::vector<std::string> out;
    for (std::size_t i = 0; i < layers_.size(); ++i) {
      for (const std::string& n : layers_[i]->param_names()) {
        out.push_back("l" + std::to_string(i) + "." + layers_[i]->kind() + "." + n);
      }
    }
    return out;
  }

  /// Zero-filled gradient tensors aligned with parameters().
  std::vector<Tensor<T>> zero_grads() const {
    std::vector<Tensor<T>> out;
    for (const Tensor<T>* p : parameters()) out.emplace_back(p->shape());
    return out;
  }

  void init_params(std::uint64_t seed) {
    Rng rng(seed);
    for (auto& l : layers_) l->init_params(rng);
  }

 private:
  void rebuild_index() {
    param_offsets_.assign(layers_.size(), 0);
    param_counts_.assign(layers_.size(), 0);
    std::size_t off = 0;
    for (std::size_t i = 0; i < layers_.size(); ++i) {
      param_offsets_[i] = off;
      param_counts_[i] = layers_[i]->param_names().size();
      off += param_counts_[i];
    }
  }

  std::vector<std::unique_ptr<Layer<T>>> layers_;
  std::vector<std::size_t> param_offsets_, param_counts_;
};

/// g = grad_x <v, f(x)>, and when grads is non-empty, accumulates
/// d(sum over batch of ||g_n||^2)/dparams into it.
///
/// The reverse graph of a piecewise-linear model is linear in (v, W) with
/// frozen rectifier masks, so its own gradient is exact a.e.: replay the
/// cached cotangents c_l forward, where at each parameterized layer the
/// sensitivity s_l plays the role of the input and c_{l+1} the role of the
/// output cotangent in the ordinary weight-gradient kernel. Biases never
/// enter the reverse graph and receive no gradient.
template <typename T>
Tensor<T> vjp_squared_norm_grad(const Sequential<T>& model, const Tensor<T>& x, const Tensor<T>& v,
                                std::span<Tensor<T>> grads = {}) {
  const std::size_t nl = model.num_layers();
  Tape<T> tape;
  model.forward(x, tape);
  check_same_shape(v, tape.output, "vjp cotangent");

  std::vector<Tensor<T>> cot(nl + 1);
  cot[nl] = v;
  for (std::size_t i = nl; i-- > 0;) cot[i] = model.layer(i).backward_data(cot[i + 1], tape.ctx[i]);
  Tensor<T> g = cot[0];

  if (!grads.empty()) {
    Tensor<T> s = g;
    scale(s, T{2});
    std::size_t off = 0;
    for (std::size_t i = 0; i < nl; ++i) {
      const std::size_t np = model.layer(i).param_names().size();
      if (np > 0) {
        model.layer(i).accumulate_param_grads(s, cot[i + 1], grads.subspan(off, np),
                                              /*include_bias=*/false);
      }
      off += np;
      s = model.layer(i).apply_linear(s, tape.ctx[i]);
    }
  }
  return g;
}

template <typename T>
Tensor<T> vjp_squared_norm_grad(const Sequential<T>& model, const Tensor<T>& x, const Tensor<T>& v,
                                std::vector<Tensor<T>>& grads) {
  return vjp_squared_norm_grad(model, x, v, std::span<Tensor<T>>(grads));
}

}  // namespace diffnet
