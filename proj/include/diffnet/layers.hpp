// Copyright (c) 2026 the itsa-lab authors
// SPDX-License-Identifier: Apache-2.0
//
// Primitive differentiable ops: linear, conv2d, conv3d, leaky-rectifier,
// average pooling, softmax, flatten. Each op knows its forward map, its
// data-backward (transpose), and its weight-gradient kernel. The weight
// kernel takes an arbitrary (input-shaped, output-shaped) pair so the
// second-order pass in model.hpp can reuse it.

#pragma once

#include <algorithm>
#include <cmath>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "diffnet/random.hpp"
#include "diffnet/tensor.hpp"

namespace diffnet {

template <typename T>
struct LayerContext {
  Tensor<T> input;  // cached forward input
  Tensor<T> extra;  // layer-specific (softmax caches its output here)
};

template <typename T>
class Layer {
 public:
  virtual ~Layer() = default;

  virtual const char* kind() const = 0;
  virtual Shape output_shape(const Shape& in) const = 0;

  /// Forward map. When ctx is non-null, caches whatever backward needs.
  virtual Tensor<T> forward(const Tensor<T>& x, LayerContext<T>* ctx) const = 0;

  /// dL/dinput from dL/doutput.
  virtual Tensor<T> backward_data(const Tensor<T>& dy, const LayerContext<T>& ctx) const = 0;

  /// Accumulate dL/dparams from an input-shaped tensor and an output-shaped
  /// cotangent. include_bias=false is used by the second-order pass, where
  /// the bias has no influence on the quantity being differentiated.
  virtual void accumulate_param_grads(const Tensor<T>& /*x*/, const Tensor<T>& /*dy*/,
                                      std::span<Tensor<T>> /*grads*/, bool /*include_bias*/) const {}

  /// The parameter-linear part of the forward map (bias dropped, pointwise
  /// masks frozen from ctx). Identical connectivity to forward. Required by
  /// the second-order pass; nonlinear parameter-free ops may refuse.
  virtual Tensor<T> apply_linear(const Tensor<T>& x, const LayerContext<T>& ctx) const = 0;

  virtual std::vector<Tensor<T>*> params() { return {}; }
  virtual std::vector<const Tensor<T>*> params() const { return {}; }
  virtual std::vector<std::string> param_names() const { return {}; }
  virtual void init_params(Rng& /*rng*/) {}
};

namespace detail {

[[noreturn]] inline void fail_dim(const char* kind, const char* dim_name, std::size_t got,
                                  std::size_t expected) {
  std::ostringstream os;
  os << kind << ": " << dim_name << " mismatch (got " << got << ", expected " << expected << ")";
  throw std::invalid_argument(os.str());
}

template <typename T>
void check_rank(const char* kind, const Tensor<T>& x, std::size_t rank) {
  if (x.rank() != rank) {
    std::ostringstream os;
    os << kind << ": rank mismatch (got " << x.rank() << "-d input " << shape_str(x.shape())
       << ", expected rank " << rank << ")";
    throw std::invalid_argument(os.str());
  }
}

inline std::size_t conv_extent(const char* kind, const char* dim_name, std::size_t in,
                               std::size_t k, std::size_t stride, std::size_t pad) {
  const std::size_t padded = in + 2 * pad;
  if (padded < k) fail_dim(kind, dim_name, in, k > 2 * pad ? k - 2 * pad : 1);
  return (padded - k) / stride + 1;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Linear: [N, Fin] -> [N, Fout]  (rank-1 input treated as a single sample)

template <typename T>
class Linear final : public Layer<T> {
 public:
  Linear(std::size_t in_features, std::size_t out_features, bool with_bias = true)
      : in_(in_features),
        out_(out_features),
        with_bias_(with_bias),
        weight_({out_features, in_features}),
        bias_({out_features}) {}

  const char* kind() const override { return "linear"; }

  Shape output_shape(const Shape& in) const override {
    if (in.size() == 1) return {out_};
    return {in.at(0), out_};
  }

  Tensor<T> forward(const Tensor<T>& x, LayerContext<T>* ctx) const override {
    const bool batched = x.rank() == 2;
    if (!batched) detail::check_rank("linear", x, 1);
    const std::size_t n = batched ? x.dim(0) : 1;
    const std::size_t fin = batched ? x.dim(1) : x.dim(0);
    if (fin != in_) detail::fail_dim("linear", "input feature dimension", fin, in_);
    Tensor<T> y(batched ? Shape{n, out_} : Shape{out_});
    const T* xd = x.data();
    T* yd = y.data();
    for (std::size_t s = 0; s < n; ++s) {
      const T* xs = xd + s * in_;
      T* ys = yd + s * out_;
      for (std::size_t o = 0; o < out_; ++o) {
        T acc = with_bias_ ? bias_[o] : T{0};
        const T* wrow = weight_.data() + o * in_;
        for (std::size_t i = 0; i < in_; ++i) acc += wrow[i] * xs[i];
        ys[o] = acc;
      }
    }
    if (ctx) ctx->input = x;
    return y;
  }

  Tensor<T> backward_data(const Tensor<T>& dy, const LayerContext<T>& ctx) const override {
    const bool batched = ctx.input.rank() == 2;
    const std::size_t n = batched ? ctx.input.dim(0) : 1;
    Tensor<T> dx(ctx.input.shape());
    const T* gd = dy.data();
    T* dd = dx.data();
    for (std::size_t s = 0; s < n; ++s) {
      const T* gs = gd + s * out_;
      T* ds = dd + s * in_;
      for (std::size_t o = 0; o < out_; ++o) {
        const T g = gs[o];
        const T* wrow = weight_.data() + o * in_;
        for (std::size_t i = 0; i < in_; ++i) ds[i] += g * wrow[i];
      }
    }
    return dx;
  }

  void accumulate_param_grads(const Tensor<T>& x, const Tensor<T>& dy, std::span<Tensor<T>> grads,
                              bool include_bias) const override {
    const bool batched = x.rank() == 2;
    const std::size_t n = batched ? x.dim(0) : 1;
    Tensor<T>& dw = grads[0];
    Tensor<T>& db = grads[1];
    for (std::size_t s = 0; s < n; ++s) {
      const T* xs = x.data() + s * in_;
      const T* gs = dy.data() + s * out_;
      for (std::size_t o = 0; o < out_; ++o) {
        const T g = gs[o];
        T* wrow = dw.data() + o * in_;
        for (std::size_t i = 0; i < in_; ++i) wrow[i] += g * xs[i];
        if (include_bias && with_bias_) db[o] += g;
      }
    }
  }

  Tensor<T> apply_linear(const Tensor<T>& x, const LayerContext<T>&) const override {
    const bool batched = x.rank() == 2;
    const std::size_t n = batched ? x.dim(0) : 1;
    Tensor<T> y(batched ? Shape{n, out_} : Shape{out_});
    for (std::size_t s = 0; s < n; ++s) {
      const T* xs = x.data() + s * in_;
      T* ys = y.data() + s * out_;
      for (std::size_t o = 0; o < out_; ++o) {
        T acc = 0;
        const T* wrow = weight_.data() + o * in_;
        for (std::size_t i = 0; i < in_; ++i) acc += wrow[i] * xs[i];
        ys[o] = acc;
      }
    }
    return y;
  }

  std::vector<Tensor<T>*> params() override { return {&weight_, &bias_}; }
  std::vector<const Tensor<T>*> params() const override { return {&weight_, &bias_}; }
  std::vector<std::string> param_names() const override { return {"weight", "bias"}; }

  void init_params(Rng& rng) override {
    const T std = static_cast<T>(std::sqrt(2.0 / static_cast<double>(in_)));
    fill_normal(weight_, rng, T{0}, std);
    bias_.fill(T{0});
  }

  Tensor<T>& weight() { return weight_; }
  Tensor<T>& bias() { return bias_; }

 private:
  std::size_t in_, out_;
  bool with_bias_;
  Tensor<T> weight_, bias_;
};

// ---------------------------------------------------------------------------
// Conv2d: [N, Cin, H, W] -> [N, Cout, Ho, Wo], zero padding, explicit stride.

template <typename T>
class Conv2d final : public Layer<T> {
 public:
  Conv2d(std::size_t in_ch, std::size_t out_ch, std::size_t kernel, std::size_t stride = 1,
         std::size_t pad = 0)
      : cin_(in_ch), cout_(out_ch), k_(kernel), s_(stride), p_(pad),
        weight_({out_ch, in_ch, kernel, kernel}), bias_({out_ch}) {}

  const char* kind() const override { return "conv2d"; }

  Shape output_shape(const Shape& in) const override {
    const std::size_t ho = detail::conv_extent("conv2d", "input height", in.at(2), k_, s_, p_);
    const std::size_t wo = detail::conv_extent("conv2d", "input width", in.at(3), k_, s_, p_);
    return {in.at(0), cout_, ho, wo};
  }

  Tensor<T> forward(const Tensor<T>& x, LayerContext<T>* ctx) const override {
    detail::check_rank("conv2d", x, 4);
    if (x.dim(1) != cin_) detail::fail_dim("conv2d", "input channel dimension", x.dim(1), cin_);
    const Shape os = output_shape(x.shape());
    const std::size_t n = x.dim(0), h = x.dim(2), w = x.dim(3), ho = os[2], wo = os[3];
    Tensor<T> y(os);
    for (std::size_t b = 0; b < n; ++b)
      for (std::size_t co = 0; co < cout_; ++co) {
        T* yp = y.data() + ((b * cout_ + co) * ho) * wo;
        const T bv = bias_[co];
        for (std::size_t i = 0; i < ho * wo; ++i) yp[i] = bv;
        for (std::size_t ci = 0; ci < cin_; ++ci) {
          const T* xc = x.data() + ((b * cin_ + ci) * h) * w;
          const T* wc = weight_.data() + ((co * cin_ + ci) * k_) * k_;
          for (std::size_t oy = 0; oy < ho; ++oy) {
            const std::ptrdiff_t iy0 = static_cast<std::ptrdiff_t>(oy * s_) - static_cast<std::ptrdiff_t>(p_);
            T* yrow = yp + oy * wo;
            for (std::size_t ky = 0; ky < k_; ++ky) {
              const std::ptrdiff_t iy = iy0 + static_cast<std::ptrdiff_t>(ky);
              if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(h)) continue;
              const T* xrow = xc + iy * w;
              const T* wrow = wc + ky * k_;
              for (std::size_t ox = 0; ox < wo; ++ox) {
                const std::ptrdiff_t ix0 = static_cast<std::ptrdiff_t>(ox * s_) - static_cast<std::ptrdiff_t>(p_);
                T acc = 0;
                for (std::size_t kx = 0; kx < k_; ++kx) {
                  const std::ptrdiff_t ix = ix0 + static_cast<std::ptrdiff_t>(kx);
                  if (ix >= 0 && ix < static_cast<std::ptrdiff_t>(w)) acc += xrow[ix] * wrow[kx];
                }
                yrow[ox] += acc;
              }
            }
          }
        }
      }
    if (ctx) ctx->input = x;
    return y;
  }

  Tensor<T> backward_data(const Tensor<T>& dy, const LayerContext<T>& ctx) const override {
    const Tensor<T>& x = ctx.input;
    const std::size_t n = x.dim(0), h = x.dim(2), w = x.dim(3);
    const std::size_t ho = dy.dim(2), wo = dy.dim(3);
    Tensor<T> dx(x.shape());
    for (std::size_t b = 0; b < n; ++b)
      for (std::size_t co = 0; co < cout_; ++co) {
        const T* gp = dy.data() + ((b * cout_ + co) * ho) * wo;
        for (std::size_t ci = 0; ci < cin_; ++ci) {
          T* dxc = dx.data() + ((b * cin_ + ci) * h) * w;
          const T* wc = weight_.data() + ((co * cin_ + ci) * k_) * k_;
          for (std::size_t oy = 0; oy < ho; ++oy) {
            const std::ptrdiff_t iy0 = static_cast<std::ptrdiff_t>(oy * s_) - static_cast<std::ptrdiff_t>(p_);
            const T* grow = gp + oy * wo;
            for (std::size_t ky = 0; ky < k_; ++ky) {
              const std::ptrdiff_t iy = iy0 + static_cast<std::ptrdiff_t>(ky);
              if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(h)) continue;
              T* dxrow = dxc + iy * w;
              const T* wrow = wc + ky * k_;
              for (std::size_t ox = 0; ox < wo; ++ox) {
                const std::ptrdiff_t ix0 = static_cast<std::ptrdiff_t>(ox * s_) - static_cast<std::ptrdiff_t>(p_);
                const T g = grow[ox];
                for (std::size_t kx = 0; kx < k_; ++kx) {
                  const std::ptrdiff_t ix = ix0 + static_cast<std::ptrdiff_t>(kx);
                  if (ix >= 0 && ix < static_cast<std::ptrdiff_t>(w)) dxrow[ix] += g * wrow[kx];
                }
              }
            }
          }
        }
      }
    return dx;
  }

  void accumulate_param_grads(const Tensor<T>& x, const Tensor<T>& dy, std::span<Tensor<T>> grads,
                              bool include_bias) const override {
    const std::size_t n = x.dim(0), h = x.dim(2), w = x.dim(3);
    const std::size_t ho = dy.dim(2), wo = dy.dim(3);
    Tensor<T>& dw = grads[0];
    Tensor<T>& db = grads[1];
    for (std::size_t b = 0; b < n; ++b)
      for (std::size_t co = 0; co < cout_; ++co) {
        const T* gp = dy.data() + ((b * cout_ + co) * ho) * wo;
        if (include_bias) {
          T acc = 0;
          for (std::size_t i = 0; i < ho * wo; ++i) acc += gp[i];
          db[co] += acc;
        }
        for (std::size_t ci = 0; ci < cin_; ++ci) {
          const T* xc = x.data() + ((b * cin_ + ci) * h) * w;
          T* wc = dw.data() + ((co * cin_ + ci) * k_) * k_;
          for (std::size_t oy = 0; oy < ho; ++oy) {
            const std::ptrdiff_t iy0 = static_cast<std::ptrdiff_t>(oy * s_) - static_cast<std::ptrdiff_t>(p_);
            const T* grow = gp + oy * wo;
            for (std::size_t ky = 0; ky < k_; ++ky) {
              const std::ptrdiff_t iy = iy0 + static_cast<std::ptrdiff_t>(ky);
              if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(h)) continue;
              const T* xrow = xc + iy * w;
              T* wrow = wc + ky * k_;
              for (std::size_t ox = 0; ox < wo; ++ox) {
                const std::ptrdiff_t ix0 = static_cast<std::ptrdiff_t>(ox * s_) - static_cast<std::ptrdiff_t>(p_);
                const T g = grow[ox];
                for (std::size_t kx = 0; kx < k_; ++kx) {
                  const std::ptrdiff_t ix = ix0 + static_cast<std::ptrdiff_t>(kx);
                  if (ix >= 0 && ix < static_cast<std::ptrdiff_t>(w)) wrow[kx] += g * xrow[ix];
                }
              }
            }
          }
        }
      }
  }

  Tensor<T> apply_linear(const Tensor<T>& x, const LayerContext<T>&) const override {
    Conv2d copy(*this);
    copy.bias_.fill(T{0});
    return copy.forward(x, nullptr);
  }

  std::vector<Tensor<T>*> params() override { return {&weight_, &bias_}; }
  std::vector<const Tensor<T>*> params() const override { return {&weight_, &bias_}; }
  std::vector<std::string> param_names() const override { return {"weight", "bias"}; }

  void init_params(Rng& rng) override {
    const double fan_in = static_cast<double>(cin_ * k_ * k_);
    fill_normal(weight_, rng, T{0}, static_cast<T>(std::sqrt(2.0 / fan_in)));
    bias_.fill(T{0});
  }

 private:
  std::size_t cin_, cout_, k_, s_, p_;
  Tensor<T> weight_, bias_;
};

// ---------------------------------------------------------------------------
// Conv3d: [N, Cin, D, H, W] -> [N, Cout, Do, Ho, Wo]. Used by the cost
// aggregation sub-network; stride/pad per config, no dilation.

template <typename T>
class Conv3d final : public Layer<T> {
 public:
  Conv3d(std::size_t in_ch, std::size_t out_ch, std::size_t kernel, std::size_t stride = 1,
         std::size_t pad = 0)
      : cin_(in_ch), cout_(out_ch), k_(kernel), s_(stride), p_(pad),
        weight_({out_ch, in_ch, kernel, kernel, kernel}), bias_({out_ch}) {}

  const char* kind() const override { return "conv3d"; }

  Shape output_shape(const Shape& in) const override {
    const std::size_t d = detail::conv_extent("conv3d", "input depth", in.at(2), k_, s_, p_);
    const std::size_t h = detail::conv_extent("conv3d", "input height", in.at(3), k_, s_, p_);
    const std::size_t w = detail::conv_extent("conv3d", "input width", in.at(4), k_, s_, p_);
    return {in.at(0), cout_, d, h, w};
  }

  Tensor<T> forward(const Tensor<T>& x, LayerContext<T>* ctx) const override {
    detail::check_rank("conv3d", x, 5);
    if (x.dim(1) != cin_) detail::fail_dim("conv3d", "input channel dimension", x.dim(1), cin_);
    const Shape os = output_shape(x.shape());
    Tensor<T> y(os);
    loop_all<Mode::kForward>(x, y, weight_);
    const std::size_t per_ch = os[2] * os[3] * os[4];
    for (std::size_t b = 0; b < os[0]; ++b)
      for (std::size_t co = 0; co < cout_; ++co) {
        T* yp = y.data() + (b * cout_ + co) * per_ch;
        const T bv = bias_[co];
        for (std::size_t i = 0; i < per_ch; ++i) yp[i] += bv;
      }
    if (ctx) ctx->input = x;
    return y;
  }

  Tensor<T> backward_data(const Tensor<T>& dy, const LayerContext<T>& ctx) const override {
    Tensor<T> dx(ctx.input.shape());
    loop_all<Mode::kBackwardData>(dx, dy, weight_);
    return dx;
  }

  void accumulate_param_grads(const Tensor<T>& x, const Tensor<T>& dy, std::span<Tensor<T>> grads,
                              bool include_bias) const override {
    loop_all<Mode::kBackwardWeight>(x, dy, grads[0]);
    if (include_bias) {
      const std::size_t per_ch = dy.dim(2) * dy.dim(3) * dy.dim(4);
      for (std::size_t b = 0; b < dy.dim(0); ++b)
        for (std::size_t co = 0; co < cout_; ++co) {
          const T* gp = dy.data() + (b * cout_ + co) * per_ch;
          T acc = 0;
          for (std::size_t i = 0; i < per_ch; ++i) acc += gp[i];
          grads[1][co] += acc;
        }
    }
  }

  Tensor<T> apply_linear(const Tensor<T>& x, const LayerContext<T>&) const override {
    Tensor<T> y(output_shape(x.shape()));
    loop_all<Mode::kForward>(x, y, weight_);
    return y;
  }

  std::vector<Tensor<T>*> params() override { return {&weight_, &bias_}; }
  std::vector<const Tensor<T>*> params() const override { return {&weight_, &bias_}; }
  std::vector<std::string> param_names() const override { return {"weight", "bias"}; }

  void init_params(Rng& rng) override {
    const double fan_in = static_cast<double>(cin_ * k_ * k_ * k_);
    fill_normal(weight_, rng, T{0}, static_cast<T>(std::sqrt(2.0 / fan_in)));
    bias_.fill(T{0});
  }

 private:
  enum class Mode { kForward, kBackwardData, kBackwardWeight };

  // One loop nest serves forward (writes y), backward-data (writes x) and
  // backward-weight (writes w); the other two tensors are read-only.
  template <Mode M, typename XT, typename YT, typename WT>
  void loop_all(XT& xt, YT& yt, WT& wt) const {
    const std::size_t n = xt.dim(0);
    const std::size_t d = xt.dim(2), h = xt.dim(3), w = xt.dim(4);
    const std::size_t od = yt.dim(2), oh = yt.dim(3), ow = yt.dim(4);
    for (std::size_t b = 0; b < n; ++b)
      for (std::size_t co = 0; co < cout_; ++co)
        for (std::size_t ci = 0; ci < cin_; ++ci) {
          auto* xc = xt.data() + ((b * cin_ + ci) * d) * h * w;
          auto* yc = yt.data() + ((b * cout_ + co) * od) * oh * ow;
          auto* wc = wt.data() + ((co * cin_ + ci) * k_) * k_ * k_;
          for (std::size_t oz = 0; oz < od; ++oz)
            for (std::size_t oy = 0; oy < oh; ++oy)
              for (std::size_t ox = 0; ox < ow; ++ox) {
                const std::ptrdiff_t iz0 = static_cast<std::ptrdiff_t>(oz * s_) - static_cast<std::ptrdiff_t>(p_);
                const std::ptrdiff_t iy0 = static_cast<std::ptrdiff_t>(oy * s_) - static_cast<std::ptrdiff_t>(p_);
                const std::ptrdiff_t ix0 = static_cast<std::ptrdiff_t>(ox * s_) - static_cast<std::ptrdiff_t>(p_);
                auto* yv = yc + (oz * oh + oy) * ow + ox;
                for (std::size_t kz = 0; kz < k_; ++kz) {
                  const std::ptrdiff_t iz = iz0 + static_cast<std::ptrdiff_t>(kz);
                  if (iz < 0 || iz >= static_cast<std::ptrdiff_t>(d)) continue;
                  for (std::size_t ky = 0; ky < k_; ++ky) {
                    const std::ptrdiff_t iy = iy0 + static_cast<std::ptrdiff_t>(ky);
                    if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(h)) continue;
                    auto* xrow = xc + (iz * static_cast<std::ptrdiff_t>(h) + iy) * static_cast<std::ptrdiff_t>(w);
                    auto* wrow = wc + (kz * k_ + ky) * k_;
                    for (std::size_t kx = 0; kx < k_; ++kx) {
                      const std::ptrdiff_t ix = ix0 + static_cast<std::ptrdiff_t>(kx);
                      if (ix < 0 || ix >= static_cast<std::ptrdiff_t>(w)) continue;
                      if constexpr (M == Mode::kForward) {
                        *yv += xrow[ix] * wrow[kx];
                      } else if constexpr (M == Mode::kBackwardData) {
                        xrow[ix] += *yv * wrow[kx];
                      } else {
                        wrow[kx] += *yv * xrow[ix];
                      }
                    }
                  }
                }
              }
        }
  }

  std::size_t cin_, cout_, k_, s_, p_;
  Tensor<T> weight_, bias_;
};

// ---------------------------------------------------------------------------
// LeakyRelu, slope 0.01 everywhere (see diffnet design notes).

template <typename T>
class LeakyRelu final : public Layer<T> {
 public:
  explicit LeakyRelu(T slope = static_cast<T>(0.01)) : slope_(slope) {}

  const char* kind() const override { return "leaky_relu"; }
  Shape output_shape(const Shape& in) const override { return in; }

  Tensor<T> forward(const Tensor<T>& x, LayerContext<T>* ctx) const override {
    Tensor<T> y(x.shape());
    for (std::size_t i = 0; i < x.size(); ++i) y[i] = x[i] >= T{0} ? x[i] : slope_ * x[i];
    if (ctx) ctx->input = x;
    return y;
  }

  Tensor<T> backward_data(const Tensor<T>& dy, const LayerContext<T>& ctx) const override {
    Tensor<T> dx(dy.shape());
    const Tensor<T>& x = ctx.input;
    for (std::size_t i = 0; i < dy.size(); ++i) dx[i] = x[i] >= T{0} ? dy[i] : slope_ * dy[i];
    return dx;
  }

  Tensor<T> apply_linear(const Tensor<T>& t, const LayerContext<T>& ctx) const override {
    return backward_data(t, ctx);  // diagonal map, self-transpose
  }

 private:
  T slope_;
};

// ---------------------------------------------------------------------------
// AvgPool2d, no padding: [N, C, H, W] -> [N, C, (H-k)/s+1, (W-k)/s+1].

template <typename T>
class AvgPool2d final : public Layer<T> {
 public:
  explicit AvgPool2d(std::size_t kernel, std::size_t stride = 0)
      : k_(kernel), s_(stride == 0 ? kernel : stride) {}

  const char* kind() const override { return "avg_pool2d"; }

  Shape output_shape(const Shape& in) const override {
    const std::size_t ho = detail::conv_extent("avg_pool2d", "input height", in.at(2), k_, s_, 0);
    const std::size_t wo = detail::conv_extent("avg_pool2d", "input width", in.at(3), k_, s_, 0);
    return {in.at(0), in.at(1), ho, wo};
  }

  Tensor<T> forward(const Tensor<T>& x, LayerContext<T>* ctx) const override {
    detail::check_rank("avg_pool2d", x, 4);
    const Shape os = output_shape(x.shape());
    const std::size_t nc = x.dim(0) * x.dim(1), h = x.dim(2), w = x.dim(3), ho = os[2], wo = os[3];
    Tensor<T> y(os);
    const T inv = T{1} / static_cast<T>(k_ * k_);
    for (std::size_t c = 0; c < nc; ++c) {
      const T* xc = x.data() + c * h * w;
      T* yc = y.data() + c * ho * wo;
      for (std::size_t oy = 0; oy < ho; ++oy)
        for (std::size_t ox = 0; ox < wo; ++ox) {
          T acc = 0;
          for (std::size_t ky = 0; ky < k_; ++ky)
            for (std::size_t kx = 0; kx < k_; ++kx) acc += xc[(oy * s_ + ky) * w + ox * s_ + kx];
          yc[oy * wo + ox] = acc * inv;
        }
    }
    if (ctx) ctx->input = x;
    return y;
  }

  Tensor<T> backward_data(const Tensor<T>& dy, const LayerContext<T>& ctx) const override {
    const Tensor<T>& x = ctx.input;
    const std::size_t nc = x.dim(0) * x.dim(1), h = x.dim(2), w = x.dim(3);
    const std::size_t ho = dy.dim(2), wo = dy.dim(3);
    Tensor<T> dx(x.shape());
    const T inv = T{1} / static_cast<T>(k_ * k_);
    for (std::size_t c = 0; c < nc; ++c) {
      const T* gc = dy.data() + c * ho * wo;
      T* dc = dx.data() + c * h * w;
      for (std::size_t oy = 0; oy < ho; ++oy)
        for (std::size_t ox = 0; ox < wo; ++ox) {
          const T g = gc[oy * wo + ox] * inv;
          for (std::size_t ky = 0; ky < k_; ++ky)
            for (std::size_t kx = 0; kx < k_; ++kx) dc[(oy * s_ + ky) * w + ox * s_ + kx] += g;
        }
    }
    return dx;
  }

  Tensor<T> apply_linear(const Tensor<T>& x, const LayerContext<T>&) const override {
    return forward(x, nullptr);
  }

 private:
  std::size_t k_, s_;
};

// ---------------------------------------------------------------------------
// Softmax over the last axis.

template <typename T>
class Softmax final : public Layer<T> {
 public:
  const char* kind() const override { return "softmax"; }
  Shape output_shape(const Shape& in) const override { return in; }

  Tensor<T> forward(const Tensor<T>& x, LayerContext<T>* ctx) const override {
    if (x.rank() == 0 || x.dim(x.rank() - 1) == 0)
      throw std::invalid_argument("softmax: empty class dimension");
    const std::size_t k = x.dim(x.rank() - 1);
    const std::size_t rows = x.size() / k;
    Tensor<T> y(x.shape());
    for (std::size_t r = 0; r < rows; ++r) {
      const T* xr = x.data() + r * k;
      T* yr = y.data() + r * k;
      T m = xr[0];
      for (std::size_t i = 1; i < k; ++i) m = std::max(m, xr[i]);
      double z = 0.0;
      for (std::size_t i = 0; i < k; ++i) {
        yr[i] = static_cast<T>(std::exp(static_cast<double>(xr[i] - m)));
        z += static_cast<double>(yr[i]);
      }
      const T invz = static_cast<T>(1.0 / z);
      for (std::size_t i = 0; i < k; ++i) yr[i] *= invz;
    }
    if (ctx) {
      ctx->input = x;
      ctx->extra = y;
    }
    return y;
  }

  Tensor<T> backward_data(const Tensor<T>& dy, const LayerContext<T>& ctx) const override {
    const Tensor<T>& p = ctx.extra;
    const std::size_t k = p.dim(p.rank() - 1);
    const std::size_t rows = p.size() / k;
    Tensor<T> dx(p.shape());
    for (std::size_t r = 0; r < rows; ++r) {
      const T* pr = p.data() + r * k;
      const T* gr = dy.data() + r * k;
      T* dr = dx.data() + r * k;
      double s = 0.0;
      for (std::size_t i = 0; i < k; ++i) s += static_cast<double>(pr[i]) * static_cast<double>(gr[i]);
      for (std::size_t i = 0; i < k; ++i) dr[i] = pr[i] * (gr[i] - static_cast<T>(s));
    }
    return dx;
  }

  Tensor<T> apply_linear(const Tensor<T>&, const LayerContext<T>&) const override {
    throw std::logic_error("softmax: no parameter-linear form (second-order pass unsupported)");
  }
};

// ---------------------------------------------------------------------------
// Flatten: [N, ...] -> [N, F].

template <typename T>
class Flatten final : public Layer<T> {
 public:
  const char* kind() const override { return "flatten"; }

  Shape output_shape(const Shape& in) const override {
    std::size_t f = 1;
    for (std::size_t i = 1; i < in.size(); ++i) f *= in[i];
    return {in.at(0), f};
  }

  Tensor<T> forward(const Tensor<T>& x, LayerContext<T>* ctx) const override {
    if (ctx) ctx->input = x;
    return x.reshaped(output_shape(x.shape()));
  }

  Tensor<T> backward_data(const Tensor<T>& dy, const LayerContext<T>& ctx) const override {
    return dy.reshaped(ctx.input.shape());
  }

  Tensor<T> apply_linear(const Tensor<T>& x, const LayerContext<T>&) const override {
    return x.reshaped(output_shape(x.shape()));
  }
};

}  // namespace diffnet
