// Copyright (c) 2026 the itsa-lab authors
// SPDX-License-Identifier: Apache-2.0
//
// Test-only oracles, kept independent of the implementation paths they
// check: central finite differences against a scalar functional, an
// explicit Jacobian builder, and a straight-line convnet forward written
// from scratch (different loop structure, no layer classes).

#pragma once

#include <cmath>
#include <functional>
#include <vector>

#include "diffnet/model.hpp"

namespace oracles {

using diffnet::Sequential;
using diffnet::Tensor;

/// Central finite differences of a scalar functional of x.
template <typename T>
Tensor<T> fd_gradient(const std::function<double(const Tensor<T>&)>& f, const Tensor<T>& x,
                      double h) {
  Tensor<T> g(x.shape());
  Tensor<T> xp = x;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const T saved = xp[i];
    xp[i] = saved + static_cast<T>(h);
    const double up = f(xp);
    xp[i] = saved - static_cast<T>(h);
    const double dn = f(xp);
    xp[i] = saved;
    g[i] = static_cast<T>((up - dn) / (2.0 * h));
  }
  return g;
}

/// Dense Jacobian of model.forward at x, rows built from basis-cotangent
/// VJPs. Shape: [output_size, input_size].
template <typename T>
std::vector<std::vector<double>> dense_jacobian(const Sequential<T>& model, const Tensor<T>& x) {
  const Tensor<T> y = model.forward(x);
  std::vector<std::vector<double>> jac(y.size(), std::vector<double>(x.size()));
  for (std::size_t r = 0; r < y.size(); ++r) {
    Tensor<T> basis(y.shape());
    basis[r] = T{1};
    Tensor<T> row = model.input_vjp(x, basis);
    for (std::size_t c = 0; c < x.size(); ++c) jac[r][c] = static_cast<double>(row[c]);
  }
  return jac;
}

inline double cosine(const std::vector<double>& a, const std::vector<double>& b) {
  double num = 0, na = 0, nb = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    num += a[i] * b[i];
    na += a[i] * a[i];
    nb += b[i] * b[i];
  }
  return num / std::sqrt(na * nb);
}

// ---------------------------------------------------------------------------
// Straight-line second implementation of a 3-layer convnet forward:
// conv(ci->c1, k3, s1, p1) -> leaky(0.01) -> conv(c1->c2, k3, s2, p1)
// -> leaky(0.01) -> conv(c2->c3, k3, s1, p0). Index arithmetic written
// longhand, independent of diffnet.

struct RefConvSpec {
  std::size_t cin, c1, c2, c3, h, w;
};

inline std::vector<double> ref_conv2d(const std::vector<double>& x, std::size_t cin, std::size_t h,
                                      std::size_t w, const std::vector<double>& weight,
                                      const std::vector<double>& bias, std::size_t cout,
                                      std::size_t k, std::size_t stride, std::size_t pad,
                                      std::size_t& ho_out, std::size_t& wo_out) {
  const std::size_t ho = (h + 2 * pad - k) / stride + 1;
  const std::size_t wo = (w + 2 * pad - k) / stride + 1;
  std::vector<double> y(cout * ho * wo, 0.0);
  for (std::size_t co = 0; co < cout; ++co)
    for (std::size_t oy = 0; oy < ho; ++oy)
      for (std::size_t ox = 0; ox < wo; ++ox) {
        double acc = bias[co];
        for (std::size_t ci = 0; ci < cin; ++ci)
          for (std::size_t ky = 0; ky < k; ++ky)
            for (std::size_t kx = 0; kx < k; ++kx) {
              const long iy = static_cast<long>(oy * stride + ky) - static_cast<long>(pad);
              const long ix = static_cast<long>(ox * stride + kx) - static_cast<long>(pad);
              if (iy < 0 || iy >= static_cast<long>(h) || ix < 0 || ix >= static_cast<long>(w)) continue;
              acc += x[(ci * h + static_cast<std::size_t>(iy)) * w + static_cast<std::size_t>(ix)] *
                     weight[((co * cin + ci) * k + ky) * k + kx];
            }
        y[(co * ho + oy) * wo + ox] = acc;
      }
  ho_out = ho;
  wo_out = wo;
  return y;
}

inline void ref_leaky(std::vector<double>& v, double slope) {
  for (double& x : v)
    if (x < 0) x *= slope;
}

}  // namespace oracles
