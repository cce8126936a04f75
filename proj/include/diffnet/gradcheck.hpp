// Copyright (c) 2026 the itsa-lab authors
// SPDX-License-Identifier: Apache-2.0
//
// Central finite-difference checker for parameter gradients and input VJPs.
// Meaningful in 64-bit mode only.

#pragma once

#include <algorithm>
#include <cmath>
#include <string>

#include "diffnet/model.hpp"
#include "diffnet/random.hpp"

namespace diffnet {

struct GradCheckReport {
  double max_rel_err_params = 0.0;
  double max_rel_err_input = 0.0;
  double tol = 0.0;
  bool pass = false;
  std::string worst_param;  // name of the parameter with the largest error
};

inline double rel_err(double a, double b) {
  return std::abs(a - b) / std::max({1e-6, std::abs(a), std::abs(b)});
}

/// Checks analytic gradients of L = <c, f(x)> (fixed random cotangent c)
/// against central finite differences with step h, for every parameter
/// coordinate and every input coordinate.
template <typename T>
GradCheckReport grad_check(Sequential<T>& model, const Tensor<T>& x, double h, double tol,
                           std::uint64_t seed = 7) {
  GradCheckReport report;
  report.tol = tol;

  Tape<T> tape;
  model.forward(x, tape);
  Tensor<T> cot(tape.output.shape());
  {
    Rng rng(seed);
    fill_uniform(cot, rng, T{-1}, T{1});
  }
  auto loss_at = [&](const Tensor<T>& input) { return dot(model.forward(input), cot); };

  std::vector<Tensor<T>> grads = model.zero_grads();
  Tensor<T> dx = model.backward(cot, tape, grads);

  auto params = model.parameters();
  auto names = model.parameter_names();
  for (std::size_t k = 0; k < params.size(); ++k) {
    Tensor<T>& p = *params[k];
    for (std::size_t i = 0; i < p.size(); ++i) {
      const T saved = p[i];
      p[i] = saved + static_cast<T>(h);
      const double up = loss_at(x);
      p[i] = saved - static_cast<T>(h);
      const double dn = loss_at(x);
      p[i] = saved;
      const double fd = (up - dn) / (2.0 * h);
      const double err = rel_err(static_cast<double>(grads[k][i]), fd);
      if (err > report.max_rel_err_params) {
        report.max_rel_err_params = err;
        report.worst_param = names[k];
      }
    }
  }

  Tensor<T> xp = x;
  for (std::size_t i = 0; i < xp.size(); ++i) {
    const T saved = xp[i];
    xp[i] = saved + static_cast<T>(h);
    const double up = loss_at(xp);
    xp[i] = saved - static_cast<T>(h);
    const double dn = loss_at(xp);
    xp[i] = saved;
    const double fd = (up - dn) / (2.0 * h);
    report.max_rel_err_input = std::max(report.max_rel_err_input, rel_err(static_cast<double>(dx[i]), fd));
  }

  report.pass = report.max_rel_err_params < tol && report.max_rel_err_input < tol;
  return report;
}

}  // namespace diffnet
