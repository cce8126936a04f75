// Copyright (c) 2026 the itsa-lab authors
// SPDX-License-Identifier: Apache-2.0
//
// Quadrature-backed verification of the first-order identity linking the
// Fisher information to the scaled density gap between clean and perturbed
// latent distributions (1-D latents).

#pragma once

#include <cstdint>
#include <functional>

#include "fisherlab/estimators.hpp"

namespace fisherlab {

/// Adaptive Simpson integration of f over [a, b].
double adaptive_simpson(const std::function<double(double)>& f, double a, double b,
                        double tol = 1e-10, int max_depth = 40);

/// integral |N(mu1, sigma^2) - N(mu2, sigma^2)| dz by adaptive quadrature,
/// split at the density crossing.
double tv_distance_gauss1d(double mu1, double mu2, double sigma);

/// The analytic equal-variance expression, 2 erf(|mu2-mu1| / (2 sqrt(2) sigma));
/// the quadrature route above is cross-checked against it.
double tv_distance_gauss1d_analytic(double mu1, double mu2, double sigma);

struct Lemma1Report {
  double epsilon = 0.0;
  double psi = 0.0;                // angle between u and the density gradient
  double cos_psi = 0.0;
  double lhs = 0.0;                // Phi(Z | X = x)
  double rhs = 0.0;                // density-gap term + variance term
  double density_gap_term = 0.0;   // (integral |p* - p| dz)^2 / (eps^2 cos^2 psi)
  double variance_term = 0.0;      // V[ ||grad_x log p||_2 ]
  double relative_residual = 0.0;  // |lhs - rhs| / lhs
  bool ill_conditioned = false;    // |cos psi| below 1e-6; rhs not evaluated
};

/// Evaluates both sides of the first-order identity for a 1-D-latent
/// Gaussian encoder at input x and unit direction u.
///
/// lhs and the variance term integrate the exact score norm
/// ||J^T (z - mu)|| / sigma^2 over z by quadrature when n_samples == 0, or
/// estimate them by MC sampling otherwise. The density gradient direction
/// entering cos(psi) is estimated independently of the VJP path, by central
/// finite differences of the quadrature tail mass of p(z|x').
Lemma1Report lemma1_check(const GaussianEncoder<double>& enc, const diffnet::Tensor<double>& x,
                          const diffnet::Tensor<double>& u, double epsilon,
                          std::size_t n_samples = 0, std::uint64_t seed = 0);

}  // namespace fisherlab
