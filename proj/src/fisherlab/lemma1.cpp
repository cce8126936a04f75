// Copyright (c) 2026 the itsa-lab authors
// SPDX-License-Identifier: Apache-2.0

#include "fisherlab/lemma1.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace fisherlab {

namespace {

constexpr double kPi = 3.141592653589793238462643383279502884;

double gauss_pdf(double z, double mu, double sigma) {
  const double t = (z - mu) / sigma;
  return std::exp(-0.5 * t * t) / (sigma * std::sqrt(2.0 * kPi));
}

double simpson_rule(double a, double fa, double b, double fb, double fm) {
  return (b - a) / 6.0 * (fa + 4.0 * fm + fb);
}

double simpson_recurse(const std::function<double(double)>& f, double a, double fa, double b,
                       double fb, double m, double fm, double whole, double tol, int depth) {
  const double lm = 0.5 * (a + m), rm = 0.5 * (m + b);
  const double flm = f(lm), frm = f(rm);
  const double left = simpson_rule(a, fa, m, fm, flm);
  const double right = simpson_rule(m, fm, b, fb, frm);
  if (depth <= 0 || std::abs(left + right - whole) <= 15.0 * tol) {
    return left + right + (left + right - whole) / 15.0;
  }
  return simpson_recurse(f, a, fa, m, fm, lm, flm, left, 0.5 * tol, depth - 1) +
         simpson_recurse(f, m, fm, b, fb, rm, frm, right, 0.5 * tol, depth - 1);
}

}  // namespace

double adaptive_simpson(const std::function<double(double)>& f, double a, double b, double tol,
                        int max_depth) {
  if (a == b) return 0.0;
  const double m = 0.5 * (a + b);
  const double fa = f(a), fb = f(b), fm = f(m);
  const double whole = simpson_rule(a, fa, b, fb, fm);
  return simpson_recurse(f, a, fa, b, fb, m, fm, whole, tol, max_depth);
}

double tv_distance_gauss1d(double mu1, double mu2, double sigma) {
  if (!(sigma > 0)) throw std::invalid_argument("tv_distance_gauss1d: sigma must be > 0");
  if (mu1 == mu2) return 0.0;
  auto integrand = [&](double z) { return std::abs(gauss_pdf(z, mu1, sigma) - gauss_pdf(z, mu2, sigma)); };
  const double lo = std::min(mu1, mu2) - 12.0 * sigma;
  const double hi = std::max(mu1, mu2) + 12.0 * sigma;
  const double crossing = 0.5 * (mu1 + mu2);  // kink of |p1 - p2|
  return adaptive_simpson(integrand, lo, crossing, 1e-12) +
         adaptive_simpson(integrand, crossing, hi, 1e-12);
}

double tv_distance_gauss1d_analytic(double mu1, double mu2, double sigma) {
  if (!(sigma > 0)) throw std::invalid_argument("tv_distance_gauss1d: sigma must be > 0");
  return 2.0 * std::erf(std::abs(mu2 - mu1) / (2.0 * std::sqrt(2.0) * sigma));
}

Lemma1Report lemma1_check(const GaussianEncoder<double>& enc, const diffnet::Tensor<double>& x,
                          const diffnet::Tensor<double>& u, double epsilon, std::size_t n_samples,
                          std::uint64_t seed) {
  enc.validate();
  if (!(epsilon > 0)) throw std::invalid_argument("lemma1_check: epsilon must be > 0");
  diffnet::check_same_shape(x, u, "lemma1_check direction");
  const diffnet::Tensor<double> mu_t = enc.mu_model.forward(x);
  if (mu_t.size() != 1) {
    throw std::invalid_argument("lemma1_check: latent must be 1-D, got " +
                                diffnet::shape_str(mu_t.shape()));
  }
  const double mu = mu_t[0];
  const double sigma = enc.sigma;

  // Exact Jacobian row via one VJP; the score is J^T (z - mu) / sigma^2.
  diffnet::Tensor<double> one(mu_t.shape());
  one[0] = 1.0;
  const diffnet::Tensor<double> jrow = enc.mu_model.input_vjp(x, one);
  const double jnorm = diffnet::l2_norm(jrow);

  Lemma1Report report;
  report.epsilon = epsilon;

  const double s2 = sigma * sigma;
  if (n_samples == 0) {
    auto score_norm = [&](double z) { return jnorm * std::abs(z - mu) / s2; };
    auto pdf = [&](double z) { return gauss_pdf(z, mu, sigma); };
    const double lo = mu - 12.0 * sigma, hi = mu + 12.0 * sigma;
    const double phi = adaptive_simpson([&](double z) { return score_norm(z) * score_norm(z) * pdf(z); },
                                        lo, hi, 1e-12);
    const double mean_norm = adaptive_simpson([&](double z) { return score_norm(z) * pdf(z); }, lo, hi, 1e-12);
    report.lhs = phi;
    report.variance_term = phi - mean_norm * mean_norm;
  } else {
    diffnet::Rng rng(seed);
    std::normal_distribution<double> gauss(0.0, 1.0);
    double acc = 0.0, acc_norm = 0.0;
    for (std::size_t s = 0; s < n_samples; ++s) {
      const double dz = sigma * gauss(rng);  // z - mu
      const double norm = jnorm * std::abs(dz) / s2;
      acc += norm * norm;
      acc_norm += norm;
    }
    const double n = static_cast<double>(n_samples);
    report.lhs = acc / n;
    report.variance_term = report.lhs - (acc_norm / n) * (acc_norm / n);
  }

  // Independent estimate of the density-gradient direction: central finite
  // differences of the quadrature tail mass G(x') = integral_{z > mu} p(z|x').
  diffnet::Tensor<double> direction(x.shape());
  const double fd_h = 1e-4;
  diffnet::Tensor<double> xp = x;
  auto tail_mass = [&](const diffnet::Tensor<double>& input) {
    const double m = enc.mu_model.forward(input)[0];
    return adaptive_simpson([&](double z) { return gauss_pdf(z, m, sigma); }, mu,
                            mu + 12.0 * sigma + std::abs(m - mu), 1e-12);
  };
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double saved = xp[i];
    xp[i] = saved + fd_h;
    const double up = tail_mass(xp);
    xp[i] = saved - fd_h;
    const double dn = tail_mass(xp);
    xp[i] = saved;
    direction[i] = (up - dn) / (2.0 * fd_h);
  }
  const double dir_norm = diffnet::l2_norm(direction);
  const double u_norm = diffnet::l2_norm(u);
  const double cos_psi = dir_norm > 0 && u_norm > 0 ? diffnet::dot(u, direction) / (u_norm * dir_norm) : 0.0;
  report.cos_psi = cos_psi;
  report.psi = std::acos(std::clamp(cos_psi, -1.0, 1.0));

  if (std::abs(cos_psi) < 1e-6) {
    report.ill_conditioned = true;
    return report;
  }

  diffnet::Tensor<double> x_star = x;
  diffnet::axpy(x_star, u, epsilon);
  const double mu_star = enc.mu_model.forward(x_star)[0];
  const double gap = tv_distance_gauss1d(mu, mu_star, sigma);
  report.density_gap_term = gap * gap / (epsilon * epsilon * cos_psi * cos_psi);
  report.rhs = report.density_gap_term + report.variance_term;
  report.relative_residual = report.lhs != 0.0 ? std::abs(report.lhs - report.rhs) / report.lhs : 0.0;
  return report;
}

}  // namespace fisherlab
