// Copyright 2026 The neumat Authors.
// SPDX-License-Identifier: Apache-2.0

#include "neumat/stats.hpp"

#include <boost/math/special_functions/gamma.hpp>

#include <algorithm>
#include <cmath>
#include <limits>
#include <vector>

namespace neumat {

double chi2_survival(double statistic, int dof) {
  if (dof < 1) return 1.0;
  if (statistic <= 0.0) return 1.0;
  return boost::math::gamma_q(0.5 * dof, 0.5 * statistic);
}

namespace {

Vec3d spherical(double theta, double phi) {
  const double s = std::sin(theta);
  return {s * std::cos(phi), s * std::sin(phi), std::cos(theta)};
}

double simpson_weight(int i, int n) {
  if (i == 0 || i == n) return 1.0;
  return (i % 2 == 1) ? 4.0 : 2.0;
}

// Tensor Simpson rule with n x n subintervals over a (theta, phi) cell, sin(theta) included.
double simpson_cell(const DirectionPdf& pdf, double t0, double t1, double p0, double p1, int n) {
  const double ht = (t1 - t0) / n;
  const double hp = (p1 - p0) / n;
  double sum = 0.0;
  for (int a = 0; a <= n; ++a) {
    const double theta = t0 + a * ht;
    const double wa = simpson_weight(a, n) * std::sin(theta);
    if (wa == 0.0) continue;
    for (int b = 0; b <= n; ++b) sum += wa * simpson_weight(b, n) * pdf(spherical(theta, p0 + b * hp));
  }
  return sum * ht * hp / 9.0;
}

// Splits the cell into quadrants until the parent estimate agrees with the sum of the
// children. Reflection densities have integrable point singularities (wo = -wi for a
// specular lobe) that a fixed rule resolves poorly.
double adaptive_cell(const DirectionPdf& pdf, double t0, double t1, double p0, double p1, int n, int depth,
                     double parent = -1.0) {
  const double whole = parent >= 0.0 ? parent : simpson_cell(pdf, t0, t1, p0, p1, n);
  const double tm = 0.5 * (t0 + t1);
  const double pm = 0.5 * (p0 + p1);
  const double q00 = simpson_cell(pdf, t0, tm, p0, pm, n);
  const double q01 = simpson_cell(pdf, t0, tm, pm, p1, n);
  const double q10 = simpson_cell(pdf, tm, t1, p0, pm, n);
  const double q11 = simpson_cell(pdf, tm, t1, pm, p1, n);
  const double split = q00 + q01 + q10 + q11;
  constexpr int kMaxDepth = 12;
  if (depth >= kMaxDepth || std::abs(split - whole) <= std::max(1e-9, 1e-5 * std::abs(split))) return split;
  return adaptive_cell(pdf, t0, tm, p0, pm, n, depth + 1, q00) + adaptive_cell(pdf, t0, tm, pm, p1, n, depth + 1, q01) +
         adaptive_cell(pdf, tm, t1, p0, pm, n, depth + 1, q10) + adaptive_cell(pdf, tm, t1, pm, p1, n, depth + 1, q11);
}

}  // namespace

Chi2Result chi2_sphere_test(const DirectionPdf& pdf, const DirectionSampler& sampler, Rng& rng,
                            const Chi2Options& options) {
  const int nt = options.theta_res;
  const int np = options.phi_res;
  const double dtheta = kPi / nt;
  const double dphi = 2.0 * kPi / np;
  int q = options.quadrature_nodes;
  if (q % 2) ++q;

  std::vector<double> observed(std::size_t(nt) * np, 0.0);
  Chi2Result result;
  for (long s = 0; s < options.samples; ++s) {
    const Vec3d w = sampler(rng);
    const double norm2 = w.squaredNorm();
    if (!std::isfinite(norm2) || std::abs(norm2 - 1.0) > 1e-4) {
      ++result.invalid_samples;
      continue;
    }
    const double theta = std::acos(std::clamp(w.z(), -1.0, 1.0));
    double phi = std::atan2(w.y(), w.x());
    if (phi < 0) phi += 2.0 * kPi;
    const int ti = std::min(nt - 1, int(theta / dtheta));
    const int pi = std::min(np - 1, int(phi / dphi));
    observed[std::size_t(ti) * np + pi] += 1.0;
  }

  std::vector<double> expected(observed.size(), 0.0);
  for (int ti = 0; ti < nt; ++ti)
    for (int pi = 0; pi < np; ++pi)
      expected[std::size_t(ti) * np + pi] =
          adaptive_cell(pdf, ti * dtheta, (ti + 1) * dtheta, pi * dphi, (pi + 1) * dphi, q, 0);
  for (double e : expected) result.integral += e;
  const double total = double(options.samples);
  for (double& e : expected) e *= total;

  // Pool low-expectation cells, smallest first.
  std::vector<std::size_t> order(expected.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return expected[a] < expected[b]; });
  double pooled_obs = 0.0;
  double pooled_exp = 0.0;
  int pooled_cells = 0;
  int cells = 0;
  double stat = 0.0;
  bool impossible = false;
  for (std::size_t idx : order) {
    const double e = expected[idx];
    const double o = observed[idx];
    if (e <= 0.0) {
      // Samples landed where the density integrates to zero.
      if (o > 0.0) impossible = true;
    } else if (e < options.min_expected ||
               (pooled_cells > 0 && pooled_exp < options.min_expected)) {
      pooled_obs += o;
      pooled_exp += e;
      ++pooled_cells;
    } else {
      stat += (o - e) * (o - e) / e;
      ++cells;
    }
  }
  if (pooled_cells > 0 && pooled_exp > 0.0) {
    stat += (pooled_obs - pooled_exp) * (pooled_obs - pooled_exp) / pooled_exp;
    ++cells;
  }
  if (impossible) stat = std::numeric_limits<double>::infinity();
  result.statistic = stat;
  result.dof = std::max(1, cells - 1);
  result.p_value = std::isfinite(stat) ? chi2_survival(stat, result.dof) : 0.0;
  result.passed = result.invalid_samples == 0 && result.p_value > options.significance;
  return result;
}

double integrate_sphere(const DirectionPdf& pdf, long samples, Rng& rng) {
  const long nz = std::max(1L, long(std::sqrt(double(samples) / 2.0)));
  const long nphi = std::max(1L, samples / nz);
  double sum = 0.0;
  for (long i = 0; i < nz; ++i) {
    double row = 0.0;
    for (long j = 0; j < nphi; ++j) {
      const double u0 = (double(i) + rng.uniform()) / double(nz);
      const double u1 = (double(j) + rng.uniform()) / double(nphi);
      row += pdf(sample_uniform_sphere({u0, u1}));
    }
    sum += row;
  }
  return sum / (double(nz) * double(nphi) * kUniformSpherePdf);
}

double proxy_normalize_check(const ProxyParamsd& params, const Vec3d& wi, long samples, Rng& rng) {
  return integrate_sphere([&](const Vec3d& wo) { return proxy_pdf(params, wi, wo); }, samples, rng);
}

Chi2Result proxy_chi2_test(const ProxyParamsd& params, const Vec3d& wi, Rng& rng, const Chi2Options& options) {
  return chi2_sphere_test([&](const Vec3d& wo) { return proxy_pdf(params, wi, wo); },
                          [&](Rng& r) {
                            return proxy_sample(params, wi, Vec3d(r.uniform(), r.uniform(), r.uniform()));
                          },
                          rng, options);
}

}  // namespace neumat
