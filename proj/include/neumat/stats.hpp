// Copyright 2026 The neumat Authors.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <functional>

#include "neumat/geom.hpp"
#include "neumat/proxy_sampler.hpp"
#include "neumat/random.hpp"

namespace neumat {

using DirectionPdf = std::function<double(const Vec3d&)>;
using DirectionSampler = std::function<Vec3d(Rng&)>;

struct Chi2Options {
  int theta_res = 16;
  int phi_res = 32;
  long samples = 1'000'000;
  double min_expected = 5.0;
  double significance = 0.01;
  int quadrature_nodes = 6;  // Simpson subintervals per axis of each (adaptively split) cell
};

struct Chi2Result {
  double statistic = 0.0;
  int dof = 0;
  double p_value = 0.0;
  double integral = 0.0;  // quadrature of the pdf over the sphere
  long invalid_samples = 0;
  bool passed = false;
};

/// Pearson chi-square goodness-of-fit between a sampler and its density over a
/// (theta, phi) grid on the full sphere. Expected cell frequencies come from
/// composite Simpson quadrature of `pdf`; cells below `min_expected` are pooled.
Chi2Result chi2_sphere_test(const DirectionPdf& pdf, const DirectionSampler& sampler, Rng& rng,
                            const Chi2Options& options = {});

/// Stratified uniform-sphere Monte Carlo estimate of the integral of `pdf` with
/// roughly `samples` evaluations (one jittered sample per stratum).
double integrate_sphere(const DirectionPdf& pdf, long samples, Rng& rng);

/// MC estimate of the proxy density's integral over the sphere.
double proxy_normalize_check(const ProxyParamsd& params, const Vec3d& wi, long samples, Rng& rng);

/// Chi-square test of proxy_sample against proxy_pdf.
Chi2Result proxy_chi2_test(const ProxyParamsd& params, const Vec3d& wi, Rng& rng, const Chi2Options& options = {});

/// Regularized upper incomplete gamma complement: P[X >= statistic] for X ~ chi2(dof).
double chi2_survival(double statistic, int dof);

}  // namespace neumat
