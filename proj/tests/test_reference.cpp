// Copyright 2026 The neumat Authors.
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <memory>

#include "neumat/reference_material.hpp"
#include "neumat/stats.hpp"

namespace neumat {
namespace {

Vec3d upper(Rng& rng) {
  Vec3d w = sample_uniform_hemisphere({rng.uniform(), rng.uniform()});
  w.z() = std::max(w.z(), 1e-3);
  return w.normalized();
}

// Isotropic GGX pieces written from the angle form, independent of ggx_d / ggx_lambda.
double oracle_d(double alpha, double cos_h) {
  const double tan2 = (1 - cos_h * cos_h) / (cos_h * cos_h);
  const double a2 = alpha * alpha;
  return a2 / (kPi * std::pow(cos_h, 4) * (a2 + tan2) * (a2 + tan2));
}

double oracle_lambda(double alpha, double cos_t) {
  const double tan2 = (1 - cos_t * cos_t) / (cos_t * cos_t);
  return 0.5 * (-1 + std::sqrt(1 + alpha * alpha * tan2));
}

double oracle_brdf(double alpha, const Vec3d& wi, const Vec3d& wo) {
  const Vec3d h = (wi + wo).normalized();
  const double g = 1.0 / (1.0 + oracle_lambda(alpha, wi.z()) + oracle_lambda(alpha, wo.z()));
  return oracle_d(alpha, h.z()) * g / (4 * wi.z() * wo.z());
}

TEST(Ggx, HelpersMatchAngleForm) {
  Rng rng(3);
  for (int i = 0; i < 1000; ++i) {
    const double a = 0.05 + 0.95 * rng.uniform();
    const Vec3d h = upper(rng);
    const Vec3d w = upper(rng);
    EXPECT_NEAR(ggx_d(h, a, a) / oracle_d(a, h.z()), 1.0, 1e-9);
    EXPECT_NEAR(ggx_lambda(w, a, a), oracle_lambda(a, w.z()), 1e-9 * (1 + oracle_lambda(a, w.z())));
  }
}

TEST(Ggx, NdfProjectsToUnitArea) {
  // Integral of D(h) cos(theta_h) over the hemisphere equals 1.
  Rng rng(4);
  const long n = 2'000'000;
  for (double a : {0.3, 0.7}) {
    double sum = 0;
    for (long i = 0; i < n; ++i) {
      const Vec3d h = sample_uniform_hemisphere({rng.uniform(), rng.uniform()});
      sum += ggx_d(h, a, 0.5 * a) * h.z() * 2 * kPi;
    }
    EXPECT_NEAR(sum / n, 1.0, 0.01);
  }
}

TEST(ReferenceEval, LambertianIsAlbedoOverPi) {
  const auto mat = make_lambertian_material({0.5f, 0.5f, 0.5f});
  Rng rng(1);
  for (int i = 0; i < 100; ++i) {
    const Spectrum f = eval_reference(mat, {rng.uniform(), rng.uniform()}, upper(rng), upper(rng));
    for (int c = 0; c < 3; ++c) EXPECT_NEAR(f[c], 0.5 / kPi, 1e-7);
  }
}

TEST(ReferenceEval, UnitRoughnessConductorAtNormalIncidence) {
  // D = 1/pi, G2 = 1 and F = 1 at the zenith: 1 / (4 pi). Golden value 0.0795774715459.
  const auto mat = make_conductor_material({1.0f, 1.0f, 1.0f}, 1.0f);
  const Spectrum f = eval_reference(mat, {0.5, 0.5}, {0, 0, 1}, {0, 0, 1});
  for (int c = 0; c < 3; ++c) EXPECT_NEAR(f[c], 0.0795774715459477, 1e-12);
}

TEST(ReferenceEval, ConductorMatchesOracle) {
  const auto mat = make_conductor_material({1.0f, 1.0f, 1.0f}, 0.4f);
  Rng rng(2);
  for (int i = 0; i < 1000; ++i) {
    const Vec3d wi = upper(rng);
    const Vec3d wo = upper(rng);
    EXPECT_NEAR(eval_reference(mat, {0.5, 0.5}, wi, wo)[0] / oracle_brdf(0.4, wi, wo), 1.0, 1e-5);
  }
}

TEST(ReferenceEval, ZeroMixWeightSelectsTheFirstLobe) {
  const auto lam = make_lambertian_material({0.2f, 0.4f, 0.6f});
  MaterialGraph g = lam.graph();
  Lobe metal;
  metal.type = LobeType::kConductor;
  metal.color.constant = {0.9f, 0.8f, 0.7f};
  metal.roughness.constant = 0.3f;
  metal.weight.constant = 0.0f;
  g.lobes.push_back(metal);
  const ReferenceMaterial mixed(g, lam.textures_ptr());
  Rng rng(3);
  for (int i = 0; i < 200; ++i) {
    const Vec2d uv(rng.uniform(), rng.uniform());
    const Vec3d wi = upper(rng);
    const Vec3d wo = upper(rng);
    const Spectrum a = eval_reference(mixed, uv, wi, wo);
    const Spectrum b = eval_reference(lam, uv, wi, wo);
    for (int c = 0; c < 3; ++c) EXPECT_NEAR(a[c], b[c], 1e-7);
  }
}

TEST(ReferenceEval, LayeredIsReciprocalAndBelowHorizonIsZero) {
  const auto mat = make_layered_material(32);
  Rng rng(4);
  for (int i = 0; i < 500; ++i) {
    const Vec2d uv(rng.uniform(), rng.uniform());
    const Vec3d wi = upper(rng);
    const Vec3d wo = upper(rng);
    const Spectrum a = eval_reference(mat, uv, wi, wo);
    const Spectrum b = eval_reference(mat, uv, wo, wi);
    EXPECT_TRUE(a.isApprox(b, 1e-9) || (a - b).abs().maxCoeff() < 1e-12);
    EXPECT_TRUE((a >= 0).all());
    EXPECT_EQ(eval_reference(mat, uv, wi, Vec3d(wo.x(), wo.y(), -wo.z())).abs().maxCoeff(), 0.0);
  }
}

TEST(ReferenceSampling, LayeredChiSquare) {
  const auto mat = make_layered_material(32);
  Rng rng(5);
  int passed = 0;
  for (int i = 0; i < 5; ++i) {
    const Eigen::VectorXf raw = mat.textures().sample_raw({rng.uniform(), rng.uniform()});
    const Vec3d wi = upper(rng);
    const auto r = chi2_sphere_test([&](const Vec3d& wo) { return mat.pdf(raw, wi, wo); },
                                    [&](Rng& g) { return mat.sample(raw, wi, {g.uniform(), g.uniform(), g.uniform()}).wo; },
                                    rng, {.samples = 400'000});
    passed += r.passed;
  }
  EXPECT_GE(passed, 4);
}

TEST(ReferenceSampling, LambertianPdfIsCosineOverPi) {
  const auto mat = make_lambertian_material({0.5f, 0.5f, 0.5f});
  const Eigen::VectorXf raw = mat.textures().sample_raw({0.5, 0.5});
  Rng rng(6);
  for (int i = 0; i < 100; ++i) {
    const auto s = mat.sample(raw, upper(rng), {rng.uniform(), rng.uniform(), rng.uniform()});
    EXPECT_NEAR(s.pdf, s.wo.z() / kPi, 1e-12);
  }
}

TEST(FetchParams, ZeroSigmaReturnsConstant) {
  const auto mat = make_lambertian_material({0.25f, 0.5f, 0.75f});
  const Eigen::VectorXf k = mat.textures().fetch_params({{0.37, 0.81}, 0.0});
  EXPECT_EQ(k[0], 0.25f);
  EXPECT_EQ(k[1], 0.5f);
  EXPECT_EQ(k[2], 0.75f);
}

TEST(FetchParams, RampAverageOverFourByFour) {
  const int n = 64;
  Image ramp(n, n);
  for (int y = 0; y < n; ++y)
    for (int x = 0; x < n; ++x) ramp.at(x, y) = 0.01f * x + 0.002f * y;
  const ParamTextures tex({{"ramp", ChannelKind::kPlain, -1}}, {ramp});
  // Level 2 texel (5, 7) covers level-0 texels x 20..23, y 28..31.
  double mean = 0;
  for (int y = 28; y < 32; ++y)
    for (int x = 20; x < 24; ++x) mean += ramp.at(x, y) / 16.0;
  const Vec2d uv((5 + 0.5) / 16.0, (7 + 0.5) / 16.0);
  EXPECT_NEAR(tex.fetch_params({uv, ParamTextures::sigma_for_level(2)})[0], mean, 1e-3);
}

TEST(FetchParams, CheckerboardSlopesWidenRoughness) {
  const int n = 64;
  const float s = 0.2f;
  const float alpha0 = 0.3f;
  Image sx(n, n), sy(n, n), rough(n, n, alpha0);
  for (int y = 0; y < n; ++y)
    for (int x = 0; x < n; ++x) sx.at(x, y) = ((x + y) % 2 ? s : -s);
  const ParamTextures tex({{"sx", ChannelKind::kSlopeX, 1}, {"sy", ChannelKind::kSlopeY, 0},
                           {"rough", ChannelKind::kRoughness, 0}},
                          {sx, sy, rough});
  ASSERT_EQ(tex.param_size(), 7);
  const int level = 3;
  const double sigma = ParamTextures::sigma_for_level(level);
  const int tx = 3, ty = 5;
  // Brute-force truncated Gaussian moments around the level texel center.
  const int w = tex.level_width(level);
  const double c = (tx + 0.5) * double(n) / w - 0.5;
  const double cy = (ty + 0.5) * double(n) / w - 0.5;
  const int r = int(std::ceil(3 * sigma));
  double wsum = 0, m1 = 0, m2 = 0;
  for (int y = int(std::floor(cy)) - r; y <= int(std::ceil(cy)) + r; ++y)
    for (int x = int(std::floor(c)) - r; x <= int(std::ceil(c)) + r; ++x) {
      const double g = std::exp(-0.5 * ((x - c) * (x - c) + (y - cy) * (y - cy)) / (sigma * sigma));
      const double v = sx.at((x % n + n) % n, (y % n + n) % n);
      wsum += g;
      m1 += g * v;
      m2 += g * v * v;
    }
  const double mean = m1 / wsum;
  const double var = m2 / wsum - mean * mean;
  const Eigen::VectorXf k = tex.texel_params(level, tx, ty);
  EXPECT_NEAR(k[0], mean, 1e-4);
  EXPECT_NEAR(mean, 0.0, 1e-2);
  EXPECT_NEAR(k[2], var, 1e-4);
  EXPECT_NEAR(var, s * s, 1e-3);
  EXPECT_NEAR(k[5] * k[5], alpha0 * alpha0 + 2 * var, 1e-4);
  EXPECT_NEAR(k[6], alpha0, 1e-5);
  // The footprint lookup at the texel center agrees with the texel.
  const Vec2d uv((tx + 0.5) / w, (ty + 0.5) / w);
  EXPECT_NEAR(tex.fetch_params({uv, sigma})[5], k[5], 1e-6);
}

TEST(Mollification, ZeroConeIsIdentity) {
  const auto mat = make_layered_material(32);
  Rng rng(7);
  const Vec3d wi = upper(rng), wo = upper(rng);
  const Spectrum a = eval_mollified(mat, Vec2d(0.3, 0.6), wi, wo, 0.0, 16, rng);
  EXPECT_EQ((a - eval_reference(mat, {0.3, 0.6}, wi, wo)).abs().maxCoeff(), 0.0);
}

TEST(Mollification, LambertianUnchanged) {
  const auto mat = make_lambertian_material({0.5f, 0.5f, 0.5f});
  Rng rng(8);
  const Vec3d wi(0, 0, 1);
  const Vec3d wo = Vec3d(0.2, 0.1, 0.9).normalized();
  EXPECT_NEAR(eval_mollified(mat, Vec2d(0.5, 0.5), wi, wo, 5 * kPi / 180, 256, rng)[0], 0.5 / kPi, 1e-7);
}

TEST(Mollification, FlattensSharpPeak) {
  const auto mat = make_conductor_material({1.0f, 1.0f, 1.0f}, 0.05f);
  Rng rng(9);
  const Vec3d wi = Vec3d(0.3, 0.0, 1.0).normalized();
  const Vec3d peak = reflect<double>(wi, {0, 0, 1});
  const double sharp = eval_reference(mat, {0.5, 0.5}, wi, peak)[0];
  const double soft = eval_mollified(mat, Vec2d(0.5, 0.5), wi, peak, 5 * kPi / 180, 100000, rng)[0];
  EXPECT_LT(soft, 0.9 * sharp);
}

TEST(Albedo, LambertianIsExact) {
  const auto mat = make_lambertian_material({0.5f, 0.25f, 0.125f});
  Rng rng(10);
  const Spectrum a = estimate_albedo(mat, Vec2d(0.5, 0.5), upper(rng), rng, 100000);
  EXPECT_NEAR(a[0], 0.5, 1e-6);
  EXPECT_NEAR(a[1], 0.25, 1e-6);
  EXPECT_NEAR(a[2], 0.125, 1e-6);
}

TEST(Albedo, BlackIsZero) {
  const auto mat = make_lambertian_material({0.0f, 0.0f, 0.0f});
  Rng rng(11);
  EXPECT_EQ(estimate_albedo(mat, Vec2d(0.5, 0.5), {0, 0, 1}, rng, 1000).abs().maxCoeff(), 0.0);
}

TEST(Albedo, GgxAgainstQuadrature) {
  const auto mat = make_conductor_material({1.0f, 1.0f, 1.0f}, 0.5f);
  // Uniform-hemisphere quadrature of the oracle BRDF at normal incidence.
  Rng qrng(12);
  const long n = 10'000'000;
  const long side = long(std::sqrt(double(n)));
  double sum = 0;
  for (long i = 0; i < side; ++i)
    for (long j = 0; j < side; ++j) {
      const Vec3d w = sample_uniform_hemisphere({(i + qrng.uniform()) / side, (j + qrng.uniform()) / side});
      if (w.z() <= 0) continue;
      sum += oracle_brdf(0.5, {0, 0, 1}, w) * w.z() * 2 * kPi;
    }
  const double reference = sum / double(side * side);
  Rng rng(13);
  const double est = estimate_albedo(mat, Vec2d(0.5, 0.5), {0, 0, 1}, rng, 1'000'000)[0];
  EXPECT_NEAR(est / reference, 1.0, 0.01);
}

}  // namespace
}  // namespace neumat
