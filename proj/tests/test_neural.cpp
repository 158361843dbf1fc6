// Copyright 2026 The neumat Authors.
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include "neumat/neural_brdf.hpp"

namespace neumat {
namespace {

NeuralMaterial small_material(std::uint64_t seed, bool albedo = false) {
  NeuralConfig cfg;
  cfg.brdf_hidden = {16, 16};
  cfg.sampler_hidden = {16, 16};
  cfg.encoder_hidden = {16};
  cfg.albedo_head = albedo;
  cfg.seed = seed;
  return NeuralMaterial(cfg, 4, 8, 8);
}

LatentCode random_code(Rng& rng, double scale = 1.0) {
  LatentCode z;
  for (int c = 0; c < kLatentChannels; ++c) z[c] = float(scale * (2 * rng.uniform() - 1));
  return z;
}

Vec3d upper(Rng& rng) {
  return sample_cosine_hemisphere<double>({rng.uniform(), rng.uniform()});
}

// Frame layer that ignores z and emits (n, t) for every frame.
void set_constant_frames(NeuralMaterial& m, const Vec3f& n, const Vec3f& t) {
  m.frame_layer.weight(0).setZero();
  for (int i = 0; i < kNumFrames; ++i) {
    m.frame_layer.bias(0).segment<3>(6 * i) = n;
    m.frame_layer.bias(0).segment<3>(6 * i + 3) = t;
  }
}

TEST(NeuralMaterial, LayerWidths) {
  const auto m = small_material(1);
  EXPECT_EQ(m.frame_layer.input_size(), 8);
  EXPECT_EQ(m.frame_layer.output_size(), 12);
  EXPECT_EQ(m.frame_layer.num_layers(), 1);
  EXPECT_EQ(m.decoder_input_size(), 20);
  EXPECT_EQ(m.sampler_decoder.input_size(), 11);
  EXPECT_EQ(m.sampler_decoder.output_size(), 9);
}

TEST(Frames, CanonicalFramesRepeatDirections) {
  auto m = small_material(2);
  set_constant_frames(m, {0, 0, 1}, {1, 0, 0});
  Rng rng(3);
  const LatentCode z = random_code(rng);
  const FrameSet<float> fs = m.frames(z);
  for (int i = 0; i < kNumFrames; ++i)
    EXPECT_TRUE((fs.T.block<3, 3>(3 * i, 0) == Eigen::Matrix3f::Identity()));
  const Vec3d wi(0.3, -0.2, std::sqrt(1 - 0.13));
  const Vec3d wo(-0.6, 0.0, 0.8);
  const Eigen::VectorXf x = m.decoder_input(z, wi, wo);
  const Vec3f fi = wi.cast<float>();
  const Vec3f fo = wo.cast<float>();
  EXPECT_EQ(Vec3f(x.segment<3>(8)), fi);
  EXPECT_EQ(Vec3f(x.segment<3>(11)), fi);
  EXPECT_EQ(Vec3f(x.segment<3>(14)), fo);
  EXPECT_EQ(Vec3f(x.segment<3>(17)), fo);
}

TEST(Frames, RawNormalIsNormalized) {
  Eigen::Matrix<float, kFrameOutputs, 1> raw;
  raw << 0, 0, 2, 1, 0, 0, 0, 0, 2, 1, 0, 0;
  const auto fs = extract_frames<float>(raw);
  EXPECT_EQ(fs.frames[0].n, Vec3f(0, 0, 1));
  EXPECT_FALSE(fs.fallback[0]);
}

TEST(Frames, DegeneratePairFallsBackDeterministically) {
  Eigen::Matrix<float, kFrameOutputs, 1> raw;
  raw << 0, 0, 1, 0, 0, 3, 0, 1, 0, 0, 0, 0;
  const auto fs = extract_frames<float>(raw);
  EXPECT_TRUE(fs.fallback[0]);
  EXPECT_TRUE(fs.fallback[1]);
  // n = z: least aligned axis is x, tangent direction n x e_x = (0, 1, 0).
  EXPECT_NEAR(std::abs(fs.frames[0].b.dot(Vec3f(0, 1, 0))) + std::abs(fs.frames[0].t.dot(Vec3f(0, 1, 0))), 1.0f,
              1e-6f);
  EXPECT_LT((fallback_tangent<float>({0, 0, 1}) - Vec3f(0, 1, 0)).norm(), 1e-6f);
  EXPECT_LT((fallback_tangent<float>({0, 1, 0}) - Vec3f(0, 0, -1)).norm(), 1e-6f);
}

TEST(Frames, RowsAreUnitAndBitangentOrthogonal) {
  Rng rng(4);
  for (int trial = 0; trial < 20; ++trial) {
    auto m = small_material(10 + trial);
    m.frame_layer.weight(0) *= 10.0f;  // far from the canonical initialization
    for (int i = 0; i < 50; ++i) {
      const FrameSet<float> fs = m.frames(random_code(rng, 2.0));
      for (int r = 0; r < kFrameRows; ++r) EXPECT_NEAR(fs.T.row(r).norm(), 1.0f, 1e-5f);
      for (const Frame<float>& fr : fs.frames) {
        EXPECT_NEAR(fr.b.dot(fr.n), 0.0f, 1e-5f);
        EXPECT_NEAR(fr.b.dot(fr.t), 0.0f, 1e-5f);
      }
    }
  }
}

// t is not orthogonalized against n, so T w keeps unit-length blocks only when the
// raw pair is already orthogonal.
TEST(Frames, OrthogonalPairsPreserveLength) {
  Rng rng(5);
  for (int i = 0; i < 1000; ++i) {
    Eigen::Matrix<float, kFrameOutputs, 1> raw;
    for (int f = 0; f < kNumFrames; ++f) {
      const Vec3f n = sample_uniform_sphere({rng.uniform(), rng.uniform()}).cast<float>();
      const Frame<float> basis = frame_from_normal<float>(n);
      const float phi = float(2 * kPi * rng.uniform());
      raw.segment<3>(6 * f) = n * float(0.5 + rng.uniform());
      raw.segment<3>(6 * f + 3) = (basis.t * std::cos(phi) + basis.b * std::sin(phi)) * float(0.5 + rng.uniform());
    }
    const auto fs = extract_frames<float>(raw);
    const Vec3f w = sample_uniform_sphere({rng.uniform(), rng.uniform()}).cast<float>();
    const Eigen::Matrix<float, kFrameRows, 1> tw = fs.T * w;
    for (int f = 0; f < kNumFrames; ++f) EXPECT_NEAR(tw.segment<3>(3 * f).norm(), 1.0f, 1e-5f);
  }
}

TEST(Frames, BackwardMatchesFiniteDifferences) {
  using Raw = Eigen::Matrix<double, kFrameOutputs, 1>;
  using TMat = Eigen::Matrix<double, kFrameRows, 3>;
  Rng rng(55);
  for (int trial = 0; trial < 50; ++trial) {
    Raw raw;
    for (int i = 0; i < kFrameOutputs; ++i) raw[i] = 2 * rng.uniform() - 1;
    TMat g;
    for (Eigen::Index i = 0; i < g.size(); ++i) g.data()[i] = 2 * rng.uniform() - 1;
    const auto fs = extract_frames<double>(raw);
    const Raw analytic = extract_frames_backward<double>(raw, fs, g);
    const double h = 1e-6;
    for (int i = 0; i < kFrameOutputs; ++i) {
      Raw rp = raw;
      Raw rm = raw;
      rp[i] += h;
      rm[i] -= h;
      const double fd =
          ((extract_frames<double>(rp).T.cwiseProduct(g)).sum() - (extract_frames<double>(rm).T.cwiseProduct(g)).sum()) /
          (2 * h);
      EXPECT_NEAR(analytic[i], fd, 1e-6 * std::max(1.0, std::abs(fd))) << "trial " << trial << " entry " << i;
    }
  }
}

TEST(DecodeBatch, MatchesPerSampleEval) {
  const auto m = small_material(6);
  Rng rng(7);
  const int batch = 16;
  Eigen::MatrixXf z(8, batch), wi(3, batch), wo(3, batch);
  for (int j = 0; j < batch; ++j) {
    z.col(j) = random_code(rng);
    wi.col(j) = upper(rng).cast<float>();
    wo.col(j) = upper(rng).cast<float>();
  }
  DecodeTape tape;
  const Eigen::MatrixXf& y = decode_batch(m, z, wi, wo, tape);
  for (int j = 0; j < batch; ++j) {
    const Eigen::VectorXf single = m.brdf_decoder.forward(
        m.decoder_input(z.col(j), wi.col(j).cast<double>(), wo.col(j).cast<double>()));
    EXPECT_LT((y.col(j) - single).cwiseAbs().maxCoeff(), 1e-5f);
  }
}

class DecodeBackwardTest : public ::testing::TestWithParam<bool> {};

TEST_P(DecodeBackwardTest, MatchesFiniteDifferences) {
  NeuralConfig cfg;
  cfg.brdf_hidden = {12, 12};
  cfg.learned_frames = GetParam();
  cfg.seed = 8;
  const NeuralMaterial m(cfg, 4, 4, 4);
  Rng rng(9);
  const int batch = 4;
  Eigen::MatrixXf z(8, batch), wi(3, batch), wo(3, batch);
  for (int j = 0; j < batch; ++j) {
    z.col(j) = random_code(rng);
    wi.col(j) = upper(rng).cast<float>();
    wo.col(j) = upper(rng).cast<float>();
  }
  Eigen::MatrixXf g(3, batch);
  for (Eigen::Index i = 0; i < g.size(); ++i) g.data()[i] = float(2 * rng.uniform() - 1);

  auto loss = [&](const Eigen::MatrixXf& zz, const Eigen::MatrixXf& oo, const NeuralMaterial& mm) {
    DecodeTape t;
    return double(decode_batch(mm, zz, wi, oo, t).cwiseProduct(g).sum());
  };

  DecodeTape tape;
  decode_batch(m, z, wi, wo, tape);
  NeuralGradients grads(m);
  grads.set_zero();
  Eigen::MatrixXf d_wo;
  const Eigen::MatrixXf d_z = decode_backward(m, tape, g, &grads, &d_wo);

  // Central differences in float; h balances roundoff against leaky-ReLU kinks.
  const float h = 1e-3f;
  auto check = [&](double analytic, double fd, const char* what) {
    EXPECT_NEAR(analytic, fd, 2e-3 + 1e-2 * std::abs(fd)) << what;
  };
  for (int j = 0; j < batch; ++j) {
    for (int c = 0; c < 8; ++c) {
      Eigen::MatrixXf zp = z, zm = z;
      zp(c, j) += h;
      zm(c, j) -= h;
      check(d_z(c, j), (loss(zp, wo, m) - loss(zm, wo, m)) / (2 * h), "dz");
    }
    for (int c = 0; c < 3; ++c) {
      Eigen::MatrixXf op = wo, om = wo;
      op(c, j) += h;
      om(c, j) -= h;
      check(d_wo(c, j), (loss(z, op, m) - loss(z, om, m)) / (2 * h), "dwo");
    }
  }
  const int last = m.brdf_decoder.num_layers() - 1;
  for (int r = 0; r < 3; ++r) {
    NeuralMaterial mp = m, mm = m;
    mp.brdf_decoder.bias(last)[r] += h;
    mm.brdf_decoder.bias(last)[r] -= h;
    check(grads.brdf.bias[last][r], (loss(z, wo, mp) - loss(z, wo, mm)) / (2 * h), "decoder bias");
  }
  if (cfg.learned_frames) {
    for (int r = 0; r < kFrameOutputs; r += 3) {
      NeuralMaterial mp = m, mm = m;
      mp.frame_layer.weight(0)(r, 1) += h;
      mm.frame_layer.weight(0)(r, 1) -= h;
      check(grads.frame.weight[0](r, 1), (loss(z, wo, mp) - loss(z, wo, mm)) / (2 * h), "frame weight");
    }
  }
}

INSTANTIATE_TEST_SUITE_P(FramesOnOff, DecodeBackwardTest, ::testing::Bool());

TEST(NeuralEval, ZeroDecoderOutputGivesZeroBrdf) {
  auto m = small_material(11);
  const int last = m.brdf_decoder.num_layers() - 1;
  m.brdf_decoder.weight(last).setZero();
  m.brdf_decoder.bias(last).setZero();
  Rng rng(12);
  const NeuralEval e = m.eval_code(random_code(rng), upper(rng), upper(rng));
  EXPECT_TRUE((e.brdf == 0.0).all());
  EXPECT_FLOAT_EQ(brdf_output(0.0f), 0.0f);
  EXPECT_FLOAT_EQ(brdf_output(-3.0f), 0.0f);
  EXPECT_NEAR(brdf_output(std::log(1.5f)), 0.5f, 1e-6f);
}

TEST(NeuralEval, BelowHorizonIsZero) {
  const auto m = small_material(13);
  Rng rng(14);
  const LatentCode z = random_code(rng);
  EXPECT_TRUE((m.eval_code(z, {0, 0.6, -0.8}, {0, 0, 1}).brdf == 0.0).all());
  EXPECT_TRUE((m.eval_code(z, {0, 0, 1}, {0.6, 0, -0.8}).brdf == 0.0).all());
}

TEST(NeuralEval, DeterministicAndNonNegative) {
  auto m = small_material(15, true);
  Rng rng(16);
  for (int l = 0; l < m.latent.num_levels(); ++l)
    for (Eigen::Index i = 0; i < m.latent.level(l).size(); ++i) m.latent.level(l).data()[i] = float(rng.normal());
  for (int i = 0; i < 200; ++i) {
    const LatentQuery q{{rng.uniform(), rng.uniform()}, 2.5 * rng.uniform()};
    const Vec3d wi = upper(rng);
    const Vec3d wo = upper(rng);
    const double u = rng.uniform();
    const NeuralEval a = m.eval(q, wi, wo, u);
    const NeuralEval b = m.eval(q, wi, wo, u);
    EXPECT_TRUE((a.brdf == b.brdf).all());
    EXPECT_TRUE((a.albedo == b.albedo).all());
    EXPECT_TRUE(a.brdf.allFinite());
    EXPECT_GE(a.brdf.minCoeff(), 0.0);
    EXPECT_GE(a.albedo.minCoeff(), 0.0);
  }
}

TEST(QuadraticActivations, PinnedValues) {
  EXPECT_DOUBLE_EQ(quadratic_tanh(0.0), 0.0);
  EXPECT_DOUBLE_EQ(quadratic_tanh(1.0), 0.6);
  EXPECT_DOUBLE_EQ(quadratic_tanh(-2.0), -0.8);
  EXPECT_NEAR(quadratic_tanh(1e6), 1.0, 1e-5);
  EXPECT_DOUBLE_EQ(quadratic_sinh(0.0), 0.0);
  EXPECT_DOUBLE_EQ(quadratic_sinh(3.0), 7.5);
  EXPECT_DOUBLE_EQ(quadratic_sinh(-3.0), -7.5);
  double prev = -1.0;
  for (double x = -20; x <= 20; x += 0.01) {
    const double q = quadratic_tanh(x);
    EXPECT_GE(q, prev);
    prev = q;
  }
}

TEST(ProxyFromRaw, ZeroRawGivesCenteredParameters) {
  const Eigen::VectorXd raw = Eigen::VectorXd::Zero(kProxyOutputs);
  const ProxyParamsd p = proxy_from_raw(raw, false);
  EXPECT_DOUBLE_EQ(p.w_d, 0.5);
  EXPECT_DOUBLE_EQ(p.w_s, 0.5);
  EXPECT_DOUBLE_EQ(p.alpha_x, 0.5);
  EXPECT_DOUBLE_EQ(p.alpha_y, 0.5);
  EXPECT_DOUBLE_EQ(p.rho, 0.0);
  EXPECT_EQ(p.mu_d, Vec2d::Zero());
  EXPECT_EQ(p.mu_s, Vec2d::Zero());
}

TEST(ProxyFromRaw, IsotropicLayout) {
  Eigen::VectorXd raw(kIsotropicProxyOutputs);
  raw << std::log(3.0), 1.0;
  const ProxyParamsd p = proxy_from_raw(raw, true);
  EXPECT_NEAR(p.w_d, 0.75, 1e-12);
  EXPECT_NEAR(p.w_s, 0.25, 1e-12);
  EXPECT_DOUBLE_EQ(p.alpha_x, 0.8);
  EXPECT_DOUBLE_EQ(p.alpha_y, 0.8);
  EXPECT_EQ(p.rho, 0.0);
}

TEST(InferProxy, RangesHoldForArbitraryWeights) {
  Rng rng(17);
  int checked = 0;
  for (int trial = 0; trial < 10; ++trial) {
    auto m = small_material(100 + trial);
    const double scale = 1.0 + 10.0 * trial;
    for (int l = 0; l < m.sampler_decoder.num_layers(); ++l) m.sampler_decoder.weight(l) *= float(scale);
    for (int i = 0; i < 1000; ++i) {
      const ProxyParamsd p = m.infer_proxy(random_code(rng, 3.0), upper(rng));
      EXPECT_GE(p.alpha_x, 0.0);
      EXPECT_LE(p.alpha_x, 1.0);
      EXPECT_GE(p.alpha_y, 0.0);
      EXPECT_LE(p.alpha_y, 1.0);
      EXPECT_GE(p.rho, -1.0);
      EXPECT_LE(p.rho, 1.0);
      EXPECT_GE(p.w_d, 0.0);
      EXPECT_GE(p.w_s, 0.0);
      EXPECT_NEAR(p.w_d + p.w_s, 1.0, 1e-6);
      EXPECT_TRUE(std::isfinite(p.mu_d.norm()) && std::isfinite(p.mu_s.norm()));
      ++checked;
    }
  }
  EXPECT_EQ(checked, 10000);
}

TEST(NeuralRuntime, Fp32MatchesMaterialEval) {
  auto m = small_material(18);
  Rng rng(19);
  for (int l = 0; l < m.latent.num_levels(); ++l)
    for (Eigen::Index i = 0; i < m.latent.level(l).size(); ++i) m.latent.level(l).data()[i] = float(rng.normal());
  const NeuralRuntime rt(m, Precision::kFp32);
  for (int i = 0; i < 100; ++i) {
    const LatentQuery q{{rng.uniform(), rng.uniform()}, 1.0};
    const Vec3d wi = upper(rng);
    const Vec3d wo = upper(rng);
    const auto hit = rt.prepare(q, 0.5, wi);
    const Spectrum a = rt.eval(hit, wo);
    const Spectrum b = m.eval(q, wi, wo, 0.5).brdf;
    EXPECT_LT((a - b).cwiseAbs().maxCoeff(), 1e-5 * std::max(1.0, b.maxCoeff()));
    const ProxyParamsd p = m.infer_proxy(m.latent.bilinear(1, q.uv), wi);
    EXPECT_NEAR(hit.proxy.w_d, p.w_d, 1e-5);
    EXPECT_NEAR(hit.proxy.alpha_x, p.alpha_x, 1e-5);
  }
}

TEST(NeuralRuntime, Fp16StaysCloseToFp32) {
  auto m = small_material(20);
  Rng rng(21);
  for (int l = 0; l < m.latent.num_levels(); ++l)
    for (Eigen::Index i = 0; i < m.latent.level(l).size(); ++i) m.latent.level(l).data()[i] = float(rng.normal());
  const NeuralRuntime full(m, Precision::kFp32);
  const NeuralRuntime half(m, Precision::kFp16);
  double err = 0.0;
  const int n = 500;
  for (int i = 0; i < n; ++i) {
    const LatentQuery q{{rng.uniform(), rng.uniform()}, 0.0};
    const Vec3d wi = upper(rng);
    const Vec3d wo = upper(rng);
    const Spectrum a = full.eval(full.prepare(q, 0.0, wi), wo);
    const Spectrum b = half.eval(half.prepare(q, 0.0, wi), wo);
    err += (a - b).cwiseAbs().maxCoeff();
  }
  EXPECT_LT(err / n, 1e-2);
}

}  // namespace
}  // namespace neumat
