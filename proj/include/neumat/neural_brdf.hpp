// Copyright 2026 The neumat Authors.
// SPDX-License-Identifier: Apache-2.0

// Neural material: latent pyramid, learned shading frames, BRDF decoder with an
// optional albedo head, and the sampler decoder that predicts proxy parameters.

#pragma once

#include <Eigen/Dense>

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "neumat/geom.hpp"
#include "neumat/latent.hpp"
#include "neumat/mlp.hpp"
#include "neumat/proxy_sampler.hpp"
#include "neumat/quantized_mlp.hpp"

namespace neumat {

inline constexpr int kNumFrames = 2;
inline constexpr int kFrameOutputs = 6 * kNumFrames;
inline constexpr int kProxyOutputs = 9;
inline constexpr int kIsotropicProxyOutputs = 2;

/// Transformed-direction rows fed to the decoder per direction.
inline constexpr int kFrameRows = 3 * kNumFrames;
using FrameMatrix = Eigen::Matrix<float, kFrameRows, 3>;

// Raw sampler outputs, in order.
enum ProxyRaw : int {
  kRawDiffuseLogit = 0,
  kRawMuDx = 1,
  kRawMuDy = 2,
  kRawSpecularLogit = 3,
  kRawAlphaX = 4,
  kRawAlphaY = 5,
  kRawRho = 6,
  kRawMuSx = 7,
  kRawMuSy = 8,
};

/// Quadratic tanh surrogate x (1 + |x|/2) / (1 + |x| + x^2/2), clamped to [-1, 1].
template <typename Scalar>
Scalar quadratic_tanh(const Scalar& x) {
  const Scalar a = x < Scalar(0) ? Scalar(-x) : x;
  const Scalar q = x * (Scalar(1) + a * Scalar(0.5)) / (Scalar(1) + a + x * x * Scalar(0.5));
  if (q > Scalar(1)) return Scalar(1);
  if (q < Scalar(-1)) return Scalar(-1);
  return q;
}

/// Quadratic sinh surrogate x (1 + x^2/6).
template <typename Scalar>
Scalar quadratic_sinh(const Scalar& x) {
  return x * (Scalar(1) + x * x / Scalar(6));
}

/// Maps raw sampler outputs to proxy parameters. The full sampler reads all nine
/// entries; the isotropic ablation reads (diffuse logit, roughness) and fixes
/// mu = 0, rho = 0, alpha_x = alpha_y.
template <typename Vec>
ProxyParams<typename Vec::Scalar> proxy_from_raw(const Vec& raw, bool isotropic) {
  using Scalar = typename Vec::Scalar;
  using std::exp;
  ProxyParams<Scalar> p;
  if (isotropic) {
    p.w_d = Scalar(1) / (Scalar(1) + exp(Scalar(-raw[0])));
    p.w_s = Scalar(1) - p.w_d;
    p.alpha_x = (quadratic_tanh(Scalar(raw[1])) + Scalar(1)) * Scalar(0.5);
    p.alpha_y = p.alpha_x;
    p.rho = Scalar(0);
    p.mu_d = Vec2<Scalar>(Scalar(0), Scalar(0));
    p.mu_s = Vec2<Scalar>(Scalar(0), Scalar(0));
    return p;
  }
  p.w_d = Scalar(1) / (Scalar(1) + exp(Scalar(raw[kRawSpecularLogit] - raw[kRawDiffuseLogit])));
  p.w_s = Scalar(1) - p.w_d;
  p.mu_d = Vec2<Scalar>(quadratic_sinh(Scalar(raw[kRawMuDx])), quadratic_sinh(Scalar(raw[kRawMuDy])));
  p.alpha_x = (quadratic_tanh(Scalar(raw[kRawAlphaX])) + Scalar(1)) * Scalar(0.5);
  p.alpha_y = (quadratic_tanh(Scalar(raw[kRawAlphaY])) + Scalar(1)) * Scalar(0.5);
  p.rho = quadratic_tanh(Scalar(raw[kRawRho]));
  p.mu_s = Vec2<Scalar>(quadratic_sinh(Scalar(raw[kRawMuSx])), quadratic_sinh(Scalar(raw[kRawMuSy])));
  return p;
}

/// N learned frames and the stacked matrix T (rows t_i, b_i, n_i per frame).
template <typename Scalar>
struct FrameSet {
  std::array<Frame<Scalar>, kNumFrames> frames;
  Eigen::Matrix<Scalar, kFrameRows, 3> T;
  std::array<bool, kNumFrames> fallback{};
};

/// Tangent orthogonal to n from the coordinate axis least aligned with it.
template <typename Scalar>
Vec3<Scalar> fallback_tangent(const Vec3<Scalar>& n) {
  using std::abs;
  Vec3<Scalar> e = Vec3<Scalar>::Zero();
  int axis = 0;
  if (abs(n[1]) < abs(n[axis])) axis = 1;
  if (abs(n[2]) < abs(n[axis])) axis = 2;
  e[axis] = Scalar(1);
  return normalized<Scalar>(n.cross(e));
}

/// Splits 12 raw outputs into (normal, tangent) pairs, normalizes the normals and
/// builds each frame with build_frame.
template <typename Scalar>
FrameSet<Scalar> extract_frames(const Eigen::Matrix<Scalar, kFrameOutputs, 1>& raw) {
  using std::sqrt;
  FrameSet<Scalar> fs;
  for (int i = 0; i < kNumFrames; ++i) {
    Vec3<Scalar> n = raw.template segment<3>(6 * i);
    const Vec3<Scalar> t = raw.template segment<3>(6 * i + 3);
    const Scalar len = sqrt(n.squaredNorm());
    n = len > Scalar(0) ? Vec3<Scalar>(n / len) : Vec3<Scalar>(Scalar(0), Scalar(0), Scalar(1));
    try {
      fs.frames[i] = build_frame<Scalar>(n, t);
    } catch (const DegenerateFrameError&) {
      fs.frames[i] = build_frame<Scalar>(n, fallback_tangent<Scalar>(n));
      fs.fallback[i] = true;
    }
    fs.T.row(3 * i) = fs.frames[i].t.transpose();
    fs.T.row(3 * i + 1) = fs.frames[i].b.transpose();
    fs.T.row(3 * i + 2) = fs.frames[i].n.transpose();
  }
  return fs;
}

/// Adjoint of extract_frames: d(loss)/d(raw) given d(loss)/dT. Degenerate pairs
/// propagate only through the normal.
template <typename Scalar>
Eigen::Matrix<Scalar, kFrameOutputs, 1> extract_frames_backward(
    const Eigen::Matrix<Scalar, kFrameOutputs, 1>& raw, const FrameSet<Scalar>& fs,
    const Eigen::Matrix<Scalar, kFrameRows, 3>& dT) {
  using std::sqrt;
  Eigen::Matrix<Scalar, kFrameOutputs, 1> out = Eigen::Matrix<Scalar, kFrameOutputs, 1>::Zero();
  for (int i = 0; i < kNumFrames; ++i) {
    const Vec3<Scalar> n_raw = raw.template segment<3>(6 * i);
    const Vec3<Scalar> t_raw = raw.template segment<3>(6 * i + 3);
    const Frame<Scalar>& f = fs.frames[i];
    const Vec3<Scalar> g_t = dT.row(3 * i).transpose();
    const Vec3<Scalar> g_b = dT.row(3 * i + 1).transpose();
    Vec3<Scalar> g_n = dT.row(3 * i + 2).transpose();
    const Scalar n_len = sqrt(n_raw.squaredNorm());
    if (!(n_len > Scalar(0))) continue;
    Vec3<Scalar> d_t_raw = Vec3<Scalar>::Zero();
    if (!fs.fallback[i]) {
      // b = c / |c| with c = n_hat x t_raw.
      const Vec3<Scalar> c = f.n.cross(t_raw);
      const Scalar c_len = sqrt(c.squaredNorm());
      const Vec3<Scalar> g_c = (g_b - f.b * f.b.dot(g_b)) / c_len;
      g_n += t_raw.cross(g_c);
      d_t_raw += g_c.cross(f.n);
      const Scalar t_len = sqrt(t_raw.squaredNorm());
      d_t_raw += (g_t - f.t * f.t.dot(g_t)) / t_len;
    }
    const Vec3<Scalar> d_n_raw = (g_n - f.n * f.n.dot(g_n)) / n_len;
    out.template segment<3>(6 * i) = d_n_raw;
    out.template segment<3>(6 * i + 3) = d_t_raw;
  }
  return out;
}

enum class SamplerKind : std::uint8_t { kFull, kIsotropic };

struct NeuralConfig {
  std::vector<int> brdf_hidden{32, 32};
  std::vector<int> sampler_hidden{32, 32, 32};
  std::vector<int> encoder_hidden{32, 32, 32};
  /// Learned shading frames; false selects the vanilla decoder that receives raw
  /// directions through an extra 12-neuron layer.
  bool learned_frames = true;
  bool albedo_head = false;
  SamplerKind sampler = SamplerKind::kFull;
  std::uint64_t seed = 1;
};

/// Sampler decoder [z, wi] -> raw proxy outputs. The output layer starts small so the
/// initial proxy is a centered, even diffuse/specular mixture; large random offsets
/// push the specular lobe off the reflection peak and the mixture collapses to diffuse.
Mlp<float> make_sampler_decoder(const std::vector<int>& hidden, SamplerKind kind, std::uint64_t seed);

/// Output map of the BRDF decoder, max(exp(y) - 1, 0).
inline float brdf_output(float y) { return std::max(std::exp(y) - 1.0f, 0.0f); }

struct NeuralEval {
  Spectrum brdf = Spectrum::Zero();
  Spectrum albedo = Spectrum::Zero();
};

class NeuralMaterial {
 public:
  NeuralMaterial() = default;

  /// Fresh material with an encoder for `param_size`-dimensional inputs and a zero
  /// latent pyramid of the given level-0 resolution.
  NeuralMaterial(const NeuralConfig& config, int param_size, int width, int height, int levels = 0);

  NeuralConfig config;
  int param_size = 0;
  std::optional<Mlp<float>> encoder;  // dropped after the latents are baked
  Mlp<float> frame_layer;             // 8 -> 12, linear; unused without learned frames
  Mlp<float> brdf_decoder;
  Mlp<float> sampler_decoder;
  LatentPyramid latent;

  int decoder_input_size() const { return brdf_decoder.input_size(); }
  int brdf_outputs() const { return config.albedo_head ? 6 : 3; }
  bool isotropic_sampler() const { return config.sampler == SamplerKind::kIsotropic; }

  /// Decoder input [z, T wi, T wo] (or [z, wi, wo] without learned frames).
  Eigen::VectorXf decoder_input(const LatentCode& z, const Vec3d& wi, const Vec3d& wo) const;

  FrameSet<float> frames(const LatentCode& z) const;

  /// BRDF (and albedo) for a latent code; zero when a direction is below the horizon.
  NeuralEval eval_code(const LatentCode& z, const Vec3d& wi, const Vec3d& wo) const;

  /// Full query: Russian-roulette fetch at q, then eval_code.
  NeuralEval eval(const LatentQuery& q, const Vec3d& wi, const Vec3d& wo, double u_rr) const;

  ProxyParamsd infer_proxy(const LatentCode& z, const Vec3d& wi) const;

  bool all_finite() const;
};

/// Batched decode with everything needed for the reverse pass.
struct DecodeTape {
  Eigen::MatrixXf z;   // 8 x B
  Eigen::MatrixXf wi;  // 3 x B
  Eigen::MatrixXf wo;  // 3 x B
  Mlp<float>::Tape frame_tape;
  Eigen::MatrixXf frame_raw;  // 12 x B
  std::vector<FrameSet<float>> frames;
  Mlp<float>::Tape decoder_tape;
  Eigen::MatrixXf output;  // decoder pre-activation output
};

struct NeuralGradients {
  Mlp<float>::Gradients encoder;
  Mlp<float>::Gradients frame;
  Mlp<float>::Gradients brdf;
  Mlp<float>::Gradients sampler;

  explicit NeuralGradients(const NeuralMaterial& mat);
  void set_zero();
};

/// Decoder pre-activation outputs for B samples (one per column).
const Eigen::MatrixXf& decode_batch(const NeuralMaterial& mat, const Eigen::MatrixXf& z, const Eigen::MatrixXf& wi,
                                    const Eigen::MatrixXf& wo, DecodeTape& tape);

/// Reverse pass of decode_batch. Accumulates frame and decoder gradients when `grads`
/// is non-null, returns d(loss)/dz, and writes d(loss)/d(wo) when `d_wo` is non-null.
Eigen::MatrixXf decode_backward(const NeuralMaterial& mat, const DecodeTape& tape, const Eigen::MatrixXf& d_output,
                                NeuralGradients* grads, Eigen::MatrixXf* d_wo = nullptr);

enum class Precision : std::uint8_t { kFp32, kFp16 };

/// Render-time view of a neural material. kFp32 evaluates the master weights layer
/// by layer; kFp16 uses the packed fused networks and FP16-rounded latents.
class NeuralRuntime {
 public:
  NeuralRuntime(const NeuralMaterial& mat, Precision precision);

  /// Per-hit state: latent, frames and proxy parameters for the view direction wi.
  struct Hit {
    LatentCode z;
    FrameMatrix T;
    ProxyParamsd proxy;
    Vec3d wi;
    int level = 0;
  };

  Hit prepare(const LatentQuery& q, double u_rr, const Vec3d& wi) const;
  Spectrum eval(const Hit& hit, const Vec3d& wo) const;
  Spectrum albedo(const Hit& hit, const Vec3d& wo) const;

  Precision precision() const { return precision_; }
  const LatentPyramid& latent() const { return latent_; }
  bool albedo_head() const { return albedo_head_; }
  int quantization_clamps() const;

 private:
  void decode(const Hit& hit, const Vec3d& wo, float* out) const;

  Precision precision_;
  bool learned_frames_;
  bool albedo_head_;
  bool isotropic_;
  Mlp<float> frame_layer_;
  Mlp<float> brdf_;
  Mlp<float> sampler_;
  QuantizedMlp q_frame_;
  QuantizedMlp q_brdf_;
  QuantizedMlp q_sampler_;
  LatentPyramid latent_;
};

}  // namespace neumat
