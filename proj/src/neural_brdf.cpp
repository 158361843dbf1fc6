// Copyright 2026 The neumat Authors.
// SPDX-License-Identifier: Apache-2.0

#include "neumat/neural_brdf.hpp"

#include <algorithm>
#include <cmath>

namespace neumat {

namespace {

std::vector<int> layer_sizes(int in, const std::vector<int>& hidden, int out) {
  std::vector<int> s{in};
  s.insert(s.end(), hidden.begin(), hidden.end());
  s.push_back(out);
  return s;
}

Eigen::Matrix<float, kFrameOutputs, 1> frame_raw_of(const Eigen::VectorXf& v) {
  return v.head<kFrameOutputs>();
}

}  // namespace

NeuralMaterial::NeuralMaterial(const NeuralConfig& cfg, int param_size_, int width, int height, int levels)
    : config(cfg), param_size(param_size_), latent(width, height, levels) {
  if (param_size <= 0) throw DimensionError("NeuralMaterial: parameter vector must be non-empty");
  const std::uint64_t s = cfg.seed * 0x9e3779b97f4a7c15ull;
  encoder.emplace(layer_sizes(param_size, cfg.encoder_hidden, kLatentChannels), Activation::kLeakyRelu,
                  Activation::kLinear, s + 1);
  const int out = cfg.albedo_head ? 6 : 3;
  if (cfg.learned_frames) {
    frame_layer = Mlp<float>({kLatentChannels, kFrameOutputs}, Activation::kLinear, Activation::kLinear, s + 2);
    // Start close to the surface frame: n = (0,0,1), t = (1,0,0) plus a small
    // latent-dependent perturbation.
    frame_layer.weight(0) *= 0.1f;
    for (int i = 0; i < kNumFrames; ++i) {
      frame_layer.bias(0)[6 * i + 2] = 1.0f;
      frame_layer.bias(0)[6 * i + 3] = 1.0f;
    }
    brdf_decoder = Mlp<float>(layer_sizes(kLatentChannels + 2 * kFrameRows, cfg.brdf_hidden, out),
                              Activation::kLeakyRelu, Activation::kLinear, s + 3);
  } else {
    std::vector<int> hidden{kFrameOutputs};
    hidden.insert(hidden.end(), cfg.brdf_hidden.begin(), cfg.brdf_hidden.end());
    brdf_decoder = Mlp<float>(layer_sizes(kLatentChannels + 6, hidden, out), Activation::kLeakyRelu,
                              Activation::kLinear, s + 3);
  }
  sampler_decoder = make_sampler_decoder(cfg.sampler_hidden, cfg.sampler, s + 4);
}

Mlp<float> make_sampler_decoder(const std::vector<int>& hidden, SamplerKind kind, std::uint64_t seed) {
  const int out = kind == SamplerKind::kIsotropic ? kIsotropicProxyOutputs : kProxyOutputs;
  Mlp<float> net(layer_sizes(kLatentChannels + 3, hidden, out), Activation::kLeakyRelu, Activation::kLinear, seed);
  const int last = net.num_layers() - 1;
  net.weight(last) *= 0.01f;
  net.bias(last).setZero();
  return net;
}

FrameSet<float> NeuralMaterial::frames(const LatentCode& z) const {
  return extract_frames<float>(frame_raw_of(frame_layer.forward(z)));
}

Eigen::VectorXf NeuralMaterial::decoder_input(const LatentCode& z, const Vec3d& wi, const Vec3d& wo) const {
  Eigen::VectorXf x(decoder_input_size());
  x.head<kLatentChannels>() = z;
  const Vec3f fi = wi.cast<float>();
  const Vec3f fo = wo.cast<float>();
  if (config.learned_frames) {
    const FrameSet<float> fs = frames(z);
    x.segment<kFrameRows>(kLatentChannels) = fs.T * fi;
    x.segment<kFrameRows>(kLatentChannels + kFrameRows) = fs.T * fo;
  } else {
    x.segment<3>(kLatentChannels) = fi;
    x.segment<3>(kLatentChannels + 3) = fo;
  }
  return x;
}

NeuralEval NeuralMaterial::eval_code(const LatentCode& z, const Vec3d& wi, const Vec3d& wo) const {
  NeuralEval e;
  if (wi.z() <= 0.0 || wo.z() <= 0.0) return e;
  const Eigen::VectorXf y = brdf_decoder.forward(decoder_input(z, wi, wo));
  for (int c = 0; c < 3; ++c) e.brdf[c] = brdf_output(y[c]);
  if (config.albedo_head)
    for (int c = 0; c < 3; ++c) e.albedo[c] = std::max(y[3 + c], 0.0f);
  return e;
}

NeuralEval NeuralMaterial::eval(const LatentQuery& q, const Vec3d& wi, const Vec3d& wo, double u_rr) const {
  return eval_code(latent.fetch(q, u_rr).z, wi, wo);
}

ProxyParamsd NeuralMaterial::infer_proxy(const LatentCode& z, const Vec3d& wi) const {
  Eigen::VectorXf x(kLatentChannels + 3);
  x << z, wi.cast<float>();
  const Eigen::VectorXd raw = sampler_decoder.forward(x).cast<double>();
  return proxy_from_raw(raw, isotropic_sampler());
}

bool NeuralMaterial::all_finite() const {
  return (!encoder || encoder->all_finite()) && frame_layer.all_finite() && brdf_decoder.all_finite() &&
         sampler_decoder.all_finite() && latent.all_finite();
}

NeuralGradients::NeuralGradients(const NeuralMaterial& mat)
    : encoder(mat.encoder ? mat.encoder->zero_gradients() : Mlp<float>::Gradients{}),
      frame(mat.frame_layer.zero_gradients()),
      brdf(mat.brdf_decoder.zero_gradients()),
      sampler(mat.sampler_decoder.zero_gradients()) {}

void NeuralGradients::set_zero() {
  encoder.set_zero();
  frame.set_zero();
  brdf.set_zero();
  sampler.set_zero();
}

const Eigen::MatrixXf& decode_batch(const NeuralMaterial& mat, const Eigen::MatrixXf& z, const Eigen::MatrixXf& wi,
                                    const Eigen::MatrixXf& wo, DecodeTape& tape) {
  const Eigen::Index batch = z.cols();
  tape.z = z;
  tape.wi = wi;
  tape.wo = wo;
  Eigen::MatrixXf x(mat.decoder_input_size(), batch);
  x.topRows<kLatentChannels>() = z;
  if (mat.config.learned_frames) {
    tape.frame_raw = mat.frame_layer.forward_batch(z, &tape.frame_tape);
    tape.frames.resize(std::size_t(batch));
    for (Eigen::Index j = 0; j < batch; ++j) {
      const Eigen::Matrix<float, kFrameOutputs, 1> raw = tape.frame_raw.col(j);
      tape.frames[j] = extract_frames<float>(raw);
      x.block<kFrameRows, 1>(kLatentChannels, j) = tape.frames[j].T * wi.col(j);
      x.block<kFrameRows, 1>(kLatentChannels + kFrameRows, j) = tape.frames[j].T * wo.col(j);
    }
  } else {
    x.middleRows<3>(kLatentChannels) = wi;
    x.middleRows<3>(kLatentChannels + 3) = wo;
  }
  tape.output = mat.brdf_decoder.forward_batch(x, &tape.decoder_tape);
  return tape.output;
}

Eigen::MatrixXf decode_backward(const NeuralMaterial& mat, const DecodeTape& tape, const Eigen::MatrixXf& d_output,
                                NeuralGradients* grads, Eigen::MatrixXf* d_wo) {
  const Eigen::MatrixXf dx =
      mat.brdf_decoder.backward_batch(tape.decoder_tape, d_output, grads ? &grads->brdf : nullptr);
  const Eigen::Index batch = dx.cols();
  Eigen::MatrixXf dz = dx.topRows<kLatentChannels>();
  if (d_wo) d_wo->resize(3, batch);
  if (mat.config.learned_frames) {
    Eigen::MatrixXf d_raw(kFrameOutputs, batch);
    for (Eigen::Index j = 0; j < batch; ++j) {
      const Eigen::Matrix<float, kFrameRows, 1> gi = dx.block<kFrameRows, 1>(kLatentChannels, j);
      const Eigen::Matrix<float, kFrameRows, 1> go = dx.block<kFrameRows, 1>(kLatentChannels + kFrameRows, j);
      const Eigen::Matrix<float, kFrameRows, 3> dT =
          gi * tape.wi.col(j).transpose() + go * tape.wo.col(j).transpose();
      const Eigen::Matrix<float, kFrameOutputs, 1> raw = tape.frame_raw.col(j);
      d_raw.col(j) = extract_frames_backward<float>(raw, tape.frames[j], dT);
      if (d_wo) d_wo->col(j) = tape.frames[j].T.transpose() * go;
    }
    dz += mat.frame_layer.backward_batch(tape.frame_tape, d_raw, grads ? &grads->frame : nullptr);
  } else if (d_wo) {
    *d_wo = dx.middleRows<3>(kLatentChannels + 3);
  }
  return dz;
}

// --- NeuralRuntime ------------------------------------------------------------------

NeuralRuntime::NeuralRuntime(const NeuralMaterial& mat, Precision precision)
    : precision_(precision),
      learned_frames_(mat.config.learned_frames),
      albedo_head_(mat.config.albedo_head),
      isotropic_(mat.isotropic_sampler()),
      frame_layer_(mat.frame_layer),
      brdf_(mat.brdf_decoder),
      sampler_(mat.sampler_decoder) {
  if (precision == Precision::kFp16) {
    if (learned_frames_) q_frame_ = quantize(frame_layer_);
    q_brdf_ = quantize(brdf_);
    q_sampler_ = quantize(sampler_);
    latent_ = mat.latent.rounded_to_half();
  } else {
    latent_ = mat.latent;
  }
}

int NeuralRuntime::quantization_clamps() const {
  return q_frame_.clamp_count() + q_brdf_.clamp_count() + q_sampler_.clamp_count();
}

NeuralRuntime::Hit NeuralRuntime::prepare(const LatentQuery& q, double u_rr, const Vec3d& wi) const {
  Hit hit;
  const auto f = latent_.fetch(q, u_rr);
  hit.z = f.z;
  hit.level = f.level;
  hit.wi = wi;
  if (learned_frames_) {
    Eigen::Matrix<float, kFrameOutputs, 1> raw;
    if (precision_ == Precision::kFp16)
      q_frame_.fused_forward({hit.z.data(), kLatentChannels}, {raw.data(), kFrameOutputs});
    else
      raw = frame_layer_.forward(hit.z);
    hit.T = extract_frames<float>(raw).T;
  } else {
    hit.T.setZero();
  }
  std::array<float, kLatentChannels + 3> x{};
  std::copy(hit.z.data(), hit.z.data() + kLatentChannels, x.begin());
  for (int k = 0; k < 3; ++k) x[kLatentChannels + k] = float(wi[k]);
  Eigen::Matrix<double, kProxyOutputs, 1> raw = Eigen::Matrix<double, kProxyOutputs, 1>::Zero();
  const int n = sampler_.output_size();
  if (precision_ == Precision::kFp16) {
    std::array<float, kProxyOutputs> out{};
    q_sampler_.fused_forward(x, {out.data(), std::size_t(n)});
    for (int k = 0; k < n; ++k) raw[k] = out[k];
  } else {
    const Eigen::VectorXf out = sampler_.forward(Eigen::Map<const Eigen::VectorXf>(x.data(), x.size()));
    for (int k = 0; k < n; ++k) raw[k] = out[k];
  }
  hit.proxy = proxy_from_raw(raw, isotropic_);
  return hit;
}

void NeuralRuntime::decode(const Hit& hit, const Vec3d& wo, float* out) const {
  std::array<float, kLatentChannels + 2 * kFrameRows> x{};
  int n_in = 0;
  for (int k = 0; k < kLatentChannels; ++k) x[n_in++] = hit.z[k];
  const Vec3f fi = hit.wi.cast<float>();
  const Vec3f fo = wo.cast<float>();
  if (learned_frames_) {
    const Eigen::Matrix<float, kFrameRows, 1> ti = hit.T * fi;
    const Eigen::Matrix<float, kFrameRows, 1> to = hit.T * fo;
    for (int k = 0; k < kFrameRows; ++k) x[n_in++] = ti[k];
    for (int k = 0; k < kFrameRows; ++k) x[n_in++] = to[k];
  } else {
    for (int k = 0; k < 3; ++k) x[n_in++] = fi[k];
    for (int k = 0; k < 3; ++k) x[n_in++] = fo[k];
  }
  const int n_out = brdf_.output_size();
  if (precision_ == Precision::kFp16) {
    q_brdf_.fused_forward({x.data(), std::size_t(n_in)}, {out, std::size_t(n_out)});
  } else {
    const Eigen::VectorXf y = brdf_.forward(Eigen::Map<const Eigen::VectorXf>(x.data(), n_in));
    std::copy(y.data(), y.data() + n_out, out);
  }
}

Spectrum NeuralRuntime::eval(const Hit& hit, const Vec3d& wo) const {
  if (hit.wi.z() <= 0.0 || wo.z() <= 0.0) return Spectrum::Zero();
  std::array<float, 6> y{};
  decode(hit, wo, y.data());
  return {brdf_output(y[0]), brdf_output(y[1]), brdf_output(y[2])};
}

Spectrum NeuralRuntime::albedo(const Hit& hit, const Vec3d& wo) const {
  if (!albedo_head_ || hit.wi.z() <= 0.0 || wo.z() <= 0.0) return Spectrum::Zero();
  std::array<float, 6> y{};
  decode(hit, wo, y.data());
  return {std::max(y[3], 0.0f), std::max(y[4], 0.0f), std::max(y[5], 0.0f)};
}

}  // namespace neumat
