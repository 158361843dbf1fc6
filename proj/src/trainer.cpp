// Copyright 2026 The neumat Authors.
// SPDX-License-Identifier: Apache-2.0

#include "neumat/trainer.hpp"

#include <unsupported/Eigen/AutoDiff>

#include <algorithm>
#include <cmath>
#include <limits>

namespace neumat {

namespace {

constexpr std::array<double, 3> kLumWeights{0.2126, 0.7152, 0.0722};

Eigen::MatrixXf columns_of(const std::vector<Vec3d>& v) {
  Eigen::MatrixXf m(3, Eigen::Index(v.size()));
  for (std::size_t j = 0; j < v.size(); ++j) m.col(Eigen::Index(j)) = v[j].cast<float>();
  return m;
}

/// Latent codes for a batch: encoder output (phase 1) or level-l bilinear fetches.
Eigen::MatrixXf latent_codes(const NeuralMaterial& mat, const ParamTextures& tex, const std::vector<Vec2d>& uv,
                             const std::vector<int>& level, const std::vector<double>& sigma,
                             Mlp<float>::Tape* encoder_tape) {
  const Eigen::Index b = Eigen::Index(uv.size());
  if (mat.encoder) {
    Eigen::MatrixXf k(tex.param_size(), b);
    for (Eigen::Index j = 0; j < b; ++j) k.col(j) = tex.fetch_params({uv[j], sigma[j]});
    return mat.encoder->forward_batch(k, encoder_tape);
  }
  Eigen::MatrixXf z(kLatentChannels, b);
  for (Eigen::Index j = 0; j < b; ++j) z.col(j) = mat.latent.bilinear(level[j], uv[j]);
  return z;
}

}  // namespace

void TrainConfig::validate() const {
  if (iterations < 0) throw std::invalid_argument("iterations must be non-negative");
  if (batch_size <= 0) throw std::invalid_argument("batch_size must be positive");
  if (!(level_rate > 0.0)) throw std::invalid_argument("level_rate must be positive");
  if (mollify_start_deg < 0.0 || mollify_start_deg > 45.0)
    throw std::invalid_argument("mollify_start_deg must lie in [0, 45]");
  if (!(mollify_horizon > 0.0)) throw std::invalid_argument("mollify_horizon must be positive");
  if (!(phase1_fraction > 0.0 && phase1_fraction < 1.0))
    throw std::invalid_argument("phase1_fraction must lie in (0, 1)");
  if (!(lr >= 0.0) || !(latent_lr >= 0.0)) throw std::invalid_argument("learning rates must be non-negative");
  if (max_taps < 1) throw std::invalid_argument("max_taps must be at least 1");
  if (!(kl_epsilon > 0.0)) throw std::invalid_argument("kl_epsilon must be positive");
}

double mollification_angle(const TrainConfig& cfg, long iteration) {
  const double horizon = cfg.mollify_horizon * double(cfg.iterations);
  if (!(horizon > 0.0) || double(iteration) >= horizon) return 0.0;
  const double start = cfg.mollify_start_deg * kPi / 180.0;
  return start * (1.0 - double(iteration) / horizon);
}

std::vector<double> level_pmf(double rate, int levels) {
  std::vector<double> pmf(std::size_t(std::max(1, levels)), 0.0);
  if (!std::isfinite(rate)) {
    pmf[0] = 1.0;
    return pmf;
  }
  double total = 0.0;
  for (std::size_t l = 0; l < pmf.size(); ++l) total += pmf[l] = std::exp(-rate * double(l));
  for (double& p : pmf) p /= total;
  return pmf;
}

int sample_level(const std::vector<double>& pmf, Rng& rng) {
  double u = rng.uniform();
  for (std::size_t l = 0; l + 1 < pmf.size(); ++l) {
    if (u < pmf[l]) return int(l);
    u -= pmf[l];
  }
  return int(pmf.size()) - 1;
}

int tap_count(double sigma, int max_taps) {
  return std::clamp(int(std::lround(sigma * sigma)), 1, max_taps);
}

std::vector<TrainingSample> generate_batch(const ReferenceMaterial& ref, const TrainConfig& cfg, Rng& rng,
                                           long iteration, int levels, bool with_albedo, int count) {
  const ParamTextures& tex = ref.textures();
  const int n = count < 0 ? cfg.batch_size : count;
  const std::vector<double> pmf = level_pmf(cfg.level_rate, std::min(levels, tex.num_levels()));
  const double cone = mollification_angle(cfg, iteration);
  std::vector<TrainingSample> batch(static_cast<std::size_t>(n));
  for (auto& s : batch) {
    s.uv = Vec2d(rng.uniform(), rng.uniform());
    s.level = sample_level(pmf, rng);
    s.sigma = ParamTextures::sigma_for_level(s.level);
    s.k = tex.fetch_params({s.uv, s.sigma});
    std::tie(s.wi, s.wo) = sample_half_diff(rng);
    const int taps = tap_count(s.sigma, cfg.max_taps);
    auto tap_uv = [&] {
      if (s.sigma <= 0.0) return s.uv;
      return Vec2d(s.uv.x() + s.sigma * rng.normal() / tex.width(), s.uv.y() + s.sigma * rng.normal() / tex.height());
    };
    Spectrum sum = Spectrum::Zero();
    for (int t = 0; t < taps; ++t) sum += eval_mollified(ref, tex.sample_raw(tap_uv()), s.wi, s.wo, cone, 1, rng);
    s.target = sum / taps;
    if (with_albedo) s.albedo_target = estimate_albedo(ref, tex.sample_raw(tap_uv()), s.wo, rng, 1);
  }
  return batch;
}

double loss_brdf(const Spectrum& pred, const Spectrum& target, Spectrum* grad) {
  double loss = 0.0;
  for (int c = 0; c < 3; ++c) {
    const double d = std::log1p(pred[c]) - std::log1p(target[c]);
    loss += std::abs(d);
    if (grad) (*grad)[c] = (d > 0 ? 1.0 : d < 0 ? -1.0 : 0.0) / (3.0 * (1.0 + pred[c]));
  }
  return loss / 3.0;
}

double loss_albedo(const Spectrum& pred, const Spectrum& target, Spectrum* grad) {
  const Spectrum d = pred - target;
  if (grad) *grad = 2.0 * d / 3.0;
  return d.square().sum() / 3.0;
}

LobeDirections sampler_directions(const Eigen::VectorXd& raw, bool isotropic, const Vec3d& wi, const Vec2d& u) {
  const ProxyParamsd p = proxy_from_raw(raw, isotropic);
  return {proxy_sample_diffuse(p, u), proxy_sample_specular(p, wi, u)};
}

SamplerLoss sampler_loss_from_targets(const Eigen::VectorXd& raw, bool isotropic, const Vec3d& wi, const Vec2d& u,
                                      const KlTarget& diffuse, const KlTarget& specular, double eps) {
  using Deriv = Eigen::Matrix<double, kProxyOutputs, 1>;
  using AD = Eigen::AutoDiffScalar<Deriv>;
  if (raw.size() > kProxyOutputs) throw DimensionError("sampler_loss: too many raw outputs");
  Eigen::Matrix<AD, kProxyOutputs, 1> r;
  for (int k = 0; k < kProxyOutputs; ++k) r[k] = AD(k < raw.size() ? raw[k] : 0.0, kProxyOutputs, k);
  const ProxyParams<AD> p = proxy_from_raw(r, isotropic);
  const Vec3<AD> wi_ad = wi.cast<AD>();
  const Vec2<AD> u_ad = u.cast<AD>();

  auto term = [&](const Vec3<AD>& w, const KlTarget& t) {
    const AD pdf = proxy_pdf(p, wi_ad, w);
    if (!(pdf.value() > 1e-12)) return AD(0.0);
    const double g = t.value + eps;
    AD log_g(std::log(g));
    for (int k = 0; k < 3; ++k) log_g += (t.grad[k] / g) * (w[k] - w[k].value());
    using std::log;
    return AD(log(pdf) - log_g);
  };
  const AD total = p.w_d * term(proxy_sample_diffuse(p, u_ad), diffuse) +
                   p.w_s * term(proxy_sample_specular(p, wi_ad, u_ad), specular);
  SamplerLoss out;
  out.loss = total.value();
  out.raw_grad = total.derivatives().head(raw.size());
  return out;
}

SamplerLoss loss_sampler(const Eigen::VectorXd& raw, bool isotropic, const Vec3d& wi, const Vec2d& u,
                         const KlTargetFn& target, double eps) {
  const LobeDirections dirs = sampler_directions(raw, isotropic, wi, u);
  return sampler_loss_from_targets(raw, isotropic, wi, u, target(dirs.diffuse), target(dirs.specular), eps);
}

void reset_sampler(NeuralMaterial& mat, SamplerKind kind, std::uint64_t seed) {
  mat.config.sampler = kind;
  mat.sampler_decoder = make_sampler_decoder(mat.config.sampler_hidden, kind, seed);
}

namespace {

struct StepLosses {
  double brdf = 0.0;
  double albedo = 0.0;
  double kl = 0.0;
};

/// BRDF decoder batch: accumulates decoder/frame/encoder gradients and latent texel
/// gradients.
void brdf_batch(const ReferenceMaterial& ref, const NeuralMaterial& mat, const TrainConfig& cfg, Rng& rng,
                long iteration, int levels, NeuralGradients& grads, LatentPyramid& latent_grads, StepLosses& losses) {
  const auto batch = generate_batch(ref, cfg, rng, iteration, levels, mat.config.albedo_head);
  const Eigen::Index b = Eigen::Index(batch.size());
  std::vector<Vec2d> uv;
  std::vector<int> level;
  std::vector<double> sigma;
  std::vector<Vec3d> wi;
  std::vector<Vec3d> wo;
  for (const auto& s : batch) {
    uv.push_back(s.uv);
    level.push_back(s.level);
    sigma.push_back(s.sigma);
    wi.push_back(s.wi);
    wo.push_back(s.wo);
  }
  Mlp<float>::Tape enc_tape;
  const Eigen::MatrixXf z = latent_codes(mat, ref.textures(), uv, level, sigma, &enc_tape);
  DecodeTape tape;
  const Eigen::MatrixXf& y = decode_batch(mat, z, columns_of(wi), columns_of(wo), tape);
  Eigen::MatrixXf dy = Eigen::MatrixXf::Zero(y.rows(), b);
  const double inv_b = 1.0 / double(b);
  for (Eigen::Index j = 0; j < b; ++j) {
    Spectrum pred;
    for (int c = 0; c < 3; ++c) pred[c] = brdf_output(y(c, j));
    Spectrum g;
    losses.brdf += loss_brdf(pred, batch[j].target, &g) * inv_b;
    // Straight-through: d pred / dy = exp(y) also where the clamp is active.
    for (int c = 0; c < 3; ++c) dy(c, j) = float(g[c] * std::exp(double(y(c, j))) * inv_b);
    if (mat.config.albedo_head) {
      Spectrum a;
      for (int c = 0; c < 3; ++c) a[c] = std::max(y(3 + c, j), 0.0f);
      Spectrum ga;
      losses.albedo += loss_albedo(a, batch[j].albedo_target, &ga) * inv_b;
      for (int c = 0; c < 3; ++c) dy(3 + c, j) = float(ga[c] * inv_b);
    }
  }
  const Eigen::MatrixXf dz = decode_backward(mat, tape, dy, &grads);
  if (mat.encoder) {
    mat.encoder->backward_batch(enc_tape, dz, &grads.encoder);
  } else {
    for (Eigen::Index j = 0; j < b; ++j) accumulate_texel_grads(latent_grads, uv[j], level[j], dz.col(j));
  }
}

/// Sampler decoder batch with detached latents; accumulates sampler gradients only.
void sampler_batch(const ReferenceMaterial& ref, const NeuralMaterial& mat, const TrainConfig& cfg, Rng& rng,
                   int levels, NeuralGradients& grads, StepLosses& losses) {
  const ParamTextures& tex = ref.textures();
  const std::vector<double> pmf = level_pmf(cfg.level_rate, levels);
  const int b = cfg.batch_size;
  std::vector<Vec2d> uv(b);
  std::vector<int> level(b);
  std::vector<double> sigma(b);
  std::vector<Vec3d> wi(b);
  std::vector<Vec2d> u(b);
  for (int j = 0; j < b; ++j) {
    uv[j] = Vec2d(rng.uniform(), rng.uniform());
    level[j] = sample_level(pmf, rng);
    sigma[j] = ParamTextures::sigma_for_level(level[j]);
    wi[j] = sample_half_diff(rng).first;
    u[j] = Vec2d(rng.uniform(), rng.uniform());
  }
  const Eigen::MatrixXf z = latent_codes(mat, tex, uv, level, sigma, nullptr);
  Eigen::MatrixXf x(kLatentChannels + 3, b);
  x.topRows<kLatentChannels>() = z;
  x.bottomRows<3>() = columns_of(wi);
  Mlp<float>::Tape s_tape;
  const Eigen::MatrixXf raw = mat.sampler_decoder.forward_batch(x, &s_tape);

  // Current BRDF at both lobe samples, with its direction gradient.
  std::vector<Vec3d> wo2(2 * std::size_t(b));
  for (int j = 0; j < b; ++j) {
    const LobeDirections d = sampler_directions(raw.col(j).cast<double>(), mat.isotropic_sampler(), wi[j], u[j]);
    wo2[j] = d.diffuse;
    wo2[b + j] = d.specular;
  }
  Eigen::MatrixXf z2(kLatentChannels, 2 * b);
  z2 << z, z;
  Eigen::MatrixXf wi2(3, 2 * b);
  wi2 << x.bottomRows<3>(), x.bottomRows<3>();
  DecodeTape tape;
  const Eigen::MatrixXf& y = decode_batch(mat, z2, wi2, columns_of(wo2), tape);
  Eigen::MatrixXf dy = Eigen::MatrixXf::Zero(y.rows(), y.cols());
  std::vector<double> lum(2 * std::size_t(b), 0.0);
  for (Eigen::Index j = 0; j < y.cols(); ++j)
    for (int c = 0; c < 3; ++c) {
      const double e = std::exp(double(y(c, j)));
      if (e > 1.0) {
        lum[j] += kLumWeights[c] * (e - 1.0);
        dy(c, j) = float(kLumWeights[c] * e);
      }
    }
  Eigen::MatrixXf d_wo;
  decode_backward(mat, tape, dy, nullptr, &d_wo);
  auto target_at = [&](int col) {
    KlTarget t;
    const Vec3d& w = wo2[col];
    if (w.z() <= 0.0) return t;
    t.value = lum[col] * w.z();
    t.grad = w.z() * d_wo.col(col).cast<double>() + Vec3d(0, 0, lum[col]);
    return t;
  };

  Eigen::MatrixXf d_raw(raw.rows(), b);
  const double inv_b = 1.0 / double(b);
  for (int j = 0; j < b; ++j) {
    const SamplerLoss sl = sampler_loss_from_targets(raw.col(j).cast<double>(), mat.isotropic_sampler(), wi[j], u[j],
                                                     target_at(j), target_at(b + j), cfg.kl_epsilon);
    losses.kl += sl.loss * inv_b;
    d_raw.col(j) = (sl.raw_grad * inv_b).cast<float>();
  }
  mat.sampler_decoder.backward_batch(s_tape, d_raw, &grads.sampler);
}

}  // namespace

TrainResult train(const ReferenceMaterial& ref, NeuralMaterial& mat, const TrainConfig& cfg,
                  const TrainCallbacks& callbacks) {
  cfg.validate();
  TrainResult result;
  if (cfg.iterations == 0) return result;
  const ParamTextures& tex = ref.textures();
  if (mat.param_size != tex.param_size()) throw DimensionError("train: material parameter size mismatch");
  if (mat.latent.width() != tex.width() || mat.latent.height() != tex.height())
    throw DimensionError("train: latent resolution differs from the texture resolution");
  int levels = std::min(tex.num_levels(), mat.latent.num_levels());
  if (cfg.max_level >= 0) levels = std::min(levels, cfg.max_level + 1);

  Rng rng(cfg.seed, 0x747261696e);
  AdamConfig adam;
  adam.lr = cfg.lr;
  std::optional<AdamState<float>> enc_state;
  if (mat.encoder) enc_state.emplace(*mat.encoder, adam);
  AdamState<float> frame_state(mat.frame_layer, adam);
  AdamState<float> brdf_state(mat.brdf_decoder, adam);
  AdamState<float> sampler_state(mat.sampler_decoder, adam);
  LatentAdamState latent_state;
  NeuralGradients grads(mat);
  LatentPyramid latent_grads = mat.latent.zeros_like();

  const long phase1_end = mat.encoder ? std::lround(cfg.phase1_fraction * double(cfg.iterations)) : 0;
  const long window = cfg.log_window > 0 ? cfg.log_window : std::max(1L, cfg.iterations / 20);
  StepLosses window_sum;
  long window_count = 0;

  for (long it = 0; it < cfg.iterations; ++it) {
    if (mat.encoder && it >= phase1_end) {
      mat.latent = bake_from_encoder(*mat.encoder, tex);
      mat.encoder.reset();
      enc_state.reset();
      latent_grads = mat.latent.zeros_like();
      latent_state = {};
      grads = NeuralGradients(mat);
      result.baked = true;
    }
    const double lr = scheduled_lr(cfg.lr, it, cfg.iterations);
    const double latent_lr = scheduled_lr(cfg.latent_lr, it, cfg.iterations);
    grads.set_zero();
    if (!mat.encoder) latent_grads.set_zero();

    StepLosses step;
    if (cfg.train_brdf) brdf_batch(ref, mat, cfg, rng, it, levels, grads, latent_grads, step);
    if (cfg.train_sampler) sampler_batch(ref, mat, cfg, rng, levels, grads, step);
    if (!std::isfinite(step.brdf) || !std::isfinite(step.albedo) || !std::isfinite(step.kl))
      throw NumericError("non-finite loss at iteration " + std::to_string(it) + " (brdf " +
                         std::to_string(step.brdf) + ", albedo " + std::to_string(step.albedo) + ", kl " +
                         std::to_string(step.kl) + ")");

    if (cfg.train_brdf) {
      if (mat.encoder) adam_step(*mat.encoder, grads.encoder, *enc_state, lr);
      if (mat.config.learned_frames) adam_step(mat.frame_layer, grads.frame, frame_state, lr);
      adam_step(mat.brdf_decoder, grads.brdf, brdf_state, lr);
      if (!mat.encoder) adam_step(mat.latent, latent_grads, latent_state, latent_lr);
    }
    if (cfg.train_sampler) adam_step(mat.sampler_decoder, grads.sampler, sampler_state, lr);
    if (!mat.all_finite()) throw NumericError("non-finite parameters after iteration " + std::to_string(it));

    window_sum.brdf += step.brdf;
    window_sum.albedo += step.albedo;
    window_sum.kl += step.kl;
    ++window_count;
    if (window_count == window || it + 1 == cfg.iterations) {
      LossReport r;
      r.iteration = it;
      r.brdf_l1log = window_sum.brdf / double(window_count);
      r.albedo_l2 = window_sum.albedo / double(window_count);
      r.kl_sampler = window_sum.kl / double(window_count);
      result.history.push_back(r);
      if (callbacks.on_report) callbacks.on_report(r);
      window_sum = {};
      window_count = 0;
    }
    if (callbacks.checkpoint && callbacks.checkpoint_every > 0 && (it + 1) % callbacks.checkpoint_every == 0)
      callbacks.checkpoint(it + 1, mat);
    ++result.iterations;
  }
  return result;
}

double evaluate_brdf_loss(const ReferenceMaterial& ref, const NeuralMaterial& mat, const TrainConfig& cfg,
                          int count, std::uint64_t seed) {
  TrainConfig plain = cfg;
  plain.mollify_start_deg = 0.0;
  Rng rng(seed, 0x6576616c);
  int levels = std::min(ref.textures().num_levels(), mat.latent.num_levels());
  if (cfg.max_level >= 0) levels = std::min(levels, cfg.max_level + 1);
  const auto batch = generate_batch(ref, plain, rng, 0, levels, false, count);
  std::vector<Vec2d> uv;
  std::vector<int> level;
  std::vector<double> sigma;
  std::vector<Vec3d> wi;
  std::vector<Vec3d> wo;
  for (const auto& s : batch) {
    uv.push_back(s.uv);
    level.push_back(s.level);
    sigma.push_back(s.sigma);
    wi.push_back(s.wi);
    wo.push_back(s.wo);
  }
  const Eigen::MatrixXf z = latent_codes(mat, ref.textures(), uv, level, sigma, nullptr);
  DecodeTape tape;
  const Eigen::MatrixXf& y = decode_batch(mat, z, columns_of(wi), columns_of(wo), tape);
  double loss = 0.0;
  for (std::size_t j = 0; j < batch.size(); ++j) {
    Spectrum pred;
    for (int c = 0; c < 3; ++c) pred[c] = brdf_output(y(c, Eigen::Index(j)));
    loss += loss_brdf(pred, batch[j].target);
  }
  return loss / double(batch.size());
}

}  // namespace neumat
