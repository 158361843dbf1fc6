// Copyright 2026 The neumat Authors.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <Eigen/Dense>

#include <functional>
#include <stdexcept>
#include <vector>

#include "neumat/geom.hpp"
#include "neumat/neural_brdf.hpp"
#include "neumat/random.hpp"
#include "neumat/reference_material.hpp"

namespace neumat {

struct TrainConfig {
  long iterations = 20000;
  int batch_size = 4096;       // per decoder
  double level_rate = 1.0;     // P(level) ~ exp(-rate * level)
  int max_level = -1;          // highest trained level; -1 = whole chain
  double mollify_start_deg = 5.0;
  double mollify_horizon = 0.25;  // fraction of iterations over which the cone shrinks to 0
  double phase1_fraction = 0.5;
  double lr = 1e-3;
  double latent_lr = 1e-2;
  int max_taps = 64;
  double kl_epsilon = 1e-4;
  bool train_brdf = true;
  bool train_sampler = true;
  long log_window = 0;  // iterations per loss report; 0 = 5% of the run
  std::uint64_t seed = 1;

  void validate() const;
};

/// One supervised example for the BRDF decoder.
struct TrainingSample {
  Vec2d uv{0, 0};
  int level = 0;
  double sigma = 0.0;
  Vec3d wi{0, 0, 1};
  Vec3d wo{0, 0, 1};
  Eigen::VectorXf k;  // filtered parameters for the encoder
  Spectrum target = Spectrum::Zero();
  Spectrum albedo_target = Spectrum::Zero();
};

struct LossReport {
  long iteration = 0;  // last iteration of the window
  double brdf_l1log = 0.0;
  double kl_sampler = 0.0;  // unnormalized reverse KL estimate; may be negative
  double albedo_l2 = 0.0;
};

class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Cone half-angle in radians at `iteration`: linear from the start angle to zero.
double mollification_angle(const TrainConfig& cfg, long iteration);

/// Truncated, renormalized exp(-rate * l) over `levels` levels; rate = inf puts all mass
/// on level 0.
std::vector<double> level_pmf(double rate, int levels);
int sample_level(const std::vector<double>& pmf, Rng& rng);

/// Spatial taps for a Gaussian footprint: clamp(round(sigma^2), 1, max_taps).
int tap_count(double sigma, int max_taps);

/// Training examples with Gaussian-filtered, mollified targets. `levels` bounds the
/// sampled level; albedo targets are one-sample estimates when `with_albedo` is set.
std::vector<TrainingSample> generate_batch(const ReferenceMaterial& ref, const TrainConfig& cfg, Rng& rng,
                                           long iteration, int levels, bool with_albedo, int count = -1);

/// Mean over channels of |log(1+pred) - log(1+target)|; *grad gets d/dpred.
double loss_brdf(const Spectrum& pred, const Spectrum& target, Spectrum* grad = nullptr);

/// Mean over channels of (pred - target)^2; *grad gets d/dpred.
double loss_albedo(const Spectrum& pred, const Spectrum& target, Spectrum* grad = nullptr);

/// Target density of the sampler loss, g(w) = lum(f(w)) cos(theta_w), and its
/// gradient with respect to w.
struct KlTarget {
  double value = 0.0;
  Vec3d grad = Vec3d::Zero();
};
using KlTargetFn = std::function<KlTarget(const Vec3d& wo)>;

/// Directions drawn from both proxy lobes with the same (u1, u2).
struct LobeDirections {
  Vec3d diffuse;
  Vec3d specular;
};
LobeDirections sampler_directions(const Eigen::VectorXd& raw, bool isotropic, const Vec3d& wi, const Vec2d& u);

struct SamplerLoss {
  double loss = 0.0;
  Eigen::VectorXd raw_grad;  // d loss / d raw sampler outputs
};

/// Reparameterized reverse-KL estimate with the lobe choice marginalized:
///   sum_c w_c [log p(w_c) - log(g(w_c) + eps)],
/// differentiated through the sample transform and the density. g is treated as a
/// fixed function of the direction.
SamplerLoss sampler_loss_from_targets(const Eigen::VectorXd& raw, bool isotropic, const Vec3d& wi, const Vec2d& u,
                                      const KlTarget& diffuse, const KlTarget& specular, double eps = 1e-4);
SamplerLoss loss_sampler(const Eigen::VectorXd& raw, bool isotropic, const Vec3d& wi, const Vec2d& u,
                         const KlTargetFn& target, double eps = 1e-4);

struct TrainCallbacks {
  std::function<void(const LossReport&)> on_report;
  std::function<void(long iteration, const NeuralMaterial&)> checkpoint;
  long checkpoint_every = 0;
};

struct TrainResult {
  std::vector<LossReport> history;
  long iterations = 0;
  bool baked = false;
};

/// Two-phase optimization. Phase 1 trains encoder and decoders end to end on filtered
/// parameters; at phase1_fraction the latents are baked from the encoder, which is
/// dropped, and phase 2 optimizes latent texels and decoders. The sampler decoder is
/// trained alongside on its own batch with detached latents.
TrainResult train(const ReferenceMaterial& ref, NeuralMaterial& mat, const TrainConfig& cfg,
                  const TrainCallbacks& callbacks = {});

/// Replaces the sampler decoder with a freshly initialized one of the given kind.
void reset_sampler(NeuralMaterial& mat, SamplerKind kind, std::uint64_t seed);

/// Mean brdf_l1log of the material against unmollified targets on `count` fresh
/// samples (latent path when baked, encoder path otherwise).
double evaluate_brdf_loss(const ReferenceMaterial& ref, const NeuralMaterial& mat, const TrainConfig& cfg,
                          int count, std::uint64_t seed);

}  // namespace neumat
