// Copyright 2026 The neumat Authors.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <Eigen/Dense>

#include <array>
#include <vector>

#include "neumat/geom.hpp"
#include "neumat/mlp.hpp"
#include "neumat/reference_material.hpp"

namespace neumat {

inline constexpr int kLatentChannels = 8;

using LatentCode = Eigen::Matrix<float, kLatentChannels, 1>;
using LatentLevel = Eigen::Matrix<float, kLatentChannels, Eigen::Dynamic>;

struct LatentQuery {
  Vec2d uv{0, 0};
  double level = 0.0;  // fractional
};

/// The four texels and weights of a bilinear lookup at one level.
struct BilinearTaps {
  std::array<int, 4> index{};  // column in the level matrix
  std::array<float, 4> weight{};
};

/// Mipmapped 8-channel latent texture. Level l is (W >> l) x (H >> l), at least 1x1;
/// each level is stored as one column per texel, row-major over (x, y).
class LatentPyramid {
 public:
  LatentPyramid() = default;
  /// Zero-initialized pyramid; levels <= 0 selects the full chain down to 1x1.
  LatentPyramid(int width, int height, int levels = 0);

  static int full_chain_levels(int width, int height);

  int width() const { return width_; }
  int height() const { return height_; }
  int num_levels() const { return int(levels_.size()); }
  int level_width(int l) const { return std::max(1, width_ >> l); }
  int level_height(int l) const { return std::max(1, height_ >> l); }

  LatentLevel& level(int l) { return levels_[l]; }
  const LatentLevel& level(int l) const { return levels_[l]; }
  auto texel(int l, int x, int y) { return levels_[l].col(std::size_t(y) * level_width(l) + x); }
  auto texel(int l, int x, int y) const { return levels_[l].col(std::size_t(y) * level_width(l) + x); }

  BilinearTaps taps(int level, const Vec2d& uv) const;
  LatentCode bilinear(int level, const Vec2d& uv) const;

  /// Russian-roulette level choice: ceil(level) when u_rr < frac(level), else floor.
  int choose_level(double level, double u_rr) const;

  struct Fetch {
    LatentCode z;
    int level = 0;
  };
  Fetch fetch(const LatentQuery& q, double u_rr) const;

  /// Same-shape pyramid of zeros, used for gradients and optimizer moments.
  LatentPyramid zeros_like() const { return LatentPyramid(width_, height_, num_levels()); }
  void set_zero();

  /// Copy with every value rounded to FP16 (the render copy). *clamped counts values
  /// that exceeded the FP16 range.
  LatentPyramid rounded_to_half(int* clamped = nullptr) const;

  bool all_finite() const;
  float max_abs() const;

 private:
  int width_ = 0;
  int height_ = 0;
  std::vector<LatentLevel> levels_;
};

/// Adds the bilinear adjoint of the level-`level` fetch at uv: z_grad is split over
/// the four taps with the bilinear weights.
void accumulate_texel_grads(LatentPyramid& grads, const Vec2d& uv, int level, const LatentCode& z_grad);

/// Initializes every texel of every level from the encoder applied to the texture
/// parameters filtered with the level's footprint. The pyramid has as many levels as
/// the texture mip chain.
LatentPyramid bake_from_encoder(const Mlp<float>& encoder, const ParamTextures& tex);

/// Adam step on all texels. Texels that received no gradient still decay their
/// moments, matching a dense optimizer.
struct LatentAdamState {
  LatentPyramid m;
  LatentPyramid v;
  long step = 0;
};
void adam_step(LatentPyramid& latent, const LatentPyramid& grads, LatentAdamState& state, double lr,
               const AdamConfig& cfg = {});

/// Histogram of |z| over all texels: counts per power-of-two bucket [2^k, 2^(k+1)) for
/// k in [min_exp, max_exp), plus zeros and overflow in the first and last slots.
std::vector<long> magnitude_histogram(const LatentPyramid& latent, int min_exp = -14, int max_exp = 16);

}  // namespace neumat
