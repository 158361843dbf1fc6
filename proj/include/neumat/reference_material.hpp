// Copyright 2026 The neumat Authors.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "neumat/geom.hpp"
#include "neumat/random.hpp"

namespace neumat {

/// Single-channel float image with wrap addressing.
struct Image {
  int width = 0;
  int height = 0;
  std::vector<float> data;

  Image() = default;
  Image(int w, int h, float fill = 0.0f) : width(w), height(h), data(std::size_t(w) * h, fill) {}

  float& at(int x, int y) { return data[std::size_t(y) * width + x]; }
  float at(int x, int y) const { return data[std::size_t(y) * width + x]; }
  float wrapped(int x, int y) const;
  /// Bilinear lookup; texel centers sit at ((x + 0.5)/width, (y + 0.5)/height).
  float bilinear(const Vec2d& uv) const;
};

enum class ChannelKind : std::uint8_t {
  kPlain,      // colour-like data, Gaussian filtered
  kSlopeX,     // normal map x slope; `partner` is the matching kSlopeY channel
  kSlopeY,
  kRoughness,  // GGX alpha; `partner` is the kSlopeX channel whose variance widens it, or -1
};

struct ChannelDesc {
  std::string name;
  ChannelKind kind = ChannelKind::kPlain;
  int partner = -1;
};

/// Footprint of a filtered parameter lookup. sigma is the Gaussian standard deviation
/// in finest-level texels; 0 means unfiltered.
struct FilterFootprint {
  Vec2d uv{0, 0};
  double sigma = 0.0;
};

/// Spatially varying material parameters with a LEAN-filtered mip chain. Slope pairs
/// store first and second moments per level so that their variance can be folded into
/// the linked roughness channels at lookup time.
class ParamTextures {
 public:
  ParamTextures(std::vector<ChannelDesc> channels, std::vector<Image> level0);

  int width() const { return width_; }
  int height() const { return height_; }
  int num_levels() const { return int(levels_.size()); }
  int num_channels() const { return int(channels_.size()); }
  const std::vector<ChannelDesc>& channels() const { return channels_; }
  int channel_index(const std::string& name) const;
  const Image& source(int channel) const { return source_[channel]; }

  /// Length of the filtered parameter vector k returned by fetch_params.
  int param_size() const { return param_size_; }
  std::vector<std::string> param_names() const;

  /// Unfiltered per-channel values, bilinear at the finest level.
  Eigen::VectorXf sample_raw(const Vec2d& uv) const;

  /// Filtered parameter vector k: plain channels as filtered values, slope pairs as
  /// (mean x, mean y, var x, var y, cov xy), linked roughness as (alpha_x, alpha_y)
  /// with alpha^2 = E[alpha^2] + 2 var, unlinked roughness as sqrt(E[alpha^2]).
  Eigen::VectorXf fetch_params(const FilterFootprint& fp) const;

  /// Parameter vector at the center of texel (x, y) of `level`.
  Eigen::VectorXf texel_params(int level, int x, int y) const;

  static double sigma_for_level(int level);
  int level_for_sigma(double sigma) const;

  int level_width(int level) const { return std::max(1, width_ >> level); }
  int level_height(int level) const { return std::max(1, height_ >> level); }

 private:
  Eigen::VectorXf derive(const Eigen::VectorXf& planes) const;
  Eigen::VectorXf bilinear_planes(int level, const Vec2d& uv) const;

  std::vector<ChannelDesc> channels_;
  std::vector<Image> source_;
  int width_ = 0;
  int height_ = 0;
  // levels_[l][p] = moment plane p at level l.
  std::vector<std::vector<Image>> levels_;
  std::vector<int> plane_offset_;  // first plane of each channel
  int num_planes_ = 0;
  int param_size_ = 0;
};

enum class LobeType : std::uint8_t { kLambertian, kConductor, kCoat };
enum class Combine : std::uint8_t { kMix, kCoat };

/// Scalar lobe parameter: a texture channel (scaled and offset) or a constant.
struct ScalarBinding {
  float constant = 0.0f;
  int channel = -1;
  float scale = 1.0f;
  float offset = 0.0f;

  float value(const Eigen::VectorXf& raw) const {
    return channel < 0 ? constant : raw[channel] * scale + offset;
  }
};

/// RGB lobe parameter: three consecutive channels starting at `channel`, or a constant.
struct ColorBinding {
  Eigen::Array3f constant{0.5f, 0.5f, 0.5f};
  int channel = -1;

  Eigen::Array3f value(const Eigen::VectorXf& raw) const {
    if (channel < 0) return constant;
    return {raw[channel], raw[channel + 1], raw[channel + 2]};
  }
};

struct Lobe {
  LobeType type = LobeType::kLambertian;
  Combine combine = Combine::kMix;  // how this lobe joins the stack below it
  ScalarBinding weight{1.0f};       // mix weight for Combine::kMix
  ColorBinding color;               // Lambertian albedo or conductor F0
  ScalarBinding roughness{0.5f};    // GGX alpha along the tangent
  float anisotropy = 0.0f;          // alpha_y = alpha_x * (1 - anisotropy)
  ScalarBinding tangent_rotation;   // radians
  int normal_channel = -1;          // kSlopeX channel of the normal map
  ScalarBinding specular{1.0f};     // coat F0 = 0.04 * specular
};

/// Ordered stack of lobes; lobe 0 is the bottom, each further lobe is mixed in or
/// coated on top.
struct MaterialGraph {
  std::vector<Lobe> lobes;
};

class ReferenceMaterial {
 public:
  ReferenceMaterial(MaterialGraph graph, std::shared_ptr<const ParamTextures> textures);

  const MaterialGraph& graph() const { return graph_; }
  const ParamTextures& textures() const { return *textures_; }
  std::shared_ptr<const ParamTextures> textures_ptr() const { return textures_; }

  /// BRDF for the raw parameters of a surface point; zero when either direction is
  /// below the horizon.
  Spectrum eval_raw(const Eigen::VectorXf& raw, const Vec3d& wi, const Vec3d& wo) const;

  Spectrum eval(const Vec2d& uv, const Vec3d& wi, const Vec3d& wo) const {
    return eval_raw(textures_->sample_raw(uv), wi, wo);
  }

  struct Sample {
    Vec3d wo;
    double pdf = 0.0;
    Spectrum value = Spectrum::Zero();
  };

  /// Lobe-mixture importance sampling: cosine for diffuse lobes, NDF sampling of each
  /// microfacet lobe in its shading frame.
  Sample sample(const Eigen::VectorXf& raw, const Vec3d& wi, const Vec3d& u) const;
  double pdf(const Eigen::VectorXf& raw, const Vec3d& wi, const Vec3d& wo) const;

 private:
  MaterialGraph graph_;
  std::shared_ptr<const ParamTextures> textures_;
  std::vector<int> specular_lobes_;
  bool has_diffuse_ = false;
};

Spectrum eval_reference(const ReferenceMaterial& mat, const Vec2d& uv, const Vec3d& wi, const Vec3d& wo);

/// Average of the BRDF over `samples` directions drawn uniformly in the cone of
/// half-angle `cone_angle` around wo; exact evaluation when cone_angle == 0.
Spectrum eval_mollified(const ReferenceMaterial& mat, const Eigen::VectorXf& raw, const Vec3d& wi,
                        const Vec3d& wo, double cone_angle, int samples, Rng& rng);
Spectrum eval_mollified(const ReferenceMaterial& mat, const Vec2d& uv, const Vec3d& wi, const Vec3d& wo,
                        double cone_angle, int samples, Rng& rng);

/// Cosine-weighted MC estimate of the directional albedo for the fixed direction wo.
Spectrum estimate_albedo(const ReferenceMaterial& mat, const Eigen::VectorXf& raw, const Vec3d& wo, Rng& rng,
                         int samples = 1);
Spectrum estimate_albedo(const ReferenceMaterial& mat, const Vec2d& uv, const Vec3d& wo, Rng& rng,
                         int samples = 1);

// GGX helpers shared with tests.
double ggx_d(const Vec3d& h, double ax, double ay);
double ggx_lambda(const Vec3d& w, double ax, double ay);
double ggx_g2(const Vec3d& wi, const Vec3d& wo, double ax, double ay);

// Built-in procedural materials.

/// Constant Lambertian material.
ReferenceMaterial make_lambertian_material(const Eigen::Array3f& albedo, int resolution = 16);

/// Single GGX conductor lobe with constant parameters.
ReferenceMaterial make_conductor_material(const Eigen::Array3f& f0, float alpha, int resolution = 16);

/// Normal-mapped dielectric coat over a diffuse / anisotropic-metal mix, driven by
/// tileable value-noise textures.
ReferenceMaterial make_layered_material(int resolution, std::uint64_t seed = 7);

/// Tileable value noise in [0,1] with `cells` lattice cells per side.
Image value_noise(int width, int height, int cells, std::uint64_t seed);

}  // namespace neumat
