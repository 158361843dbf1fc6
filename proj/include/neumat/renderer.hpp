// Copyright 2026 The neumat Authors.
// SPDX-License-Identifier: Apache-2.0

// Unidirectional path tracer with next-event estimation and MIS over reference and
// neural materials, ray-cone texture LoD, and image error metrics.

#pragma once

#include <limits>
#include <memory>
#include <optional>
#include <vector>

#include "neumat/geom.hpp"
#include "neumat/image.hpp"
#include "neumat/neural_brdf.hpp"
#include "neumat/random.hpp"
#include "neumat/reference_material.hpp"

namespace neumat {

struct Ray {
  Vec3d o;
  Vec3d d;
};

struct Camera {
  Vec3d position{0, 0, 5};
  Vec3d look_at{0, 0, 0};
  Vec3d up{0, 1, 0};
  double fov_y_deg = 40.0;
  int width = 256;
  int height = 256;

  /// Ray through film position (px, py) in pixels, origin at the top-left corner.
  Ray generate(double px, double py) const;
  /// Angle subtended by one pixel at the image center.
  double pixel_spread() const;
};

/// A surface material: analytic reference or neural runtime.
struct MaterialBinding {
  std::shared_ptr<const ReferenceMaterial> reference;
  std::shared_ptr<const NeuralRuntime> neural;

  static MaterialBinding make_reference(std::shared_ptr<const ReferenceMaterial> m);
  static MaterialBinding make_neural(std::shared_ptr<const NeuralRuntime> m);

  int texture_width() const;
  int texture_height() const;
  int texture_levels() const;
};

/// uv = (azimuth / 2pi, polar / pi) * uv_scale with the poles on the y axis.
struct Sphere {
  Vec3d center{0, 0, 0};
  double radius = 1.0;
  int material = 0;
  Vec2d uv_scale{1, 1};
};

/// Parallelogram origin + s edge_u + t edge_v, (s, t) in [0,1]^2; uv = (s, t) * uv_scale.
struct Quad {
  Vec3d origin{-1, -1, 0};
  Vec3d edge_u{2, 0, 0};
  Vec3d edge_v{0, 2, 0};
  int material = 0;
  Vec2d uv_scale{1, 1};
};

struct Mesh {
  std::vector<Vec3d> positions;
  std::vector<Vec2d> uvs;
  std::vector<Eigen::Vector3i> faces;
  int material = 0;
};

/// One-sided emitter on the edge_u x edge_v side.
struct AreaLight {
  Vec3d origin{-0.5, 3, -0.5};
  Vec3d edge_u{1, 0, 0};
  Vec3d edge_v{0, 0, 1};
  Spectrum radiance = Spectrum::Ones();

  double area() const { return edge_u.cross(edge_v).norm(); }
  Vec3d normal() const { return edge_u.cross(edge_v).normalized(); }
};

struct Scene {
  Camera camera;
  Spectrum environment = Spectrum::Zero();  // constant radiance from every direction
  std::vector<MaterialBinding> materials;
  std::vector<Sphere> spheres;
  std::vector<Quad> quads;
  std::vector<Mesh> meshes;
  std::vector<AreaLight> lights;

  void validate() const;
};

struct SurfaceHit {
  double t = 0.0;
  Vec3d p;
  Vec3d ng;  // geometric normal, facing the incoming ray
  Frame<double> frame;
  Vec2d uv{0, 0};
  double uv_jacobian = 1.0;  // world area per unit uv area
  int material = -1;
  int light = -1;  // index into Scene::lights when an emitter was hit
  bool front = true;
};

/// Closest hit along the ray in (t_min, t_max).
std::optional<SurfaceHit> intersect(const Scene& scene, const Ray& ray, double t_min = 1e-6,
                                    double t_max = std::numeric_limits<double>::infinity());
bool occluded(const Scene& scene, const Vec3d& from, const Vec3d& to);

/// Texel area (level-0 texels^2) covered by a ray cone of width `cone_width` hitting a
/// surface at incidence cosine `cos_theta`.
double footprint_texels(double cone_width, double cos_theta, double uv_jacobian, int tex_width, int tex_height);

/// 0.5 log2(max(A, 1)) clamped to [0, levels - 1].
double footprint_to_level(double texel_area, int levels);

enum class MisHeuristic : std::uint8_t { kBalance, kPower };

inline double mis_weight(double pdf_a, double pdf_b, MisHeuristic h = MisHeuristic::kBalance) {
  if (h == MisHeuristic::kPower) {
    pdf_a *= pdf_a;
    pdf_b *= pdf_b;
  }
  return pdf_a + pdf_b > 0.0 ? pdf_a / (pdf_a + pdf_b) : 0.0;
}

struct RenderConfig {
  int spp = 16;
  int max_vertices = 6;  // camera and light vertices included
  std::uint64_t seed = 1;
  bool lod = true;
  double forced_level = -1.0;  // >= 0 overrides the footprint level for neural materials
  bool nee = true;
  MisHeuristic mis = MisHeuristic::kBalance;
  double bounce_spread = 0.05;  // radians added to the cone spread per bounce
  int threads = 0;              // 0 = hardware concurrency
  int tile_size = 32;
  bool check_pdf = false;       // re-evaluate the pdf of every neural sample

  void validate() const;
};

/// Material evaluation at one shading point, with any per-hit state cached.
class ShadingPoint {
 public:
  ShadingPoint(const MaterialBinding& binding, const Vec2d& uv, double level, const Vec3d& wi, Rng& rng);

  Spectrum eval(const Vec3d& wo) const;
  double pdf(const Vec3d& wo) const;

  struct Sample {
    Vec3d wo;
    double pdf = 0.0;
    Spectrum value = Spectrum::Zero();
  };
  Sample sample(const Vec3d& u) const;

  const Vec3d& wi() const { return wi_; }
  int neural_level() const { return neural_hit_ ? neural_hit_->level : -1; }

 private:
  const MaterialBinding* binding_;
  Vec3d wi_;
  Eigen::VectorXf raw_;
  std::optional<NeuralRuntime::Hit> neural_hit_;
};

HdrImage render(const Scene& scene, const RenderConfig& cfg);

/// Radiance estimate of one camera path through pixel (px, py).
Spectrum trace_path(const Scene& scene, const RenderConfig& cfg, double px, double py, Rng& rng);

struct MetricReport {
  double smape = 0.0;
  double mean_abs = 0.0;
  double mean_sqr = 0.0;
  double mean_rel_abs = 0.0;
  double mean_rel_sqr = 0.0;
};

inline constexpr double kMetricEpsilon = 1e-3;

/// Metrics of `a` against the reference `b`, over all pixels and channels.
MetricReport compute_metrics(const HdrImage& a, const HdrImage& b, double eps = kMetricEpsilon);

}  // namespace neumat
