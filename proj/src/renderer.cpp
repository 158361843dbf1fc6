// Copyright 2026 The neumat Authors.
// SPDX-License-Identifier: Apache-2.0

#include "neumat/renderer.hpp"

#include <atomic>
#include <cmath>
#include <limits>
#include <mutex>
#include <stdexcept>
#include <thread>

namespace neumat {

Ray Camera::generate(double px, double py) const {
  const Vec3d forward = (look_at - position).normalized();
  const Vec3d right = forward.cross(up).normalized();
  const Vec3d true_up = right.cross(forward);
  const double tan_half = std::tan(0.5 * fov_y_deg * kPi / 180.0);
  const double aspect = double(width) / double(height);
  const double sx = (2.0 * px / width - 1.0) * tan_half * aspect;
  const double sy = (1.0 - 2.0 * py / height) * tan_half;
  return {position, (forward + sx * right + sy * true_up).normalized()};
}

double Camera::pixel_spread() const { return 2.0 * std::tan(0.5 * fov_y_deg * kPi / 180.0) / height; }

MaterialBinding MaterialBinding::make_reference(std::shared_ptr<const ReferenceMaterial> m) {
  MaterialBinding b;
  b.reference = std::move(m);
  return b;
}

MaterialBinding MaterialBinding::make_neural(std::shared_ptr<const NeuralRuntime> m) {
  MaterialBinding b;
  b.neural = std::move(m);
  return b;
}

int MaterialBinding::texture_width() const {
  return neural ? neural->latent().width() : reference->textures().width();
}
int MaterialBinding::texture_height() const {
  return neural ? neural->latent().height() : reference->textures().height();
}
int MaterialBinding::texture_levels() const {
  return neural ? neural->latent().num_levels() : reference->textures().num_levels();
}

void Scene::validate() const {
  auto check = [&](int m) {
    if (m < 0 || m >= int(materials.size())) throw std::invalid_argument("scene: object references a missing material");
  };
  for (const auto& s : spheres) {
    check(s.material);
    if (!(s.radius > 0.0)) throw std::invalid_argument("scene: sphere radius must be positive");
  }
  for (const auto& q : quads) {
    check(q.material);
    if (!(q.edge_u.cross(q.edge_v).norm() > 0.0)) throw std::invalid_argument("scene: degenerate quad");
  }
  for (const auto& m : meshes) {
    check(m.material);
    if (m.uvs.size() != m.positions.size()) throw std::invalid_argument("scene: mesh needs one uv per vertex");
    for (const auto& f : m.faces)
      for (int k = 0; k < 3; ++k)
        if (f[k] < 0 || f[k] >= int(m.positions.size())) throw std::invalid_argument("scene: face index out of range");
  }
  for (const auto& l : lights)
    if (!(l.area() > 0.0)) throw std::invalid_argument("scene: degenerate area light");
  for (const auto& b : materials)
    if (!b.reference && !b.neural) throw std::invalid_argument("scene: empty material binding");
  if ((environment < 0.0).any()) throw std::invalid_argument("scene: negative environment radiance");
}

void RenderConfig::validate() const {
  if (spp <= 0) throw std::invalid_argument("spp must be positive");
  if (max_vertices < 2) throw std::invalid_argument("max_vertices must be at least 2");
  if (tile_size <= 0) throw std::invalid_argument("tile_size must be positive");
}

namespace {

Frame<double> surface_frame(const Vec3d& n, const Vec3d& dpdu) {
  const Vec3d t = dpdu - n * n.dot(dpdu);
  if (t.squaredNorm() < 1e-16) return frame_from_normal<double>(n);
  Frame<double> f;
  f.n = n;
  f.t = t.normalized();
  f.b = n.cross(f.t);
  return f;
}

void orient(SurfaceHit& h, const Vec3d& d) {
  h.front = h.ng.dot(d) < 0.0;
  if (!h.front) {
    h.ng = -h.ng;
    h.frame.n = -h.frame.n;
    h.frame.b = -h.frame.b;
  }
}

bool hit_sphere(const Sphere& s, const Ray& r, double t_min, double t_max, SurfaceHit& h) {
  const Vec3d oc = r.o - s.center;
  const double b = oc.dot(r.d);
  const double c = oc.squaredNorm() - s.radius * s.radius;
  const double disc = b * b - c;
  if (disc < 0.0) return false;
  const double sq = std::sqrt(disc);
  double t = -b - sq;
  if (t <= t_min || t >= t_max) {
    t = -b + sq;
    if (t <= t_min || t >= t_max) return false;
  }
  h.t = t;
  h.p = r.o + t * r.d;
  const Vec3d n = (h.p - s.center) / s.radius;
  // Poles on the y axis.
  const double phi = std::atan2(n.z(), n.x());
  const double theta = std::acos(std::clamp(n.y(), -1.0, 1.0));
  h.uv = Vec2d((phi < 0 ? phi + 2 * kPi : phi) / (2 * kPi) * s.uv_scale.x(), theta / kPi * s.uv_scale.y());
  const Vec3d dpdu(-2 * kPi * s.radius * n.z(), 0.0, 2 * kPi * s.radius * n.x());
  h.uv_jacobian = 2 * kPi * kPi * s.radius * s.radius * std::max(std::sin(theta), 1e-6) /
                  (s.uv_scale.x() * s.uv_scale.y());
  h.ng = n;
  h.frame = surface_frame(n, dpdu);
  h.material = s.material;
  h.light = -1;
  return true;
}

bool hit_parallelogram(const Vec3d& o, const Vec3d& eu, const Vec3d& ev, const Ray& r, double t_min, double t_max,
                       double& t, double& s, double& v) {
  const Vec3d n = eu.cross(ev);
  const double denom = n.dot(r.d);
  if (std::abs(denom) < 1e-14) return false;
  t = n.dot(o - r.o) / denom;
  if (t <= t_min || t >= t_max) return false;
  const Vec3d rel = r.o + t * r.d - o;
  const double n2 = n.squaredNorm();
  s = rel.cross(ev).dot(n) / n2;
  v = eu.cross(rel).dot(n) / n2;
  return s >= 0.0 && s <= 1.0 && v >= 0.0 && v <= 1.0;
}

bool hit_quad(const Quad& q, const Ray& r, double t_min, double t_max, SurfaceHit& h) {
  double t, s, v;
  if (!hit_parallelogram(q.origin, q.edge_u, q.edge_v, r, t_min, t_max, t, s, v)) return false;
  h.t = t;
  h.p = r.o + t * r.d;
  h.uv = Vec2d(s * q.uv_scale.x(), v * q.uv_scale.y());
  const Vec3d n = q.edge_u.cross(q.edge_v);
  h.uv_jacobian = n.norm() / (q.uv_scale.x() * q.uv_scale.y());
  h.ng = n.normalized();
  h.frame = surface_frame(h.ng, q.edge_u);
  h.material = q.material;
  h.light = -1;
  return true;
}

bool hit_triangle(const Mesh& m, const Eigen::Vector3i& f, const Ray& r, double t_min, double t_max,
                  SurfaceHit& h) {
  const Vec3d& p0 = m.positions[f[0]];
  const Vec3d e1 = m.positions[f[1]] - p0;
  const Vec3d e2 = m.positions[f[2]] - p0;
  const Vec3d pv = r.d.cross(e2);
  const double det = e1.dot(pv);
  if (std::abs(det) < 1e-14) return false;
  const double inv = 1.0 / det;
  const Vec3d tv = r.o - p0;
  const double b1 = tv.dot(pv) * inv;
  if (b1 < 0.0 || b1 > 1.0) return false;
  const Vec3d qv = tv.cross(e1);
  const double b2 = r.d.dot(qv) * inv;
  if (b2 < 0.0 || b1 + b2 > 1.0) return false;
  const double t = e2.dot(qv) * inv;
  if (t <= t_min || t >= t_max) return false;
  h.t = t;
  h.p = r.o + t * r.d;
  const Vec2d& uv0 = m.uvs[f[0]];
  const Vec2d d1 = m.uvs[f[1]] - uv0;
  const Vec2d d2 = m.uvs[f[2]] - uv0;
  h.uv = uv0 + b1 * d1 + b2 * d2;
  const Vec3d n = e1.cross(e2);
  const double uv_det = d1.x() * d2.y() - d1.y() * d2.x();
  Vec3d dpdu = e1;
  if (std::abs(uv_det) > 1e-14) dpdu = (d2.y() * e1 - d1.y() * e2) / uv_det;
  h.uv_jacobian = std::abs(uv_det) > 1e-14 ? n.norm() / std::abs(uv_det) : 1.0;
  h.ng = n.normalized();
  h.frame = surface_frame(h.ng, dpdu);
  h.material = m.material;
  h.light = -1;
  return true;
}

}  // namespace

std::optional<SurfaceHit> intersect(const Scene& scene, const Ray& ray, double t_min, double t_max) {
  std::optional<SurfaceHit> best;
  SurfaceHit h;
  for (const auto& s : scene.spheres)
    if (hit_sphere(s, ray, t_min, t_max, h)) {
      t_max = h.t;
      best = h;
    }
  for (const auto& q : scene.quads)
    if (hit_quad(q, ray, t_min, t_max, h)) {
      t_max = h.t;
      best = h;
    }
  for (const auto& m : scene.meshes)
    for (const auto& f : m.faces)
      if (hit_triangle(m, f, ray, t_min, t_max, h)) {
        t_max = h.t;
        best = h;
      }
  for (std::size_t i = 0; i < scene.lights.size(); ++i) {
    const auto& l = scene.lights[i];
    double t, s, v;
    if (hit_parallelogram(l.origin, l.edge_u, l.edge_v, ray, t_min, t_max, t, s, v)) {
      t_max = t;
      h = SurfaceHit{};
      h.t = t;
      h.p = ray.o + t * ray.d;
      h.ng = l.normal();
      h.frame = frame_from_normal<double>(h.ng);
      h.light = int(i);
      best = h;
    }
  }
  if (best) orient(*best, ray.d);
  return best;
}

bool occluded(const Scene& scene, const Vec3d& from, const Vec3d& to) {
  const Vec3d d = to - from;
  const double dist = d.norm();
  return intersect(scene, {from, d / dist}, 1e-6, dist * (1.0 - 1e-6)).has_value();
}

double footprint_texels(double cone_width, double cos_theta, double uv_jacobian, int tex_width, int tex_height) {
  const double world_area = cone_width * cone_width / std::max(std::abs(cos_theta), 1e-3);
  return world_area / uv_jacobian * double(tex_width) * double(tex_height);
}

double footprint_to_level(double texel_area, int levels) {
  const double l = 0.5 * std::log2(std::max(texel_area, 1.0));
  return std::clamp(l, 0.0, double(std::max(0, levels - 1)));
}

// --- ShadingPoint -------------------------------------------------------------------

ShadingPoint::ShadingPoint(const MaterialBinding& binding, const Vec2d& uv, double level, const Vec3d& wi, Rng& rng)
    : binding_(&binding), wi_(wi) {
  if (binding.neural) {
    neural_hit_ = binding.neural->prepare({uv, level}, rng.uniform(), wi);
  } else {
    raw_ = binding.reference->textures().sample_raw(uv);
  }
}

Spectrum ShadingPoint::eval(const Vec3d& wo) const {
  if (neural_hit_) return binding_->neural->eval(*neural_hit_, wo);
  return binding_->reference->eval_raw(raw_, wi_, wo);
}

double ShadingPoint::pdf(const Vec3d& wo) const {
  if (neural_hit_) return proxy_pdf(neural_hit_->proxy, wi_, wo);
  return binding_->reference->pdf(raw_, wi_, wo);
}

ShadingPoint::Sample ShadingPoint::sample(const Vec3d& u) const {
  Sample s;
  if (neural_hit_) {
    s.wo = proxy_sample(neural_hit_->proxy, wi_, u).normalized();
    s.pdf = proxy_pdf(neural_hit_->proxy, wi_, s.wo);
    s.value = binding_->neural->eval(*neural_hit_, s.wo);
    return s;
  }
  const auto r = binding_->reference->sample(raw_, wi_, u);
  s.wo = r.wo;
  s.pdf = r.pdf;
  s.value = r.value;
  return s;
}

// --- Integrator ---------------------------------------------------------------------

namespace {

struct LightChoice {
  int count = 0;
  bool env = false;
};

LightChoice light_choice(const Scene& scene) {
  LightChoice c;
  c.env = (scene.environment > 0.0).any();
  c.count = int(scene.lights.size()) + (c.env ? 1 : 0);
  return c;
}

}  // namespace

Spectrum trace_path(const Scene& scene, const RenderConfig& cfg, double px, double py, Rng& rng) {
  const LightChoice lights = light_choice(scene);
  const double select_pdf = lights.count > 0 ? 1.0 / lights.count : 0.0;
  Ray ray = scene.camera.generate(px, py);
  double cone_width = 0.0;
  double spread = scene.camera.pixel_spread();
  Spectrum radiance = Spectrum::Zero();
  Spectrum beta = Spectrum::Ones();
  double prev_pdf = 0.0;
  bool from_camera = true;

  for (int depth = 1;; ++depth) {
    const auto hit = intersect(scene, ray);
    if (!hit) {
      if (lights.env) {
        double w = 1.0;
        if (!from_camera && cfg.nee) w = mis_weight(prev_pdf, select_pdf * kUniformSpherePdf, cfg.mis);
        radiance += beta * scene.environment * w;
      }
      break;
    }
    if (hit->light >= 0) {
      const AreaLight& l = scene.lights[hit->light];
      if (hit->front) {
        double w = 1.0;
        if (!from_camera && cfg.nee) {
          const double cos_l = std::abs(l.normal().dot(ray.d));
          const double light_pdf = select_pdf * hit->t * hit->t / (l.area() * cos_l);
          w = mis_weight(prev_pdf, light_pdf, cfg.mis);
        }
        radiance += beta * l.radiance * w;
      }
      break;
    }
    if (depth + 2 > cfg.max_vertices) break;

    cone_width += spread * hit->t;
    const MaterialBinding& mat = scene.materials[hit->material];
    const Frame<double>& frame = hit->frame;
    const Vec3d wi = frame.to_local(-ray.d).normalized();
    double level = 0.0;
    if (mat.neural) {
      if (cfg.forced_level >= 0.0) {
        level = std::min(cfg.forced_level, double(mat.texture_levels() - 1));
      } else if (cfg.lod) {
        const double area = footprint_texels(cone_width, wi.z(), hit->uv_jacobian, mat.texture_width(),
                                             mat.texture_height());
        level = footprint_to_level(area, mat.texture_levels());
      }
    }
    const ShadingPoint sp(mat, hit->uv, level, wi, rng);
    const Vec3d origin = hit->p + 1e-5 * hit->ng;

    if (cfg.nee && lights.count > 0) {
      const int pick = std::min(lights.count - 1, int(rng.uniform() * lights.count));
      const Vec2d u(rng.uniform(), rng.uniform());
      if (pick < int(scene.lights.size())) {
        const AreaLight& l = scene.lights[pick];
        const Vec3d q = l.origin + u[0] * l.edge_u + u[1] * l.edge_v;
        Vec3d d = q - origin;
        const double dist2 = d.squaredNorm();
        d /= std::sqrt(dist2);
        const double cos_l = -l.normal().dot(d);
        const Vec3d wo = frame.to_local(d);
        if (cos_l > 0.0 && wo.z() > 0.0 && d.dot(hit->ng) > 0.0) {
          const Spectrum f = sp.eval(wo);
          if ((f > 0.0).any() && !occluded(scene, origin, q)) {
            const double light_pdf = select_pdf * dist2 / (l.area() * cos_l);
            const double w = mis_weight(light_pdf, sp.pdf(wo), cfg.mis);
            radiance += beta * f * wo.z() * l.radiance * (w / light_pdf);
          }
        }
      } else {
        const Vec3d d = sample_uniform_sphere(u);
        const Vec3d wo = frame.to_local(d);
        if (wo.z() > 0.0 && d.dot(hit->ng) > 0.0) {
          const Spectrum f = sp.eval(wo);
          if ((f > 0.0).any() && !intersect(scene, {origin, d}).has_value()) {
            const double light_pdf = select_pdf * kUniformSpherePdf;
            const double w = mis_weight(light_pdf, sp.pdf(wo), cfg.mis);
            radiance += beta * f * wo.z() * scene.environment * (w / light_pdf);
          }
        }
      }
    }

    const Vec3d u3(rng.uniform(), rng.uniform(), rng.uniform());
    const ShadingPoint::Sample s = sp.sample(u3);
    if (cfg.check_pdf && std::abs(sp.pdf(s.wo) - s.pdf) > 1e-6 * std::max(1.0, s.pdf))
      throw std::logic_error("renderer: sampled pdf does not match the evaluated pdf");
    if (!(s.pdf > 0.0) || s.wo.z() <= 0.0 || !(s.value > 0.0).any()) break;
    const Vec3d d = frame.to_world(s.wo).normalized();
    if (d.dot(hit->ng) <= 0.0) break;
    beta *= s.value * (s.wo.z() / s.pdf);
    if (!beta.allFinite()) break;
    prev_pdf = s.pdf;
    from_camera = false;
    ray = {origin, d};
    spread += cfg.bounce_spread;
  }
  return radiance;
}

HdrImage render(const Scene& scene, const RenderConfig& cfg) {
  scene.validate();
  cfg.validate();
  const int w = scene.camera.width;
  const int h = scene.camera.height;
  HdrImage img(w, h, 3);
  const int tiles_x = (w + cfg.tile_size - 1) / cfg.tile_size;
  const int tiles_y = (h + cfg.tile_size - 1) / cfg.tile_size;
  const int tiles = tiles_x * tiles_y;
  std::atomic<int> next{0};
  std::exception_ptr error;
  std::mutex error_mutex;
  auto worker = [&] {
    try {
      for (int tile = next++; tile < tiles; tile = next++) {
        const int x0 = (tile % tiles_x) * cfg.tile_size;
        const int y0 = (tile / tiles_x) * cfg.tile_size;
        for (int y = y0; y < std::min(h, y0 + cfg.tile_size); ++y)
          for (int x = x0; x < std::min(w, x0 + cfg.tile_size); ++x) {
            Rng rng(cfg.seed, std::uint64_t(y) * std::uint64_t(w) + std::uint64_t(x));
            Spectrum sum = Spectrum::Zero();
            for (int s = 0; s < cfg.spp; ++s)
              sum += trace_path(scene, cfg, x + rng.uniform(), y + rng.uniform(), rng);
            img.set_rgb(x, y, sum / cfg.spp);
          }
      }
    } catch (...) {
      std::lock_guard<std::mutex> lock(error_mutex);
      if (!error) error = std::current_exception();
      next = tiles;
    }
  };
  const int threads = cfg.threads > 0 ? cfg.threads : int(std::max(1u, std::thread::hardware_concurrency()));
  std::vector<std::thread> pool;
  for (int t = 1; t < std::min(threads, tiles); ++t) pool.emplace_back(worker);
  worker();
  for (auto& t : pool) t.join();
  if (error) std::rethrow_exception(error);
  return img;
}

MetricReport compute_metrics(const HdrImage& a, const HdrImage& b, double eps) {
  if (a.width != b.width || a.height != b.height || a.channels != b.channels)
    throw DimensionError("compute_metrics: image dimensions differ");
  MetricReport m;
  const std::size_t n = a.data.size();
  if (n == 0) return m;
  for (std::size_t i = 0; i < n; ++i) {
    const double x = a.data[i];
    const double y = b.data[i];
    const double d = std::abs(x - y);
    m.smape += d / (std::abs(x) + std::abs(y) + eps);
    m.mean_abs += d;
    m.mean_sqr += d * d;
    m.mean_rel_abs += d / (std::abs(y) + eps);
    m.mean_rel_sqr += d * d / ((std::abs(y) + eps) * (std::abs(y) + eps));
  }
  m.smape /= double(n);
  m.mean_abs /= double(n);
  m.mean_sqr /= double(n);
  m.mean_rel_abs /= double(n);
  m.mean_rel_sqr /= double(n);
  return m;
}

}  // namespace neumat
