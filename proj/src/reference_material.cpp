// Copyright 2026 The neumat Authors.
// SPDX-License-Identifier: Apache-2.0

#include "neumat/reference_material.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace neumat {

namespace {

int wrap_index(int i, int n) {
  const int r = i % n;
  return r < 0 ? r + n : r;
}

int planes_for(ChannelKind kind) {
  switch (kind) {
    case ChannelKind::kSlopeX:
      return 5;
    case ChannelKind::kSlopeY:
      return 0;
    case ChannelKind::kPlain:
    case ChannelKind::kRoughness:
      break;
  }
  return 1;
}

// Normalized 1D Gaussian taps centred at `center` (level-0 texel coordinates).
void gaussian_taps(double center, double sigma, std::vector<int>& index, std::vector<double>& weight) {
  index.clear();
  weight.clear();
  const int radius = int(std::ceil(3.0 * sigma));
  const int lo = int(std::floor(center)) - radius;
  const int hi = int(std::ceil(center)) + radius;
  double total = 0.0;
  for (int k = lo; k <= hi; ++k) {
    const double d = double(k) - center;
    const double w = std::exp(-0.5 * d * d / (sigma * sigma));
    index.push_back(k);
    weight.push_back(w);
    total += w;
  }
  for (double& w : weight) w /= total;
}

}  // namespace

float Image::wrapped(int x, int y) const { return at(wrap_index(x, width), wrap_index(y, height)); }

float Image::bilinear(const Vec2d& uv) const {
  const double fx = uv.x() * width - 0.5;
  const double fy = uv.y() * height - 0.5;
  const double x0 = std::floor(fx);
  const double y0 = std::floor(fy);
  const double tx = fx - x0;
  const double ty = fy - y0;
  const int ix = int(x0);
  const int iy = int(y0);
  const double v00 = wrapped(ix, iy);
  const double v10 = wrapped(ix + 1, iy);
  const double v01 = wrapped(ix, iy + 1);
  const double v11 = wrapped(ix + 1, iy + 1);
  return float((1 - ty) * ((1 - tx) * v00 + tx * v10) + ty * ((1 - tx) * v01 + tx * v11));
}

// --- ParamTextures ----------------------------------------------------------------

ParamTextures::ParamTextures(std::vector<ChannelDesc> channels, std::vector<Image> level0)
    : channels_(std::move(channels)), source_(std::move(level0)) {
  if (channels_.empty() || channels_.size() != source_.size())
    throw std::invalid_argument("ParamTextures: need one image per channel");
  width_ = source_[0].width;
  height_ = source_[0].height;
  for (const auto& img : source_) {
    if (img.width != width_ || img.height != height_)
      throw std::invalid_argument("ParamTextures: channel resolutions differ");
    for (float v : img.data)
      if (!std::isfinite(v)) throw std::invalid_argument("ParamTextures: non-finite texel");
  }
  for (int c = 0; c < num_channels(); ++c) {
    const auto& ch = channels_[c];
    if (ch.kind == ChannelKind::kSlopeX || ch.kind == ChannelKind::kSlopeY) {
      const auto want = ch.kind == ChannelKind::kSlopeX ? ChannelKind::kSlopeY : ChannelKind::kSlopeX;
      if (ch.partner < 0 || ch.partner >= num_channels() || channels_[ch.partner].kind != want)
        throw std::invalid_argument("ParamTextures: slope channel '" + ch.name + "' lacks a partner");
    }
    if (ch.kind == ChannelKind::kRoughness && ch.partner >= 0 &&
        (ch.partner >= num_channels() || channels_[ch.partner].kind != ChannelKind::kSlopeX))
      throw std::invalid_argument("ParamTextures: roughness '" + ch.name + "' must link to a slope-x channel");
  }

  plane_offset_.resize(channels_.size());
  for (int c = 0; c < num_channels(); ++c) {
    plane_offset_[c] = num_planes_;
    num_planes_ += planes_for(channels_[c].kind);
    switch (channels_[c].kind) {
      case ChannelKind::kPlain:
        param_size_ += 1;
        break;
      case ChannelKind::kSlopeX:
        param_size_ += 5;
        break;
      case ChannelKind::kSlopeY:
        break;
      case ChannelKind::kRoughness:
        param_size_ += channels_[c].partner >= 0 ? 2 : 1;
        break;
    }
  }

  // Level 0 moment planes.
  std::vector<Image> base(num_planes_, Image(width_, height_));
  for (int c = 0; c < num_channels(); ++c) {
    const int p = plane_offset_[c];
    const auto& src = source_[c];
    switch (channels_[c].kind) {
      case ChannelKind::kPlain:
        base[p] = src;
        break;
      case ChannelKind::kRoughness:
        for (std::size_t i = 0; i < src.data.size(); ++i) base[p].data[i] = src.data[i] * src.data[i];
        break;
      case ChannelKind::kSlopeX: {
        const auto& sy = source_[channels_[c].partner];
        for (std::size_t i = 0; i < src.data.size(); ++i) {
          const float x = src.data[i];
          const float y = sy.data[i];
          base[p].data[i] = x;
          base[p + 1].data[i] = y;
          base[p + 2].data[i] = x * x;
          base[p + 3].data[i] = y * y;
          base[p + 4].data[i] = x * y;
        }
        break;
      }
      case ChannelKind::kSlopeY:
        break;
    }
  }
  levels_.push_back(std::move(base));

  // Coarser levels: separable Gaussian of the finest moments, sigma = 2^l / 2.
  int levels = 1;
  while ((width_ >> levels) >= 1 || (height_ >> levels) >= 1) {
    if (level_width(levels - 1) == 1 && level_height(levels - 1) == 1) break;
    ++levels;
  }
  std::vector<int> idx;
  std::vector<double> wts;
  levels_.reserve(std::size_t(levels));
  const auto& fine = levels_[0];
  for (int l = 1; l < levels; ++l) {
    const int w = level_width(l);
    const int h = level_height(l);
    const double sigma = sigma_for_level(l);
    // Horizontal pass: finest rows, filtered at the level's x centres.
    std::vector<Image> tmp(num_planes_, Image(w, height_));
    for (int x = 0; x < w; ++x) {
      const double cx = (x + 0.5) * double(width_) / w - 0.5;
      gaussian_taps(cx, sigma, idx, wts);
      for (int p = 0; p < num_planes_; ++p)
        for (int y = 0; y < height_; ++y) {
          double s = 0.0;
          for (std::size_t k = 0; k < idx.size(); ++k) s += wts[k] * fine[p].at(wrap_index(idx[k], width_), y);
          tmp[p].at(x, y) = float(s);
        }
    }
    std::vector<Image> level(num_planes_, Image(w, h));
    for (int y = 0; y < h; ++y) {
      const double cy = (y + 0.5) * double(height_) / h - 0.5;
      gaussian_taps(cy, sigma, idx, wts);
      for (int p = 0; p < num_planes_; ++p)
        for (int x = 0; x < w; ++x) {
          double s = 0.0;
          for (std::size_t k = 0; k < idx.size(); ++k) s += wts[k] * tmp[p].at(x, wrap_index(idx[k], height_));
          level[p].at(x, y) = float(s);
        }
    }
    levels_.push_back(std::move(level));
  }
}

int ParamTextures::channel_index(const std::string& name) const {
  for (int c = 0; c < num_channels(); ++c)
    if (channels_[c].name == name) return c;
  return -1;
}

std::vector<std::string> ParamTextures::param_names() const {
  std::vector<std::string> names;
  for (const auto& ch : channels_) {
    switch (ch.kind) {
      case ChannelKind::kPlain:
        names.push_back(ch.name);
        break;
      case ChannelKind::kSlopeX:
        for (const char* s : {"_mean_x", "_mean_y", "_var_x", "_var_y", "_cov_xy"}) names.push_back(ch.name + s);
        break;
      case ChannelKind::kSlopeY:
        break;
      case ChannelKind::kRoughness:
        if (ch.partner >= 0) {
          names.push_back(ch.name + "_x");
          names.push_back(ch.name + "_y");
        } else {
          names.push_back(ch.name);
        }
        break;
    }
  }
  return names;
}

double ParamTextures::sigma_for_level(int level) { return level <= 0 ? 0.0 : std::ldexp(1.0, level) * 0.5; }

int ParamTextures::level_for_sigma(double sigma) const {
  if (!(sigma > 0.0)) return 0;
  const double l = std::round(std::log2(2.0 * sigma));
  return std::clamp(int(l), 0, num_levels() - 1);
}

Eigen::VectorXf ParamTextures::sample_raw(const Vec2d& uv) const {
  Eigen::VectorXf raw(num_channels());
  for (int c = 0; c < num_channels(); ++c) raw[c] = source_[c].bilinear(uv);
  return raw;
}

Eigen::VectorXf ParamTextures::bilinear_planes(int level, const Vec2d& uv) const {
  Eigen::VectorXf planes(num_planes_);
  for (int p = 0; p < num_planes_; ++p) planes[p] = levels_[level][p].bilinear(uv);
  return planes;
}

Eigen::VectorXf ParamTextures::derive(const Eigen::VectorXf& planes) const {
  Eigen::VectorXf k(param_size_);
  int o = 0;
  auto variance = [&](int slope_channel, int axis) {
    const int p = plane_offset_[slope_channel];
    const float mean = planes[p + axis];
    return std::max(0.0f, planes[p + 2 + axis] - mean * mean);
  };
  for (int c = 0; c < num_channels(); ++c) {
    const int p = plane_offset_[c];
    switch (channels_[c].kind) {
      case ChannelKind::kPlain:
        k[o++] = planes[p];
        break;
      case ChannelKind::kSlopeX: {
        const float mx = planes[p];
        const float my = planes[p + 1];
        k[o++] = mx;
        k[o++] = my;
        k[o++] = variance(c, 0);
        k[o++] = variance(c, 1);
        k[o++] = planes[p + 4] - mx * my;
        break;
      }
      case ChannelKind::kSlopeY:
        break;
      case ChannelKind::kRoughness: {
        const float a2 = std::max(0.0f, planes[p]);
        const int link = channels_[c].partner;
        if (link >= 0) {
          k[o++] = std::sqrt(a2 + 2.0f * variance(link, 0));
          k[o++] = std::sqrt(a2 + 2.0f * variance(link, 1));
        } else {
          k[o++] = std::sqrt(a2);
        }
        break;
      }
    }
  }
  return k;
}

Eigen::VectorXf ParamTextures::fetch_params(const FilterFootprint& fp) const {
  return derive(bilinear_planes(level_for_sigma(fp.sigma), fp.uv));
}

Eigen::VectorXf ParamTextures::texel_params(int level, int x, int y) const {
  Eigen::VectorXf planes(num_planes_);
  for (int p = 0; p < num_planes_; ++p) planes[p] = levels_[level][p].at(x, y);
  return derive(planes);
}

// --- GGX ---------------------------------------------------------------------------

double ggx_d(const Vec3d& h, double ax, double ay) {
  if (h.z() <= 0.0) return 0.0;
  const double x = h.x() / ax;
  const double y = h.y() / ay;
  const double e = x * x + y * y + h.z() * h.z();
  return 1.0 / (kPi * ax * ay * e * e);
}

double ggx_lambda(const Vec3d& w, double ax, double ay) {
  const double z2 = w.z() * w.z();
  if (z2 <= 0.0) return 0.0;
  const double t = (ax * ax * w.x() * w.x() + ay * ay * w.y() * w.y()) / z2;
  return 0.5 * (std::sqrt(1.0 + t) - 1.0);
}

double ggx_g2(const Vec3d& wi, const Vec3d& wo, double ax, double ay) {
  return 1.0 / (1.0 + ggx_lambda(wi, ax, ay) + ggx_lambda(wo, ax, ay));
}

namespace {

constexpr double kMinAlpha = 0.02;

struct LobeState {
  Frame<double> frame;
  double ax = 1.0;
  double ay = 1.0;
};

LobeState lobe_state(const Lobe& lobe, const Eigen::VectorXf& raw, const ParamTextures& tex) {
  LobeState s;
  Vec3d n(0, 0, 1);
  if (lobe.normal_channel >= 0) {
    const int py = tex.channels()[lobe.normal_channel].partner;
    n = Vec3d(-raw[lobe.normal_channel], -raw[py], 1.0).normalized();
  }
  const double phi = lobe.tangent_rotation.value(raw);
  const Vec3d t0(std::cos(phi), std::sin(phi), 0.0);
  const Vec3d t = (t0 - n * n.dot(t0)).normalized();
  s.frame.n = n;
  s.frame.t = t;
  s.frame.b = n.cross(t);
  s.ax = std::clamp(double(lobe.roughness.value(raw)), kMinAlpha, 1.0);
  s.ay = std::clamp(s.ax * (1.0 - lobe.anisotropy), kMinAlpha, 1.0);
  return s;
}

double schlick(double f0, double cos_theta) {
  const double m = std::clamp(1.0 - cos_theta, 0.0, 1.0);
  const double m2 = m * m;
  return f0 + (1.0 - f0) * m2 * m2 * m;
}

Spectrum eval_microfacet(const Lobe& lobe, const LobeState& s, const Eigen::VectorXf& raw, const Vec3d& wi,
                         const Vec3d& wo) {
  const Vec3d li = s.frame.to_local(wi);
  const Vec3d lo = s.frame.to_local(wo);
  if (li.z() <= 0.0 || lo.z() <= 0.0) return Spectrum::Zero();
  const Vec3d h = (li + lo).normalized();
  const double dg = ggx_d(h, s.ax, s.ay) * ggx_g2(li, lo, s.ax, s.ay) / (4.0 * li.z() * lo.z());
  const double c = std::clamp(li.dot(h), 0.0, 1.0);
  if (lobe.type == LobeType::kConductor) {
    const Eigen::Array3f f0 = lobe.color.value(raw);
    return Spectrum(schlick(f0[0], c), schlick(f0[1], c), schlick(f0[2], c)) * dg;
  }
  const double f0 = 0.04 * lobe.specular.value(raw);
  return Spectrum::Constant(schlick(f0, c) * dg);
}

double microfacet_pdf(const LobeState& s, const Vec3d& wi, const Vec3d& wo) {
  Vec3d h = wi + wo;
  if (h.squaredNorm() < 1e-20) return 0.0;
  h.normalize();
  Vec3d lh = s.frame.to_local(h);
  if (lh.z() < 0.0) lh = -lh;
  const double d = ggx_d(lh, s.ax, s.ay);
  return d * lh.z() / (4.0 * std::abs(wo.dot(h)));
}

}  // namespace

ReferenceMaterial::ReferenceMaterial(MaterialGraph graph, std::shared_ptr<const ParamTextures> textures)
    : graph_(std::move(graph)), textures_(std::move(textures)) {
  if (!textures_) throw std::invalid_argument("ReferenceMaterial: missing textures");
  if (graph_.lobes.empty() || graph_.lobes.size() > 5)
    throw std::invalid_argument("ReferenceMaterial: need between 1 and 5 lobes");
  const int nc = textures_->num_channels();
  for (std::size_t i = 0; i < graph_.lobes.size(); ++i) {
    const auto& l = graph_.lobes[i];
    for (int ch : {l.weight.channel, l.roughness.channel, l.tangent_rotation.channel, l.specular.channel})
      if (ch >= nc) throw std::invalid_argument("ReferenceMaterial: binding references a missing channel");
    if (l.color.channel >= 0 && l.color.channel + 2 >= nc)
      throw std::invalid_argument("ReferenceMaterial: colour binding needs three channels");
    if (l.normal_channel >= 0 &&
        (l.normal_channel >= nc || textures_->channels()[l.normal_channel].kind != ChannelKind::kSlopeX))
      throw std::invalid_argument("ReferenceMaterial: normal binding must reference a slope-x channel");
    if (l.type == LobeType::kLambertian)
      has_diffuse_ = true;
    else
      specular_lobes_.push_back(int(i));
  }
}

Spectrum ReferenceMaterial::eval_raw(const Eigen::VectorXf& raw, const Vec3d& wi, const Vec3d& wo) const {
  if (wi.z() <= 0.0 || wo.z() <= 0.0) return Spectrum::Zero();
  Spectrum result = Spectrum::Zero();
  for (std::size_t i = 0; i < graph_.lobes.size(); ++i) {
    const Lobe& lobe = graph_.lobes[i];
    Spectrum value;
    if (lobe.type == LobeType::kLambertian) {
      value = lobe.color.value(raw).cast<double>() * kInvPi;
    } else {
      value = eval_microfacet(lobe, lobe_state(lobe, raw, *textures_), raw, wi, wo);
    }
    if (i == 0) {
      result = value;
    } else if (lobe.combine == Combine::kMix) {
      const double w = std::clamp(double(lobe.weight.value(raw)), 0.0, 1.0);
      result = (1.0 - w) * result + w * value;
    } else {
      const double f0 = 0.04 * lobe.specular.value(raw);
      result = value + (1.0 - schlick(f0, wi.z())) * (1.0 - schlick(f0, wo.z())) * result;
    }
  }
  return result.max(0.0);
}

double ReferenceMaterial::pdf(const Eigen::VectorXf& raw, const Vec3d& wi, const Vec3d& wo) const {
  const int strategies = int(specular_lobes_.size()) + (has_diffuse_ ? 1 : 0);
  double p = 0.0;
  if (has_diffuse_) p += cosine_hemisphere_pdf<double>(wo);
  for (int li : specular_lobes_) p += microfacet_pdf(lobe_state(graph_.lobes[li], raw, *textures_), wi, wo);
  return p / strategies;
}

ReferenceMaterial::Sample ReferenceMaterial::sample(const Eigen::VectorXf& raw, const Vec3d& wi,
                                                    const Vec3d& u) const {
  const int strategies = int(specular_lobes_.size()) + (has_diffuse_ ? 1 : 0);
  int pick = std::min(strategies - 1, int(u[0] * strategies));
  Sample s;
  const Vec2d u2(u[1], u[2]);
  if (has_diffuse_ && pick == 0) {
    s.wo = sample_cosine_hemisphere<double>(u2);
  } else {
    if (has_diffuse_) --pick;
    const LobeState st = lobe_state(graph_.lobes[specular_lobes_[pick]], raw, *textures_);
    const double r = std::sqrt(std::min(u2[0], 1.0 - 1e-12) / (1.0 - std::min(u2[0], 1.0 - 1e-12)));
    const double phi = 2.0 * kPi * u2[1];
    const Vec3d lh = Vec3d(-st.ax * r * std::cos(phi), -st.ay * r * std::sin(phi), 1.0).normalized();
    s.wo = reflect<double>(wi, st.frame.to_world(lh)).normalized();
  }
  s.pdf = pdf(raw, wi, s.wo);
  s.value = eval_raw(raw, wi, s.wo);
  return s;
}

Spectrum eval_reference(const ReferenceMaterial& mat, const Vec2d& uv, const Vec3d& wi, const Vec3d& wo) {
  return mat.eval(uv, wi, wo);
}

Spectrum eval_mollified(const ReferenceMaterial& mat, const Eigen::VectorXf& raw, const Vec3d& wi, const Vec3d& wo,
                        double cone_angle, int samples, Rng& rng) {
  if (!(cone_angle > 0.0) || samples <= 0) return mat.eval_raw(raw, wi, wo);
  Spectrum sum = Spectrum::Zero();
  for (int s = 0; s < samples; ++s) {
    const Vec3d w = sample_uniform_cone(wo, cone_angle, {rng.uniform(), rng.uniform()});
    sum += mat.eval_raw(raw, wi, w);
  }
  return sum / samples;
}

Spectrum eval_mollified(const ReferenceMaterial& mat, const Vec2d& uv, const Vec3d& wi, const Vec3d& wo,
                        double cone_angle, int samples, Rng& rng) {
  return eval_mollified(mat, mat.textures().sample_raw(uv), wi, wo, cone_angle, samples, rng);
}

Spectrum estimate_albedo(const ReferenceMaterial& mat, const Eigen::VectorXf& raw, const Vec3d& wo, Rng& rng,
                         int samples) {
  Spectrum sum = Spectrum::Zero();
  for (int s = 0; s < samples; ++s) {
    const Vec3d wi = sample_cosine_hemisphere<double>({rng.uniform(), rng.uniform()});
    if (wi.z() <= 0.0) continue;
    // f cos / (cos / pi)
    sum += mat.eval_raw(raw, wo, wi) * kPi;
  }
  return sum / std::max(1, samples);
}

Spectrum estimate_albedo(const ReferenceMaterial& mat, const Vec2d& uv, const Vec3d& wo, Rng& rng, int samples) {
  return estimate_albedo(mat, mat.textures().sample_raw(uv), wo, rng, samples);
}

// --- Built-in materials -------------------------------------------------------------

Image value_noise(int width, int height, int cells, std::uint64_t seed) {
  const int cx = std::max(1, cells);
  const int cy = std::max(1, cells);
  Rng rng(seed, 0x6e6f697365);
  std::vector<double> lattice(std::size_t(cx) * cy);
  for (double& v : lattice) v = rng.uniform();
  auto at = [&](int i, int j) { return lattice[std::size_t(wrap_index(j, cy)) * cx + wrap_index(i, cx)]; };
  auto smooth = [](double t) { return t * t * t * (t * (t * 6 - 15) + 10); };
  Image img(width, height);
  for (int y = 0; y < height; ++y)
    for (int x = 0; x < width; ++x) {
      const double fx = (x + 0.5) / width * cx;
      const double fy = (y + 0.5) / height * cy;
      const int ix = int(std::floor(fx));
      const int iy = int(std::floor(fy));
      const double tx = smooth(fx - ix);
      const double ty = smooth(fy - iy);
      const double a = at(ix, iy) + tx * (at(ix + 1, iy) - at(ix, iy));
      const double b = at(ix, iy + 1) + tx * (at(ix + 1, iy + 1) - at(ix, iy + 1));
      img.at(x, y) = float(a + ty * (b - a));
    }
  return img;
}

namespace {

std::vector<ChannelDesc> plain_channels(std::initializer_list<const char*> names) {
  std::vector<ChannelDesc> out;
  for (const char* n : names) out.push_back({n, ChannelKind::kPlain, -1});
  return out;
}

}  // namespace

ReferenceMaterial make_lambertian_material(const Eigen::Array3f& albedo, int resolution) {
  std::vector<Image> imgs;
  for (int c = 0; c < 3; ++c) imgs.emplace_back(resolution, resolution, albedo[c]);
  auto tex = std::make_shared<const ParamTextures>(plain_channels({"albedo_r", "albedo_g", "albedo_b"}),
                                                   std::move(imgs));
  MaterialGraph g;
  Lobe l;
  l.type = LobeType::kLambertian;
  l.color.channel = 0;
  g.lobes.push_back(l);
  return ReferenceMaterial(std::move(g), std::move(tex));
}

ReferenceMaterial make_conductor_material(const Eigen::Array3f& f0, float alpha, int resolution) {
  std::vector<Image> imgs;
  imgs.emplace_back(resolution, resolution, alpha);
  auto tex = std::make_shared<const ParamTextures>(
      std::vector<ChannelDesc>{{"roughness", ChannelKind::kRoughness, -1}}, std::move(imgs));
  MaterialGraph g;
  Lobe l;
  l.type = LobeType::kConductor;
  l.color.constant = f0;
  l.roughness.channel = 0;
  g.lobes.push_back(l);
  return ReferenceMaterial(std::move(g), std::move(tex));
}

ReferenceMaterial make_layered_material(int resolution, std::uint64_t seed) {
  const int r = resolution;
  enum : int {
    kAlbedoR,
    kAlbedoG,
    kAlbedoB,
    kMetalMask,
    kMetalRoughness,
    kTangentRotation,
    kSlopeX,
    kSlopeY,
    kCoatRoughness,
    kSpecular,
    kChannels
  };
  std::vector<ChannelDesc> ch = {
      {"albedo_r", ChannelKind::kPlain, -1},
      {"albedo_g", ChannelKind::kPlain, -1},
      {"albedo_b", ChannelKind::kPlain, -1},
      {"metal_mask", ChannelKind::kPlain, -1},
      {"metal_roughness", ChannelKind::kRoughness, -1},
      {"tangent_rotation", ChannelKind::kPlain, -1},
      {"coat_slope_x", ChannelKind::kSlopeX, kSlopeY},
      {"coat_slope_y", ChannelKind::kSlopeY, kSlopeX},
      {"coat_roughness", ChannelKind::kRoughness, kSlopeX},
      {"specular", ChannelKind::kPlain, -1},
  };
  std::vector<Image> img(kChannels, Image(r, r));

  const Image tint = value_noise(r, r, 4, seed);
  const Image mask = value_noise(r, r, 3, seed + 1);
  const Image rough = value_noise(r, r, 5, seed + 2);
  const Image rot = value_noise(r, r, 2, seed + 3);
  const Image spec = value_noise(r, r, 6, seed + 4);
  // Bumps elongated along v: strong x slopes, weak y slopes.
  const Image height_x = value_noise(r, r, 16, seed + 5);
  const Image height_y = value_noise(r, r, 4, seed + 6);

  const Eigen::Array3f c0(0.75f, 0.32f, 0.18f);
  const Eigen::Array3f c1(0.18f, 0.35f, 0.62f);
  for (int y = 0; y < r; ++y)
    for (int x = 0; x < r; ++x) {
      const float t = tint.at(x, y);
      const Eigen::Array3f a = c0 + (c1 - c0) * t;
      img[kAlbedoR].at(x, y) = a[0];
      img[kAlbedoG].at(x, y) = a[1];
      img[kAlbedoB].at(x, y) = a[2];
      const float m = std::clamp((mask.at(x, y) - 0.42f) / 0.16f, 0.0f, 1.0f);
      img[kMetalMask].at(x, y) = m * m * (3.0f - 2.0f * m);
      img[kMetalRoughness].at(x, y) = 0.25f + 0.2f * rough.at(x, y);
      img[kTangentRotation].at(x, y) = float(kPi) * rot.at(x, y);
      img[kCoatRoughness].at(x, y) = 0.2f;
      img[kSpecular].at(x, y) = 0.8f + 0.4f * spec.at(x, y);
    }
  // Slopes from central differences of the height fields, in units of height per texel
  // scaled so that the RMS x slope is about 0.25.
  Image sx(r, r);
  Image sy(r, r);
  double rms = 0.0;
  for (int y = 0; y < r; ++y)
    for (int x = 0; x < r; ++x) {
      const float hx = 0.5f * (height_x.wrapped(x + 1, y) - height_x.wrapped(x - 1, y));
      const float hy = 0.5f * (height_y.wrapped(x, y + 1) - height_y.wrapped(x, y - 1));
      sx.at(x, y) = hx;
      sy.at(x, y) = hy;
      rms += double(hx) * hx;
    }
  rms = std::sqrt(rms / (double(r) * r));
  const float scale = rms > 0 ? float(0.25 / rms) : 0.0f;
  for (std::size_t i = 0; i < sx.data.size(); ++i) {
    img[kSlopeX].data[i] = sx.data[i] * scale;
    img[kSlopeY].data[i] = sy.data[i] * scale;
  }

  auto tex = std::make_shared<const ParamTextures>(std::move(ch), std::move(img));

  MaterialGraph g;
  Lobe diffuse;
  diffuse.type = LobeType::kLambertian;
  diffuse.color.channel = kAlbedoR;
  g.lobes.push_back(diffuse);

  Lobe metal;
  metal.type = LobeType::kConductor;
  metal.combine = Combine::kMix;
  metal.weight.channel = kMetalMask;
  metal.color.constant = Eigen::Array3f(0.95f, 0.74f, 0.38f);
  metal.roughness.channel = kMetalRoughness;
  metal.anisotropy = 0.5f;
  metal.tangent_rotation.channel = kTangentRotation;
  g.lobes.push_back(metal);

  Lobe coat;
  coat.type = LobeType::kCoat;
  coat.combine = Combine::kCoat;
  coat.roughness.channel = kCoatRoughness;
  coat.normal_channel = kSlopeX;
  coat.specular.channel = kSpecular;
  g.lobes.push_back(coat);

  return ReferenceMaterial(std::move(g), std::move(tex));
}

}  // namespace neumat
