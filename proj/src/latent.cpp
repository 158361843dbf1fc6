// Copyright 2026 The neumat Authors.
// SPDX-License-Identifier: Apache-2.0

#include "neumat/latent.hpp"

#include <cmath>

#include "neumat/quantized_mlp.hpp"

namespace neumat {

namespace {

int wrap_index(int i, int n) {
  const int r = i % n;
  return r < 0 ? r + n : r;
}

}  // namespace

LatentPyramid::LatentPyramid(int width, int height, int levels) : width_(width), height_(height) {
  if (width <= 0 || height <= 0) throw DimensionError("LatentPyramid: resolution must be positive");
  const int n = levels > 0 ? std::min(levels, full_chain_levels(width, height)) : full_chain_levels(width, height);
  for (int l = 0; l < n; ++l) levels_.push_back(LatentLevel::Zero(kLatentChannels, level_width(l) * level_height(l)));
}

int LatentPyramid::full_chain_levels(int width, int height) {
  int n = 1;
  while ((width >> (n - 1)) > 1 || (height >> (n - 1)) > 1) ++n;
  return n;
}

BilinearTaps LatentPyramid::taps(int level, const Vec2d& uv) const {
  const int w = level_width(level);
  const int h = level_height(level);
  const double fx = uv.x() * w - 0.5;
  const double fy = uv.y() * h - 0.5;
  const double x0 = std::floor(fx);
  const double y0 = std::floor(fy);
  const float tx = float(fx - x0);
  const float ty = float(fy - y0);
  const int ix = wrap_index(int(x0), w);
  const int iy = wrap_index(int(y0), h);
  const int ix1 = wrap_index(int(x0) + 1, w);
  const int iy1 = wrap_index(int(y0) + 1, h);
  BilinearTaps t;
  t.index = {iy * w + ix, iy * w + ix1, iy1 * w + ix, iy1 * w + ix1};
  t.weight = {(1 - tx) * (1 - ty), tx * (1 - ty), (1 - tx) * ty, tx * ty};
  return t;
}

LatentCode LatentPyramid::bilinear(int level, const Vec2d& uv) const {
  const BilinearTaps t = taps(level, uv);
  const auto& m = levels_[level];
  LatentCode z = t.weight[0] * m.col(t.index[0]);
  for (int k = 1; k < 4; ++k) z += t.weight[k] * m.col(t.index[k]);
  return z;
}

int LatentPyramid::choose_level(double level, double u_rr) const {
  const double clamped = std::clamp(level, 0.0, double(num_levels() - 1));
  const double lo = std::floor(clamped);
  const double frac = clamped - lo;
  return int(lo) + (u_rr < frac ? 1 : 0);
}

LatentPyramid::Fetch LatentPyramid::fetch(const LatentQuery& q, double u_rr) const {
  Fetch f;
  f.level = choose_level(q.level, u_rr);
  f.z = bilinear(f.level, q.uv);
  return f;
}

void LatentPyramid::set_zero() {
  for (auto& l : levels_) l.setZero();
}

LatentPyramid LatentPyramid::rounded_to_half(int* clamped) const {
  LatentPyramid out = *this;
  for (auto& l : out.levels_)
    for (Eigen::Index i = 0; i < l.size(); ++i) l.data()[i] = float(to_half(l.data()[i], clamped));
  return out;
}

bool LatentPyramid::all_finite() const {
  for (const auto& l : levels_)
    if (!l.allFinite()) return false;
  return true;
}

float LatentPyramid::max_abs() const {
  float m = 0.0f;
  for (const auto& l : levels_)
    if (l.size() > 0) m = std::max(m, l.cwiseAbs().maxCoeff());
  return m;
}

void accumulate_texel_grads(LatentPyramid& grads, const Vec2d& uv, int level, const LatentCode& z_grad) {
  const BilinearTaps t = grads.taps(level, uv);
  auto& m = grads.level(level);
  for (int k = 0; k < 4; ++k) m.col(t.index[k]) += t.weight[k] * z_grad;
}

LatentPyramid bake_from_encoder(const Mlp<float>& encoder, const ParamTextures& tex) {
  if (encoder.input_size() != tex.param_size())
    throw DimensionError("bake_from_encoder: encoder input does not match the parameter vector");
  if (encoder.output_size() != kLatentChannels) throw DimensionError("bake_from_encoder: encoder must output 8 values");
  LatentPyramid out(tex.width(), tex.height(), tex.num_levels());
  for (int l = 0; l < out.num_levels(); ++l) {
    const int w = out.level_width(l);
    const int h = out.level_height(l);
    Eigen::MatrixXf k(tex.param_size(), std::size_t(w) * h);
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x) k.col(std::size_t(y) * w + x) = tex.texel_params(l, x, y);
    out.level(l) = encoder.forward_batch(k);
  }
  return out;
}

void adam_step(LatentPyramid& latent, const LatentPyramid& grads, LatentAdamState& state, double lr,
               const AdamConfig& cfg) {
  if (state.m.num_levels() != latent.num_levels()) {
    state.m = latent.zeros_like();
    state.v = latent.zeros_like();
    state.step = 0;
  }
  ++state.step;
  for (int l = 0; l < latent.num_levels(); ++l)
    adam_update(latent.level(l), grads.level(l), state.m.level(l), state.v.level(l), state.step, lr, cfg);
}

std::vector<long> magnitude_histogram(const LatentPyramid& latent, int min_exp, int max_exp) {
  std::vector<long> hist(std::size_t(max_exp - min_exp) + 2, 0);
  for (int l = 0; l < latent.num_levels(); ++l) {
    const auto& m = latent.level(l);
    for (Eigen::Index i = 0; i < m.size(); ++i) {
      const float a = std::abs(m.data()[i]);
      if (a < std::ldexp(1.0f, min_exp)) {
        ++hist.front();
        continue;
      }
      const int e = int(std::floor(std::log2(a)));
      if (e >= max_exp)
        ++hist.back();
      else
        ++hist[std::size_t(e - min_exp) + 1];
    }
  }
  return hist;
}

}  // namespace neumat
