// Copyright 2026 The neumat Authors.
// SPDX-License-Identifier: Apache-2.0

#include "neumat/quantized_mlp.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstring>

#if defined(__F16C__) && defined(__AVX2__) && defined(__FMA__)
#include <immintrin.h>
#define NEUMAT_F16C 1
#endif

namespace neumat {

const char* activation_name(Activation a) {
  switch (a) {
    case Activation::kRelu:
      return "relu";
    case Activation::kLeakyRelu:
      return "leaky_relu";
    case Activation::kLinear:
      break;
  }
  return "linear";
}

Activation activation_from_name(const std::string& name) {
  if (name == "relu") return Activation::kRelu;
  if (name == "leaky_relu") return Activation::kLeakyRelu;
  if (name == "linear") return Activation::kLinear;
  throw std::invalid_argument("unknown activation: " + name);
}

Eigen::half to_half(float x, int* clamped) {
  if (std::isfinite(x) && std::abs(x) > kHalfMax) {
    if (clamped) ++*clamped;
    x = std::copysign(kHalfMax, x);
  }
  return Eigen::half(x);
}

QuantizedMlp::QuantizedMlp(std::vector<LayerShape> shapes, std::vector<Eigen::half> packed)
    : shapes_(std::move(shapes)), packed_(std::move(packed)) {
  std::size_t expected = 0;
  for (size_t i = 0; i < shapes_.size(); ++i) {
    const auto& s = shapes_[i];
    if (s.in <= 0 || s.out <= 0 || s.in > kMaxWidth || s.out > kMaxWidth)
      throw DimensionError("QuantizedMlp: layer width out of range");
    if (i > 0 && s.in != shapes_[i - 1].out) throw DimensionError("QuantizedMlp: layers do not chain");
    expected += std::size_t(s.out) * (s.in + 1);
  }
  if (expected != packed_.size()) throw DimensionError("QuantizedMlp: packed size mismatch");
}

QuantizedMlp quantize(const Mlp<float>& net) {
  QuantizedMlp q;
  for (const auto& l : net.layers()) {
    const int in = int(l.weight.cols());
    const int out = int(l.weight.rows());
    if (in > QuantizedMlp::kMaxWidth || out > QuantizedMlp::kMaxWidth)
      throw DimensionError("quantize: layer wider than QuantizedMlp::kMaxWidth");
    q.shapes_.push_back({in, out, l.activation});
    for (int o = 0; o < out; ++o) {
      for (int i = 0; i < in; ++i) q.packed_.push_back(to_half(l.weight(o, i), &q.clamp_count_));
      q.packed_.push_back(to_half(l.bias[o], &q.clamp_count_));
    }
  }
  return q;
}

Mlp<float> QuantizedMlp::dequantize() const {
  std::vector<Mlp<float>::Layer> layers;
  const Eigen::half* p = packed_.data();
  for (const auto& s : shapes_) {
    Mlp<float>::Layer l;
    l.weight.resize(s.out, s.in);
    l.bias.resize(s.out);
    l.activation = s.activation;
    for (int o = 0; o < s.out; ++o) {
      for (int i = 0; i < s.in; ++i) l.weight(o, i) = float(*p++);
      l.bias[o] = float(*p++);
    }
    layers.push_back(std::move(l));
  }
  return Mlp<float>(std::move(layers));
}

namespace {

inline float apply(Activation a, float x) { return activate(a, x); }

// Dot product of `n` packed halves with `x`.
inline float dot_half(const Eigen::half* w, const float* x, int n) {
#ifdef NEUMAT_F16C
  __m256 acc = _mm256_setzero_ps();
  int i = 0;
  for (; i + 8 <= n; i += 8) {
    const __m256 wf = _mm256_cvtph_ps(_mm_loadu_si128(reinterpret_cast<const __m128i*>(w + i)));
    acc = _mm256_fmadd_ps(wf, _mm256_loadu_ps(x + i), acc);
  }
  __m128 lo = _mm_add_ps(_mm256_castps256_ps128(acc), _mm256_extractf128_ps(acc, 1));
  lo = _mm_hadd_ps(lo, lo);
  lo = _mm_hadd_ps(lo, lo);
  float sum = _mm_cvtss_f32(lo);
  for (; i < n; ++i) sum += float(w[i]) * x[i];
  return sum;
#else
  float sum = 0.0f;
  for (int i = 0; i < n; ++i) sum += float(w[i]) * x[i];
  return sum;
#endif
}

}  // namespace

void QuantizedMlp::fused_forward(std::span<const float> input, std::span<float> output) const {
  if (int(input.size()) != input_size() || int(output.size()) != output_size())
    throw DimensionError("QuantizedMlp::fused_forward: size mismatch");
  alignas(32) std::array<float, kMaxWidth + 8> a{};
  alignas(32) std::array<float, kMaxWidth + 8> b{};
  // Inputs are rounded to FP16 like the weights.
  for (size_t i = 0; i < input.size(); ++i) a[i] = float(Eigen::half(input[i]));
  const Eigen::half* p = packed_.data();
  float* cur = a.data();
  float* next = b.data();
  for (const auto& s : shapes_) {
    for (int o = 0; o < s.out; ++o) {
      const float z = dot_half(p, cur, s.in) + float(p[s.in]);
      next[o] = apply(s.activation, z);
      p += s.in + 1;
    }
    std::swap(cur, next);
  }
  std::copy_n(cur, output.size(), output.begin());
}

#ifdef NEUMAT_F16C
namespace {

constexpr int kBlockLanes = 32;  // samples per block: four 8-wide registers

inline __m256 activate8(Activation a, __m256 x) {
  if (a == Activation::kLeakyRelu) return _mm256_max_ps(x, _mm256_mul_ps(x, _mm256_set1_ps(kLeakySlope)));
  if (a == Activation::kRelu) return _mm256_max_ps(x, _mm256_setzero_ps());
  return x;
}

inline __m256 half8(const Eigen::half& h) { return _mm256_set1_ps(_cvtsh_ss(h.x)); }

// One layer over a 32-sample block stored as [input][lane]. Two output rows share
// every activation load, and each converted weight feeds four FMAs.
void layer_block(const Eigen::half* p, const QuantizedMlp::LayerShape& s, const float* cur, float* next) {
  const int stride = s.in + 1;
  int o = 0;
  for (; o + 2 <= s.out; o += 2) {
    const Eigen::half* w0 = p + std::size_t(o) * stride;
    const Eigen::half* w1 = w0 + stride;
    __m256 a0 = half8(w0[s.in]), a1 = a0, a2 = a0, a3 = a0;
    __m256 b0 = half8(w1[s.in]), b1 = b0, b2 = b0, b3 = b0;
    for (int i = 0; i < s.in; ++i) {
      const float* x = cur + i * kBlockLanes;
      const __m256 x0 = _mm256_load_ps(x), x1 = _mm256_load_ps(x + 8), x2 = _mm256_load_ps(x + 16),
                   x3 = _mm256_load_ps(x + 24);
      const __m256 u = half8(w0[i]);
      const __m256 v = half8(w1[i]);
      a0 = _mm256_fmadd_ps(u, x0, a0);
      a1 = _mm256_fmadd_ps(u, x1, a1);
      a2 = _mm256_fmadd_ps(u, x2, a2);
      a3 = _mm256_fmadd_ps(u, x3, a3);
      b0 = _mm256_fmadd_ps(v, x0, b0);
      b1 = _mm256_fmadd_ps(v, x1, b1);
      b2 = _mm256_fmadd_ps(v, x2, b2);
      b3 = _mm256_fmadd_ps(v, x3, b3);
    }
    float* y = next + o * kBlockLanes;
    _mm256_store_ps(y, activate8(s.activation, a0));
    _mm256_store_ps(y + 8, activate8(s.activation, a1));
    _mm256_store_ps(y + 16, activate8(s.activation, a2));
    _mm256_store_ps(y + 24, activate8(s.activation, a3));
    _mm256_store_ps(y + 32, activate8(s.activation, b0));
    _mm256_store_ps(y + 40, activate8(s.activation, b1));
    _mm256_store_ps(y + 48, activate8(s.activation, b2));
    _mm256_store_ps(y + 56, activate8(s.activation, b3));
  }
  for (; o < s.out; ++o) {
    const Eigen::half* w = p + std::size_t(o) * stride;
    __m256 a0 = half8(w[s.in]), a1 = a0, a2 = a0, a3 = a0;
    for (int i = 0; i < s.in; ++i) {
      const float* x = cur + i * kBlockLanes;
      const __m256 u = half8(w[i]);
      a0 = _mm256_fmadd_ps(u, _mm256_load_ps(x), a0);
      a1 = _mm256_fmadd_ps(u, _mm256_load_ps(x + 8), a1);
      a2 = _mm256_fmadd_ps(u, _mm256_load_ps(x + 16), a2);
      a3 = _mm256_fmadd_ps(u, _mm256_load_ps(x + 24), a3);
    }
    float* y = next + o * kBlockLanes;
    _mm256_store_ps(y, activate8(s.activation, a0));
    _mm256_store_ps(y + 8, activate8(s.activation, a1));
    _mm256_store_ps(y + 16, activate8(s.activation, a2));
    _mm256_store_ps(y + 24, activate8(s.activation, a3));
  }
}

}  // namespace

void QuantizedMlp::fused_forward_batch(const float* input, float* output, int count) const {
  const int in0 = input_size();
  const int outn = output_size();
  alignas(32) std::array<float, kMaxWidth * kBlockLanes> a{};
  alignas(32) std::array<float, kMaxWidth * kBlockLanes> b{};
  for (int base = 0; base < count; base += kBlockLanes) {
    const int lanes = std::min(kBlockLanes, count - base);
    for (int i = 0; i < in0; ++i)
      for (int l = 0; l < kBlockLanes; ++l)
        a[i * kBlockLanes + l] = l < lanes ? float(Eigen::half(input[(base + l) * in0 + i])) : 0.0f;
    const Eigen::half* p = packed_.data();
    float* cur = a.data();
    float* next = b.data();
    for (const auto& s : shapes_) {
      layer_block(p, s, cur, next);
      p += std::size_t(s.out) * (s.in + 1);
      std::swap(cur, next);
    }
    for (int l = 0; l < lanes; ++l)
      for (int o = 0; o < outn; ++o) output[(base + l) * outn + o] = cur[o * kBlockLanes + l];
  }
}
#else
void QuantizedMlp::fused_forward_batch(const float* input, float* output, int count) const {
  constexpr int kLanes = 8;
  const int in0 = input_size();
  const int outn = output_size();
  std::array<float, kMaxWidth * kLanes> a{};
  std::array<float, kMaxWidth * kLanes> b{};
  for (int base = 0; base < count; base += kLanes) {
    const int lanes = std::min(kLanes, count - base);
    for (int i = 0; i < in0; ++i)
      for (int l = 0; l < kLanes; ++l)
        a[i * kLanes + l] = l < lanes ? float(Eigen::half(input[(base + l) * in0 + i])) : 0.0f;
    const Eigen::half* p = packed_.data();
    float* cur = a.data();
    float* next = b.data();
    for (const auto& s : shapes_) {
      for (int o = 0; o < s.out; ++o) {
        float acc[kLanes];
        const float bias = float(p[s.in]);
        for (int l = 0; l < kLanes; ++l) acc[l] = bias;
        for (int i = 0; i < s.in; ++i) {
          const float w = float(p[i]);
          for (int l = 0; l < kLanes; ++l) acc[l] += w * cur[i * kLanes + l];
        }
        for (int l = 0; l < kLanes; ++l) next[o * kLanes + l] = apply(s.activation, acc[l]);
        p += s.in + 1;
      }
      std::swap(cur, next);
    }
    for (int l = 0; l < lanes; ++l)
      for (int o = 0; o < outn; ++o) output[(base + l) * outn + o] = cur[o * kLanes + l];
  }
}
#endif

}  // namespace neumat
