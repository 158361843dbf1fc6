// Copyright 2026 The neumat Authors.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <Eigen/Core>

#include <cstdint>
#include <span>
#include <vector>

#include "neumat/mlp.hpp"

namespace neumat {

inline constexpr float kHalfMax = 65504.0f;

/// Round-to-nearest-even FP16 value of x, clamped to the finite FP16 range.
/// Increments *clamped when clamping happens.
Eigen::half to_half(float x, int* clamped = nullptr);

/// FP16 copy of an Mlp<float> with every parameter packed contiguously in the
/// order a forward pass reads them: layer-major, then output-neuron-major, each
/// neuron's row of input weights followed by its bias.
class QuantizedMlp {
 public:
  static constexpr int kMaxWidth = 256;

  struct LayerShape {
    int in = 0;
    int out = 0;
    Activation activation = Activation::kLinear;
  };

  QuantizedMlp() = default;
  QuantizedMlp(std::vector<LayerShape> shapes, std::vector<Eigen::half> packed);

  int input_size() const { return shapes_.empty() ? 0 : shapes_.front().in; }
  int output_size() const { return shapes_.empty() ? 0 : shapes_.back().out; }
  const std::vector<LayerShape>& shapes() const { return shapes_; }
  std::span<const Eigen::half> packed() const { return packed_; }

  /// Number of parameters that were clamped to +-65504 during quantization.
  int clamp_count() const { return clamp_count_; }

  Mlp<float> dequantize() const;

  /// Single-pass evaluation streaming the packed weights; FP32 accumulation.
  void fused_forward(std::span<const float> input, std::span<float> output) const;

  /// Evaluates `count` samples stored column-major (input_size() floats per sample),
  /// eight samples per pass over the weights.
  void fused_forward_batch(const float* input, float* output, int count) const;

 private:
  friend QuantizedMlp quantize(const Mlp<float>& net);

  std::vector<LayerShape> shapes_;
  std::vector<Eigen::half> packed_;
  int clamp_count_ = 0;
};

QuantizedMlp quantize(const Mlp<float>& net);

}  // namespace neumat
