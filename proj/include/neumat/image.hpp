// Copyright 2026 The neumat Authors.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <vector>

#include "neumat/geom.hpp"

namespace neumat {

/// Row-major float image with 1 or 3 channels; row 0 is the top row.
struct HdrImage {
  int width = 0;
  int height = 0;
  int channels = 3;
  std::vector<float> data;

  HdrImage() = default;
  HdrImage(int w, int h, int c = 3, float fill = 0.0f)
      : width(w), height(h), channels(c), data(std::size_t(w) * h * c, fill) {}

  float* pixel(int x, int y) { return data.data() + (std::size_t(y) * width + x) * channels; }
  const float* pixel(int x, int y) const { return data.data() + (std::size_t(y) * width + x) * channels; }

  Spectrum rgb(int x, int y) const {
    const float* p = pixel(x, y);
    return channels == 1 ? Spectrum::Constant(p[0]) : Spectrum(p[0], p[1], p[2]);
  }
  void set_rgb(int x, int y, const Spectrum& s) {
    float* p = pixel(x, y);
    if (channels == 1) {
      p[0] = float(luminance(s));
      return;
    }
    for (int c = 0; c < 3; ++c) p[c] = float(s[c]);
  }
};

}  // namespace neumat
