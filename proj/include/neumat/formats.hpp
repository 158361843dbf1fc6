// Copyright 2026 The neumat Authors.
// SPDX-License-Identifier: Apache-2.0

// Binary codecs: PFM images, MLP weight blobs, latent pyramids and the
// neural-material archive. All multi-byte values are little-endian.

#pragma once

#include <iosfwd>
#include <stdexcept>
#include <string>

#include "json.hpp"

#include "neumat/image.hpp"
#include "neumat/latent.hpp"
#include "neumat/mlp.hpp"
#include "neumat/neural_brdf.hpp"

namespace neumat {

class FormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// PFM ("PF" for RGB, "Pf" for grayscale) with scale -1.0; rows stored bottom-up.
void write_pfm(std::ostream& out, const HdrImage& img);
HdrImage read_pfm(std::istream& in);
void write_pfm(const std::string& path, const HdrImage& img);
HdrImage read_pfm(const std::string& path);

/// "NMLP" blob: version, layer count, (in, out, activation) per layer, FP32 master
/// parameters (per layer: weights row-major, then bias), then the FP16 packed copy.
void write_mlp(std::ostream& out, const Mlp<float>& net);
Mlp<float> read_mlp(std::istream& in);

/// "NLAT" file: W, H, L, C, flags, then per level two FP16 planes of four interleaved
/// channels (0-3 and 4-7); flag bit 0 appends the FP32 master copy.
void write_latent(std::ostream& out, const LatentPyramid& latent, bool with_master = true);
LatentPyramid read_latent(std::istream& in);

/// Archive "NMAT": JSON header followed by length-prefixed MLP blobs (frame layer,
/// BRDF decoder, sampler decoder, optional encoder). The latent pyramid lives in a
/// sibling file named in the header ("latent_file").
void save_material(const std::string& path, const NeuralMaterial& mat, const nlohmann::json& extra = {});
NeuralMaterial load_material(const std::string& path, nlohmann::json* header = nullptr);

nlohmann::json material_header(const NeuralMaterial& mat);

}  // namespace neumat
