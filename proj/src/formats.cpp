// Copyright 2026 The neumat Authors.
// SPDX-License-Identifier: Apache-2.0

#include "neumat/formats.hpp"

#include <bit>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "neumat/quantized_mlp.hpp"

namespace neumat {

static_assert(std::endian::native == std::endian::little, "codecs assume a little-endian host");

namespace {

constexpr std::uint32_t kMlpVersion = 1;
constexpr std::uint32_t kLatentVersion = 1;
constexpr std::uint32_t kArchiveVersion = 1;

template <typename T>
void put(std::ostream& out, T v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T get(std::istream& in) {
  T v{};
  if (!in.read(reinterpret_cast<char*>(&v), sizeof(T))) throw FormatError("unexpected end of data");
  return v;
}

void expect_magic(std::istream& in, const char (&magic)[5]) {
  char buf[4];
  if (!in.read(buf, 4) || std::memcmp(buf, magic, 4) != 0)
    throw FormatError(std::string("bad magic, expected ") + magic);
}

std::ofstream open_out(const std::string& path) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw FormatError("cannot open " + path + " for writing");
  return f;
}

std::ifstream open_in(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw FormatError("cannot open " + path);
  return f;
}

}  // namespace

// --- PFM ----------------------------------------------------------------------------

void write_pfm(std::ostream& out, const HdrImage& img) {
  if (img.channels != 1 && img.channels != 3) throw FormatError("PFM supports 1 or 3 channels");
  out << (img.channels == 3 ? "PF" : "Pf") << '\n' << img.width << ' ' << img.height << '\n' << "-1.0" << '\n';
  const std::size_t row = std::size_t(img.width) * img.channels;
  for (int y = img.height - 1; y >= 0; --y)
    out.write(reinterpret_cast<const char*>(img.data.data() + std::size_t(y) * row), std::streamsize(row * 4));
  if (!out) throw FormatError("PFM write failed");
}

HdrImage read_pfm(std::istream& in) {
  std::string tag;
  int w = 0;
  int h = 0;
  double scale = 0.0;
  if (!(in >> tag >> w >> h >> scale)) throw FormatError("PFM: malformed header");
  if (tag != "PF" && tag != "Pf") throw FormatError("PFM: unknown type " + tag);
  if (w <= 0 || h <= 0 || w > (1 << 16) || h > (1 << 16)) throw FormatError("PFM: bad dimensions");
  if (scale >= 0.0) throw FormatError("PFM: big-endian data is not supported");
  in.get();  // single whitespace after the scale
  HdrImage img(w, h, tag == "PF" ? 3 : 1);
  const std::size_t row = std::size_t(w) * img.channels;
  for (int y = h - 1; y >= 0; --y)
    if (!in.read(reinterpret_cast<char*>(img.data.data() + std::size_t(y) * row), std::streamsize(row * 4)))
      throw FormatError("PFM: truncated pixel data");
  return img;
}

void write_pfm(const std::string& path, const HdrImage& img) {
  auto f = open_out(path);
  write_pfm(f, img);
}

HdrImage read_pfm(const std::string& path) {
  auto f = open_in(path);
  return read_pfm(f);
}

// --- MLP blob -----------------------------------------------------------------------

void write_mlp(std::ostream& out, const Mlp<float>& net) {
  out.write("NMLP", 4);
  put<std::uint32_t>(out, kMlpVersion);
  put<std::uint32_t>(out, std::uint32_t(net.num_layers()));
  for (const auto& l : net.layers()) {
    put<std::uint32_t>(out, std::uint32_t(l.weight.cols()));
    put<std::uint32_t>(out, std::uint32_t(l.weight.rows()));
    put<std::uint8_t>(out, std::uint8_t(l.activation));
  }
  put<std::uint64_t>(out, net.parameter_count());
  for (const auto& l : net.layers()) {
    for (Eigen::Index r = 0; r < l.weight.rows(); ++r)
      for (Eigen::Index c = 0; c < l.weight.cols(); ++c) put<float>(out, l.weight(r, c));
    for (Eigen::Index r = 0; r < l.bias.size(); ++r) put<float>(out, l.bias[r]);
  }
  const QuantizedMlp q = quantize(net);
  put<std::uint64_t>(out, q.packed().size());
  for (const Eigen::half h : q.packed()) put<std::uint16_t>(out, std::bit_cast<std::uint16_t>(h));
  if (!out) throw FormatError("MLP blob write failed");
}

Mlp<float> read_mlp(std::istream& in) {
  expect_magic(in, "NMLP");
  if (get<std::uint32_t>(in) != kMlpVersion) throw FormatError("MLP blob: unsupported version");
  const std::uint32_t n = get<std::uint32_t>(in);
  if (n == 0 || n > 64) throw FormatError("MLP blob: bad layer count");
  std::vector<Mlp<float>::Layer> layers(n);
  std::uint64_t expected = 0;
  for (auto& l : layers) {
    const std::uint32_t fan_in = get<std::uint32_t>(in);
    const std::uint32_t fan_out = get<std::uint32_t>(in);
    const std::uint8_t act = get<std::uint8_t>(in);
    if (fan_in == 0 || fan_out == 0 || fan_in > 4096 || fan_out > 4096) throw FormatError("MLP blob: bad layer size");
    if (act > std::uint8_t(Activation::kLeakyRelu)) throw FormatError("MLP blob: unknown activation");
    l.weight.resize(fan_out, fan_in);
    l.bias.resize(fan_out);
    l.activation = Activation(act);
    expected += std::uint64_t(fan_in + 1) * fan_out;
  }
  if (get<std::uint64_t>(in) != expected) throw FormatError("MLP blob: parameter count mismatch");
  for (auto& l : layers) {
    for (Eigen::Index r = 0; r < l.weight.rows(); ++r)
      for (Eigen::Index c = 0; c < l.weight.cols(); ++c) l.weight(r, c) = get<float>(in);
    for (Eigen::Index r = 0; r < l.bias.size(); ++r) l.bias[r] = get<float>(in);
  }
  if (get<std::uint64_t>(in) != expected) throw FormatError("MLP blob: packed section size mismatch");
  for (std::uint64_t i = 0; i < expected; ++i) get<std::uint16_t>(in);
  try {
    return Mlp<float>(std::move(layers));
  } catch (const DimensionError& e) {
    throw FormatError(std::string("MLP blob: ") + e.what());
  }
}

// --- Latent pyramid -----------------------------------------------------------------

void write_latent(std::ostream& out, const LatentPyramid& latent, bool with_master) {
  out.write("NLAT", 4);
  put<std::uint32_t>(out, kLatentVersion);
  put<std::uint32_t>(out, std::uint32_t(latent.width()));
  put<std::uint32_t>(out, std::uint32_t(latent.height()));
  put<std::uint32_t>(out, std::uint32_t(latent.num_levels()));
  put<std::uint32_t>(out, std::uint32_t(kLatentChannels));
  put<std::uint32_t>(out, with_master ? 1u : 0u);
  for (int l = 0; l < latent.num_levels(); ++l) {
    const auto& m = latent.level(l);
    for (int plane = 0; plane < 2; ++plane)
      for (Eigen::Index t = 0; t < m.cols(); ++t)
        for (int c = 0; c < 4; ++c) put<std::uint16_t>(out, std::bit_cast<std::uint16_t>(to_half(m(4 * plane + c, t))));
  }
  if (with_master)
    for (int l = 0; l < latent.num_levels(); ++l) {
      const auto& m = latent.level(l);
      out.write(reinterpret_cast<const char*>(m.data()), std::streamsize(m.size() * sizeof(float)));
    }
  if (!out) throw FormatError("latent write failed");
}

LatentPyramid read_latent(std::istream& in) {
  expect_magic(in, "NLAT");
  if (get<std::uint32_t>(in) != kLatentVersion) throw FormatError("latent file: unsupported version");
  const std::uint32_t w = get<std::uint32_t>(in);
  const std::uint32_t h = get<std::uint32_t>(in);
  const std::uint32_t levels = get<std::uint32_t>(in);
  const std::uint32_t channels = get<std::uint32_t>(in);
  const std::uint32_t flags = get<std::uint32_t>(in);
  if (w == 0 || h == 0 || w > 16384 || h > 16384) throw FormatError("latent file: bad resolution");
  if (channels != kLatentChannels) throw FormatError("latent file: expected 8 channels");
  if (levels == 0 || int(levels) > LatentPyramid::full_chain_levels(int(w), int(h)))
    throw FormatError("latent file: bad level count");
  if (flags > 1) throw FormatError("latent file: unknown flags");
  LatentPyramid latent(static_cast<int>(w), static_cast<int>(h), static_cast<int>(levels));
  for (int l = 0; l < latent.num_levels(); ++l) {
    auto& m = latent.level(l);
    for (int plane = 0; plane < 2; ++plane)
      for (Eigen::Index t = 0; t < m.cols(); ++t)
        for (int c = 0; c < 4; ++c)
          m(4 * plane + c, t) = float(std::bit_cast<Eigen::half>(get<std::uint16_t>(in)));
  }
  if (flags & 1u)
    for (int l = 0; l < latent.num_levels(); ++l) {
      auto& m = latent.level(l);
      if (!in.read(reinterpret_cast<char*>(m.data()), std::streamsize(m.size() * sizeof(float))))
        throw FormatError("latent file: truncated master section");
    }
  if (!latent.all_finite()) throw FormatError("latent file: non-finite texels");
  return latent;
}

// --- Archive ------------------------------------------------------------------------

namespace {

const char* sampler_name(SamplerKind k) { return k == SamplerKind::kIsotropic ? "isotropic" : "full"; }

std::string blob_of(const Mlp<float>& net) {
  std::ostringstream s(std::ios::binary);
  write_mlp(s, net);
  return s.str();
}

void put_section(std::ostream& out, const std::string& bytes) {
  put<std::uint64_t>(out, bytes.size());
  out.write(bytes.data(), std::streamsize(bytes.size()));
}

Mlp<float> get_section(std::istream& in) {
  const std::uint64_t n = get<std::uint64_t>(in);
  if (n > (1u << 28)) throw FormatError("archive: section too large");
  std::string bytes(n, '\0');
  if (!in.read(bytes.data(), std::streamsize(n))) throw FormatError("archive: truncated section");
  std::istringstream s(bytes, std::ios::binary);
  return read_mlp(s);
}

std::string latent_path_for(const std::string& archive) {
  return std::filesystem::path(archive).filename().string() + ".nlat";
}

}  // namespace

nlohmann::json material_header(const NeuralMaterial& mat) {
  nlohmann::json j;
  j["format"] = "neumat-material";
  j["latent_channels"] = kLatentChannels;
  j["frames"] = mat.config.learned_frames ? kNumFrames : 0;
  j["learned_frames"] = mat.config.learned_frames;
  j["albedo_head"] = mat.config.albedo_head;
  j["sampler"] = sampler_name(mat.config.sampler);
  j["brdf_hidden"] = mat.config.brdf_hidden;
  j["sampler_hidden"] = mat.config.sampler_hidden;
  j["encoder_hidden"] = mat.config.encoder_hidden;
  j["brdf_arch"] = mat.brdf_decoder.hidden_shape();
  j["sampler_arch"] = mat.sampler_decoder.hidden_shape();
  j["encoder_arch"] = mat.encoder ? mat.encoder->hidden_shape() : std::string();
  j["param_size"] = mat.param_size;
  j["seed"] = mat.config.seed;
  j["has_encoder"] = mat.encoder.has_value();
  j["latent"] = {{"width", mat.latent.width()}, {"height", mat.latent.height()}, {"levels", mat.latent.num_levels()}};
  return j;
}

void save_material(const std::string& path, const NeuralMaterial& mat, const nlohmann::json& extra) {
  nlohmann::json header = material_header(mat);
  header["latent_file"] = latent_path_for(path);
  if (!extra.is_null()) header["extra"] = extra;
  const std::string text = header.dump();
  {
    auto out = open_out(path);
    out.write("NMAT", 4);
    put<std::uint32_t>(out, kArchiveVersion);
    put<std::uint64_t>(out, text.size());
    out.write(text.data(), std::streamsize(text.size()));
    put_section(out, blob_of(mat.frame_layer));
    put_section(out, blob_of(mat.brdf_decoder));
    put_section(out, blob_of(mat.sampler_decoder));
    if (mat.encoder) put_section(out, blob_of(*mat.encoder));
    if (!out) throw FormatError("archive write failed: " + path);
  }
  const auto latent_path = std::filesystem::path(path).parent_path() / latent_path_for(path);
  auto out = open_out(latent_path.string());
  write_latent(out, mat.latent, true);
}

NeuralMaterial load_material(const std::string& path, nlohmann::json* header_out) {
  auto in = open_in(path);
  expect_magic(in, "NMAT");
  if (get<std::uint32_t>(in) != kArchiveVersion) throw FormatError("archive: unsupported version");
  const std::uint64_t len = get<std::uint64_t>(in);
  if (len > (1u << 24)) throw FormatError("archive: header too large");
  std::string text(len, '\0');
  if (!in.read(text.data(), std::streamsize(len))) throw FormatError("archive: truncated header");
  nlohmann::json h;
  try {
    h = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("archive: bad header: ") + e.what());
  }
  NeuralMaterial mat;
  try {
    if (h.at("latent_channels").get<int>() != kLatentChannels) throw FormatError("archive: expected 8 latent channels");
    mat.config.learned_frames = h.at("learned_frames").get<bool>();
    mat.config.albedo_head = h.at("albedo_head").get<bool>();
    mat.config.sampler = h.at("sampler").get<std::string>() == "isotropic" ? SamplerKind::kIsotropic : SamplerKind::kFull;
    mat.config.brdf_hidden = h.at("brdf_hidden").get<std::vector<int>>();
    mat.config.sampler_hidden = h.at("sampler_hidden").get<std::vector<int>>();
    mat.config.encoder_hidden = h.at("encoder_hidden").get<std::vector<int>>();
    mat.config.seed = h.at("seed").get<std::uint64_t>();
    mat.param_size = h.at("param_size").get<int>();
    mat.frame_layer = get_section(in);
    mat.brdf_decoder = get_section(in);
    mat.sampler_decoder = get_section(in);
    if (h.at("has_encoder").get<bool>()) mat.encoder = get_section(in);
    const auto latent_path = std::filesystem::path(path).parent_path() / h.at("latent_file").get<std::string>();
    auto lin = open_in(latent_path.string());
    mat.latent = read_latent(lin);
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("archive: bad header field: ") + e.what());
  }
  const int in_expected = kLatentChannels + (mat.config.learned_frames ? 2 * kFrameRows : 6);
  if (mat.brdf_decoder.input_size() != in_expected || mat.brdf_decoder.output_size() != mat.brdf_outputs())
    throw FormatError("archive: BRDF decoder shape does not match the header");
  if (mat.sampler_decoder.input_size() != kLatentChannels + 3 ||
      mat.sampler_decoder.output_size() !=
          (mat.isotropic_sampler() ? kIsotropicProxyOutputs : kProxyOutputs))
    throw FormatError("archive: sampler decoder shape does not match the header");
  if (mat.config.learned_frames &&
      (mat.frame_layer.input_size() != kLatentChannels || mat.frame_layer.output_size() != kFrameOutputs))
    throw FormatError("archive: frame layer shape mismatch");
  if (header_out) *header_out = h;
  return mat;
}

}  // namespace neumat
