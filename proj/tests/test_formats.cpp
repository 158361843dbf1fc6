// Copyright 2026 The neumat Authors.
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "neumat/formats.hpp"

namespace neumat {
namespace {

namespace fs = std::filesystem;

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

NeuralMaterial sample_material(bool with_encoder) {
  NeuralConfig cfg;
  cfg.brdf_hidden = {16, 16};
  cfg.albedo_head = true;
  cfg.seed = 4;
  NeuralMaterial m(cfg, 5, 16, 8);
  Rng rng(5);
  for (int l = 0; l < m.latent.num_levels(); ++l)
    for (Eigen::Index i = 0; i < m.latent.level(l).size(); ++i) m.latent.level(l).data()[i] = float(rng.normal());
  if (!with_encoder) m.encoder.reset();
  return m;
}

class Archive : public ::testing::Test {
 protected:
  void SetUp() override {
    dir_ = fs::temp_directory_path() /
           ("neumat_formats_" + std::string(::testing::UnitTest::GetInstance()->current_test_info()->name()));
    fs::create_directories(dir_);
  }
  void TearDown() override { fs::remove_all(dir_); }
  fs::path dir_;
};

TEST(Pfm, RgbRoundTripIsLossless) {
  HdrImage img(5, 3);
  Rng rng(1);
  for (float& v : img.data) v = float(std::exp(4 * rng.normal()));
  std::stringstream a;
  write_pfm(a, img);
  const std::string bytes = a.str();
  EXPECT_EQ(bytes.substr(0, 3), "PF\n");
  std::stringstream in(bytes);
  const HdrImage back = read_pfm(in);
  EXPECT_EQ(back.width, 5);
  EXPECT_EQ(back.height, 3);
  EXPECT_EQ(back.data, img.data);
  std::stringstream b;
  write_pfm(b, back);
  EXPECT_EQ(b.str(), bytes);
}

TEST(Pfm, GrayscaleHeader) {
  HdrImage img(2, 2, 1, 0.25f);
  img.data[1] = -3.0f;
  std::stringstream s;
  write_pfm(s, img);
  EXPECT_EQ(s.str().substr(0, 3), "Pf\n");
  const HdrImage back = read_pfm(s);
  EXPECT_EQ(back.channels, 1);
  EXPECT_EQ(back.data, img.data);
}

TEST(Pfm, TruncatedDataThrows) {
  HdrImage img(4, 4);
  std::stringstream s;
  write_pfm(s, img);
  std::string bytes = s.str();
  bytes.resize(bytes.size() - 7);
  std::stringstream in(bytes);
  EXPECT_THROW(read_pfm(in), FormatError);
  std::stringstream junk("P6\n4 4\n255\n");
  EXPECT_THROW(read_pfm(junk), FormatError);
}

TEST(MlpBlob, RoundTripIsByteIdentical) {
  const Mlp<float> net({11, 32, 32, 9}, Activation::kLeakyRelu, Activation::kLinear, 6);
  std::stringstream a;
  write_mlp(a, net);
  std::stringstream in(a.str());
  const Mlp<float> back = read_mlp(in);
  ASSERT_EQ(back.num_layers(), 3);
  for (int l = 0; l < 3; ++l) {
    EXPECT_TRUE(back.layer(l).weight == net.layer(l).weight);
    EXPECT_TRUE(back.layer(l).bias == net.layer(l).bias);
  }
  std::stringstream b;
  write_mlp(b, back);
  EXPECT_EQ(b.str(), a.str());
}

TEST(MlpBlob, TruncationAndBadMagicThrow) {
  const Mlp<float> net({4, 8, 3}, Activation::kLeakyRelu, Activation::kLinear, 7);
  std::stringstream a;
  write_mlp(a, net);
  const std::string bytes = a.str();
  for (std::size_t cut : {std::size_t(2), std::size_t(10), bytes.size() / 2, bytes.size() - 1}) {
    std::stringstream in(bytes.substr(0, cut));
    EXPECT_THROW(read_mlp(in), FormatError) << cut;
  }
  std::string bad = bytes;
  bad[0] = 'X';
  std::stringstream in(bad);
  EXPECT_THROW(read_mlp(in), FormatError);
}

TEST(LatentFile, RoundTripWithMaster) {
  const NeuralMaterial m = sample_material(false);
  std::stringstream a;
  write_latent(a, m.latent, true);
  std::stringstream in(a.str());
  const LatentPyramid back = read_latent(in);
  ASSERT_EQ(back.num_levels(), m.latent.num_levels());
  for (int l = 0; l < back.num_levels(); ++l) EXPECT_TRUE(back.level(l) == m.latent.level(l));
  std::stringstream b;
  write_latent(b, back, true);
  EXPECT_EQ(b.str(), a.str());
}

TEST(LatentFile, HalfOnlyStoresRoundedValues) {
  const NeuralMaterial m = sample_material(false);
  std::stringstream a;
  write_latent(a, m.latent, false);
  std::stringstream in(a.str());
  const LatentPyramid back = read_latent(in);
  const LatentPyramid rounded = m.latent.rounded_to_half();
  for (int l = 0; l < back.num_levels(); ++l) EXPECT_TRUE(back.level(l) == rounded.level(l));
  std::stringstream b;
  write_latent(b, back, false);
  EXPECT_EQ(b.str(), a.str());
  std::stringstream cut(a.str().substr(0, a.str().size() - 3));
  EXPECT_THROW(read_latent(cut), FormatError);
}

TEST_F(Archive, RoundTripIsByteIdentical) {
  for (bool encoder : {false, true}) {
    const NeuralMaterial m = sample_material(encoder);
    const fs::path first = dir_ / "a.nmat";
    const fs::path second = dir_ / "b.nmat";
    save_material(first.string(), m);
    nlohmann::json header;
    const NeuralMaterial back = load_material(first.string(), &header);
    EXPECT_EQ(back.encoder.has_value(), encoder);
    EXPECT_EQ(back.config.albedo_head, true);
    EXPECT_EQ(back.param_size, 5);
    EXPECT_TRUE(back.brdf_decoder.layer(1).weight == m.brdf_decoder.layer(1).weight);
    EXPECT_EQ(header["latent_file"].get<std::string>(), "a.nmat.nlat");
    save_material(second.string(), back);
    EXPECT_EQ(slurp(dir_ / "a.nmat.nlat"), slurp(dir_ / "b.nmat.nlat"));
    // The headers differ only in the latent file name.
    std::string a = slurp(first);
    std::string b = slurp(second);
    const auto pos = b.find("b.nmat.nlat");
    ASSERT_NE(pos, std::string::npos);
    b[pos] = 'a';
    EXPECT_EQ(a, b);
  }
}

TEST_F(Archive, TruncationThrows) {
  const NeuralMaterial m = sample_material(false);
  const fs::path p = dir_ / "m.nmat";
  save_material(p.string(), m);
  const std::string bytes = slurp(p);
  for (std::size_t cut : {std::size_t(3), std::size_t(20), bytes.size() / 2, bytes.size() - 1}) {
    std::ofstream(p, std::ios::binary | std::ios::trunc).write(bytes.data(), std::streamsize(cut));
    EXPECT_THROW(load_material(p.string()), FormatError) << cut;
  }
  EXPECT_THROW(load_material((dir_ / "missing.nmat").string()), FormatError);
}

}  // namespace
}  // namespace neumat
