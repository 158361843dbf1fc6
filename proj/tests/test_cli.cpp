// Copyright 2026 The neumat Authors.
// SPDX-License-Identifier: Apache-2.0

// Runs the neumat executable as a subprocess and checks exit codes and outputs.

#include <gtest/gtest.h>
#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "json.hpp"
#include "neumat/formats.hpp"
#include "neumat/scene_io.hpp"

#ifndef NEUMAT_CLI_PATH
#error "NEUMAT_CLI_PATH must point at the neumat executable"
#endif

namespace neumat {
namespace {

namespace fs = std::filesystem;
using nlohmann::json;

class Cli : public ::testing::Test {
 protected:
  void SetUp() override {
    dir_ = fs::temp_directory_path() /
           ("neumat_cli_" + std::string(::testing::UnitTest::GetInstance()->current_test_info()->name()));
    fs::remove_all(dir_);
    fs::create_directories(dir_);
  }
  void TearDown() override { fs::remove_all(dir_); }

  // Exit status of `neumat args`; stdout goes to out_.
  int run(const std::string& args) {
    const std::string cmd = std::string(NEUMAT_CLI_PATH) + " " + args + " > " + (dir_ / "stdout.txt").string() +
                            " 2> " + (dir_ / "stderr.txt").string();
    const int status = std::system(cmd.c_str());
    std::ifstream in(dir_ / "stdout.txt");
    std::stringstream ss;
    ss << in.rdbuf();
    out_ = ss.str();
    return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  }

  fs::path write_json(const std::string& name, const json& j) {
    const fs::path p = dir_ / name;
    std::ofstream(p) << j.dump(2);
    return p;
  }

  json toy_job(long iterations) const {
    return {{"material", {{"builtin", "lambertian"}, {"albedo", 0.5}, {"resolution", 16}}},
            {"network", {{"albedo_head", true}, {"seed", 3}}},
            {"train", {{"iterations", iterations}, {"batch_size", 1024}, {"log_window", 200}, {"seed", 3}}},
            {"output", (dir_ / "toy.nmat").string()}};
  }

  fs::path dir_;
  std::string out_;
};

TEST_F(Cli, MissingSubcommandOrFileIsInputError) {
  EXPECT_EQ(run(""), 2);
  EXPECT_EQ(run("train --config " + (dir_ / "nope.json").string()), 2);
  EXPECT_EQ(run("validate --material " + (dir_ / "nope.nmat").string()), 2);
  EXPECT_EQ(run("render --scene " + (dir_ / "nope.json").string() + " --out x.pfm"), 2);
}

TEST_F(Cli, InvalidConfigIsInputError) {
  json job = toy_job(10);
  job["train"]["batch_size"] = -4;
  EXPECT_EQ(run("train --config " + write_json("bad.json", job).string()), 2);
  job = toy_job(10);
  job["network"]["brdf_hidden"] = {0};
  EXPECT_EQ(run("train --config " + write_json("bad2.json", job).string()), 2);
}

TEST_F(Cli, ZeroIterationsWritesInitialization) {
  EXPECT_EQ(run("train --config " + write_json("job.json", toy_job(0)).string()), 0);
  const NeuralMaterial saved = load_material((dir_ / "toy.nmat").string());
  const ReferenceMaterial ref = make_lambertian_material({0.5f, 0.5f, 0.5f}, 16);
  NeuralConfig net;
  net.albedo_head = true;
  net.seed = 3;
  const ParamTextures& tex = ref.textures();
  const NeuralMaterial init(net, tex.param_size(), tex.width(), tex.height(), tex.num_levels());
  ASSERT_TRUE(saved.encoder.has_value());
  for (int l = 0; l < init.brdf_decoder.num_layers(); ++l)
    EXPECT_TRUE(saved.brdf_decoder.layer(l).weight == init.brdf_decoder.layer(l).weight);
  for (int l = 0; l < init.encoder->num_layers(); ++l)
    EXPECT_TRUE(saved.encoder->layer(l).weight == init.encoder->layer(l).weight);
  EXPECT_TRUE(saved.sampler_decoder.layer(0).bias == init.sampler_decoder.layer(0).bias);
  EXPECT_TRUE(saved.frame_layer.layer(0).weight == init.frame_layer.layer(0).weight);
}

TEST_F(Cli, DivergenceExitsWithNumericErrorAndDump) {
  json job = toy_job(20);
  job["train"]["lr"] = 1e30;
  job["train"]["batch_size"] = 32;
  EXPECT_EQ(run("train --config " + write_json("job.json", job).string()), 3);
  const fs::path dump = dir_ / "toy.nmat.diverged.json";
  ASSERT_TRUE(fs::exists(dump));
  std::ifstream in(dump);
  const json j = json::parse(in);
  EXPECT_TRUE(j.contains("error"));
}

TEST_F(Cli, ToyLambertianTrainsValidatesAndBenches) {
  ASSERT_EQ(run("train --config " + write_json("job.json", toy_job(2000)).string()), 0);
  const json summary = json::parse(out_);
  EXPECT_TRUE(summary["baked"].get<bool>());

  // Final loss row of the CSV.
  std::ifstream csv(dir_ / "toy.nmat.loss.csv");
  std::string line, last;
  std::getline(csv, line);
  EXPECT_EQ(line, "iteration,brdf_l1log,kl,albedo_l2");
  while (std::getline(csv, line))
    if (!line.empty()) last = line;
  std::stringstream row(last);
  std::string iteration, l1log;
  std::getline(row, iteration, ',');
  std::getline(row, l1log, ',');
  EXPECT_EQ(iteration, "1999");
  EXPECT_LT(std::stod(l1log), 0.01);

  const std::string archive = (dir_ / "toy.nmat").string();
  ASSERT_EQ(run("validate --material " + archive), 0);
  const json report = json::parse(out_);
  EXPECT_TRUE(report["passed"].get<bool>()) << out_;

  ASSERT_EQ(run("bench --material " + archive + " -n 100000 --threads 1"), 0);
  const json one = json::parse(out_);
  for (const char* path : {"naive_fp32", "fused_fp16", "batched_fused_fp16"})
    EXPECT_GT(one[path]["evals_per_second"].get<double>(), 0.0) << path;
  ASSERT_EQ(run("bench --material " + archive + " -n 100000 --threads 8"), 0);
  const json eight = json::parse(out_);
  EXPECT_EQ(one["checksum"], eight["checksum"]);
  EXPECT_EQ(one["max_rel_diff_fused"], eight["max_rel_diff_fused"]);

  ASSERT_EQ(run("inspect --material " + archive), 0);
  const json info = json::parse(out_);
  EXPECT_EQ(info["networks"]["brdf"]["layers"].size(), 3u);
  EXPECT_EQ(info["quantization_clamps"].get<int>(), 0);
}

TEST_F(Cli, BenchRejectsSmallN) {
  NeuralConfig cfg;
  const NeuralMaterial m(cfg, 4, 8, 8);
  save_material((dir_ / "m.nmat").string(), m);
  EXPECT_EQ(run("bench --material " + (dir_ / "m.nmat").string() + " -n 1000"), 2);
}

TEST_F(Cli, LargeWeightsReportClampWarning) {
  NeuralConfig cfg;
  NeuralMaterial m(cfg, 4, 8, 8);
  m.encoder.reset();
  m.brdf_decoder.weight(0).setConstant(1e6f);
  save_material((dir_ / "big.nmat").string(), m);
  ASSERT_EQ(run("validate --material " + (dir_ / "big.nmat").string()), 0);
  const json report = json::parse(out_);
  bool clamp = false;
  for (const auto& w : report["warnings"]) clamp |= w.get<std::string>().find("clamp") != std::string::npos;
  EXPECT_TRUE(clamp) << report["warnings"].dump();
}

TEST_F(Cli, TruncatedArchiveIsInputError) {
  NeuralConfig cfg;
  const NeuralMaterial m(cfg, 4, 8, 8);
  const fs::path p = dir_ / "m.nmat";
  save_material(p.string(), m);
  fs::resize_file(p, fs::file_size(p) / 2);
  EXPECT_EQ(run("validate --material " + p.string()), 2);
  EXPECT_EQ(run("inspect --material " + p.string()), 2);
}

TEST_F(Cli, RenderWritesPfmAndMetrics) {
  const json scene = {
      {"camera", {{"position", {0, 0, 4}}, {"look_at", {0, 0, 0}}, {"fov_deg", 30}, {"width", 16}, {"height", 12}}},
      {"environment", {1, 1, 1}},
      {"materials", {{"white", {{"reference", {{"builtin", "lambertian"}, {"albedo", 0.5}}}}}}},
      {"objects", {{{"type", "sphere"}, {"center", {0, 0, 0}}, {"radius", 1}, {"material", "white"}}}},
      {"render", {{"spp", 2}, {"max_vertices", 3}}}};
  const std::string path = write_json("scene.json", scene).string();
  const std::string a = (dir_ / "a.pfm").string();
  ASSERT_EQ(run("render --scene " + path + " --out " + a), 0);
  const HdrImage img = read_pfm(a);
  EXPECT_EQ(img.width, 16);
  EXPECT_EQ(img.height, 12);
  ASSERT_EQ(run("render --scene " + path + " --out " + (dir_ / "b.pfm").string() + " --spp 4 --reference " + a), 0);
  const json report = json::parse(out_);
  EXPECT_EQ(report["spp"].get<int>(), 4);
  EXPECT_GE(report["metrics"]["smape"].get<double>(), 0.0);
}

}  // namespace
}  // namespace neumat
