// Copyright 2026 The neumat Authors.
// SPDX-License-Identifier: Apache-2.0

// neumat: train, render, validate, bench and inspect neural materials.
//
// Exit codes: 0 success, 2 usage or input error, 3 numeric failure.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>

#include "CLI11.hpp"
#include "json.hpp"

#include "neumat/formats.hpp"
#include "neumat/scene_io.hpp"
#include "neumat/trainer.hpp"
#include "neumat/validation.hpp"

namespace {

using nlohmann::json;
using namespace neumat;

constexpr int kExitOk = 0;
constexpr int kExitInput = 2;
constexpr int kExitNumeric = 3;

int cmd_train(const std::string& config_path) {
  const TrainJob job = load_train_job(config_path);
  const ReferenceMaterial ref = material_from_json(job.material, job.base_dir);
  const ParamTextures& tex = ref.textures();
  NeuralMaterial mat(job.network, tex.param_size(), tex.width(), tex.height(), tex.num_levels());

  const json extra = {{"train", {{"iterations", job.train.iterations}, {"seed", job.train.seed}}}};
  TrainCallbacks callbacks;
  callbacks.on_report = [](const LossReport& r) {
    std::fprintf(stderr, "iter %ld  l1log %.5f  kl %.5f  albedo %.5f\n", r.iteration, r.brdf_l1log, r.kl_sampler,
                 r.albedo_l2);
  };
  callbacks.checkpoint_every = job.checkpoint_every;
  callbacks.checkpoint = [&](long iteration, const NeuralMaterial& m) {
    json e = extra;
    e["checkpoint_iteration"] = iteration;
    save_material(job.output, m, e);
  };

  const std::string csv = job.loss_csv.empty() ? job.output + ".loss.csv" : job.loss_csv;
  TrainResult result;
  try {
    result = train(ref, mat, job.train, callbacks);
  } catch (const NumericError& e) {
    const std::string dump = job.output + ".diverged.json";
    std::ofstream out(dump);
    out << json{{"error", e.what()}, {"config", config_path}, {"material", material_header(mat)}}.dump(2) << '\n';
    std::cerr << "neumat train: " << e.what() << "\ndiagnostic dump: " << dump << '\n';
    return kExitNumeric;
  }
  save_material(job.output, mat, extra);
  write_loss_csv(csv, result.history);
  std::cout << json{{"archive", job.output}, {"loss_csv", csv}, {"iterations", result.iterations}, {"baked", result.baked}}
                   .dump()
            << '\n';
  return kExitOk;
}

int cmd_render(const std::string& scene_path, const std::string& out_path, int spp, long seed, int threads,
               const std::string& reference) {
  SceneJob job = load_scene(scene_path);
  if (spp > 0) job.render.spp = spp;
  if (seed >= 0) job.render.seed = std::uint64_t(seed);
  if (threads > 0) job.render.threads = threads;
  job.render.validate();
  const HdrImage img = render(job.scene, job.render);
  write_pfm(out_path, img);
  json report = {{"image", out_path}, {"width", img.width}, {"height", img.height}, {"spp", job.render.spp}};
  if (!reference.empty()) report["metrics"] = metrics_to_json(compute_metrics(img, read_pfm(reference)));
  std::cout << report.dump() << '\n';
  return kExitOk;
}

int cmd_validate(const std::string& archive) {
  const NeuralMaterial mat = load_material(archive);
  const ValidationReport report = validate_material(mat);
  std::cout << report.to_json().dump(2) << '\n';
  return kExitOk;
}

int cmd_bench(const std::string& archive, long n, int threads) {
  if (n < 100'000) throw ConfigError("bench: -n must be at least 100000");
  const NeuralMaterial mat = load_material(archive);
  const BenchReport report = bench_material(mat, n, threads);
  std::cout << report.to_json().dump(2) << '\n';
  return kExitOk;
}

json weight_histogram(const Mlp<float>& net) {
  // Same bucket layout as magnitude_histogram: zeros, [2^k, 2^(k+1)) for k in [-14, 16), overflow.
  std::vector<long> h(32, 0);
  auto add = [&h](float v) {
    const float a = std::abs(v);
    if (a == 0.0f || a < 0x1p-14f) {
      ++h.front();
      return;
    }
    const int k = int(std::floor(std::log2(a)));
    if (k >= 16) ++h.back();
    else ++h[std::size_t(k + 14 + 1)];
  };
  for (const auto& l : net.layers()) {
    for (Eigen::Index i = 0; i < l.weight.size(); ++i) add(l.weight.data()[i]);
    for (Eigen::Index i = 0; i < l.bias.size(); ++i) add(l.bias[i]);
  }
  return h;
}

int cmd_inspect(const std::string& archive) {
  json header;
  const NeuralMaterial mat = load_material(archive, &header);
  json nets;
  auto describe = [&](const char* name, const Mlp<float>& net) {
    json layers = json::array();
    for (const auto& l : net.layers())
      layers.push_back({{"in", l.weight.cols()}, {"out", l.weight.rows()}, {"activation", activation_name(l.activation)}});
    nets[name] = {{"layers", layers}, {"parameters", net.parameter_count()}, {"histogram_log2", weight_histogram(net)}};
  };
  if (mat.config.learned_frames) describe("frame", mat.frame_layer);
  describe("brdf", mat.brdf_decoder);
  describe("sampler", mat.sampler_decoder);
  if (mat.encoder) describe("encoder", *mat.encoder);
  const NeuralRuntime fp16(mat, Precision::kFp16);
  const json out = {{"header", header},
                    {"networks", nets},
                    {"histogram_buckets", "zero, [2^k, 2^(k+1)) for k = -14..15, overflow"},
                    {"latent",
                     {{"width", mat.latent.width()},
                      {"height", mat.latent.height()},
                      {"levels", mat.latent.num_levels()},
                      {"max_abs", mat.latent.max_abs()},
                      {"histogram_log2", magnitude_histogram(mat.latent)}}},
                    {"quantization_clamps", fp16.quantization_clamps()}};
  std::cout << out.dump(2) << '\n';
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Neural appearance models: train, render, validate, bench, inspect"};
  app.require_subcommand(1, 1);

  std::string config, scene, out, material, reference;
  int spp = 0, threads = 0;
  long seed = -1, n = 1'000'000;

  auto* train_cmd = app.add_subcommand("train", "Train a neural material from a JSON config");
  train_cmd->add_option("--config", config, "Training job JSON")->required();
  auto* render_cmd = app.add_subcommand("render", "Path trace a JSON scene to PFM");
  render_cmd->add_option("--scene", scene, "Scene JSON")->required();
  render_cmd->add_option("--out", out, "Output PFM")->required();
  render_cmd->add_option("--spp", spp, "Samples per pixel");
  render_cmd->add_option("--seed", seed, "Random seed");
  render_cmd->add_option("--threads", threads, "Worker threads (0: scene setting)");
  render_cmd->add_option("--reference", reference, "Reference PFM; adds error metrics to the report");
  auto* validate_cmd = app.add_subcommand("validate", "Run the self-check suite on an archive");
  validate_cmd->add_option("--material", material, "Material archive")->required();
  auto* bench_cmd = app.add_subcommand("bench", "Measure decoder throughput");
  bench_cmd->add_option("--material", material, "Material archive")->required();
  bench_cmd->add_option("-n", n, "Number of evaluations (>= 100000)");
  bench_cmd->add_option("--threads", threads, "Worker threads");
  auto* inspect_cmd = app.add_subcommand("inspect", "Print architecture and parameter histograms");
  inspect_cmd->add_option("--material", material, "Material archive")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitInput;
  }

  try {
    if (*train_cmd) return cmd_train(config);
    if (*render_cmd) return cmd_render(scene, out, spp, seed, threads, reference);
    if (*validate_cmd) return cmd_validate(material);
    if (*bench_cmd) return cmd_bench(material, n, std::max(threads, 1));
    if (*inspect_cmd) return cmd_inspect(material);
  } catch (const NumericError& e) {
    std::cerr << "neumat: " << e.what() << '\n';
    return kExitNumeric;
  } catch (const std::exception& e) {
    std::cerr << "neumat: " << e.what() << '\n';
    return kExitInput;
  }
  return kExitInput;
}
