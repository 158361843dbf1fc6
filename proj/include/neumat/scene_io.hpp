// Copyright 2026 The neumat Authors.
// SPDX-License-Identifier: Apache-2.0

// JSON documents: material descriptions, training jobs and scenes.

#pragma once

#include <filesystem>
#include <stdexcept>
#include <string>
#include <vector>

#include "json.hpp"

#include "neumat/neural_brdf.hpp"
#include "neumat/reference_material.hpp"
#include "neumat/renderer.hpp"
#include "neumat/trainer.hpp"

namespace neumat {

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

nlohmann::json read_json(const std::filesystem::path& path);

/// Either {"builtin": "layered" | "lambertian" | "conductor", ...} or an explicit
/// {"resolution", "channels": [...], "lobes": [...]} document. Relative texture paths
/// resolve against base_dir.
ReferenceMaterial material_from_json(const nlohmann::json& j, const std::filesystem::path& base_dir);

TrainConfig train_config_from_json(const nlohmann::json& j);
NeuralConfig neural_config_from_json(const nlohmann::json& j);

struct TrainJob {
  TrainConfig train;
  NeuralConfig network;
  nlohmann::json material;
  std::filesystem::path base_dir;
  std::string output;    // archive path
  std::string loss_csv;  // empty = next to the archive
  long checkpoint_every = 0;
};

TrainJob load_train_job(const std::filesystem::path& path);

struct SceneJob {
  Scene scene;
  RenderConfig render;
};

/// Scene document with camera, environment, named materials (reference JSON or a
/// neural archive path), objects, lights and optional render settings.
SceneJob scene_from_json(const nlohmann::json& j, const std::filesystem::path& base_dir);
SceneJob load_scene(const std::filesystem::path& path);

void write_loss_csv(const std::string& path, const std::vector<LossReport>& history);
nlohmann::json metrics_to_json(const MetricReport& m);

}  // namespace neumat
