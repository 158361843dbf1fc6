// Copyright 2026 The neumat Authors.
// SPDX-License-Identifier: Apache-2.0

#include "neumat/scene_io.hpp"

#include <fstream>
#include <iomanip>
#include <map>
#include <memory>

#include "neumat/formats.hpp"

namespace neumat {

using nlohmann::json;

json read_json(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open " + path.string());
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
}

namespace {

Vec3d vec3(const json& j) {
  if (!j.is_array() || j.size() != 3) throw ConfigError("expected a 3-element array");
  return {j[0].get<double>(), j[1].get<double>(), j[2].get<double>()};
}

Vec2d vec2(const json& j) {
  if (j.is_number()) return {j.get<double>(), j.get<double>()};
  if (!j.is_array() || j.size() != 2) throw ConfigError("expected a 2-element array");
  return {j[0].get<double>(), j[1].get<double>()};
}

Spectrum spectrum(const json& j) {
  if (j.is_number()) return Spectrum::Constant(j.get<double>());
  const Vec3d v = vec3(j);
  return {v[0], v[1], v[2]};
}

ChannelKind channel_kind(const std::string& s) {
  if (s == "plain") return ChannelKind::kPlain;
  if (s == "slope_x") return ChannelKind::kSlopeX;
  if (s == "slope_y") return ChannelKind::kSlopeY;
  if (s == "roughness") return ChannelKind::kRoughness;
  throw ConfigError("unknown channel kind '" + s + "'");
}

int channel_ref(const std::map<std::string, int>& names, const std::string& name) {
  const auto it = names.find(name);
  if (it == names.end()) throw ConfigError("unknown channel '" + name + "'");
  return it->second;
}

ScalarBinding scalar_binding(const json& j, const std::map<std::string, int>& names, float fallback) {
  ScalarBinding b;
  b.constant = fallback;
  if (j.is_null()) return b;
  if (j.is_number()) {
    b.constant = j.get<float>();
    return b;
  }
  b.channel = channel_ref(names, j.at("channel").get<std::string>());
  b.scale = j.value("scale", 1.0f);
  b.offset = j.value("offset", 0.0f);
  return b;
}

ColorBinding color_binding(const json& j, const std::map<std::string, int>& names) {
  ColorBinding b;
  if (j.is_null()) return b;
  if (j.is_object()) {
    b.channel = channel_ref(names, j.at("channel").get<std::string>());
    return b;
  }
  const Spectrum s = spectrum(j);
  b.constant = s.cast<float>();
  return b;
}

ReferenceMaterial explicit_material(const json& j, const std::filesystem::path& base) {
  const int res = j.value("resolution", 64);
  std::vector<ChannelDesc> channels;
  std::vector<Image> images;
  std::map<std::string, int> names;
  const json& chans = j.at("channels");
  for (std::size_t i = 0; i < chans.size(); ++i) names[chans[i].at("name").get<std::string>()] = int(i);
  for (const auto& c : chans) {
    ChannelDesc d;
    d.name = c.at("name").get<std::string>();
    d.kind = channel_kind(c.value("kind", std::string("plain")));
    if (c.contains("partner")) d.partner = channel_ref(names, c.at("partner").get<std::string>());
    Image img;
    if (c.contains("file")) {
      const HdrImage pfm = read_pfm((base / c.at("file").get<std::string>()).string());
      const int comp = c.value("component", 0);
      if (comp < 0 || comp >= pfm.channels) throw ConfigError("channel '" + d.name + "': bad component");
      img = Image(pfm.width, pfm.height);
      for (int y = 0; y < pfm.height; ++y)
        for (int x = 0; x < pfm.width; ++x) img.at(x, y) = pfm.pixel(x, y)[comp];
    } else {
      img = Image(res, res, c.value("constant", 0.0f));
    }
    channels.push_back(std::move(d));
    images.push_back(std::move(img));
  }
  auto tex = std::make_shared<const ParamTextures>(std::move(channels), std::move(images));
  MaterialGraph g;
  for (const auto& l : j.at("lobes")) {
    Lobe lobe;
    const std::string type = l.at("type").get<std::string>();
    if (type == "lambertian")
      lobe.type = LobeType::kLambertian;
    else if (type == "conductor")
      lobe.type = LobeType::kConductor;
    else if (type == "coat")
      lobe.type = LobeType::kCoat;
    else
      throw ConfigError("unknown lobe type '" + type + "'");
    const std::string combine = l.value("combine", std::string("mix"));
    if (combine != "mix" && combine != "coat") throw ConfigError("unknown combine rule '" + combine + "'");
    lobe.combine = combine == "coat" ? Combine::kCoat : Combine::kMix;
    lobe.weight = scalar_binding(l.value("weight", json()), names, 1.0f);
    lobe.color = color_binding(l.value("color", json()), names);
    lobe.roughness = scalar_binding(l.value("roughness", json()), names, 0.5f);
    lobe.anisotropy = l.value("anisotropy", 0.0f);
    lobe.tangent_rotation = scalar_binding(l.value("tangent_rotation", json()), names, 0.0f);
    lobe.specular = scalar_binding(l.value("specular", json()), names, 1.0f);
    if (l.contains("normal")) lobe.normal_channel = channel_ref(names, l.at("normal").get<std::string>());
    g.lobes.push_back(lobe);
  }
  return ReferenceMaterial(std::move(g), std::move(tex));
}

}  // namespace

ReferenceMaterial material_from_json(const json& j, const std::filesystem::path& base_dir) {
  try {
    if (j.is_string()) {
      const auto path = base_dir / j.get<std::string>();
      return material_from_json(read_json(path), path.parent_path());
    }
    if (j.contains("builtin")) {
      const std::string name = j.at("builtin").get<std::string>();
      const int res = j.value("resolution", 128);
      if (name == "layered") return make_layered_material(res, j.value("seed", std::uint64_t(7)));
      if (name == "lambertian")
        return make_lambertian_material(spectrum(j.value("albedo", json(0.5))).cast<float>(), res);
      if (name == "conductor")
        return make_conductor_material(spectrum(j.value("f0", json(1.0))).cast<float>(), j.value("alpha", 0.3f), res);
      throw ConfigError("unknown builtin material '" + name + "'");
    }
    return explicit_material(j, base_dir);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("material: ") + e.what());
  } catch (const std::invalid_argument& e) {
    throw ConfigError(std::string("material: ") + e.what());
  } catch (const FormatError& e) {
    throw ConfigError(std::string("material: ") + e.what());
  }
}

TrainConfig train_config_from_json(const json& j) {
  TrainConfig c;
  try {
    c.iterations = j.value("iterations", c.iterations);
    c.batch_size = j.value("batch_size", c.batch_size);
    c.level_rate = j.value("level_rate", c.level_rate);
    c.max_level = j.value("max_level", c.max_level);
    c.mollify_start_deg = j.value("mollify_start_deg", c.mollify_start_deg);
    c.mollify_horizon = j.value("mollify_horizon", c.mollify_horizon);
    c.phase1_fraction = j.value("phase1_fraction", c.phase1_fraction);
    c.lr = j.value("lr", c.lr);
    c.latent_lr = j.value("latent_lr", c.latent_lr);
    c.max_taps = j.value("max_taps", c.max_taps);
    c.kl_epsilon = j.value("kl_epsilon", c.kl_epsilon);
    c.train_brdf = j.value("train_brdf", c.train_brdf);
    c.train_sampler = j.value("train_sampler", c.train_sampler);
    c.log_window = j.value("log_window", c.log_window);
    c.seed = j.value("seed", c.seed);
    c.validate();
  } catch (const json::exception& e) {
    throw ConfigError(std::string("train config: ") + e.what());
  } catch (const std::invalid_argument& e) {
    throw ConfigError(std::string("train config: ") + e.what());
  }
  return c;
}

NeuralConfig neural_config_from_json(const json& j) {
  NeuralConfig c;
  try {
    c.brdf_hidden = j.value("brdf_hidden", c.brdf_hidden);
    c.sampler_hidden = j.value("sampler_hidden", c.sampler_hidden);
    c.encoder_hidden = j.value("encoder_hidden", c.encoder_hidden);
    c.learned_frames = j.value("learned_frames", c.learned_frames);
    c.albedo_head = j.value("albedo_head", c.albedo_head);
    const std::string s = j.value("sampler", std::string("full"));
    if (s != "full" && s != "isotropic") throw ConfigError("network: sampler must be 'full' or 'isotropic'");
    c.sampler = s == "isotropic" ? SamplerKind::kIsotropic : SamplerKind::kFull;
    c.seed = j.value("seed", c.seed);
    for (const auto* v : {&c.brdf_hidden, &c.sampler_hidden, &c.encoder_hidden})
      for (int w : *v)
        if (w <= 0 || w > QuantizedMlp::kMaxWidth) throw ConfigError("network: hidden widths must lie in [1, 256]");
  } catch (const json::exception& e) {
    throw ConfigError(std::string("network config: ") + e.what());
  }
  return c;
}

TrainJob load_train_job(const std::filesystem::path& path) {
  const json j = read_json(path);
  TrainJob job;
  job.base_dir = path.parent_path();
  try {
    job.train = train_config_from_json(j.value("train", json::object()));
    job.network = neural_config_from_json(j.value("network", json::object()));
    job.material = j.at("material");
    job.output = (job.base_dir / j.at("output").get<std::string>()).string();
    if (j.contains("loss_csv")) job.loss_csv = (job.base_dir / j.at("loss_csv").get<std::string>()).string();
    job.checkpoint_every = j.value("checkpoint_every", 0L);
  } catch (const json::exception& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
  return job;
}

SceneJob scene_from_json(const json& j, const std::filesystem::path& base) {
  SceneJob job;
  Scene& s = job.scene;
  try {
    const json& cam = j.at("camera");
    s.camera.position = vec3(cam.at("position"));
    s.camera.look_at = vec3(cam.at("look_at"));
    if (cam.contains("up")) s.camera.up = vec3(cam.at("up"));
    s.camera.fov_y_deg = cam.value("fov_deg", 40.0);
    s.camera.width = cam.value("width", 256);
    s.camera.height = cam.value("height", 256);
    if (s.camera.width <= 0 || s.camera.height <= 0) throw ConfigError("camera resolution must be positive");
    if (j.contains("environment")) s.environment = spectrum(j.at("environment"));

    std::map<std::string, int> names;
    for (const auto& [name, m] : j.at("materials").items()) {
      names[name] = int(s.materials.size());
      if (m.contains("neural")) {
        const auto archive = base / m.at("neural").get<std::string>();
        const Precision p = m.value("precision", std::string("fp16")) == "fp32" ? Precision::kFp32 : Precision::kFp16;
        s.materials.push_back(MaterialBinding::make_neural(
            std::make_shared<const NeuralRuntime>(load_material(archive.string()), p)));
      } else {
        s.materials.push_back(MaterialBinding::make_reference(
            std::make_shared<const ReferenceMaterial>(material_from_json(m.at("reference"), base))));
      }
    }
    auto material = [&](const json& o) { return channel_ref(names, o.at("material").get<std::string>()); };
    for (const auto& o : j.value("objects", json::array())) {
      const std::string type = o.at("type").get<std::string>();
      if (type == "sphere") {
        Sphere sp;
        sp.center = vec3(o.at("center"));
        sp.radius = o.at("radius").get<double>();
        sp.material = material(o);
        if (o.contains("uv_scale")) sp.uv_scale = vec2(o.at("uv_scale"));
        s.spheres.push_back(sp);
      } else if (type == "quad") {
        Quad q;
        q.origin = vec3(o.at("origin"));
        q.edge_u = vec3(o.at("edge_u"));
        q.edge_v = vec3(o.at("edge_v"));
        q.material = material(o);
        if (o.contains("uv_scale")) q.uv_scale = vec2(o.at("uv_scale"));
        s.quads.push_back(q);
      } else if (type == "mesh") {
        Mesh m;
        for (const auto& p : o.at("positions")) m.positions.push_back(vec3(p));
        for (const auto& uv : o.at("uvs")) m.uvs.push_back(vec2(uv));
        for (const auto& f : o.at("faces")) m.faces.emplace_back(f.at(0).get<int>(), f.at(1).get<int>(), f.at(2).get<int>());
        m.material = material(o);
        s.meshes.push_back(std::move(m));
      } else {
        throw ConfigError("unknown object type '" + type + "'");
      }
    }
    for (const auto& l : j.value("lights", json::array())) {
      AreaLight a;
      a.origin = vec3(l.at("origin"));
      a.edge_u = vec3(l.at("edge_u"));
      a.edge_v = vec3(l.at("edge_v"));
      a.radiance = spectrum(l.at("radiance"));
      s.lights.push_back(a);
    }
    const json r = j.value("render", json::object());
    job.render.spp = r.value("spp", job.render.spp);
    job.render.max_vertices = r.value("max_vertices", job.render.max_vertices);
    job.render.seed = r.value("seed", job.render.seed);
    job.render.lod = r.value("lod", job.render.lod);
    job.render.forced_level = r.value("forced_level", job.render.forced_level);
    job.render.nee = r.value("nee", job.render.nee);
    job.render.mis = r.value("mis", std::string("balance")) == "power" ? MisHeuristic::kPower : MisHeuristic::kBalance;
    job.render.threads = r.value("threads", job.render.threads);
    s.validate();
    job.render.validate();
  } catch (const json::exception& e) {
    throw ConfigError(std::string("scene: ") + e.what());
  } catch (const std::invalid_argument& e) {
    throw ConfigError(std::string("scene: ") + e.what());
  } catch (const FormatError& e) {
    throw ConfigError(std::string("scene: ") + e.what());
  }
  return job;
}

SceneJob load_scene(const std::filesystem::path& path) { return scene_from_json(read_json(path), path.parent_path()); }

void write_loss_csv(const std::string& path, const std::vector<LossReport>& history) {
  std::ofstream out(path);
  if (!out) throw ConfigError("cannot write " + path);
  out << "iteration,brdf_l1log,kl,albedo_l2\n" << std::setprecision(9);
  for (const auto& r : history) out << r.iteration << ',' << r.brdf_l1log << ',' << r.kl_sampler << ',' << r.albedo_l2 << '\n';
}

json metrics_to_json(const MetricReport& m) {
  return {{"smape", m.smape},
          {"mean_abs", m.mean_abs},
          {"mean_sqr", m.mean_sqr},
          {"mean_rel_abs", m.mean_rel_abs},
          {"mean_rel_sqr", m.mean_rel_sqr}};
}

}  // namespace neumat
