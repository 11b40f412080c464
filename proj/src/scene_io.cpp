#include "hop3d/scene_io.hpp"

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <stdexcept>

#include <json.hpp>

#include "hop3d/common.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace hop3d {

namespace {

std::string num(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

}  // namespace

void save_scene(const Scene& scene, const std::string& path) {
  require(scene.coords.rows == scene.size() && scene.feats.rows == scene.size(),
          "save_scene: inconsistent scene");
  std::ofstream out(path);
  if (!out) throw std::runtime_error("save_scene: cannot write '" + path + "'");
  out << scene.size() << " " << scene.feats.cols << "\n";
  for (std::size_t i = 0; i < scene.size(); ++i) {
    for (std::size_t j = 0; j < 3; ++j) out << num(scene.coords.at(i, j)) << " ";
    for (std::size_t j = 0; j < scene.feats.cols; ++j) out << num(scene.feats.at(i, j)) << " ";
    out << scene.labels[i] << "\n";
  }
  if (!out) throw std::runtime_error("save_scene: write failed for '" + path + "'");
}

Scene load_scene(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("load_scene: cannot open '" + path + "'");
  std::size_t n = 0, f_in = 0;
  if (!(in >> n >> f_in)) throw std::runtime_error("load_scene: bad header in '" + path + "'");
  Scene scene;
  scene.coords = Mat(n, 3);
  scene.feats = Mat(n, f_in);
  scene.labels.assign(n, 0);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < 3; ++j)
      if (!(in >> scene.coords.at(i, j)))
        throw std::runtime_error("load_scene: truncated row " + std::to_string(i) + " in '" +
                                 path + "'");
    for (std::size_t j = 0; j < f_in; ++j)
      if (!(in >> scene.feats.at(i, j)))
        throw std::runtime_error("load_scene: truncated row " + std::to_string(i) + " in '" +
                                 path + "'");
    if (!(in >> scene.labels[i]))
      throw std::runtime_error("load_scene: missing label on row " + std::to_string(i) +
                               " in '" + path + "'");
  }
  return scene;
}

namespace {

json split_to_json(const SplitSpec& s) {
  return json{{"base_classes", s.base_classes},
              {"novel_classes", s.novel_classes},
              {"shots", s.shots},
              {"train_seed", s.train_seed},
              {"support_seed", s.support_seed},
              {"test_seed", s.test_seed},
              {"signature_seed", s.signature_seed},
              {"n_points", s.n_points},
              {"sig_channels", s.sig_channels},
              {"noise_sigma", s.noise_sigma},
              {"blob_sigma", s.blob_sigma},
              {"bg_fraction", s.bg_fraction},
              {"presence_prob", s.presence_prob},
              {"min_points", s.min_points}};
}

SplitSpec split_from_json(const json& j) {
  SplitSpec s;
  j.at("base_classes").get_to(s.base_classes);
  j.at("novel_classes").get_to(s.novel_classes);
  j.at("shots").get_to(s.shots);
  j.at("train_seed").get_to(s.train_seed);
  j.at("support_seed").get_to(s.support_seed);
  j.at("test_seed").get_to(s.test_seed);
  j.at("signature_seed").get_to(s.signature_seed);
  j.at("n_points").get_to(s.n_points);
  j.at("sig_channels").get_to(s.sig_channels);
  j.at("noise_sigma").get_to(s.noise_sigma);
  j.at("blob_sigma").get_to(s.blob_sigma);
  j.at("bg_fraction").get_to(s.bg_fraction);
  j.at("presence_prob").get_to(s.presence_prob);
  j.at("min_points").get_to(s.min_points);
  s.validate();
  return s;
}

std::vector<std::string> save_group(const std::vector<Scene>& scenes, const std::string& dir,
                                    const std::string& prefix) {
  std::vector<std::string> names;
  for (std::size_t i = 0; i < scenes.size(); ++i) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%s_%04zu.txt", prefix.c_str(), i);
    save_scene(scenes[i], (fs::path(dir) / buf).string());
    names.push_back(buf);
  }
  return names;
}

std::vector<Scene> load_group(const json& names, const std::string& dir) {
  std::vector<Scene> scenes;
  for (const auto& name : names)
    scenes.push_back(load_scene((fs::path(dir) / name.get<std::string>()).string()));
  return scenes;
}

}  // namespace

void save_dataset(const Dataset& data, const std::string& dir) {
  fs::create_directories(dir);
  json manifest;
  manifest["format"] = "hop3d-dataset";
  manifest["version"] = 1;
  manifest["split"] = split_to_json(data.split);
  manifest["train"] = save_group(data.train, dir, "train");
  manifest["support"] = save_group(data.support_pool, dir, "support");
  manifest["test"] = save_group(data.test, dir, "test");
  std::ofstream out(fs::path(dir) / "manifest.json");
  if (!out) throw std::runtime_error("save_dataset: cannot write manifest in '" + dir + "'");
  out << manifest.dump(2) << "\n";
}

Dataset load_dataset(const std::string& dir) {
  const fs::path manifest_path = fs::path(dir) / "manifest.json";
  std::ifstream in(manifest_path);
  if (!in)
    throw std::runtime_error("load_dataset: no manifest at '" + manifest_path.string() +
                             "'; run `hop3d gen` first");
  json manifest;
  try {
    in >> manifest;
  } catch (const json::exception& e) {
    throw std::runtime_error("load_dataset: unreadable manifest: " + std::string(e.what()));
  }
  if (manifest.value("format", "") != "hop3d-dataset")
    throw std::runtime_error("load_dataset: '" + manifest_path.string() +
                             "' is not a dataset manifest");
  Dataset data;
  data.split = split_from_json(manifest.at("split"));
  data.train = load_group(manifest.at("train"), dir);
  data.support_pool = load_group(manifest.at("support"), dir);
  data.test = load_group(manifest.at("test"), dir);
  return data;
}

}  // namespace hop3d
