#pragma once

#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "tubeprune/video.hpp"

namespace tubeprune {

struct LabeledVideo {
  VideoTensor video;
  std::size_t y_action = 0;     // class index in [0, A)
  std::vector<int> y_priv;      // binary attribute vector, length P
};

// Manifest JSON: per-sample file path (relative to the manifest), action
// label, attribute bits; the resolved run config and version string ride
// along for provenance.
inline void save_dataset(const std::filesystem::path& dir,
                         const std::string& split,
                         const std::vector<LabeledVideo>& samples,
                         const nlohmann::json& config_echo,
                         const std::string& version) {
  std::filesystem::create_directories(dir / split);
  nlohmann::json manifest;
  manifest["version"] = version;
  manifest["config"] = config_echo;
  manifest["split"] = split;
  auto& list = manifest["samples"] = nlohmann::json::array();
  for (std::size_t i = 0; i < samples.size(); ++i) {
    char name[32];
    std::snprintf(name, sizeof(name), "%s/%06zu.tvid", split.c_str(), i);
    save_tvid((dir / name).string(), samples[i].video);
    list.push_back({{"file", name},
                    {"y_action", samples[i].y_action},
                    {"y_priv", samples[i].y_priv}});
  }
  std::ofstream os(dir / ("manifest_" + split + ".json"));
  if (!os) throw std::runtime_error("save_dataset: cannot write manifest");
  os << manifest.dump(2) << "\n";
}

inline std::vector<LabeledVideo> load_dataset(
    const std::filesystem::path& manifest_path) {
  std::ifstream is(manifest_path);
  if (!is)
    throw std::runtime_error("load_dataset: cannot open " +
                             manifest_path.string());
  nlohmann::json manifest = nlohmann::json::parse(is);
  const std::filesystem::path dir = manifest_path.parent_path();
  std::vector<LabeledVideo> out;
  for (const auto& s : manifest.at("samples")) {
    LabeledVideo lv;
    lv.video = load_tvid((dir / s.at("file").get<std::string>()).string());
    lv.y_action = s.at("y_action").get<std::size_t>();
    lv.y_priv = s.at("y_priv").get<std::vector<int>>();
    out.push_back(std::move(lv));
  }
  return out;
}

}  // namespace tubeprune
