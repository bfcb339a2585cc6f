#pragma once

#include <json.hpp>
#include <string>

#include "model.hpp"
#include "synth.hpp"
#include "tracker.hpp"
#include "training.hpp"

// Run configuration: one JSON document holding the model, training, tracker,
// and scene settings plus harness flags. Parsing is strict (unknown keys are
// errors) and partial documents inherit defaults, so a saved config always
// archives the full effective settings.

namespace smr {

struct RunConfig {
  ModelConfig model;
  TrainConfig train;
  TrackerConfig tracker;
  SceneConfig scene;
  std::vector<std::uint64_t> trainSeeds = {1, 2, 3, 4};
  std::vector<std::uint64_t> valSeeds = {101};
  int valFrames = 40;  // 0 = scene.numFrames
  std::string outDir = "runs/latest";
  bool disableTrackQueriesAtInference = false;

  DatasetSpec datasetSpec() const;
};

bool operator==(const RunConfig& a, const RunConfig& b);

nlohmann::ordered_json toJson(const ModelConfig& c);
nlohmann::ordered_json toJson(const TrainConfig& c);
nlohmann::ordered_json toJson(const TrackerConfig& c);
nlohmann::ordered_json toJson(const SceneConfig& c);
nlohmann::ordered_json toJson(const RunConfig& c);

ModelConfig modelConfigFromJson(const nlohmann::json& j);
TrainConfig trainConfigFromJson(const nlohmann::json& j);
TrackerConfig trackerConfigFromJson(const nlohmann::json& j);
SceneConfig sceneConfigFromJson(const nlohmann::json& j);
RunConfig runConfigFromJson(const nlohmann::json& j);

RunConfig loadRunConfig(const std::string& path);
void saveRunConfig(const std::string& path, const RunConfig& c);

}  // namespace smr
