#include "config.hpp"

#include <fstream>
#include <set>
#include <stdexcept>

namespace smr {

using nlohmann::json;
using nlohmann::ordered_json;

namespace {

// strict reader: every present key must be consumed
class Reader {
 public:
  Reader(const json& j, const char* who) : j_(j), who_(who) {
    if (!j.is_object())
      throw std::invalid_argument(std::string(who) + ": expected a JSON object");
  }
  template <class T>
  void get(const char* key, T& out) {
    used_.insert(key);
    if (j_.contains(key)) j_.at(key).get_to(out);
  }
  const json* sub(const char* key) {
    used_.insert(key);
    return j_.contains(key) ? &j_.at(key) : nullptr;
  }
  ~Reader() noexcept(false) {
    if (std::uncaught_exceptions()) return;
    for (const auto& [k, v] : j_.items())
      if (!used_.count(k))
        throw std::invalid_argument(std::string(who_) + ": unknown key '" + k +
                                    "'");
  }

 private:
  const json& j_;
  const char* who_;
  std::set<std::string> used_;
};

}  // namespace

ordered_json toJson(const ModelConfig& c) {
  return ordered_json{{"d", c.d},
                      {"n_heads", c.nHeads},
                      {"n_enc_layers", c.nEncLayers},
                      {"n_dec_layers_detect", c.nDecLayersDetect},
                      {"n_dec_layers_track", c.nDecLayersTrack},
                      {"n_det", c.nDet},
                      {"n_learned", c.nLearned},
                      {"c_prop", c.cProp},
                      {"grid_size", c.gridSize},
                      {"image_size", c.imageSize},
                      {"channels", c.channels},
                      {"detach_proposals", c.detachProposals}};
}

ModelConfig modelConfigFromJson(const json& j) {
  ModelConfig c;
  Reader r(j, "model config");
  r.get("d", c.d);
  r.get("n_heads", c.nHeads);
  r.get("n_enc_layers", c.nEncLayers);
  r.get("n_dec_layers_detect", c.nDecLayersDetect);
  r.get("n_dec_layers_track", c.nDecLayersTrack);
  r.get("n_det", c.nDet);
  r.get("n_learned", c.nLearned);
  r.get("c_prop", c.cProp);
  r.get("grid_size", c.gridSize);
  r.get("image_size", c.imageSize);
  r.get("channels", c.channels);
  r.get("detach_proposals", c.detachProposals);
  return c;
}

ordered_json toJson(const TrainConfig& c) {
  return ordered_json{{"n_clip", c.nClip},
                      {"lambda_prop", c.lambdaProp},
                      {"epochs", c.epochs},
                      {"lr", c.lr},
                      {"encoder_lr", c.encoderLr},
                      {"decay_factor", c.decayFactor},
                      {"weight_decay", c.weightDecay},
                      {"seed", c.seed},
                      {"recipe", recipeName(c.recipe)},
                      {"distill_weight", c.distillWeight},
                      {"distill_threshold", c.distillThreshold},
                      {"freeze_detect_queries", c.freezeDetectQueries},
                      {"det_pretrain_epochs", c.detPretrainEpochs}};
}

TrainConfig trainConfigFromJson(const json& j) {
  TrainConfig c;
  Reader r(j, "train config");
  r.get("n_clip", c.nClip);
  r.get("lambda_prop", c.lambdaProp);
  r.get("epochs", c.epochs);
  r.get("lr", c.lr);
  r.get("encoder_lr", c.encoderLr);
  r.get("decay_factor", c.decayFactor);
  r.get("weight_decay", c.weightDecay);
  r.get("seed", c.seed);
  std::string recipe = recipeName(c.recipe);
  r.get("recipe", recipe);
  c.recipe = recipeFromName(recipe);
  r.get("distill_weight", c.distillWeight);
  r.get("distill_threshold", c.distillThreshold);
  r.get("freeze_detect_queries", c.freezeDetectQueries);
  r.get("det_pretrain_epochs", c.detPretrainEpochs);
  return c;
}

ordered_json toJson(const TrackerConfig& c) {
  return ordered_json{
      {"tau_en", c.tauEn}, {"tau_ex", c.tauEx}, {"t_reid", c.tReid}};
}

TrackerConfig trackerConfigFromJson(const json& j) {
  TrackerConfig c;
  Reader r(j, "tracker config");
  r.get("tau_en", c.tauEn);
  r.get("tau_ex", c.tauEx);
  r.get("t_reid", c.tReid);
  return c;
}

ordered_json toJson(const SceneConfig& c) {
  ordered_json occ = ordered_json::array();
  for (const auto& o : c.occlusions)
    occ.push_back({{"frame", o.frame}, {"id_a", o.idA}, {"id_b", o.idB}});
  ordered_json life = ordered_json::array();
  for (const auto& [en, ex] : c.lifetimes) life.push_back({en, ex});
  return ordered_json{{"num_objects", c.numObjects},
                      {"num_frames", c.numFrames},
                      {"image_size", c.imageSize},
                      {"channels", c.channels},
                      {"min_size", c.minSize},
                      {"max_size", c.maxSize},
                      {"amp_min", c.ampMin},
                      {"amp_max", c.ampMax},
                      {"freq_min", c.freqMin},
                      {"freq_max", c.freqMax},
                      {"accel_sigma", c.accelSigma},
                      {"color_jitter", c.colorJitter},
                      {"occlusions", occ},
                      {"lifetimes", life},
                      {"seed", c.seed}};
}

SceneConfig sceneConfigFromJson(const json& j) {
  SceneConfig c;
  Reader r(j, "scene config");
  r.get("num_objects", c.numObjects);
  r.get("num_frames", c.numFrames);
  r.get("image_size", c.imageSize);
  r.get("channels", c.channels);
  r.get("min_size", c.minSize);
  r.get("max_size", c.maxSize);
  r.get("amp_min", c.ampMin);
  r.get("amp_max", c.ampMax);
  r.get("freq_min", c.freqMin);
  r.get("freq_max", c.freqMax);
  r.get("accel_sigma", c.accelSigma);
  r.get("color_jitter", c.colorJitter);
  if (const json* occ = r.sub("occlusions")) {
    c.occlusions.clear();
    for (const auto& o : *occ) {
      Reader ro(o, "occlusion");
      OcclusionEvent e;
      ro.get("frame", e.frame);
      ro.get("id_a", e.idA);
      ro.get("id_b", e.idB);
      c.occlusions.push_back(e);
    }
  }
  if (const json* life = r.sub("lifetimes")) {
    c.lifetimes.clear();
    for (const auto& l : *life) {
      if (!l.is_array() || l.size() != 2)
        throw std::invalid_argument("scene config: lifetimes entries are [enter, exit]");
      c.lifetimes.emplace_back(l[0].get<int>(), l[1].get<int>());
    }
  }
  r.get("seed", c.seed);
  return c;
}

ordered_json toJson(const RunConfig& c) {
  return ordered_json{{"model", toJson(c.model)},
                      {"train", toJson(c.train)},
                      {"tracker", toJson(c.tracker)},
                      {"scene", toJson(c.scene)},
                      {"train_seeds", c.trainSeeds},
                      {"val_seeds", c.valSeeds},
                      {"val_frames", c.valFrames},
                      {"out_dir", c.outDir},
                      {"disable_track_queries_at_inference",
                       c.disableTrackQueriesAtInference}};
}

RunConfig runConfigFromJson(const json& j) {
  RunConfig c;
  Reader r(j, "run config");
  if (const json* s = r.sub("model")) c.model = modelConfigFromJson(*s);
  if (const json* s = r.sub("train")) c.train = trainConfigFromJson(*s);
  if (const json* s = r.sub("tracker")) c.tracker = trackerConfigFromJson(*s);
  if (const json* s = r.sub("scene")) c.scene = sceneConfigFromJson(*s);
  r.get("train_seeds", c.trainSeeds);
  r.get("val_seeds", c.valSeeds);
  r.get("val_frames", c.valFrames);
  r.get("out_dir", c.outDir);
  r.get("disable_track_queries_at_inference", c.disableTrackQueriesAtInference);
  return c;
}

bool operator==(const RunConfig& a, const RunConfig& b) {
  return toJson(a) == toJson(b);
}

DatasetSpec RunConfig::datasetSpec() const {
  DatasetSpec spec;
  spec.base = scene;
  spec.trainSeeds = trainSeeds;
  spec.valSeeds = valSeeds;
  spec.clipLen = train.nClip;
  spec.valFrames = valFrames;
  return spec;
}

RunConfig loadRunConfig(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open config file: " + path);
  json j;
  in >> j;
  return runConfigFromJson(j);
}

void saveRunConfig(const std::string& path, const RunConfig& c) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write config file: " + path);
  out << toJson(c).dump(2) << "\n";
}

}  // namespace smr
