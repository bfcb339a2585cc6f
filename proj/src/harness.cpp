#include "harness.hpp"

#include <chrono>
#include <filesystem>
#include <fstream>
#include <memory>
#include <json.hpp>
#include <stdexcept>

#include "checkpoint.hpp"
#include "tracker.hpp"

namespace smr {

namespace fs = std::filesystem;
using nlohmann::json;
using nlohmann::ordered_json;

namespace {

ForwardMode inferenceMode(Recipe r) {
  switch (r) {
    case Recipe::SelfProposal: return ForwardMode::SelfProposal;
    case Recipe::FrozenAnchorProposal: return ForwardMode::FrozenAnchorProposal;
    default: return ForwardMode::Baseline;
  }
}

bool needsTeacher(Recipe r) {
  return r == Recipe::QueryPretrain || r == Recipe::Distill ||
         r == Recipe::FrozenAnchorProposal;
}

std::vector<Video> makeValVideos(const RunConfig& cfg) {
  std::vector<Video> out;
  for (auto s : cfg.valSeeds) {
    SceneConfig sc = cfg.scene;
    sc.seed = s;
    if (cfg.valFrames > 0) sc.numFrames = cfg.valFrames;
    out.push_back(generate(sc));
  }
  return out;
}

// concatenate per-video results into one sequence with disjoint id ranges
// so cross-video identities can never be confused by the metrics
void mergeVideo(const TrackingResult& r, const GtVideo& g, int& prOffset,
                int& gtOffset, TrackingResult& mr, GtVideo& mg) {
  int maxPr = 0, maxGt = 0;
  for (const auto& f : r)
    for (const auto& e : f) maxPr = std::max(maxPr, e.id);
  for (const auto& f : g)
    for (const auto& e : f) maxGt = std::max(maxGt, e.id);
  for (const auto& f : r) {
    TrackFrame tf = f;
    for (auto& e : tf) e.id += prOffset;
    mr.push_back(std::move(tf));
  }
  for (const auto& f : g) {
    GtFrame gf = f;
    for (auto& e : gf) e.id += gtOffset;
    mg.push_back(std::move(gf));
  }
  prOffset += maxPr;
  gtOffset += maxGt;
}

void writeFile(const fs::path& path, const std::string& text) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << text;
}

// teacher checkpoint saved next to the model checkpoint, if any
std::unique_ptr<Model> maybeLoadTeacher(const std::string& checkpointBase) {
  fs::path base(checkpointBase);
  fs::path teacher = base.parent_path() / "teacher";
  if (!fs::exists(teacher.string() + ".json")) return nullptr;
  return std::make_unique<Model>(loadCheckpoint(teacher.string()));
}

MetricsReport evaluateModelOnVal(Model& model, const RunConfig& cfg,
                                 Model* teacher) {
  RunVideoOptions opt;
  opt.mode = inferenceMode(cfg.train.recipe);
  opt.disableTrackQueries = cfg.disableTrackQueriesAtInference;
  opt.teacher = teacher;
  TrackingResult merged;
  GtVideo mergedGt;
  int prOffset = 0, gtOffset = 0;
  std::vector<DetectionSet> rawDets;
  std::vector<std::vector<Box>> rawGts;
  opt.rawDetections = &rawDets;
  for (const Video& v : makeValVideos(cfg)) {
    TrackingResult r = runVideo(model, v.frames, cfg.tracker, opt);
    mergeVideo(r, v.gt, prOffset, gtOffset, merged, mergedGt);
    for (const auto& frameGt : v.gt) {
      std::vector<Box> gtb;
      for (const auto& e : frameGt) gtb.push_back(e.box);
      rawGts.push_back(std::move(gtb));
    }
  }
  MetricsReport report = evaluateTracking(merged, mergedGt);
  // Detection quality is scored from the raw per-frame boxes (all scored
  // outputs), not from the tracker's thresholded emissions: the emission
  // thresholds exist for identity management and clobber the PR curve.
  ApOut detAp = cocoAp(rawDets, rawGts);
  report.ap = detAp.ap;
  report.ap50 = detAp.ap50;
  report.ap75 = detAp.ap75;
  return report;
}

}  // namespace

MetricsReport evaluateOnVal(Model& model, const RunConfig& cfg) {
  if (inferenceMode(cfg.train.recipe) == ForwardMode::FrozenAnchorProposal)
    throw std::invalid_argument(
        "evaluateOnVal: frozen-anchor inference needs the teacher; use cmdEval");
  return evaluateModelOnVal(model, cfg, nullptr);
}

TrainArtifacts cmdTrain(const RunConfig& cfg, bool dryRun) {
  cfg.model.validate();
  cfg.train.validate();
  cfg.tracker.validate();
  Dataset data = split(cfg.datasetSpec());  // throws on seed overlap
  if (dryRun) return {};

  fs::create_directories(cfg.outDir);
  saveRunConfig((fs::path(cfg.outDir) / "config.json").string(), cfg);

  std::unique_ptr<Model> teacher;
  if (needsTeacher(cfg.train.recipe)) {
    // detection-pretrained teacher: every epoch in the detection-only phase
    teacher = std::make_unique<Model>(cfg.model, cfg.train.seed + 9001);
    TrainConfig tcfg = cfg.train;
    tcfg.recipe = Recipe::DetPretrain;
    tcfg.detPretrainEpochs = tcfg.epochs;
    train(*teacher, data, tcfg);
    saveCheckpoint((fs::path(cfg.outDir) / "teacher").string(), *teacher);
  }

  Model model(cfg.model, cfg.train.seed);
  std::ofstream log(fs::path(cfg.outDir) / "log.jsonl");
  if (!log) throw std::runtime_error("cannot write epoch log in " + cfg.outDir);
  TrainArtifacts art;
  EpochCallback cb = [&](const EpochStats& es, Model& m) {
    MetricsReport val = evaluateModelOnVal(m, cfg, teacher.get());
    ordered_json rec{{"epoch", es.epoch},
                     {"loss_motr", es.lossMotr},
                     {"loss_prop", es.lossProp},
                     {"loss_total", es.lossTotal},
                     {"ap_val", val.ap},
                     {"hota_val", val.hota}};
    log << rec.dump() << "\n";
    log.flush();
    art.log.push_back(es);
    if (es.epoch == cfg.train.epochs - 1) art.valMetrics = val;
  };
  train(model, data, cfg.train, teacher.get(), cb);

  art.checkpointBase = (fs::path(cfg.outDir) / "checkpoint").string();
  saveCheckpoint(art.checkpointBase, model);
  writeFile(fs::path(cfg.outDir) / "metrics.json", art.valMetrics.toJson());
  ordered_json manifest{
      {"command", "train"},
      {"config", toJson(cfg)},
      {"artifacts",
       {"config.json", "log.jsonl", "checkpoint.json", "checkpoint.bin",
        "metrics.json"}}};
  writeFile(fs::path(cfg.outDir) / "manifest.json", manifest.dump(2) + "\n");
  return art;
}

MetricsReport cmdEval(const RunConfig& cfg, const std::string& checkpointBase) {
  Model model = loadCheckpoint(checkpointBase);
  std::unique_ptr<Model> teacher = maybeLoadTeacher(checkpointBase);
  if (inferenceMode(cfg.train.recipe) == ForwardMode::FrozenAnchorProposal &&
      !teacher)
    throw std::runtime_error("eval: frozen-anchor checkpoint has no teacher at " +
                             checkpointBase);
  fs::create_directories(cfg.outDir);

  RunVideoOptions opt;
  opt.mode = inferenceMode(cfg.train.recipe);
  opt.disableTrackQueries = cfg.disableTrackQueriesAtInference;
  opt.teacher = teacher.get();
  TrackingResult merged;
  GtVideo mergedGt;
  int prOffset = 0, gtOffset = 0;
  std::vector<DetectionSet> rawDets;
  std::vector<std::vector<Box>> rawGts;
  opt.rawDetections = &rawDets;
  std::vector<Video> vids = makeValVideos(cfg);
  for (std::size_t k = 0; k < vids.size(); ++k) {
    TrackingResult r = runVideo(model, vids[k].frames, cfg.tracker, opt);
    std::string tag = "val" + std::to_string(k);
    writeTrackingCsv((fs::path(cfg.outDir) / ("tracking_" + tag + ".csv")).string(), r);
    writeGtCsv((fs::path(cfg.outDir) / ("gt_" + tag + ".csv")).string(), vids[k].gt);
    mergeVideo(r, vids[k].gt, prOffset, gtOffset, merged, mergedGt);
    for (const auto& frameGt : vids[k].gt) {
      std::vector<Box> gtb;
      for (const auto& e : frameGt) gtb.push_back(e.box);
      rawGts.push_back(std::move(gtb));
    }
  }
  MetricsReport report = evaluateTracking(merged, mergedGt);
  // same convention as training-time validation: AP from raw scored boxes,
  // identity metrics from tracker emissions
  ApOut detAp = cocoAp(rawDets, rawGts);
  report.ap = detAp.ap;
  report.ap50 = detAp.ap50;
  report.ap75 = detAp.ap75;
  writeFile(fs::path(cfg.outDir) / "metrics.json", report.toJson());
  return report;
}

ConflictReport cmdConflict(const RunConfig& cfg,
                           const std::string& checkpointBase) {
  Model model = loadCheckpoint(checkpointBase);
  std::unique_ptr<Model> teacher = maybeLoadTeacher(checkpointBase);
  ForwardMode mode = inferenceMode(cfg.train.recipe);
  if (mode == ForwardMode::FrozenAnchorProposal && !teacher)
    throw std::runtime_error("conflict: missing teacher checkpoint");

  // detection quality is judged on the raw per-frame outputs (all scored
  // boxes), not on the thresholded tracker emissions
  auto detectionAp = [&](bool withTrackQueries) {
    std::vector<DetectionSet> preds;
    std::vector<std::vector<Box>> gts;
    for (const Video& v : makeValVideos(cfg)) {
      Tracker tracker(cfg.tracker);
      for (std::size_t f = 0; f < v.frames.size(); ++f) {
        std::vector<Query> tq =
            withTrackQueries ? tracker.trackQueries() : std::vector<Query>{};
        FrameOutput out = model.forwardFrame(v.frames[f], tq, mode, teacher.get());
        DetectionSet ds;
        if (!out.track.queries.empty()) {
          ds.boxes = out.track.dec.finalBoxes();
          ds.scores = out.track.dec.finalScores();
        }
        preds.push_back(std::move(ds));
        std::vector<Box> gtb;
        for (const auto& e : v.gt[f]) gtb.push_back(e.box);
        gts.push_back(std::move(gtb));
        if (withTrackQueries) tracker.step(out.track);
      }
    }
    return cocoAp(preds, gts).ap;
  };

  ConflictReport rep;
  rep.apWith = detectionAp(true);
  rep.apWithout = detectionAp(false);
  fs::create_directories(cfg.outDir);
  ordered_json j{{"ap_with_track_queries", rep.apWith},
                 {"ap_without_track_queries", rep.apWithout},
                 {"gap", rep.gap()}};
  writeFile(fs::path(cfg.outDir) / "conflict.json", j.dump(2) + "\n");
  return rep;
}

namespace {

RunConfig sweepPoint(const RunConfig& base, const std::string& param,
                     const std::string& value, std::size_t index) {
  RunConfig c = base;
  c.outDir = (fs::path(base.outDir) / (param + "_" + value)).string();
  if (param == "c_prop") {
    c.model.cProp = std::stod(value);
    c.train.recipe = Recipe::SelfProposal;
  } else if (param == "proposal_source") {
    if (value == "learnable_anchor") {
      // starve the proposal path: only the learned fallback anchors remain
      c.train.recipe = Recipe::SelfProposal;
      c.model.cProp = 1.0;
    } else if (value == "frozen_anchor") {
      c.train.recipe = Recipe::FrozenAnchorProposal;
    } else if (value == "self") {
      c.train.recipe = Recipe::SelfProposal;
    } else {
      throw std::invalid_argument("sweep: unknown proposal_source '" + value +
                                  "'");
    }
  } else {
    throw std::invalid_argument("sweep: unknown parameter '" + param + "'");
  }
  (void)index;
  return c;
}

}  // namespace

std::vector<SweepRow> cmdSweep(const RunConfig& cfg, const std::string& param,
                               const std::vector<std::string>& values) {
  if (values.empty()) throw std::invalid_argument("sweep: no values given");
  std::vector<SweepRow> rows;

  if (param == "detect_decoder_depth") {
    // one training at the deepest setting, then evaluate the detection pass
    // truncated to each depth
    int maxDepth = 0;
    for (const auto& v : values) maxDepth = std::max(maxDepth, std::stoi(v));
    RunConfig base = cfg;
    base.model.nDecLayersDetect = maxDepth;
    base.model.nDecLayersTrack =
        std::max(base.model.nDecLayersTrack, maxDepth);
    base.train.recipe = Recipe::SelfProposal;
    base.outDir = (fs::path(cfg.outDir) / "depth_base").string();
    TrainArtifacts art = cmdTrain(base);
    Model model = loadCheckpoint(art.checkpointBase);
    for (const auto& v : values) {
      int depth = std::stoi(v);
      std::vector<DetectionSet> preds;
      std::vector<std::vector<Box>> gts;
      for (const Video& vid : makeValVideos(base)) {
        for (std::size_t f = 0; f < vid.frames.size(); ++f) {
          EncoderFeatures mem = model.encodeFrame(vid.frames[f]);
          preds.push_back(model.detectionPass(mem, depth).dets);
          std::vector<Box> gtb;
          for (const auto& e : vid.gt[f]) gtb.push_back(e.box);
          gts.push_back(std::move(gtb));
        }
      }
      SweepRow row;
      row.value = v;
      row.metrics.ap = cocoAp(preds, gts).ap;
      rows.push_back(std::move(row));
    }
  } else {
    for (std::size_t i = 0; i < values.size(); ++i) {
      RunConfig point = sweepPoint(cfg, param, values[i], i);
      TrainArtifacts art = cmdTrain(point);
      SweepRow row;
      row.value = values[i];
      row.metrics = art.valMetrics;
      rows.push_back(std::move(row));
    }
  }

  fs::create_directories(cfg.outDir);
  std::string csv = param + ",AP,HOTA,DetA,AssA,MOTA,IDF1\n";
  ordered_json jrows = ordered_json::array();
  for (const auto& r : rows) {
    csv += r.value + "," + std::to_string(r.metrics.ap) + "," +
           std::to_string(r.metrics.hota) + "," + std::to_string(r.metrics.deta) +
           "," + std::to_string(r.metrics.assa) + "," +
           std::to_string(r.metrics.mota) + "," + std::to_string(r.metrics.idf1) +
           "\n";
    jrows.push_back({{param, r.value},
                     {"metrics", json::parse(r.metrics.toJson())}});
  }
  writeFile(fs::path(cfg.outDir) / "sweep.csv", csv);
  writeFile(fs::path(cfg.outDir) / "sweep.json", jrows.dump(2) + "\n");
  return rows;
}

ProfileReport cmdProfile(const RunConfig& cfg,
                         const std::string& checkpointBase) {
  Model model = checkpointBase.empty() ? Model(cfg.model, cfg.train.seed)
                                       : loadCheckpoint(checkpointBase);
  std::vector<Video> vids = makeValVideos(cfg);
  ProfileReport rep;

  auto timeRun = [&](ForwardMode mode) {
    model.resetCounters();
    auto t0 = std::chrono::steady_clock::now();
    long frames = 0;
    for (const Video& v : vids) {
      RunVideoOptions opt;
      opt.mode = mode;
      runVideo(model, v.frames, cfg.tracker, opt);
      frames += static_cast<long>(v.frames.size());
    }
    std::chrono::duration<double> dt = std::chrono::steady_clock::now() - t0;
    return std::pair<long, double>(frames, dt.count());
  };

  auto [framesSelf, tSelf] = timeRun(ForwardMode::SelfProposal);
  rep.frames = framesSelf;
  rep.encoderInvocations = model.encoderInvocations();
  rep.decoderInvocations = model.decoderInvocations();
  if (rep.encoderInvocations != rep.frames ||
      rep.decoderInvocations != 2 * rep.frames)
    throw std::runtime_error(
        "profile: invocation contract violated (encoder " +
        std::to_string(rep.encoderInvocations) + ", decoder " +
        std::to_string(rep.decoderInvocations) + " for " +
        std::to_string(rep.frames) + " frames; expected 1:2 per frame)");
  auto [framesBase, tBase] = timeRun(ForwardMode::Baseline);
  rep.fpsSelfProposal = framesSelf / tSelf;
  rep.fpsBaseline = framesBase / tBase;
  rep.overhead = (tSelf - tBase) / tBase;

  fs::create_directories(cfg.outDir);
  ordered_json j{{"frames", rep.frames},
                 {"encoder_invocations", rep.encoderInvocations},
                 {"decoder_invocations", rep.decoderInvocations},
                 {"fps_self_proposal", rep.fpsSelfProposal},
                 {"fps_baseline", rep.fpsBaseline},
                 {"overhead", rep.overhead}};
  writeFile(fs::path(cfg.outDir) / "profile.json", j.dump(2) + "\n");
  return rep;
}

void cmdGenData(const RunConfig& cfg) {
  Dataset data = split(cfg.datasetSpec());  // validates the spec
  (void)data;
  fs::create_directories(cfg.outDir);
  ordered_json summary{{"scene", toJson(cfg.scene)},
                       {"train_seeds", cfg.trainSeeds},
                       {"val_seeds", cfg.valSeeds},
                       {"val_frames", cfg.valFrames},
                       {"clip_len", cfg.train.nClip},
                       {"files", ordered_json::array()}};
  auto emit = [&](const char* prefix, std::uint64_t seed, int frames) {
    SceneConfig sc = cfg.scene;
    sc.seed = seed;
    if (frames > 0) sc.numFrames = frames;
    Video v = generate(sc);
    std::string name = std::string(prefix) + "_seed" + std::to_string(seed) +
                       ".csv";
    writeGtCsv((fs::path(cfg.outDir) / name).string(), v.gt);
    summary["files"].push_back(name);
  };
  for (auto s : cfg.trainSeeds) emit("train", s, 0);
  for (auto s : cfg.valSeeds) emit("val", s, cfg.valFrames);
  writeFile(fs::path(cfg.outDir) / "dataset.json", summary.dump(2) + "\n");
}

}  // namespace smr
