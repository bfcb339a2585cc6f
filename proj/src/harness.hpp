#pragma once

#include <string>
#include <vector>

#include "config.hpp"
#include "metrics.hpp"
#include "training.hpp"

// Experiment driver behind the CLI verbs: training runs with on-disk
// artifacts (config archive, JSONL epoch log, checkpoint, metrics), the
// detection/association conflict probe, parameter sweeps, profiling, and
// data generation.

namespace smr {

struct TrainArtifacts {
  std::string checkpointBase;  // manifest at <base>.json, blob at <base>.bin
  std::vector<EpochStats> log;
  MetricsReport valMetrics;
};

// Writes config.json, log.jsonl, checkpoint.{json,bin}, metrics.json and
// manifest.json under cfg.outDir (plus teacher.{json,bin} for recipes that
// need a detection-pretrained teacher). dryRun validates and writes nothing.
TrainArtifacts cmdTrain(const RunConfig& cfg, bool dryRun = false);

// Runs tracking on the validation videos with the given checkpoint; writes
// metrics.json and per-video tracking/GT CSVs under cfg.outDir.
MetricsReport cmdEval(const RunConfig& cfg, const std::string& checkpointBase);

struct ConflictReport {
  double apWith = 0;     // detection AP with track queries at inference
  double apWithout = 0;  // detection AP with track queries removed
  double gap() const { return apWithout - apWith; }
};

// Detection AP on validation, with and without track queries; writes
// conflict.json under cfg.outDir.
ConflictReport cmdConflict(const RunConfig& cfg,
                           const std::string& checkpointBase);

struct SweepRow {
  std::string value;
  MetricsReport metrics;
};

// param is one of: c_prop (train+eval per threshold), detect_decoder_depth
// (one training, detection AP per depth), proposal_source (train+eval per
// source in {learnable_anchor, frozen_anchor, self}). Writes sweep.csv and
// sweep.json under cfg.outDir.
std::vector<SweepRow> cmdSweep(const RunConfig& cfg, const std::string& param,
                               const std::vector<std::string>& values);

struct ProfileReport {
  long frames = 0;
  long encoderInvocations = 0;
  long decoderInvocations = 0;
  double fpsSelfProposal = 0;
  double fpsBaseline = 0;
  double overhead = 0;  // (t_self - t_baseline) / t_baseline
};

// Verifies the one-encoder/two-decoder invocation contract on the validation
// frames and measures throughput; writes profile.json under cfg.outDir.
// Empty checkpointBase profiles a freshly initialized model.
ProfileReport cmdProfile(const RunConfig& cfg,
                         const std::string& checkpointBase = "");

// Writes ground-truth CSVs for every train/val seed plus dataset.json.
void cmdGenData(const RunConfig& cfg);

// Tracking metrics of one model on the config's validation videos (videos
// are concatenated with disjoint identity ranges).
MetricsReport evaluateOnVal(Model& model, const RunConfig& cfg);

}  // namespace smr
