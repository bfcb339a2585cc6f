#pragma once

#include <vector>

#include "model.hpp"
#include "mot_types.hpp"

// Online inference loop and the simplified track-query lifecycle: spawn on
// confident candidates, propagate decoder content, retire after a grace
// window, re-identify within it.

namespace smr {

struct TrackerConfig {
  double tauEn = 0.5;  // spawn threshold for proposal / learned-anchor queries
  double tauEx = 0.5;  // keep-alive threshold for existing tracks
  int tReid = 20;      // inactive frames tolerated before permanent removal

  void validate() const;
};

struct TrackState {
  int id = 0;
  Query query;  // kind == Track; carries propagated z_pos / z_content
  double lastScore = 0;
  bool active = true;
  int inactiveAge = 0;  // 0 while active, <= tReid while inactive
};

class Tracker {
 public:
  explicit Tracker(const TrackerConfig& config);

  // Track queries for the next tracking pass, in state order. Inactive
  // tracks are included: they need fresh scores to re-identify.
  std::vector<Query> trackQueries() const;

  // Consumes one frame's tracking-pass output (queries aligned index-wise:
  // the first trackQueries().size() entries are ours) and advances the
  // lifecycle. Returns the boxes emitted for this frame.
  TrackFrame step(const TrackPassOutput& out);

  // Spawn-only variant: every confident candidate gets a fresh id and the
  // state is discarded afterwards (per-frame detection, no association).
  TrackFrame stepDetectionsOnly(const TrackPassOutput& out);

  const std::vector<TrackState>& tracks() const { return tracks_; }
  void reset();

 private:
  TrackerConfig cfg_;
  std::vector<TrackState> tracks_;
  int nextId_ = 1;
};

struct RunVideoOptions {
  ForwardMode mode = ForwardMode::SelfProposal;
  bool disableTrackQueries = false;  // detection-association conflict probe
  Model* teacher = nullptr;          // for ForwardMode::FrozenAnchorProposal
  // When set, receives the raw per-frame scored boxes (all tracking-pass
  // outputs, before the tracker's emission thresholds).
  std::vector<DetectionSet>* rawDetections = nullptr;
};

TrackingResult runVideo(Model& model, const std::vector<Tensor>& frames,
                        const TrackerConfig& config,
                        const RunVideoOptions& options = {});

}  // namespace smr
