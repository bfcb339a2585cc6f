#include "tracker.hpp"

#include <cmath>
#include <stdexcept>

namespace smr {

void TrackerConfig::validate() const {
  if (tauEn < 0 || tauEn > 1 || tauEx < 0 || tauEx > 1)
    throw std::invalid_argument("TrackerConfig: thresholds must be in [0,1]");
  if (tReid < 0)
    throw std::invalid_argument("TrackerConfig: tReid must be >= 0");
}

Tracker::Tracker(const TrackerConfig& config) : cfg_(config) {
  cfg_.validate();
}

void Tracker::reset() {
  tracks_.clear();
  nextId_ = 1;
}

std::vector<Query> Tracker::trackQueries() const {
  std::vector<Query> out;
  out.reserve(tracks_.size());
  for (const auto& t : tracks_) out.push_back(t.query);
  return out;
}

namespace {

Query propagatedQuery(int id, const LayerOutput& fin, std::size_t i,
                      const Box& box, double score) {
  Query q;
  q.kind = QueryKind::Track;
  q.id = id;
  q.pos = box;
  q.posLogit = Tensor::from({1, 4}, {logitClamped(box.cx), logitClamped(box.cy),
                                     logitClamped(box.w), logitClamped(box.h)});
  q.content = detach(sliceRows(fin.content, i, i + 1));
  q.score = score;
  return q;
}

}  // namespace

TrackFrame Tracker::step(const TrackPassOutput& out) {
  if (out.queries.size() < tracks_.size())
    throw std::invalid_argument("Tracker::step: outputs shorter than state");
  TrackFrame emitted;
  if (out.queries.empty()) return emitted;

  const LayerOutput& fin = out.dec.final();
  std::vector<Box> boxes = out.dec.finalBoxes();
  std::vector<double> scores = out.dec.finalScores();

  std::vector<TrackState> survivors;
  survivors.reserve(tracks_.size());
  for (std::size_t i = 0; i < tracks_.size(); ++i) {
    TrackState t = tracks_[i];
    t.lastScore = scores[i];
    if (scores[i] >= cfg_.tauEx) {
      t.active = true;
      t.inactiveAge = 0;
      emitted.push_back(TrackEntry{t.id, boxes[i], scores[i]});
    } else {
      t.active = false;
      t.inactiveAge++;
      if (t.inactiveAge > cfg_.tReid) continue;  // removed for good
    }
    t.query = propagatedQuery(t.id, fin, i, boxes[i], scores[i]);
    survivors.push_back(std::move(t));
  }

  for (std::size_t i = tracks_.size(); i < out.queries.size(); ++i) {
    if (scores[i] < cfg_.tauEn) continue;
    TrackState t;
    t.id = nextId_++;
    t.lastScore = scores[i];
    t.active = true;
    t.query = propagatedQuery(t.id, fin, i, boxes[i], scores[i]);
    emitted.push_back(TrackEntry{t.id, boxes[i], scores[i]});
    survivors.push_back(std::move(t));
  }
  tracks_ = std::move(survivors);
  return emitted;
}

TrackFrame Tracker::stepDetectionsOnly(const TrackPassOutput& out) {
  TrackFrame emitted;
  if (out.queries.empty()) return emitted;
  std::vector<Box> boxes = out.dec.finalBoxes();
  std::vector<double> scores = out.dec.finalScores();
  for (std::size_t i = 0; i < out.queries.size(); ++i) {
    if (scores[i] < cfg_.tauEn) continue;
    emitted.push_back(TrackEntry{nextId_++, boxes[i], scores[i]});
  }
  return emitted;
}

TrackingResult runVideo(Model& model, const std::vector<Tensor>& frames,
                        const TrackerConfig& config,
                        const RunVideoOptions& options) {
  Tracker tracker(config);
  TrackingResult result;
  result.reserve(frames.size());
  for (const auto& frame : frames) {
    std::vector<Query> trackQs =
        options.disableTrackQueries ? std::vector<Query>{} : tracker.trackQueries();
    FrameOutput out =
        model.forwardFrame(frame, trackQs, options.mode, options.teacher);
    if (options.rawDetections) {
      // per-frame detector output: the detection pass where the mode has
      // one, otherwise the raw (unthresholded) tracking-pass boxes
      DetectionSet ds;
      if (out.det) {
        ds = out.det->dets;
      } else if (!out.track.queries.empty()) {
        ds.boxes = out.track.dec.finalBoxes();
        ds.scores = out.track.dec.finalScores();
      }
      options.rawDetections->push_back(std::move(ds));
    }
    result.push_back(options.disableTrackQueries
                         ? tracker.stepDetectionsOnly(out.track)
                         : tracker.step(out.track));
  }
  return result;
}

}  // namespace smr
