#pragma once

#include <cstdint>
#include <vector>

#include "mot_types.hpp"
#include "tensor.hpp"

// Deterministic "dancing dots" video generator: soft-edged blobs of
// near-identical color on sinusoidal + random-acceleration trajectories,
// with scheduled occlusions and enter/exit windows.

namespace smr {

struct OcclusionEvent {
  int frame = 0;
  int idA = 1, idB = 2;  // idB is pulled onto idA around `frame`
};

struct SceneConfig {
  int numObjects = 4;
  int numFrames = 60;
  int imageSize = 64;
  int channels = 3;
  double minSize = 0.16, maxSize = 0.3;
  double ampMin = 0.05, ampMax = 0.22;    // sinusoid amplitude
  double freqMin = 0.04, freqMax = 0.18;  // rad per frame
  double accelSigma = 0.001;              // random acceleration, per axis
  double colorJitter = 0.04;              // per-object + per-frame analogue of HSV aug
  std::vector<OcclusionEvent> occlusions;
  // per-object [enter, exit) frame windows; empty = whole video for all
  std::vector<std::pair<int, int>> lifetimes;
  std::uint64_t seed = 0;
};

struct Video {
  std::vector<Tensor> frames;  // each [C x H x W]
  GtVideo gt;
};

Video generate(const SceneConfig& config);

struct DatasetSpec {
  SceneConfig base;                      // per-video overrides come from seeds
  std::vector<std::uint64_t> trainSeeds;
  std::vector<std::uint64_t> valSeeds;
  int clipLen = 5;
  int valFrames = 0;  // 0 = base.numFrames
};

struct Clip {
  std::vector<Tensor> frames;
  GtVideo gt;
};

struct Dataset {
  std::vector<Clip> trainClips;
  std::vector<Video> valVideos;
};

// Train videos are chopped into non-overlapping clipLen-frame clips; val
// videos are kept whole. Seeds must be disjoint.
Dataset split(const DatasetSpec& spec);

}  // namespace smr
