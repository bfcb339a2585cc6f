#pragma once

#include <string>
#include <vector>

#include "geometry.hpp"

// Shared ground-truth / tracking-result containers and their CSV form
// (MOT-challenge style: frame,id,x1,y1,w,h,score with normalized coords).

namespace smr {

struct GtEntry {
  int id = 0;
  Box box;
  bool visible = true;
};
using GtFrame = std::vector<GtEntry>;
using GtVideo = std::vector<GtFrame>;

struct TrackEntry {
  int id = 0;
  Box box;
  double score = 1.0;
};
using TrackFrame = std::vector<TrackEntry>;
using TrackingResult = std::vector<TrackFrame>;

void writeTrackingCsv(const std::string& path, const TrackingResult& result);
TrackingResult readTrackingCsv(const std::string& path);
void writeGtCsv(const std::string& path, const GtVideo& gt);
GtVideo readGtCsv(const std::string& path);

}  // namespace smr
