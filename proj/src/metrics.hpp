#pragma once

#include <map>
#include <string>
#include <vector>

#include "geometry.hpp"
#include "mot_types.hpp"

// Tracking and detection metrics: COCO-style AP@[0.50:0.95], HOTA with
// DetA/AssA, CLEAR MOTA, IDF1.

namespace smr {

struct MetricsReport {
  double ap = 0, ap50 = 0, ap75 = 0;
  double hota = 0, deta = 0, assa = 0;
  double mota = 0, idf1 = 0;
  long long tp = 0, fp = 0, fn = 0, idsw = 0;
  std::string toJson() const;
};

// Per-frame detections with scores vs per-frame GT boxes.
// AP per threshold uses greedy score-descending matching and 101-point
// interpolated precision-recall area.
double cocoApAt(const std::vector<DetectionSet>& preds,
                const std::vector<std::vector<Box>>& gts, double iouThresh);
struct ApOut {
  double ap = 0, ap50 = 0, ap75 = 0;
};
ApOut cocoAp(const std::vector<DetectionSet>& preds,
             const std::vector<std::vector<Box>>& gts);

struct ClearOut {
  double mota = 0;
  long long tp = 0, fp = 0, fn = 0, idsw = 0, gtTotal = 0;
};
ClearOut clearMota(const TrackingResult& result, const GtVideo& gt);

double idf1(const TrackingResult& result, const GtVideo& gt);

struct HotaOut {
  double hota = 0, deta = 0, assa = 0;
  // per-alpha values, alpha = 0.05..0.95 step 0.05
  std::vector<double> hotaAlpha, detaAlpha, assaAlpha;
};
HotaOut hota(const TrackingResult& result, const GtVideo& gt);

// All metrics in one report; AP is computed from the result's scored boxes.
MetricsReport evaluateTracking(const TrackingResult& result, const GtVideo& gt);

}  // namespace smr
