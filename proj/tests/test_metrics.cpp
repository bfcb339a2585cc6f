#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>
#include <random>

#include "metrics.hpp"

using namespace smr;

namespace {

Box unitBox(double cx, double cy, double s = 0.1) { return Box{cx, cy, s, s}; }

// Perfect 3-frame scenario: 2 objects, correct ids.
void perfectScenario(TrackingResult& res, GtVideo& gt) {
  for (int t = 0; t < 3; ++t) {
    GtFrame gf;
    TrackFrame tf;
    for (int k = 0; k < 2; ++k) {
      Box b = unitBox(0.2 + 0.1 * t + 0.4 * k, 0.5);
      gf.push_back({k + 1, b});
      tf.push_back({k + 1, b, 0.9});
    }
    gt.push_back(gf);
    res.push_back(tf);
  }
}

}  // namespace

TEST_CASE("coco AP: perfect detections give 1.0") {
  std::vector<DetectionSet> preds(3);
  std::vector<std::vector<Box>> gts(3);
  for (int t = 0; t < 3; ++t)
    for (int k = 0; k < 2; ++k) {
      Box b = unitBox(0.3 + 0.3 * k, 0.4 + 0.1 * t);
      preds[t].boxes.push_back(b);
      preds[t].scores.push_back(0.8);
      gts[t].push_back(b);
    }
  ApOut r = cocoAp(preds, gts);
  CHECK(r.ap == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(r.ap50 == 1.0);
  CHECK(r.ap75 == 1.0);
}

TEST_CASE("coco AP: single det with IoU 0.6 passes 3 of 10 thresholds") {
  // gt w=0.2 box; det shifted so IoU = 0.6: widths equal, shift dx with
  // IoU = (w-dx)/(w+dx) = 0.6 -> dx = w/4.
  Box g{0.5, 0.5, 0.2, 0.2};
  Box d{0.55, 0.5, 0.2, 0.2};
  CHECK(iou(d, g) == doctest::Approx(0.6).epsilon(1e-12));
  std::vector<DetectionSet> preds{{{d}, {0.9}}};
  std::vector<std::vector<Box>> gts{{g}};
  ApOut r = cocoAp(preds, gts);
  CHECK(r.ap == doctest::Approx(0.3).epsilon(1e-12));
  CHECK(r.ap50 == 1.0);
  CHECK(r.ap75 == 0.0);
}

TEST_CASE("coco AP: no detections -> 0") {
  std::vector<DetectionSet> preds(2);
  std::vector<std::vector<Box>> gts{{unitBox(0.5, 0.5)}, {unitBox(0.4, 0.4)}};
  CHECK(cocoAp(preds, gts).ap == 0.0);
}

TEST_CASE("coco AP invariant under frame permutation") {
  std::mt19937_64 rng(21);
  std::uniform_real_distribution<double> c(0.2, 0.8), sc(0, 1);
  std::vector<DetectionSet> preds(4);
  std::vector<std::vector<Box>> gts(4);
  for (int t = 0; t < 4; ++t)
    for (int k = 0; k < 3; ++k) {
      Box g = unitBox(c(rng), c(rng));
      gts[t].push_back(g);
      preds[t].boxes.push_back(unitBox(g.cx + 0.01, g.cy));
      preds[t].scores.push_back(sc(rng));
    }
  double base = cocoAp(preds, gts).ap;
  std::vector<std::size_t> perm{2, 0, 3, 1};
  std::vector<DetectionSet> p2;
  std::vector<std::vector<Box>> g2;
  for (auto i : perm) {
    p2.push_back(preds[i]);
    g2.push_back(gts[i]);
  }
  CHECK(cocoAp(p2, g2).ap == doctest::Approx(base).epsilon(1e-12));
}

TEST_CASE("MOTA hand cases") {
  TrackingResult res;
  GtVideo gt;
  perfectScenario(res, gt);
  CHECK(clearMota(res, gt).mota == 1.0);

  // 4 GT total, 1 FN, 1 FP, 0 IDSW -> MOTA 0.5
  GtVideo gt2(2);
  TrackingResult res2(2);
  Box a = unitBox(0.3, 0.3), b = unitBox(0.7, 0.7);
  gt2[0] = {{1, a}, {2, b}};
  gt2[1] = {{1, a}, {2, b}};
  res2[0] = {{10, a, 0.9}, {11, b, 0.9}};
  res2[1] = {{10, a, 0.9}, {12, unitBox(0.1, 0.9), 0.9}};  // miss gt2 + stray FP
  ClearOut c = clearMota(res2, gt2);
  CHECK(c.gtTotal == 4);
  CHECK(c.fn == 1);
  CHECK(c.fp == 1);
  CHECK(c.idsw == 0);
  CHECK(c.mota == doctest::Approx(0.5).epsilon(1e-12));

  // all GT missed, pure FPs -> MOTA = -FP/GT
  TrackingResult res3(2);
  res3[0] = {{1, unitBox(0.9, 0.1), 0.9}};
  ClearOut c3 = clearMota(res3, gt2);
  // all GT missed: MOTA = 1 - (FN+FP)/GT = -FP/GT
  CHECK(c3.mota == doctest::Approx(-1.0 / 4.0));
  CHECK(c3.mota <= 0);
}

TEST_CASE("MOTA counts an identity switch") {
  GtVideo gt(3);
  TrackingResult res(3);
  Box a = unitBox(0.5, 0.5);
  for (int t = 0; t < 3; ++t) gt[t] = {{1, a}};
  res[0] = {{7, a, 0.9}};
  res[1] = {{8, a, 0.9}};
  res[2] = {{8, a, 0.9}};
  ClearOut c = clearMota(res, gt);
  CHECK(c.idsw == 1);
  CHECK(c.mota == doctest::Approx(1.0 - 1.0 / 3.0));
}

TEST_CASE("IDF1 hand cases") {
  TrackingResult res;
  GtVideo gt;
  perfectScenario(res, gt);
  CHECK(idf1(res, gt) == doctest::Approx(1.0).epsilon(1e-12));

  // 1 object, 2 frames, id split -> best mapping keeps 1 of 2 frames
  GtVideo g2(2);
  TrackingResult r2(2);
  Box a = unitBox(0.5, 0.5);
  g2[0] = {{1, a}};
  g2[1] = {{1, a}};
  r2[0] = {{5, a, 0.9}};
  r2[1] = {{6, a, 0.9}};
  CHECK(idf1(r2, g2) == doctest::Approx(0.5).epsilon(1e-12));

  TrackingResult empty(2);
  CHECK(idf1(empty, g2) == 0.0);
}

TEST_CASE("HOTA hand cases") {
  TrackingResult res;
  GtVideo gt;
  perfectScenario(res, gt);
  HotaOut h = hota(res, gt);
  CHECK(h.hota == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(h.deta == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(h.assa == doctest::Approx(1.0).epsilon(1e-12));

  // detection-perfect, fresh prediction id every frame: 2 objects, 10 frames.
  // Each pred id overlaps its gt for 1 of 10 frames: A(c) = 1/(10+1-1) = 0.1.
  GtVideo g2(10);
  TrackingResult r2(10);
  int nextId = 100;
  for (int t = 0; t < 10; ++t)
    for (int k = 0; k < 2; ++k) {
      Box b = unitBox(0.3 + 0.4 * k, 0.5);
      g2[t].push_back({k + 1, b});
      r2[t].push_back({nextId++, b, 0.9});
    }
  HotaOut h2 = hota(r2, g2);
  CHECK(h2.deta == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(h2.assa == doctest::Approx(0.1).epsilon(1e-12));
  CHECK(h2.assa < 0.2);
  CHECK(h2.hota == doctest::Approx(std::sqrt(0.1)).epsilon(1e-12));

  // empty prediction, nonempty gt -> 0
  TrackingResult empty(10);
  HotaOut h3 = hota(empty, g2);
  CHECK(h3.hota == 0.0);
}

TEST_CASE("HOTA identity holds per alpha on every run") {
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> c(0.15, 0.85);
  std::uniform_int_distribution<int> idd(1, 4);
  for (int trial = 0; trial < 20; ++trial) {
    GtVideo gt(6);
    TrackingResult res(6);
    for (int t = 0; t < 6; ++t) {
      for (int k = 0; k < 3; ++k) gt[t].push_back({k + 1, unitBox(c(rng), c(rng))});
      for (int k = 0; k < 3; ++k)
        res[t].push_back({idd(rng), unitBox(c(rng), c(rng)), 0.9});
    }
    HotaOut h = hota(res, gt);
    for (int a = 0; a < 19; ++a)
      CHECK(h.hotaAlpha[a] ==
            doctest::Approx(std::sqrt(h.detaAlpha[a] * h.assaAlpha[a]))
                .epsilon(1e-12));
  }
}

TEST_CASE("metrics invariant under bijective id relabeling") {
  std::mt19937_64 rng(33);
  std::uniform_real_distribution<double> c(0.2, 0.8);
  GtVideo gt(5);
  TrackingResult res(5);
  for (int t = 0; t < 5; ++t)
    for (int k = 0; k < 3; ++k) {
      Box g = unitBox(c(rng), c(rng));
      gt[t].push_back({k + 1, g});
      res[t].push_back({k + 10, unitBox(g.cx + 0.02, g.cy), 0.8});
    }
  MetricsReport base = evaluateTracking(res, gt);
  TrackingResult renamed = res;
  std::map<int, int> remap{{10, 77}, {11, 5}, {12, 42}};
  for (auto& f : renamed)
    for (auto& e : f) e.id = remap[e.id];
  MetricsReport r2 = evaluateTracking(renamed, gt);
  CHECK(base.hota == doctest::Approx(r2.hota).epsilon(1e-12));
  CHECK(base.mota == doctest::Approx(r2.mota).epsilon(1e-12));
  CHECK(base.idf1 == doctest::Approx(r2.idf1).epsilon(1e-12));
  CHECK(base.ap == doctest::Approx(r2.ap).epsilon(1e-12));
}

TEST_CASE("tracking/gt CSV round trip") {
  TrackingResult res;
  GtVideo gt;
  perfectScenario(res, gt);
  std::string rp = "/tmp/smr_test_res.csv", gp = "/tmp/smr_test_gt.csv";
  writeTrackingCsv(rp, res);
  writeGtCsv(gp, gt);
  TrackingResult res2 = readTrackingCsv(rp);
  GtVideo gt2 = readGtCsv(gp);
  REQUIRE(res2.size() == res.size());
  REQUIRE(gt2.size() == gt.size());
  for (std::size_t t = 0; t < res.size(); ++t) {
    REQUIRE(res2[t].size() == res[t].size());
    for (std::size_t i = 0; i < res[t].size(); ++i) {
      CHECK(res2[t][i].id == res[t][i].id);
      CHECK(res2[t][i].box.cx == doctest::Approx(res[t][i].box.cx).epsilon(1e-12));
    }
  }
  std::remove(rp.c_str());
  std::remove(gp.c_str());
}

TEST_CASE("metrics report serializes to JSON") {
  TrackingResult res;
  GtVideo gt;
  perfectScenario(res, gt);
  MetricsReport r = evaluateTracking(res, gt);
  std::string j = r.toJson();
  CHECK(j.find("\"HOTA\"") != std::string::npos);
  CHECK(j.find("\"IDSW\"") != std::string::npos);
  CHECK(j.find("\"MOTA\": 1.0") != std::string::npos);
}
