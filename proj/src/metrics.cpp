#include "metrics.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <numeric>
#include <set>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

#include "matching.hpp"

namespace smr {

// ---- CSV I/O --------------------------------------------------------------

void writeTrackingCsv(const std::string& path, const TrackingResult& result) {
  std::ofstream f(path);
  if (!f) throw std::runtime_error("cannot open for writing: " + path);
  f.precision(17);
  for (std::size_t t = 0; t < result.size(); ++t)
    for (const auto& e : result[t])
      f << (t + 1) << ',' << e.id << ',' << e.box.x1() << ',' << e.box.y1()
        << ',' << e.box.w << ',' << e.box.h << ',' << e.score << '\n';
}

namespace {

std::vector<std::vector<double>> readCsvRows(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw std::runtime_error("cannot open: " + path);
  std::vector<std::vector<double>> rows;
  std::string line;
  while (std::getline(f, line)) {
    if (line.empty()) continue;
    std::vector<double> row;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) row.push_back(std::stod(cell));
    if (row.size() < 6)
      throw std::runtime_error("malformed CSV row in " + path + ": " + line);
    rows.push_back(std::move(row));
  }
  return rows;
}

}  // namespace

TrackingResult readTrackingCsv(const std::string& path) {
  TrackingResult out;
  for (const auto& r : readCsvRows(path)) {
    std::size_t frame = static_cast<std::size_t>(r[0]);
    if (frame == 0) throw std::runtime_error("frames are 1-based in " + path);
    if (out.size() < frame) out.resize(frame);
    Box b{r[2] + r[4] / 2, r[3] + r[5] / 2, r[4], r[5]};
    out[frame - 1].push_back(
        TrackEntry{static_cast<int>(r[1]), b, r.size() > 6 ? r[6] : 1.0});
  }
  return out;
}

void writeGtCsv(const std::string& path, const GtVideo& gt) {
  std::ofstream f(path);
  if (!f) throw std::runtime_error("cannot open for writing: " + path);
  f.precision(17);
  for (std::size_t t = 0; t < gt.size(); ++t)
    for (const auto& e : gt[t])
      f << (t + 1) << ',' << e.id << ',' << e.box.x1() << ',' << e.box.y1()
        << ',' << e.box.w << ',' << e.box.h << ',' << (e.visible ? 1 : 0)
        << '\n';
}

GtVideo readGtCsv(const std::string& path) {
  GtVideo out;
  for (const auto& r : readCsvRows(path)) {
    std::size_t frame = static_cast<std::size_t>(r[0]);
    if (frame == 0) throw std::runtime_error("frames are 1-based in " + path);
    if (out.size() < frame) out.resize(frame);
    Box b{r[2] + r[4] / 2, r[3] + r[5] / 2, r[4], r[5]};
    out[frame - 1].push_back(
        GtEntry{static_cast<int>(r[1]), b, r.size() <= 6 || r[6] > 0});
  }
  return out;
}

// ---- COCO AP ---------------------------------------------------------------

double cocoApAt(const std::vector<DetectionSet>& preds,
                const std::vector<std::vector<Box>>& gts, double iouThresh) {
  if (preds.size() != gts.size())
    throw std::invalid_argument("cocoApAt: preds/gts frame count mismatch");
  std::size_t nGt = 0;
  for (const auto& g : gts) nGt += g.size();

  struct Det {
    double score;
    std::size_t frame, idx;
  };
  std::vector<Det> dets;
  for (std::size_t t = 0; t < preds.size(); ++t)
    for (std::size_t i = 0; i < preds[t].size(); ++i)
      dets.push_back({preds[t].scores[i], t, i});
  // Descending score; stable order on ties for determinism.
  std::stable_sort(dets.begin(), dets.end(),
                   [](const Det& a, const Det& b) { return a.score > b.score; });

  if (nGt == 0) return 0.0;

  std::vector<std::vector<bool>> gtUsed(gts.size());
  for (std::size_t t = 0; t < gts.size(); ++t)
    gtUsed[t].assign(gts[t].size(), false);

  std::vector<int> isTp(dets.size(), 0);
  for (std::size_t k = 0; k < dets.size(); ++k) {
    const auto& d = dets[k];
    const Box& pb = preds[d.frame].boxes[d.idx];
    double best = iouThresh - 1e-9;  // tolerate one-ulp IoU rounding
    int bestJ = -1;
    for (std::size_t j = 0; j < gts[d.frame].size(); ++j) {
      if (gtUsed[d.frame][j]) continue;
      double v = iou(pb, gts[d.frame][j]);
      if (v >= best) {
        best = v;
        bestJ = static_cast<int>(j);
      }
    }
    if (bestJ >= 0) {
      gtUsed[d.frame][bestJ] = true;
      isTp[k] = 1;
    }
  }

  // 101-point interpolated PR area.
  std::vector<double> prec(dets.size()), rec(dets.size());
  long long tp = 0, fp = 0;
  for (std::size_t k = 0; k < dets.size(); ++k) {
    tp += isTp[k];
    fp += 1 - isTp[k];
    prec[k] = static_cast<double>(tp) / static_cast<double>(tp + fp);
    rec[k] = static_cast<double>(tp) / static_cast<double>(nGt);
  }
  // precision envelope (max precision at recall >= r)
  for (std::size_t k = prec.size(); k-- > 1;)
    prec[k - 1] = std::max(prec[k - 1], prec[k]);
  double ap = 0;
  std::size_t k = 0;
  for (int i = 0; i <= 100; ++i) {
    double r = i / 100.0;
    while (k < rec.size() && rec[k] < r) ++k;
    ap += (k < prec.size()) ? prec[k] : 0.0;
  }
  return ap / 101.0;
}

ApOut cocoAp(const std::vector<DetectionSet>& preds,
             const std::vector<std::vector<Box>>& gts) {
  ApOut out;
  for (int i = 0; i < 10; ++i) {
    double a = 0.5 + 0.05 * i;
    double v = cocoApAt(preds, gts, a);
    out.ap += v / 10.0;
    if (i == 0) out.ap50 = v;
    if (i == 5) out.ap75 = v;
  }
  return out;
}

// ---- CLEAR MOTA ------------------------------------------------------------

ClearOut clearMota(const TrackingResult& result, const GtVideo& gt) {
  std::size_t T = std::max(result.size(), gt.size());
  ClearOut out;
  std::map<int, int> lastMatch;  // gt id -> pred id it was last matched to
  for (std::size_t t = 0; t < T; ++t) {
    const GtFrame empty_g;
    const TrackFrame empty_p;
    const GtFrame& g = t < gt.size() ? gt[t] : empty_g;
    const TrackFrame& p = t < result.size() ? result[t] : empty_p;
    out.gtTotal += static_cast<long long>(g.size());

    std::vector<bool> gDone(g.size(), false), pDone(p.size(), false);
    std::vector<std::pair<std::size_t, std::size_t>> matches;
    // Continuity: keep previous-frame pairs still above threshold.
    for (std::size_t i = 0; i < g.size(); ++i) {
      auto it = lastMatch.find(g[i].id);
      if (it == lastMatch.end()) continue;
      for (std::size_t j = 0; j < p.size(); ++j) {
        if (pDone[j] || p[j].id != it->second) continue;
        if (iou(g[i].box, p[j].box) >= 0.5) {
          matches.emplace_back(i, j);
          gDone[i] = true;
          pDone[j] = true;
        }
        break;
      }
    }
    // Hungarian on the remainder (maximize IoU, gated at 0.5).
    std::vector<std::size_t> gi, pj;
    for (std::size_t i = 0; i < g.size(); ++i)
      if (!gDone[i]) gi.push_back(i);
    for (std::size_t j = 0; j < p.size(); ++j)
      if (!pDone[j]) pj.push_back(j);
    if (!gi.empty() && !pj.empty()) {
      CostMatrix cm{gi.size(), pj.size(), {}};
      cm.cost.resize(gi.size() * pj.size());
      for (std::size_t a = 0; a < gi.size(); ++a)
        for (std::size_t b = 0; b < pj.size(); ++b)
          cm.at(a, b) = 1.0 - iou(g[gi[a]].box, p[pj[b]].box);
      for (auto [a, b] : hungarian(cm))
        if (cm.at(a, b) <= 0.5) matches.emplace_back(gi[a], pj[b]);
    }

    out.tp += static_cast<long long>(matches.size());
    out.fn += static_cast<long long>(g.size() - matches.size());
    out.fp += static_cast<long long>(p.size() - matches.size());
    for (auto [i, j] : matches) {
      auto it = lastMatch.find(g[i].id);
      if (it != lastMatch.end() && it->second != p[j].id) out.idsw++;
      lastMatch[g[i].id] = p[j].id;
    }
  }
  out.mota = out.gtTotal == 0
                 ? (out.fp == 0 ? 1.0 : 0.0)
                 : 1.0 - static_cast<double>(out.fn + out.fp + out.idsw) /
                             static_cast<double>(out.gtTotal);
  return out;
}

// ---- IDF1 -------------------------------------------------------------------

double idf1(const TrackingResult& result, const GtVideo& gt) {
  std::size_t T = std::max(result.size(), gt.size());
  std::map<int, long long> gtLen, prLen;
  std::map<std::pair<int, int>, long long> overlap;  // frames with IoU >= 0.5
  for (std::size_t t = 0; t < T; ++t) {
    if (t < gt.size())
      for (const auto& e : gt[t]) gtLen[e.id]++;
    if (t < result.size())
      for (const auto& e : result[t]) prLen[e.id]++;
    if (t < gt.size() && t < result.size())
      for (const auto& ge : gt[t])
        for (const auto& pe : result[t])
          if (iou(ge.box, pe.box) >= 0.5) overlap[{ge.id, pe.id}]++;
  }
  long long gtTotal = 0, prTotal = 0;
  for (auto& [k, v] : gtLen) gtTotal += v;
  for (auto& [k, v] : prLen) prTotal += v;
  if (gtTotal + prTotal == 0) return 1.0;
  if (gtLen.empty() || prLen.empty()) return 0.0;

  std::vector<int> gids, pids;
  for (auto& [k, v] : gtLen) gids.push_back(k);
  for (auto& [k, v] : prLen) pids.push_back(k);
  // Maximize total IDTP over a bijective identity mapping.
  CostMatrix cm{gids.size(), pids.size(), {}};
  cm.cost.resize(gids.size() * pids.size(), 0.0);
  for (std::size_t a = 0; a < gids.size(); ++a)
    for (std::size_t b = 0; b < pids.size(); ++b) {
      auto it = overlap.find({gids[a], pids[b]});
      cm.at(a, b) = it == overlap.end() ? 0.0 : -static_cast<double>(it->second);
    }
  long long idtp = 0;
  for (auto [a, b] : hungarian(cm)) idtp -= static_cast<long long>(cm.at(a, b));
  return 2.0 * static_cast<double>(idtp) / static_cast<double>(gtTotal + prTotal);
}

// ---- HOTA (reference TrackEval algorithm) -----------------------------------

HotaOut hota(const TrackingResult& result, const GtVideo& gt) {
  HotaOut out;
  const int nAlpha = 19;  // 0.05 .. 0.95
  std::size_t T = std::max(result.size(), gt.size());

  // Dense id maps.
  std::map<int, std::size_t> gmap, pmap;
  for (std::size_t t = 0; t < gt.size(); ++t)
    for (const auto& e : gt[t]) gmap.emplace(e.id, gmap.size());
  for (std::size_t t = 0; t < result.size(); ++t)
    for (const auto& e : result[t]) pmap.emplace(e.id, pmap.size());
  std::size_t nG = gmap.size(), nP = pmap.size();

  out.hotaAlpha.assign(nAlpha, 0);
  out.detaAlpha.assign(nAlpha, 0);
  out.assaAlpha.assign(nAlpha, 0);
  if (nG == 0 && nP == 0) {
    out.hotaAlpha.assign(nAlpha, 1);
    out.detaAlpha.assign(nAlpha, 1);
    out.assaAlpha.assign(nAlpha, 1);
    out.hota = out.deta = out.assa = 1;
    return out;
  }
  if (nG == 0 || nP == 0) {
    // all misses or all false positives
    out.hota = out.deta = out.assa = 0;
    return out;
  }

  std::vector<double> potential(nG * nP, 0.0);
  std::vector<double> gCount(nG, 0.0), pCount(nP, 0.0);
  // Per-frame similarity, cached for the second pass.
  struct FrameSim {
    std::vector<std::size_t> g, p;  // dense ids
    std::vector<double> sim;        // |g| x |p|
  };
  std::vector<FrameSim> sims(T);
  for (std::size_t t = 0; t < T; ++t) {
    const GtFrame empty_g;
    const TrackFrame empty_p;
    const GtFrame& gf = t < gt.size() ? gt[t] : empty_g;
    const TrackFrame& pf = t < result.size() ? result[t] : empty_p;
    FrameSim& fs = sims[t];
    for (const auto& e : gf) fs.g.push_back(gmap[e.id]);
    for (const auto& e : pf) fs.p.push_back(pmap[e.id]);
    fs.sim.resize(gf.size() * pf.size());
    for (std::size_t i = 0; i < gf.size(); ++i)
      for (std::size_t j = 0; j < pf.size(); ++j)
        fs.sim[i * pf.size() + j] = iou(gf[i].box, pf[j].box);
    for (auto gid : fs.g) gCount[gid] += 1;
    for (auto pid : fs.p) pCount[pid] += 1;
    // accumulate normalized similarity as potential-match mass
    for (std::size_t i = 0; i < gf.size(); ++i)
      for (std::size_t j = 0; j < pf.size(); ++j) {
        double s = fs.sim[i * pf.size() + j];
        if (s <= 1e-12) continue;
        double rowSum = 0, colSum = 0;
        for (std::size_t jj = 0; jj < pf.size(); ++jj) rowSum += fs.sim[i * pf.size() + jj];
        for (std::size_t ii = 0; ii < gf.size(); ++ii) colSum += fs.sim[ii * pf.size() + j];
        double denom = rowSum + colSum - s;
        potential[fs.g[i] * nP + fs.p[j]] += s / denom;
      }
  }

  std::vector<double> globalAlign(nG * nP, 0.0);
  for (std::size_t a = 0; a < nG; ++a)
    for (std::size_t b = 0; b < nP; ++b) {
      double pm = potential[a * nP + b];
      globalAlign[a * nP + b] = pm / (gCount[a] + pCount[b] - pm);
    }

  long long gtTotal = 0, prTotal = 0;
  for (double v : gCount) gtTotal += static_cast<long long>(v);
  for (double v : pCount) prTotal += static_cast<long long>(v);

  std::vector<long long> tp(nAlpha, 0);
  std::vector<std::vector<double>> matchCount(
      nAlpha, std::vector<double>(nG * nP, 0.0));
  for (std::size_t t = 0; t < T; ++t) {
    const FrameSim& fs = sims[t];
    std::size_t m = fs.g.size(), n = fs.p.size();
    if (m == 0 || n == 0) continue;
    // Association-aware matching: Hungarian maximizing global alignment
    // weighted by per-frame IoU, then thresholded per alpha.
    CostMatrix cm{m, n, {}};
    cm.cost.resize(m * n);
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t j = 0; j < n; ++j)
        cm.at(i, j) =
            -(globalAlign[fs.g[i] * nP + fs.p[j]] * fs.sim[i * n + j]);
    for (auto [i, j] : hungarian(cm)) {
      double s = fs.sim[i * n + j];
      for (int a = 0; a < nAlpha; ++a) {
        double alpha = 0.05 * (a + 1);
        if (s >= alpha - 1e-12) {
          tp[a]++;
          matchCount[a][fs.g[i] * nP + fs.p[j]] += 1.0;
        }
      }
    }
  }

  for (int a = 0; a < nAlpha; ++a) {
    long long fn = gtTotal - tp[a];
    long long fp = prTotal - tp[a];
    double deta = tp[a] + fn + fp == 0
                      ? 1.0
                      : static_cast<double>(tp[a]) /
                            static_cast<double>(tp[a] + fn + fp);
    double assa = 0;
    if (tp[a] > 0) {
      double acc = 0;
      for (std::size_t g = 0; g < nG; ++g)
        for (std::size_t p = 0; p < nP; ++p) {
          double mc = matchCount[a][g * nP + p];
          if (mc <= 0) continue;
          acc += mc * (mc / (gCount[g] + pCount[p] - mc));
        }
      assa = acc / static_cast<double>(tp[a]);
    }
    out.detaAlpha[a] = deta;
    out.assaAlpha[a] = assa;
    out.hotaAlpha[a] = std::sqrt(deta * assa);
    out.deta += deta / nAlpha;
    out.assa += assa / nAlpha;
    out.hota += out.hotaAlpha[a] / nAlpha;
  }
  return out;
}

MetricsReport evaluateTracking(const TrackingResult& result, const GtVideo& gt) {
  MetricsReport r;
  std::vector<DetectionSet> preds(std::max(result.size(), gt.size()));
  std::vector<std::vector<Box>> gtb(preds.size());
  for (std::size_t t = 0; t < result.size(); ++t)
    for (const auto& e : result[t]) {
      preds[t].boxes.push_back(e.box);
      preds[t].scores.push_back(e.score);
    }
  for (std::size_t t = 0; t < gt.size(); ++t)
    for (const auto& e : gt[t]) gtb[t].push_back(e.box);
  ApOut ap = cocoAp(preds, gtb);
  r.ap = ap.ap;
  r.ap50 = ap.ap50;
  r.ap75 = ap.ap75;
  ClearOut c = clearMota(result, gt);
  r.mota = c.mota;
  r.tp = c.tp;
  r.fp = c.fp;
  r.fn = c.fn;
  r.idsw = c.idsw;
  r.idf1 = idf1(result, gt);
  HotaOut h = hota(result, gt);
  r.hota = h.hota;
  r.deta = h.deta;
  r.assa = h.assa;
  return r;
}

std::string MetricsReport::toJson() const {
  nlohmann::ordered_json j;
  j["AP"] = ap;
  j["AP50"] = ap50;
  j["AP75"] = ap75;
  j["HOTA"] = hota;
  j["DetA"] = deta;
  j["AssA"] = assa;
  j["MOTA"] = mota;
  j["IDF1"] = idf1;
  j["counts"] = {{"TP", tp}, {"FP", fp}, {"FN", fn}, {"IDSW", idsw}};
  return j.dump(2);
}

}  // namespace smr
