#include "synth.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <set>
#include <stdexcept>

namespace smr {

namespace {

struct Trajectory {
  double baseX, baseY, ampX, ampY, freqX, freqY, phaseX, phaseY;
  double w, h;
  double r, g, b;  // object color
  std::vector<double> driftX, driftY;  // integrated random acceleration
};

double reflectInto(double v, double lo, double hi) {
  if (hi <= lo) return (lo + hi) / 2;
  double span = hi - lo;
  double x = std::fmod(v - lo, 2 * span);
  if (x < 0) x += 2 * span;
  return lo + (x <= span ? x : 2 * span - x);
}

}  // namespace

Video generate(const SceneConfig& c) {
  if (c.numObjects < 0 || c.numFrames < 1)
    throw std::invalid_argument("generate: need K >= 0 and T >= 1");
  if (!c.occlusions.empty() && c.numObjects < 2)
    throw std::invalid_argument(
        "generate: occlusion schedule requires at least 2 objects");
  if (!c.lifetimes.empty() &&
      c.lifetimes.size() != static_cast<std::size_t>(c.numObjects))
    throw std::invalid_argument("generate: lifetimes must cover every object");

  std::mt19937_64 rng(c.seed * 0x9E3779B97F4A7C15ULL + 0xD1B54A32D192ED03ULL);
  std::uniform_real_distribution<double> u01(0.0, 1.0);
  std::normal_distribution<double> gauss(0.0, 1.0);

  std::vector<Trajectory> trajs(c.numObjects);
  for (auto& t : trajs) {
    t.w = c.minSize + (c.maxSize - c.minSize) * u01(rng);
    t.h = c.minSize + (c.maxSize - c.minSize) * u01(rng);
    double mx = t.w / 2, my = t.h / 2;
    t.baseX = mx + (1 - 2 * mx) * u01(rng);
    t.baseY = my + (1 - 2 * my) * u01(rng);
    t.ampX = c.ampMin + (c.ampMax - c.ampMin) * u01(rng);
    t.ampY = c.ampMin + (c.ampMax - c.ampMin) * u01(rng);
    t.freqX = c.freqMin + (c.freqMax - c.freqMin) * u01(rng);
    t.freqY = c.freqMin + (c.freqMax - c.freqMin) * u01(rng);
    t.phaseX = 2 * M_PI * u01(rng);
    t.phaseY = 2 * M_PI * u01(rng);
    // near-identical appearance across objects
    t.r = 0.75 + c.colorJitter * (2 * u01(rng) - 1);
    t.g = 0.35 + c.colorJitter * (2 * u01(rng) - 1);
    t.b = 0.30 + c.colorJitter * (2 * u01(rng) - 1);
    t.driftX.assign(c.numFrames, 0.0);
    t.driftY.assign(c.numFrames, 0.0);
    double vx = 0, vy = 0;
    for (int f = 1; f < c.numFrames; ++f) {
      vx += c.accelSigma * gauss(rng);
      vy += c.accelSigma * gauss(rng);
      t.driftX[f] = t.driftX[f - 1] + vx;
      t.driftY[f] = t.driftY[f - 1] + vy;
    }
  }

  auto alive = [&](int obj, int frame) {
    if (c.lifetimes.empty()) return true;
    return frame >= c.lifetimes[obj].first && frame < c.lifetimes[obj].second;
  };

  // Raw boxes before occlusion blending.
  auto rawBox = [&](int obj, int f) {
    const Trajectory& t = trajs[obj];
    double cx = t.baseX + t.ampX * std::sin(t.freqX * f + t.phaseX) + t.driftX[f];
    double cy = t.baseY + t.ampY * std::sin(t.freqY * f + t.phaseY) + t.driftY[f];
    cx = reflectInto(cx, t.w / 2, 1 - t.w / 2);
    cy = reflectInto(cy, t.h / 2, 1 - t.h / 2);
    return Box{cx, cy, t.w, t.h};
  };

  const int occWindow = 6;  // frames on each side of the scheduled peak
  auto boxAt = [&](int obj, int f) {
    Box b = rawBox(obj, f);
    for (const auto& oc : c.occlusions) {
      if (oc.idB != obj + 1) continue;
      int dist = std::abs(f - oc.frame);
      if (dist > occWindow) continue;
      // pull idB onto idA, peaking at 0.9 so the boxes overlap but stay distinct
      double s = 0.9 * (1.0 - static_cast<double>(dist) / (occWindow + 1));
      Box a = rawBox(oc.idA - 1, f);
      b.cx += s * (a.cx - b.cx);
      b.cy += s * (a.cy - b.cy);
      b.w += s * (a.w - b.w);
      b.h += s * (a.h - b.h);
    }
    return b;
  };

  Video out;
  out.gt.resize(c.numFrames);
  int H = c.imageSize, W = c.imageSize, C = c.channels;
  for (int f = 0; f < c.numFrames; ++f) {
    // ground truth first
    std::vector<Box> boxes(c.numObjects);
    for (int k = 0; k < c.numObjects; ++k) {
      if (!alive(k, f)) continue;
      boxes[k] = boxAt(k, f);
    }
    for (int k = 0; k < c.numObjects; ++k) {
      if (!alive(k, f)) continue;
      bool visible = true;
      for (int j = k + 1; j < c.numObjects; ++j)  // later ids render on top
        if (alive(j, f) && iou(boxes[k], boxes[j]) > 0.5) visible = false;
      out.gt[f].push_back(GtEntry{k + 1, boxes[k], visible});
    }

    // render back-to-front, 2-px soft edges
    double frameJitter = 1.0 + c.colorJitter * (2 * u01(rng) - 1);
    std::vector<double> img(static_cast<std::size_t>(C) * H * W, 0.08);
    for (int k = 0; k < c.numObjects; ++k) {
      if (!alive(k, f)) continue;
      const Box& b = boxes[k];
      const Trajectory& t = trajs[k];
      double col[3] = {t.r * frameJitter, t.g * frameJitter, t.b * frameJitter};
      int x0 = std::max(0, static_cast<int>(std::floor(b.x1() * W)) - 1);
      int x1 = std::min(W - 1, static_cast<int>(std::ceil(b.x2() * W)) + 1);
      int y0 = std::max(0, static_cast<int>(std::floor(b.y1() * H)) - 1);
      int y1 = std::min(H - 1, static_cast<int>(std::ceil(b.y2() * H)) + 1);
      double halfMinPx = std::min(b.w * W, b.h * H) / 2;
      for (int py = y0; py <= y1; ++py)
        for (int px = x0; px <= x1; ++px) {
          double nx = (((px + 0.5) / W) - b.cx) / (b.w / 2);
          double ny = (((py + 0.5) / H) - b.cy) / (b.h / 2);
          double rho = std::sqrt(nx * nx + ny * ny);
          double distPx = (1.0 - rho) * halfMinPx;
          double alpha = std::clamp(distPx / 2.0, 0.0, 1.0);
          if (alpha <= 0) continue;
          for (int ch = 0; ch < std::min(C, 3); ++ch) {
            double& pix = img[(static_cast<std::size_t>(ch) * H + py) * W + px];
            pix = (1 - alpha) * pix + alpha * col[ch];
          }
        }
    }
    out.frames.push_back(Tensor::from(
        {static_cast<std::size_t>(C), static_cast<std::size_t>(H),
         static_cast<std::size_t>(W)},
        std::move(img)));
  }

  // scheduled occlusions must actually overlap
  for (const auto& oc : c.occlusions) {
    const GtFrame& gf = out.gt[oc.frame];
    const Box *a = nullptr, *b = nullptr;
    for (const auto& e : gf) {
      if (e.id == oc.idA) a = &e.box;
      if (e.id == oc.idB) b = &e.box;
    }
    if (a && b && iou(*a, *b) <= 0.5)
      throw std::runtime_error("generate: scheduled occlusion failed to overlap");
  }
  return out;
}

Dataset split(const DatasetSpec& spec) {
  std::set<std::uint64_t> train(spec.trainSeeds.begin(), spec.trainSeeds.end());
  for (auto s : spec.valSeeds)
    if (train.count(s))
      throw std::invalid_argument("split: train/val seeds overlap at seed " +
                                  std::to_string(s));
  Dataset out;
  for (auto s : spec.trainSeeds) {
    SceneConfig c = spec.base;
    c.seed = s;
    Video v = generate(c);
    int nClips = c.numFrames / spec.clipLen;
    for (int k = 0; k < nClips; ++k) {
      Clip clip;
      for (int f = 0; f < spec.clipLen; ++f) {
        clip.frames.push_back(v.frames[k * spec.clipLen + f]);
        clip.gt.push_back(v.gt[k * spec.clipLen + f]);
      }
      out.trainClips.push_back(std::move(clip));
    }
  }
  for (auto s : spec.valSeeds) {
    SceneConfig c = spec.base;
    c.seed = s;
    if (spec.valFrames > 0) c.numFrames = spec.valFrames;
    out.valVideos.push_back(generate(c));
  }
  return out;
}

}  // namespace smr
