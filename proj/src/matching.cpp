#include "matching.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>

namespace smr {

namespace {

// Potential-based Hungarian algorithm, O(n^2 m), for n rows <= m cols.
// Deterministic: scans columns in increasing index, strict improvement only,
// so the lowest-index optimum is selected among ties.
std::vector<int> solveRect(const std::vector<double>& a, std::size_t n,
                           std::size_t m) {
  const double kInf = std::numeric_limits<double>::infinity();
  std::vector<double> u(n + 1, 0.0), v(m + 1, 0.0);
  std::vector<std::size_t> p(m + 1, 0), way(m + 1, 0);
  for (std::size_t i = 1; i <= n; ++i) {
    p[0] = i;
    std::size_t j0 = 0;
    std::vector<double> minv(m + 1, kInf);
    std::vector<bool> used(m + 1, false);
    do {
      used[j0] = true;
      std::size_t i0 = p[j0], j1 = 0;
      double delta = kInf;
      for (std::size_t j = 1; j <= m; ++j) {
        if (used[j]) continue;
        double cur = a[(i0 - 1) * m + (j - 1)] - u[i0] - v[j];
        if (cur < minv[j]) {
          minv[j] = cur;
          way[j] = j0;
        }
        if (minv[j] < delta) {
          delta = minv[j];
          j1 = j;
        }
      }
      for (std::size_t j = 0; j <= m; ++j) {
        if (used[j]) {
          u[p[j]] += delta;
          v[j] -= delta;
        } else {
          minv[j] -= delta;
        }
      }
      j0 = j1;
    } while (p[j0] != 0);
    do {
      std::size_t j1 = way[j0];
      p[j0] = p[j1];
      j0 = j1;
    } while (j0 != 0);
  }
  std::vector<int> rowOfCol(m, -1);
  for (std::size_t j = 1; j <= m; ++j)
    if (p[j] != 0) rowOfCol[j - 1] = static_cast<int>(p[j] - 1);
  return rowOfCol;
}

}  // namespace

Assignment hungarian(const CostMatrix& costs) {
  std::size_t n = costs.rows, m = costs.cols;
  if (n == 0 || m == 0) return {};
  for (double c : costs.cost)
    if (!std::isfinite(c))
      throw std::invalid_argument("hungarian: cost matrix has non-finite entries");
  Assignment out;
  if (n <= m) {
    auto rowOfCol = solveRect(costs.cost, n, m);
    std::vector<std::pair<std::size_t, std::size_t>> pairs;
    for (std::size_t j = 0; j < m; ++j)
      if (rowOfCol[j] >= 0)
        pairs.emplace_back(static_cast<std::size_t>(rowOfCol[j]), j);
    out = pairs;
  } else {
    std::vector<double> t(n * m);
    for (std::size_t r = 0; r < n; ++r)
      for (std::size_t c = 0; c < m; ++c) t[c * n + r] = costs.at(r, c);
    auto colOfRow = solveRect(t, m, n);
    for (std::size_t r = 0; r < n; ++r)
      if (colOfRow[r] >= 0)
        out.emplace_back(r, static_cast<std::size_t>(colOfRow[r]));
  }
  std::sort(out.begin(), out.end());
  return out;
}

double assignmentCost(const CostMatrix& costs, const Assignment& a) {
  double s = 0.0;
  for (auto [r, c] : a) s += costs.at(r, c);
  return s;
}

double focalLoss(double prob, int target, double alpha, double gamma) {
  if (!(prob > 0.0 && prob < 1.0))
    throw std::invalid_argument("focalLoss: prob must be strictly inside (0,1), got " +
                                std::to_string(prob));
  if (target == 1) return -alpha * std::pow(1.0 - prob, gamma) * std::log(prob);
  return -(1.0 - alpha) * std::pow(prob, gamma) * std::log(1.0 - prob);
}

Tensor focalColumn(const Tensor& probs, const std::vector<int>& targets,
                   double alpha, double gamma) {
  std::size_t n = probs.size();
  if (targets.size() != n)
    throw std::invalid_argument("focalColumn: targets length mismatch");
  for (double p : probs.data())
    if (!(p > 0.0 && p < 1.0))
      throw std::invalid_argument("focalColumn: prob outside (0,1)");
  std::vector<double> pos(n), negm(n);
  for (std::size_t i = 0; i < n; ++i) {
    pos[i] = targets[i] == 1 ? 1.0 : 0.0;
    negm[i] = 1.0 - pos[i];
  }
  Tensor posMask = Tensor::from(probs.shape(), std::move(pos));
  Tensor negMask = Tensor::from(probs.shape(), std::move(negm));
  Tensor onesMinusP = sub(Tensor::full(probs.shape(), 1.0), probs);
  Tensor lpos = mulc(mul(pow(onesMinusP, gamma), neg(log(probs))), alpha);
  Tensor lneg = mulc(mul(pow(probs, gamma), neg(log(onesMinusP))), 1.0 - alpha);
  return add(mul(posMask, lpos), mul(negMask, lneg));
}

CostMatrix matchingCost(const std::vector<Box>& predBoxes,
                        const std::vector<double>& predScores,
                        const std::vector<Box>& gts, const LossWeights& w,
                        double focalAlpha, double focalGamma) {
  CostMatrix cm;
  cm.rows = predBoxes.size();
  cm.cols = gts.size();
  cm.cost.resize(cm.rows * cm.cols);
  for (std::size_t r = 0; r < cm.rows; ++r) {
    double p = std::min(std::max(predScores[r], 1e-7), 1.0 - 1e-7);
    // Deformable-DETR focal-style class cost: pos cost minus neg cost.
    double posCost = focalAlpha * std::pow(1.0 - p, focalGamma) * -std::log(p);
    double negCost =
        (1.0 - focalAlpha) * std::pow(p, focalGamma) * -std::log(1.0 - p);
    double clsCost = posCost - negCost;
    for (std::size_t c = 0; c < cm.cols; ++c) {
      const Box& g = gts[c];
      const Box& b = predBoxes[r];
      double l1 = std::fabs(b.cx - g.cx) + std::fabs(b.cy - g.cy) +
                  std::fabs(b.w - g.w) + std::fabs(b.h - g.h);
      cm.at(r, c) =
          w.focal * clsCost + w.l1 * l1 + w.giou * (1.0 - giou(b, g));
    }
  }
  return cm;
}

SetCriterionOut setCriterion(const Tensor& boxes, const Tensor& logits,
                             const std::vector<Box>& gts, const LossWeights& w,
                             double focalAlpha, double focalGamma) {
  std::size_t n = boxes.rows();
  if (logits.size() != n)
    throw std::invalid_argument("setCriterion: boxes/logits length mismatch");
  if (n == 0 && !gts.empty())
    throw std::invalid_argument("setCriterion: no predictions for nonempty gts");
  if (n == 0) return {Tensor::scalar(0.0), {}};

  std::vector<Box> predBoxes(n);
  for (std::size_t i = 0; i < n; ++i)
    predBoxes[i] = Box{boxes.at(i, 0), boxes.at(i, 1), boxes.at(i, 2),
                       boxes.at(i, 3)};
  std::vector<double> scores(n);
  for (std::size_t i = 0; i < n; ++i)
    scores[i] = 1.0 / (1.0 + std::exp(-logits.at(i)));

  Assignment assign;
  if (!gts.empty())
    assign = hungarian(
        matchingCost(predBoxes, scores, gts, w, focalAlpha, focalGamma));

  std::vector<int> clsTarget(n, 0);
  for (auto [r, c] : assign) clsTarget[r] = 1;
  Tensor probs = clampc(sigmoid(logits), 1e-7, 1.0 - 1e-7);
  Tensor loss =
      mulc(sumAll(focalColumn(probs, clsTarget, focalAlpha, focalGamma)),
           w.focal);

  if (!assign.empty()) {
    std::vector<std::size_t> rows;
    std::vector<Box> matchedGts;
    for (auto [r, c] : assign) {
      rows.push_back(r);
      matchedGts.push_back(gts[c]);
    }
    Tensor mb = gatherRows(boxes, rows);
    Tensor l1 = sumAll(l1Column(mb, matchedGts));
    Tensor gl = sumAll(sub(Tensor::full({matchedGts.size(), 1}, 1.0),
                           giouColumn(mb, matchedGts)));
    loss = add(loss, add(mulc(l1, w.l1), mulc(gl, w.giou)));
  }
  return {loss, assign};
}

}  // namespace smr
