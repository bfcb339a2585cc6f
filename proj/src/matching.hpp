#pragma once

#include <cstddef>
#include <vector>

#include "geometry.hpp"
#include "tensor.hpp"

// Hungarian assignment and the set-prediction loss components (focal, L1,
// GIoU).

namespace smr {

// rows = predictions, cols = ground-truth objects, lower is better.
struct CostMatrix {
  std::size_t rows = 0, cols = 0;
  std::vector<double> cost;  // row-major
  double at(std::size_t r, std::size_t c) const { return cost[r * cols + c]; }
  double& at(std::size_t r, std::size_t c) { return cost[r * cols + c]; }
};

// Injective pairs (prediction index, gt index), |pairs| == min(rows, cols).
using Assignment = std::vector<std::pair<std::size_t, std::size_t>>;

struct LossWeights {
  double focal = 2.0;
  double l1 = 5.0;
  double giou = 2.0;
};

// Minimum-total-cost assignment. Ties are broken deterministically (lowest
// row index wins among equal-cost optima). Empty matrix -> empty assignment.
Assignment hungarian(const CostMatrix& costs);

double assignmentCost(const CostMatrix& costs, const Assignment& a);

// target 1: -alpha (1-p)^gamma ln p; target 0: -(1-alpha) p^gamma ln(1-p).
double focalLoss(double prob, int target, double alpha = 0.25,
                 double gamma = 2.0);
// Differentiable variant on a probability column [N x 1] against a constant
// 0/1 target column; returns [N x 1].
Tensor focalColumn(const Tensor& probs, const std::vector<int>& targets,
                   double alpha = 0.25, double gamma = 2.0);

struct SetCriterionOut {
  Tensor loss;            // scalar, differentiable w.r.t. boxes/logits
  Assignment assignment;  // (pred, gt) pairs actually matched
};

// DETR-style set loss: Hungarian matching on focal/L1/GIoU costs, matched
// regression + classification losses, background classification on the rest.
// Matching is recomputed from values; gradients do not flow through it.
// `boxes` [N x 4] center-form, `logits` [N x 1] pre-sigmoid.
SetCriterionOut setCriterion(const Tensor& boxes, const Tensor& logits,
                             const std::vector<Box>& gts,
                             const LossWeights& w = {},
                             double focalAlpha = 0.25,
                             double focalGamma = 2.0);

// The matching cost used by setCriterion, exposed for label assignment.
CostMatrix matchingCost(const std::vector<Box>& predBoxes,
                        const std::vector<double>& predScores,
                        const std::vector<Box>& gts, const LossWeights& w = {},
                        double focalAlpha = 0.25, double focalGamma = 2.0);

}  // namespace smr
