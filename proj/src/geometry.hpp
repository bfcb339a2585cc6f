#pragma once

#include <vector>

#include "tensor.hpp"

// Box algebra, IoU/GIoU, and the sine-cosine positional encodings used for
// anchors and confidence scores. Everything here is a pure function.

namespace smr {

// Normalized center-format box; valid boxes have w,h > 0 and coordinates
// inside the unit square.
struct Box {
  double cx = 0, cy = 0, w = 0, h = 0;

  double x1() const { return cx - w / 2; }
  double y1() const { return cy - h / 2; }
  double x2() const { return cx + w / 2; }
  double y2() const { return cy + h / 2; }
  double area() const { return w * h; }

  static Box fromCorners(double x1, double y1, double x2, double y2);
};

struct DetectionSet {
  std::vector<Box> boxes;
  std::vector<double> scores;  // in [0,1], same length as boxes
  std::size_t size() const { return boxes.size(); }
};

double iou(const Box& a, const Box& b);
double giou(const Box& a, const Box& b);

// Interleaved sin/cos of `value` over a geometric frequency ladder.
// Slot 2i holds sin(value * w_i), slot 2i+1 holds cos(value * w_i), with
// w_i = temperature^(-2i/dim).
Tensor sincosPe(double value, int dim, double temperature = 10000.0);
// Differentiable variant: `value` is a scalar tensor.
Tensor sincosPe(const Tensor& value, int dim, double temperature = 10000.0);

// Concatenation of sincosPe over (cx, cy, w, h), dim/4 each.
Tensor anchorPe(const Box& box, int dim, double temperature = 10000.0);
// Differentiable batched variant: boxes [N x 4] (center form) -> [N x dim].
Tensor anchorPeMatrix(const Tensor& boxes, int dim,
                      double temperature = 10000.0);

// sigmoid(logit(anchor) + delta), coordinate-wise. Anchor coordinates are
// clamped into [1e-4, 1-1e-4] before the logit.
Box inverseSigmoidRefine(const Box& anchor, const Tensor& delta);
// Differentiable batched variant: anchors are constants, deltas [N x 4];
// returns predicted boxes [N x 4] in center form.
Tensor refineBoxes(const std::vector<Box>& anchors, const Tensor& deltas);

double logitClamped(double p);

// Differentiable GIoU of predicted boxes [N x 4] (center form) against
// fixed target boxes; returns [N x 1].
Tensor giouColumn(const Tensor& boxes, const std::vector<Box>& targets);
// Differentiable elementwise L1 distance summed per row; returns [N x 1].
Tensor l1Column(const Tensor& boxes, const std::vector<Box>& targets);

}  // namespace smr
