#include "geometry.hpp"

#include <cmath>
#include <stdexcept>

namespace smr {

namespace {

void checkValid(const Box& b, const char* who) {
  if (!(b.w > 0) || !(b.h > 0))
    throw std::invalid_argument(std::string(who) +
                                ": degenerate box (w,h must be > 0), got w=" +
                                std::to_string(b.w) +
                                " h=" + std::to_string(b.h));
}

double intersectionArea(const Box& a, const Box& b) {
  double iw = std::min(a.x2(), b.x2()) - std::max(a.x1(), b.x1());
  double ih = std::min(a.y2(), b.y2()) - std::max(a.y1(), b.y1());
  if (iw <= 0 || ih <= 0) return 0.0;
  return iw * ih;
}

}  // namespace

Box Box::fromCorners(double x1, double y1, double x2, double y2) {
  return Box{(x1 + x2) / 2, (y1 + y2) / 2, x2 - x1, y2 - y1};
}

double iou(const Box& a, const Box& b) {
  checkValid(a, "iou");
  checkValid(b, "iou");
  double inter = intersectionArea(a, b);
  return inter / (a.area() + b.area() - inter);
}

double giou(const Box& a, const Box& b) {
  checkValid(a, "giou");
  checkValid(b, "giou");
  double inter = intersectionArea(a, b);
  double uni = a.area() + b.area() - inter;
  double cw = std::max(a.x2(), b.x2()) - std::min(a.x1(), b.x1());
  double ch = std::max(a.y2(), b.y2()) - std::min(a.y1(), b.y1());
  double enc = cw * ch;
  return inter / uni - (enc - uni) / enc;
}

Tensor sincosPe(double value, int dim, double temperature) {
  if (dim <= 0 || dim % 2 != 0)
    throw std::invalid_argument("sincosPe: dim must be even and positive, got " +
                                std::to_string(dim));
  std::vector<double> out(static_cast<std::size_t>(dim));
  int half = dim / 2;
  for (int i = 0; i < half; ++i) {
    double w = std::pow(temperature, -2.0 * i / dim);
    out[2 * i] = std::sin(value * w);
    out[2 * i + 1] = std::cos(value * w);
  }
  return Tensor::from({static_cast<std::size_t>(dim)}, std::move(out));
}

Tensor sincosPe(const Tensor& value, int dim, double temperature) {
  if (dim <= 0 || dim % 2 != 0)
    throw std::invalid_argument("sincosPe: dim must be even and positive");
  double v = value.item();
  Tensor out = sincosPe(v, dim, temperature);
  if (!value.requiresGrad()) return out;
  auto vn = value.node();
  auto on = out.node();
  on->requires_grad = true;
  on->parents = {vn};
  TensorNode* raw = on.get();
  on->backprop = [raw, vn, dim, temperature]() {
    double v = vn->value[0];
    int half = dim / 2;
    double g = 0.0;
    for (int i = 0; i < half; ++i) {
      double w = std::pow(temperature, -2.0 * i / dim);
      g += raw->grad[2 * i] * std::cos(v * w) * w;
      g -= raw->grad[2 * i + 1] * std::sin(v * w) * w;
    }
    vn->addGrad(0, g);
  };
  return out;
}

Tensor anchorPe(const Box& box, int dim, double temperature) {
  if (dim <= 0 || dim % 4 != 0)
    throw std::invalid_argument("anchorPe: dim must be divisible by 4, got " +
                                std::to_string(dim));
  int q = dim / 4;
  return concatCols({sincosPe(box.cx, q, temperature),
                     sincosPe(box.cy, q, temperature),
                     sincosPe(box.w, q, temperature),
                     sincosPe(box.h, q, temperature)});
}

Tensor anchorPeMatrix(const Tensor& boxes, int dim, double temperature) {
  if (dim <= 0 || dim % 4 != 0)
    throw std::invalid_argument("anchorPeMatrix: dim must be divisible by 4");
  if (boxes.shape().size() != 2 || boxes.cols() != 4)
    throw std::invalid_argument("anchorPeMatrix: boxes must be [N x 4], got " +
                                shapeStr(boxes.shape()));
  std::size_t n = boxes.rows();
  int q = dim / 4;
  std::vector<double> out(n * static_cast<std::size_t>(dim));
  for (std::size_t i = 0; i < n; ++i)
    for (int c = 0; c < 4; ++c) {
      double v = boxes.at(i, c);
      for (int k = 0; k < q / 2; ++k) {
        double w = std::pow(temperature, -2.0 * k / q);
        out[i * dim + c * q + 2 * k] = std::sin(v * w);
        out[i * dim + c * q + 2 * k + 1] = std::cos(v * w);
      }
    }
  Tensor res = Tensor::from({n, static_cast<std::size_t>(dim)}, std::move(out));
  if (!boxes.requiresGrad()) return res;
  auto bn = boxes.node();
  auto on = res.node();
  on->requires_grad = true;
  on->parents = {bn};
  TensorNode* raw = on.get();
  on->backprop = [raw, bn, n, dim, q, temperature]() {
    for (std::size_t i = 0; i < n; ++i)
      for (int c = 0; c < 4; ++c) {
        double v = bn->value[i * 4 + c];
        double g = 0.0;
        for (int k = 0; k < q / 2; ++k) {
          double w = std::pow(temperature, -2.0 * k / q);
          g += raw->grad[i * dim + c * q + 2 * k] * std::cos(v * w) * w;
          g -= raw->grad[i * dim + c * q + 2 * k + 1] * std::sin(v * w) * w;
        }
        bn->addGrad(i * 4 + c, g);
      }
  };
  return res;
}

double logitClamped(double p) {
  const double lo = 1e-4;
  p = std::min(std::max(p, lo), 1.0 - lo);
  return std::log(p / (1.0 - p));
}

Box inverseSigmoidRefine(const Box& anchor, const Tensor& delta) {
  if (delta.size() != 4)
    throw std::invalid_argument("inverseSigmoidRefine: delta must have 4 entries");
  auto sig = [](double x) { return 1.0 / (1.0 + std::exp(-x)); };
  return Box{sig(logitClamped(anchor.cx) + delta.at(0)),
             sig(logitClamped(anchor.cy) + delta.at(1)),
             sig(logitClamped(anchor.w) + delta.at(2)),
             sig(logitClamped(anchor.h) + delta.at(3))};
}

Tensor refineBoxes(const std::vector<Box>& anchors, const Tensor& deltas) {
  std::size_t n = anchors.size();
  if (deltas.shape() != Shape{n, 4})
    throw std::invalid_argument("refineBoxes: deltas must be [N x 4] with N=" +
                                std::to_string(n));
  std::vector<double> logits(n * 4);
  for (std::size_t i = 0; i < n; ++i) {
    logits[i * 4 + 0] = logitClamped(anchors[i].cx);
    logits[i * 4 + 1] = logitClamped(anchors[i].cy);
    logits[i * 4 + 2] = logitClamped(anchors[i].w);
    logits[i * 4 + 3] = logitClamped(anchors[i].h);
  }
  return sigmoid(add(Tensor::from({n, 4}, std::move(logits)), deltas));
}

namespace {

// Column vectors of target corner coordinates as constants.
Tensor targetCol(const std::vector<Box>& ts, double (Box::*f)() const) {
  std::vector<double> v(ts.size());
  for (std::size_t i = 0; i < ts.size(); ++i) v[i] = (ts[i].*f)();
  return Tensor::from({ts.size(), 1}, std::move(v));
}

}  // namespace

Tensor giouColumn(const Tensor& boxes, const std::vector<Box>& targets) {
  std::size_t n = targets.size();
  if (boxes.shape() != Shape{n, 4})
    throw std::invalid_argument("giouColumn: boxes must be [N x 4]");
  Tensor cx = sliceCols(boxes, 0, 1), cy = sliceCols(boxes, 1, 2);
  Tensor w = sliceCols(boxes, 2, 3), h = sliceCols(boxes, 3, 4);
  Tensor ax1 = sub(cx, mulc(w, 0.5)), ax2 = add(cx, mulc(w, 0.5));
  Tensor ay1 = sub(cy, mulc(h, 0.5)), ay2 = add(cy, mulc(h, 0.5));
  Tensor bx1 = targetCol(targets, &Box::x1), bx2 = targetCol(targets, &Box::x2);
  Tensor by1 = targetCol(targets, &Box::y1), by2 = targetCol(targets, &Box::y2);

  Tensor iw = relu(sub(minimum(ax2, bx2), maximum(ax1, bx1)));
  Tensor ih = relu(sub(minimum(ay2, by2), maximum(ay1, by1)));
  Tensor inter = mul(iw, ih);
  Tensor areaA = mul(w, h);
  Tensor areaB = mul(sub(bx2, bx1), sub(by2, by1));
  Tensor uni = sub(add(areaA, areaB), inter);
  Tensor cw = sub(maximum(ax2, bx2), minimum(ax1, bx1));
  Tensor ch = sub(maximum(ay2, by2), minimum(ay1, by1));
  Tensor enc = addc(mul(cw, ch), 1e-12);
  Tensor iouv = mul(inter, pow(addc(uni, 1e-12), -1.0));
  return sub(iouv, mul(sub(enc, uni), pow(enc, -1.0)));
}

Tensor l1Column(const Tensor& boxes, const std::vector<Box>& targets) {
  std::size_t n = targets.size();
  if (boxes.shape() != Shape{n, 4})
    throw std::invalid_argument("l1Column: boxes must be [N x 4]");
  std::vector<double> t(n * 4);
  for (std::size_t i = 0; i < n; ++i) {
    t[i * 4 + 0] = targets[i].cx;
    t[i * 4 + 1] = targets[i].cy;
    t[i * 4 + 2] = targets[i].w;
    t[i * 4 + 3] = targets[i].h;
  }
  Tensor d = abs(sub(boxes, Tensor::from({n, 4}, std::move(t))));
  // Row-wise sum via matmul with a ones column.
  return matmul(d, Tensor::full({4, 1}, 1.0));
}

}  // namespace smr
