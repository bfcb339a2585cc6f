#include "tensor.hpp"

#include <cmath>
#include <sstream>
#include <stdexcept>
#include <unordered_set>

namespace smr {

std::size_t numel(const Shape& s) {
  std::size_t n = 1;
  for (auto d : s) n *= d;
  return n;
}

std::string shapeStr(const Shape& s) {
  std::ostringstream os;
  os << "[";
  for (std::size_t i = 0; i < s.size(); ++i) os << (i ? "x" : "") << s[i];
  os << "]";
  return os.str();
}

void TensorNode::ensureGrad() {
  if (grad.size() != value.size()) grad.assign(value.size(), 0.0);
}

void TensorNode::addGrad(std::size_t i, double g) {
  ensureGrad();
  grad[i] += g;
}

namespace {

std::shared_ptr<TensorNode> makeNode(Shape s, std::vector<double> v) {
  auto n = std::make_shared<TensorNode>();
  n->shape = std::move(s);
  n->value = std::move(v);
  return n;
}

[[noreturn]] void shapeError(const std::string& op, const Shape& a,
                             const Shape& b) {
  throw std::invalid_argument(op + ": incompatible shapes " + shapeStr(a) +
                              " and " + shapeStr(b));
}

bool anyRequires(const std::vector<Tensor>& ts) {
  for (const auto& t : ts)
    if (t.requiresGrad()) return true;
  return false;
}

Tensor result(Shape s, std::vector<double> v, std::vector<Tensor> parents,
              std::function<void(TensorNode&)> bp) {
  auto n = makeNode(std::move(s), std::move(v));
  n->requires_grad = anyRequires(parents);
  if (n->requires_grad) {
    for (auto& p : parents) n->parents.push_back(p.node());
    TensorNode* raw = n.get();
    n->backprop = [raw, bp = std::move(bp)]() { bp(*raw); };
  }
  return Tensor(n);
}

// 2D view helpers: any tensor is treated as rows x cols with cols = last dim.
std::size_t lastDim(const Shape& s) { return s.empty() ? 1 : s.back(); }

}  // namespace

Tensor Tensor::zeros(const Shape& s) {
  return Tensor(makeNode(s, std::vector<double>(numel(s), 0.0)));
}
Tensor Tensor::full(const Shape& s, double v) {
  return Tensor(makeNode(s, std::vector<double>(numel(s), v)));
}
Tensor Tensor::from(const Shape& s, std::vector<double> data) {
  if (numel(s) != data.size())
    throw std::invalid_argument("Tensor::from: shape " + shapeStr(s) +
                                " does not match data length " +
                                std::to_string(data.size()));
  return Tensor(makeNode(s, std::move(data)));
}
Tensor Tensor::scalar(double v) { return from({1}, {v}); }

std::size_t Tensor::rows() const {
  const auto& s = n_->shape;
  if (s.size() == 2) return s[0];
  if (s.size() == 1) return 1;
  throw std::invalid_argument("rows(): tensor is not 1D/2D");
}
std::size_t Tensor::cols() const { return lastDim(n_->shape); }

double Tensor::item() const {
  if (size() != 1)
    throw std::invalid_argument("item(): tensor has " +
                                std::to_string(size()) + " elements");
  return n_->value[0];
}
double Tensor::at(std::size_t r, std::size_t c) const {
  return n_->value[r * cols() + c];
}

const std::vector<double>& Tensor::grad() const {
  n_->ensureGrad();
  return n_->grad;
}
void Tensor::zeroGrad() { n_->grad.assign(n_->value.size(), 0.0); }

ComputationTape::ComputationTape(TensorNode* root) {
  std::unordered_set<TensorNode*> seen;
  // Iterative post-order DFS.
  std::vector<std::pair<TensorNode*, std::size_t>> stack{{root, 0}};
  seen.insert(root);
  while (!stack.empty()) {
    auto& [node, idx] = stack.back();
    if (idx < node->parents.size()) {
      TensorNode* p = node->parents[idx++].get();
      if (seen.insert(p).second) stack.push_back({p, 0});
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }
}

void backward(const Tensor& loss) {
  if (loss.size() != 1)
    throw std::invalid_argument("backward: loss must be scalar, got shape " +
                                shapeStr(loss.shape()));
  TensorNode* root = loss.node().get();
  ComputationTape tape(root);
  // Intermediate grads are scratch per call; only leaves accumulate across
  // repeated backward calls.
  for (TensorNode* n : tape.order)
    if (n->backprop) n->grad.assign(n->value.size(), 0.0);
  root->addGrad(0, 1.0);
  for (auto it = tape.order.rbegin(); it != tape.order.rend(); ++it) {
    TensorNode* n = *it;
    if (n->backprop && n->requires_grad && !n->grad.empty()) n->backprop();
  }
}

Tensor detach(const Tensor& a) {
  return Tensor(makeNode(a.shape(), a.data()));
}

namespace {

enum class BMode { kSame, kScalarB, kScalarA, kRowB, kRowA };

BMode broadcastMode(const Shape& sa, const Shape& sb, const std::string& op) {
  if (sa == sb || numel(sa) == numel(sb)) {
    if (numel(sa) != numel(sb)) shapeError(op, sa, sb);
    return BMode::kSame;
  }
  if (numel(sb) == 1) return BMode::kScalarB;
  if (numel(sa) == 1) return BMode::kScalarA;
  if (sa.size() == 2 && numel(sb) == lastDim(sa) && lastDim(sb) == lastDim(sa))
    return BMode::kRowB;
  if (sb.size() == 2 && numel(sa) == lastDim(sb) && lastDim(sa) == lastDim(sb))
    return BMode::kRowA;
  shapeError(op, sa, sb);
}

template <typename F, typename DA, typename DB>
Tensor binaryOp(const Tensor& a, const Tensor& b, const std::string& name,
                F f, DA dfda, DB dfdb) {
  BMode mode = broadcastMode(a.shape(), b.shape(), name);
  const bool swap = (mode == BMode::kScalarA || mode == BMode::kRowA);
  // Output takes the larger operand's shape.
  const Tensor& big = swap ? b : a;
  std::size_t n = big.size();
  std::size_t bn = swap ? a.size() : b.size();
  auto idxB = [mode, bn](std::size_t i) {
    switch (mode) {
      case BMode::kSame: return i;
      case BMode::kScalarA:
      case BMode::kScalarB: return std::size_t{0};
      default: return i % bn;  // row broadcast
    }
  };
  std::vector<double> out(n);
  const auto& av = a.data();
  const auto& bv = b.data();
  for (std::size_t i = 0; i < n; ++i) {
    double x = swap ? av[idxB(i)] : av[i];
    double y = swap ? bv[i] : bv[idxB(i)];
    out[i] = f(x, y);
  }
  auto an = a.node();
  auto bn2 = b.node();
  return result(
      big.shape(), std::move(out), {a, b},
      [an, bn2, swap, idxB, dfda, dfdb](TensorNode& self) {
        std::size_t n = self.value.size();
        for (std::size_t i = 0; i < n; ++i) {
          double g = self.grad[i];
          std::size_t ia = swap ? idxB(i) : i;
          std::size_t ib = swap ? i : idxB(i);
          double x = an->value[ia];
          double y = bn2->value[ib];
          if (an->requires_grad) an->addGrad(ia, g * dfda(x, y));
          if (bn2->requires_grad) bn2->addGrad(ib, g * dfdb(x, y));
        }
      });
}

template <typename F, typename D>
Tensor unaryOp(const Tensor& a, F f, D dfdx) {
  std::vector<double> out(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) out[i] = f(a.at(i));
  auto an = a.node();
  return result(a.shape(), std::move(out), {a},
                [an, dfdx](TensorNode& self) {
                  for (std::size_t i = 0; i < self.value.size(); ++i)
                    an->addGrad(i, self.grad[i] * dfdx(an->value[i],
                                                       self.value[i]));
                });
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) {
  return binaryOp(a, b, "add", [](double x, double y) { return x + y; },
                  [](double, double) { return 1.0; },
                  [](double, double) { return 1.0; });
}
Tensor sub(const Tensor& a, const Tensor& b) {
  return binaryOp(a, b, "sub", [](double x, double y) { return x - y; },
                  [](double, double) { return 1.0; },
                  [](double, double) { return -1.0; });
}
Tensor mul(const Tensor& a, const Tensor& b) {
  return binaryOp(a, b, "mul", [](double x, double y) { return x * y; },
                  [](double, double y) { return y; },
                  [](double x, double) { return x; });
}
Tensor minimum(const Tensor& a, const Tensor& b) {
  return binaryOp(a, b, "minimum",
                  [](double x, double y) { return x <= y ? x : y; },
                  [](double x, double y) { return x <= y ? 1.0 : 0.0; },
                  [](double x, double y) { return x <= y ? 0.0 : 1.0; });
}
Tensor maximum(const Tensor& a, const Tensor& b) {
  return binaryOp(a, b, "maximum",
                  [](double x, double y) { return x >= y ? x : y; },
                  [](double x, double y) { return x >= y ? 1.0 : 0.0; },
                  [](double x, double y) { return x >= y ? 0.0 : 1.0; });
}

Tensor addc(const Tensor& a, double c) {
  return unaryOp(a, [c](double x) { return x + c; },
                 [](double, double) { return 1.0; });
}
Tensor mulc(const Tensor& a, double c) {
  return unaryOp(a, [c](double x) { return x * c; },
                 [c](double, double) { return c; });
}
Tensor neg(const Tensor& a) { return mulc(a, -1.0); }

Tensor sigmoid(const Tensor& a) {
  return unaryOp(a,
                 [](double x) { return 1.0 / (1.0 + std::exp(-x)); },
                 [](double, double y) { return y * (1.0 - y); });
}
Tensor relu(const Tensor& a) {
  return unaryOp(a, [](double x) { return x > 0 ? x : 0.0; },
                 [](double x, double) { return x > 0 ? 1.0 : 0.0; });
}
Tensor exp(const Tensor& a) {
  return unaryOp(a, [](double x) { return std::exp(x); },
                 [](double, double y) { return y; });
}
Tensor log(const Tensor& a) {
  return unaryOp(a, [](double x) { return std::log(x); },
                 [](double x, double) { return 1.0 / x; });
}
Tensor sqrt(const Tensor& a) {
  return unaryOp(a, [](double x) { return std::sqrt(x); },
                 [](double, double y) { return 0.5 / y; });
}
Tensor abs(const Tensor& a) {
  return unaryOp(a, [](double x) { return std::fabs(x); },
                 [](double x, double) { return x > 0 ? 1.0 : (x < 0 ? -1.0 : 0.0); });
}
Tensor pow(const Tensor& a, double p) {
  return unaryOp(a, [p](double x) { return std::pow(x, p); },
                 [p](double x, double) { return p * std::pow(x, p - 1.0); });
}
Tensor clampc(const Tensor& a, double lo, double hi) {
  return unaryOp(a,
                 [lo, hi](double x) { return x < lo ? lo : (x > hi ? hi : x); },
                 [lo, hi](double x, double) {
                   return (x >= lo && x <= hi) ? 1.0 : 0.0;
                 });
}

Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.shape().size() != 2 || b.shape().size() != 2 ||
      a.shape()[1] != b.shape()[0])
    shapeError("matmul", a.shape(), b.shape());
  std::size_t m = a.shape()[0], k = a.shape()[1], n = b.shape()[1];
  std::vector<double> out(m * n, 0.0);
  const auto& av = a.data();
  const auto& bv = b.data();
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t p = 0; p < k; ++p) {
      double x = av[i * k + p];
      for (std::size_t j = 0; j < n; ++j) out[i * n + j] += x * bv[p * n + j];
    }
  auto an = a.node();
  auto bn = b.node();
  return result({m, n}, std::move(out), {a, b},
                [an, bn, m, k, n](TensorNode& self) {
                  const auto& g = self.grad;
                  if (an->requires_grad) {
                    an->ensureGrad();  // dA = dC * B^T
                    for (std::size_t i = 0; i < m; ++i)
                      for (std::size_t p = 0; p < k; ++p) {
                        double s = 0.0;
                        for (std::size_t j = 0; j < n; ++j)
                          s += g[i * n + j] * bn->value[p * n + j];
                        an->grad[i * k + p] += s;
                      }
                  }
                  if (bn->requires_grad) {
                    bn->ensureGrad();  // dB = A^T * dC
                    for (std::size_t p = 0; p < k; ++p)
                      for (std::size_t j = 0; j < n; ++j) {
                        double s = 0.0;
                        for (std::size_t i = 0; i < m; ++i)
                          s += an->value[i * k + p] * g[i * n + j];
                        bn->grad[p * n + j] += s;
                      }
                  }
                });
}

Tensor transpose(const Tensor& a) {
  if (a.shape().size() != 2)
    throw std::invalid_argument("transpose: need 2D, got " +
                                shapeStr(a.shape()));
  std::size_t m = a.shape()[0], n = a.shape()[1];
  std::vector<double> out(m * n);
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) out[j * m + i] = a.at(i * n + j);
  auto an = a.node();
  return result({n, m}, std::move(out), {a},
                [an, m, n](TensorNode& self) {
                  for (std::size_t i = 0; i < m; ++i)
                    for (std::size_t j = 0; j < n; ++j)
                      an->addGrad(i * n + j, self.grad[j * m + i]);
                });
}

Tensor softmax(const Tensor& a, int axis) {
  Shape s = a.shape();
  if (s.size() == 1) {
    if (axis != 0 && axis != -1)
      throw std::invalid_argument("softmax: invalid axis for 1D tensor");
  } else if (s.size() == 2) {
    if (axis == 0) return transpose(softmax(transpose(a), 1));
    if (axis != 1 && axis != -1)
      throw std::invalid_argument("softmax: invalid axis");
  } else {
    throw std::invalid_argument("softmax: need 1D/2D tensor");
  }
  std::size_t n = lastDim(s);
  std::size_t m = a.size() / n;
  std::vector<double> out(a.size());
  for (std::size_t r = 0; r < m; ++r) {
    const double* x = a.data().data() + r * n;
    double* y = out.data() + r * n;
    double mx = x[0];
    for (std::size_t j = 1; j < n; ++j) mx = std::max(mx, x[j]);
    double z = 0.0;
    for (std::size_t j = 0; j < n; ++j) z += (y[j] = std::exp(x[j] - mx));
    for (std::size_t j = 0; j < n; ++j) y[j] /= z;
  }
  auto an = a.node();
  return result(s, std::move(out), {a},
                [an, m, n](TensorNode& self) {
                  // dx = y * (dy - sum(dy*y)) per row
                  for (std::size_t r = 0; r < m; ++r) {
                    const double* y = self.value.data() + r * n;
                    const double* dy = self.grad.data() + r * n;
                    double dot = 0.0;
                    for (std::size_t j = 0; j < n; ++j) dot += dy[j] * y[j];
                    for (std::size_t j = 0; j < n; ++j)
                      an->addGrad(r * n + j, y[j] * (dy[j] - dot));
                  }
                });
}

Tensor layerNorm(const Tensor& x, const Tensor& gain, const Tensor& bias,
                 double eps) {
  std::size_t n = lastDim(x.shape());
  if (gain.size() != n || bias.size() != n)
    throw std::invalid_argument("layerNorm: gain/bias must match last dim " +
                                std::to_string(n));
  std::size_t m = x.size() / n;
  std::vector<double> out(x.size());
  std::vector<double> xhat(x.size());
  std::vector<double> istd(m);
  for (std::size_t r = 0; r < m; ++r) {
    const double* xr = x.data().data() + r * n;
    double mean = 0.0;
    for (std::size_t j = 0; j < n; ++j) mean += xr[j];
    mean /= static_cast<double>(n);
    double var = 0.0;
    for (std::size_t j = 0; j < n; ++j) var += (xr[j] - mean) * (xr[j] - mean);
    var /= static_cast<double>(n);
    istd[r] = 1.0 / std::sqrt(var + eps);
    for (std::size_t j = 0; j < n; ++j) {
      double h = (xr[j] - mean) * istd[r];
      xhat[r * n + j] = h;
      out[r * n + j] = gain.at(j) * h + bias.at(j);
    }
  }
  auto xn = x.node();
  auto gn = gain.node();
  auto bn = bias.node();
  return result(
      x.shape(), std::move(out), {x, gain, bias},
      [xn, gn, bn, m, n, xhat = std::move(xhat),
       istd = std::move(istd)](TensorNode& self) {
        for (std::size_t r = 0; r < m; ++r) {
          const double* dy = self.grad.data() + r * n;
          const double* h = xhat.data() + r * n;
          double mean_gdy = 0.0, mean_gdyh = 0.0;
          for (std::size_t j = 0; j < n; ++j) {
            double gdy = gn->value[j] * dy[j];
            mean_gdy += gdy;
            mean_gdyh += gdy * h[j];
          }
          mean_gdy /= static_cast<double>(n);
          mean_gdyh /= static_cast<double>(n);
          for (std::size_t j = 0; j < n; ++j) {
            if (xn->requires_grad) {
              double gdy = gn->value[j] * dy[j];
              xn->addGrad(r * n + j,
                          (gdy - mean_gdy - h[j] * mean_gdyh) * istd[r]);
            }
            if (gn->requires_grad) gn->addGrad(j, dy[j] * h[j]);
            if (bn->requires_grad) bn->addGrad(j, dy[j]);
          }
        }
      });
}

Tensor sumAll(const Tensor& a) {
  double s = 0.0;
  for (double v : a.data()) s += v;
  auto an = a.node();
  return result({1}, {s}, {a}, [an](TensorNode& self) {
    for (std::size_t i = 0; i < an->value.size(); ++i)
      an->addGrad(i, self.grad[0]);
  });
}

Tensor meanAll(const Tensor& a) {
  return mulc(sumAll(a), 1.0 / static_cast<double>(a.size()));
}

namespace {

Shape as2d(const Shape& s) {
  if (s.size() == 2) return s;
  if (s.size() == 1) return {1, s[0]};
  throw std::invalid_argument("expected 1D/2D tensor, got " + shapeStr(s));
}

}  // namespace

Tensor concatRows(const std::vector<Tensor>& parts) {
  if (parts.empty()) throw std::invalid_argument("concatRows: empty input");
  std::size_t n = as2d(parts[0].shape())[1];
  std::size_t m = 0;
  std::vector<double> out;
  for (const auto& p : parts) {
    Shape s = as2d(p.shape());
    if (s[1] != n) shapeError("concatRows", parts[0].shape(), p.shape());
    m += s[0];
    out.insert(out.end(), p.data().begin(), p.data().end());
  }
  auto node = makeNode({m, n}, std::move(out));
  node->requires_grad = anyRequires(parts);
  if (node->requires_grad) {
    std::vector<std::shared_ptr<TensorNode>> pnodes;
    for (const auto& p : parts) pnodes.push_back(p.node());
    node->parents = pnodes;
    TensorNode* raw = node.get();
    node->backprop = [raw, pnodes]() {
      std::size_t off = 0;
      for (auto& p : pnodes) {
        if (p->requires_grad)
          for (std::size_t i = 0; i < p->value.size(); ++i)
            p->addGrad(i, raw->grad[off + i]);
        off += p->value.size();
      }
    };
  }
  return Tensor(node);
}

Tensor reshape(const Tensor& a, const Shape& s) {
  if (numel(s) != a.size())
    throw std::invalid_argument("reshape: size mismatch for " + shapeStr(s));
  auto an = a.node();
  return result(s, a.data(), {a}, [an](TensorNode& self) {
    for (std::size_t i = 0; i < self.value.size(); ++i)
      an->addGrad(i, self.grad[i]);
  });
}

Tensor concatCols(const std::vector<Tensor>& parts) {
  if (parts.empty()) throw std::invalid_argument("concatCols: empty input");
  std::vector<Tensor> tr;
  tr.reserve(parts.size());
  for (const auto& p : parts) tr.push_back(transpose(reshape(p, as2d(p.shape()))));
  return transpose(concatRows(tr));
}

Tensor sliceRows(const Tensor& a, std::size_t r0, std::size_t r1) {
  Shape s = as2d(a.shape());
  if (r0 > r1 || r1 > s[0])
    throw std::invalid_argument("sliceRows: bad range [" + std::to_string(r0) +
                                "," + std::to_string(r1) + ") for " +
                                shapeStr(a.shape()));
  std::size_t n = s[1];
  std::vector<double> out(a.data().begin() + r0 * n,
                          a.data().begin() + r1 * n);
  auto an = a.node();
  return result({r1 - r0, n}, std::move(out), {a},
                [an, r0, n](TensorNode& self) {
                  for (std::size_t i = 0; i < self.value.size(); ++i)
                    an->addGrad(r0 * n + i, self.grad[i]);
                });
}

Tensor sliceCols(const Tensor& a, std::size_t c0, std::size_t c1) {
  Shape s = as2d(a.shape());
  if (c0 > c1 || c1 > s[1])
    throw std::invalid_argument("sliceCols: bad range for " +
                                shapeStr(a.shape()));
  std::size_t m = s[0], n = s[1], w = c1 - c0;
  std::vector<double> out(m * w);
  for (std::size_t r = 0; r < m; ++r)
    for (std::size_t j = 0; j < w; ++j) out[r * w + j] = a.at(r * n + c0 + j);
  auto an = a.node();
  return result({m, w}, std::move(out), {a},
                [an, m, n, w, c0](TensorNode& self) {
                  for (std::size_t r = 0; r < m; ++r)
                    for (std::size_t j = 0; j < w; ++j)
                      an->addGrad(r * n + c0 + j, self.grad[r * w + j]);
                });
}

Tensor gatherRows(const Tensor& a, const std::vector<std::size_t>& idx) {
  Shape s = as2d(a.shape());
  std::size_t n = s[1];
  std::vector<double> out;
  out.reserve(idx.size() * n);
  for (auto r : idx) {
    if (r >= s[0])
      throw std::invalid_argument("gatherRows: index " + std::to_string(r) +
                                  " out of range for " + shapeStr(a.shape()));
    out.insert(out.end(), a.data().begin() + r * n,
               a.data().begin() + (r + 1) * n);
  }
  auto an = a.node();
  return result({idx.size(), n}, std::move(out), {a},
                [an, idx, n](TensorNode& self) {
                  for (std::size_t k = 0; k < idx.size(); ++k)
                    for (std::size_t j = 0; j < n; ++j)
                      an->addGrad(idx[k] * n + j, self.grad[k * n + j]);
                });
}

Tensor elem(const Tensor& a, std::size_t i) {
  if (i >= a.size())
    throw std::invalid_argument("elem: index out of range");
  auto an = a.node();
  return result({1}, {a.at(i)}, {a}, [an, i](TensorNode& self) {
    an->addGrad(i, self.grad[0]);
  });
}

}  // namespace smr
