#pragma once

#include <functional>
#include <memory>
#include <string>
#include <vector>

// Dense double-precision tensors with tape-based reverse-mode autodiff.
// Row-major layout, fixed summation order, no internal parallelism: forward
// results are bitwise deterministic for identical inputs.

namespace smr {

using Shape = std::vector<std::size_t>;

std::size_t numel(const Shape& s);
std::string shapeStr(const Shape& s);

struct TensorNode {
  Shape shape;
  std::vector<double> value;
  std::vector<double> grad;  // allocated on first write
  bool requires_grad = false;
  std::vector<std::shared_ptr<TensorNode>> parents;
  std::function<void()> backprop;  // adds to parents' grads

  void ensureGrad();
  void addGrad(std::size_t i, double g);
};

class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(std::shared_ptr<TensorNode> n) : n_(std::move(n)) {}

  static Tensor zeros(const Shape& s);
  static Tensor full(const Shape& s, double v);
  static Tensor from(const Shape& s, std::vector<double> data);
  static Tensor scalar(double v);

  bool defined() const { return n_ != nullptr; }
  const Shape& shape() const { return n_->shape; }
  std::size_t size() const { return n_->value.size(); }
  std::size_t rows() const;
  std::size_t cols() const;

  const std::vector<double>& data() const { return n_->value; }
  std::vector<double>& data() { return n_->value; }
  double item() const;
  double at(std::size_t i) const { return n_->value[i]; }
  double at(std::size_t r, std::size_t c) const;

  bool requiresGrad() const { return n_->requires_grad; }
  Tensor& setRequiresGrad(bool b) { n_->requires_grad = b; return *this; }
  const std::vector<double>& grad() const;
  void zeroGrad();

  std::shared_ptr<TensorNode>& node() { return n_; }
  const std::shared_ptr<TensorNode>& node() const { return n_; }

 private:
  std::shared_ptr<TensorNode> n_;
};

// Reverse-topological op ordering rooted at one node; backward() replays it
// in exact reverse order.
struct ComputationTape {
  std::vector<TensorNode*> order;  // topological: inputs precede users
  explicit ComputationTape(TensorNode* root);
};

// Populates grads of every requires_grad leaf reachable from `loss`.
// Repeated calls without zeroGrad accumulate.
void backward(const Tensor& loss);

Tensor detach(const Tensor& a);

// Elementwise binaries. Shapes must match, or one operand may be a scalar,
// or b may be a row vector broadcast over a's rows.
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor minimum(const Tensor& a, const Tensor& b);
Tensor maximum(const Tensor& a, const Tensor& b);

Tensor addc(const Tensor& a, double c);
Tensor mulc(const Tensor& a, double c);
Tensor neg(const Tensor& a);

Tensor sigmoid(const Tensor& a);
Tensor relu(const Tensor& a);
Tensor exp(const Tensor& a);
Tensor log(const Tensor& a);
Tensor sqrt(const Tensor& a);
Tensor abs(const Tensor& a);
Tensor pow(const Tensor& a, double p);
Tensor clampc(const Tensor& a, double lo, double hi);

Tensor matmul(const Tensor& a, const Tensor& b);
Tensor transpose(const Tensor& a);

Tensor softmax(const Tensor& a, int axis);
Tensor layerNorm(const Tensor& x, const Tensor& gain, const Tensor& bias,
                 double eps = 1e-5);

Tensor sumAll(const Tensor& a);
Tensor meanAll(const Tensor& a);

Tensor reshape(const Tensor& a, const Shape& s);
Tensor concatRows(const std::vector<Tensor>& parts);
Tensor concatCols(const std::vector<Tensor>& parts);
Tensor sliceRows(const Tensor& a, std::size_t r0, std::size_t r1);
Tensor sliceCols(const Tensor& a, std::size_t c0, std::size_t c1);
Tensor gatherRows(const Tensor& a, const std::vector<std::size_t>& idx);
Tensor elem(const Tensor& a, std::size_t i);  // scalar pick by flat index

}  // namespace smr
