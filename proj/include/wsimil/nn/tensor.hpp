#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <utility>
#include <vector>

namespace wsimil::nn {

struct Node;

/// Handle to a node of a reverse-mode computation graph. Values are 2-D
/// (rows x cols, row-major); vectors are 1 x n and scalars 1 x 1. Copies share
/// the node.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(std::shared_ptr<Node> node) : node_(std::move(node)) {}

  static Tensor zeros(int rows, int cols, bool requires_grad = false);
  static Tensor from(int rows, int cols, std::vector<double> data, bool requires_grad = false);
  static Tensor scalar(double v, bool requires_grad = false);

  bool defined() const { return node_ != nullptr; }
  int rows() const;
  int cols() const;
  std::size_t size() const;
  bool requires_grad() const;

  std::vector<double>& data();
  const std::vector<double>& data() const;
  /// Gradient buffer; empty until backward() reaches this node.
  const std::vector<double>& grad() const;
  std::vector<double>& grad_mut();
  double item() const;
  double at(int r, int c) const;

  void zero_grad();
  /// Back-propagates from this scalar node.
  void backward() const;

  Node* node() const { return node_.get(); }
  const std::shared_ptr<Node>& ptr() const { return node_; }

 private:
  std::shared_ptr<Node> node_;
};

struct Node {
  int rows = 0;
  int cols = 0;
  std::vector<double> value;
  std::vector<double> grad;
  bool requires_grad = false;
  const char* op = "leaf";
  std::vector<std::shared_ptr<Node>> parents;
  std::function<void(Node&)> backward;

  std::vector<double>& grad_buffer() {
    if (grad.empty()) grad.assign(value.size(), 0.0);
    return grad;
  }
};

Tensor matmul(const Tensor& a, const Tensor& b);
Tensor transpose(const Tensor& a);
/// Elementwise sum. `b` may match `a`, be a 1 x cols row (broadcast over
/// rows) or a 1 x 1 scalar.
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);  // same shape
Tensor scale(const Tensor& a, double s);
Tensor relu(const Tensor& a);
/// tanh-approximation GELU.
Tensor gelu(const Tensor& a);
Tensor sigmoid(const Tensor& a);
Tensor tanh(const Tensor& a);
/// axis 1: each row sums to one; axis 0: each column.
Tensor softmax(const Tensor& a, int axis);
/// Per-row normalisation followed by the affine gamma, beta (1 x cols each).
Tensor layer_norm(const Tensor& a, const Tensor& gamma, const Tensor& beta, double eps = 1e-5);
/// Inverted dropout. The keep mask for element i is a pure function of
/// (seed, i), so results do not depend on scheduling. Identity when !training.
Tensor dropout(const Tensor& a, double p, std::uint64_t seed, bool training);
Tensor concat(std::span<const Tensor> parts, int axis);
Tensor concat(std::initializer_list<Tensor> parts, int axis);
/// axis 0: column means (1 x cols); axis 1: row means (rows x 1); axis -1: all.
Tensor mean(const Tensor& a, int axis = -1);
Tensor sum(const Tensor& a);
/// Maximum of a column vector; ties resolve to the lowest index.
std::pair<Tensor, int> max_with_argmax(const Tensor& column);
Tensor select_row(const Tensor& a, int row);
Tensor slice_cols(const Tensor& a, int begin, int end);
/// Numerically stable binary cross-entropy of a 1 x 1 logit against 0/1.
Tensor bce_with_logits(const Tensor& logit, double target);

}  // namespace wsimil::nn
