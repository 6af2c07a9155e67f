#include "wsimil/nn/tensor.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <unordered_set>

#include "wsimil/common/error.hpp"
#include "wsimil/common/rng.hpp"

namespace wsimil::nn {

namespace {

using Mat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapC = Eigen::Map<const Mat>;
using MapM = Eigen::Map<Mat>;

MapC view(const std::vector<double>& v, int r, int c) { return MapC(v.data(), r, c); }
MapM view(std::vector<double>& v, int r, int c) { return MapM(v.data(), r, c); }

std::string shape_str(const Node& n) { return std::to_string(n.rows) + "x" + std::to_string(n.cols); }

void require(bool ok, const char* op, const std::string& detail) {
  if (!ok) throw ShapeError(std::string(op) + ": " + detail);
}

std::shared_ptr<Node> make(int rows, int cols, const char* op, std::vector<std::shared_ptr<Node>> parents) {
  auto n = std::make_shared<Node>();
  n->rows = rows;
  n->cols = cols;
  n->op = op;
  n->value.assign(static_cast<std::size_t>(rows) * cols, 0.0);
  for (const auto& p : parents) n->requires_grad = n->requires_grad || p->requires_grad;
  if (n->requires_grad) n->parents = std::move(parents);
  return n;
}

Tensor finish(std::shared_ptr<Node> n) {
  for (double v : n->value)
    if (!std::isfinite(v)) throw NumericError(std::string("non-finite result in ") + n->op);
  return Tensor(std::move(n));
}

Node& parent(Node& n, std::size_t i) { return *n.parents[i]; }

}  // namespace

Tensor Tensor::zeros(int rows, int cols, bool requires_grad) {
  require(rows > 0 && cols > 0, "tensor", "dimensions must be positive");
  auto n = std::make_shared<Node>();
  n->rows = rows;
  n->cols = cols;
  n->value.assign(static_cast<std::size_t>(rows) * cols, 0.0);
  n->requires_grad = requires_grad;
  return Tensor(std::move(n));
}

Tensor Tensor::from(int rows, int cols, std::vector<double> data, bool requires_grad) {
  require(rows > 0 && cols > 0, "tensor", "dimensions must be positive");
  require(data.size() == static_cast<std::size_t>(rows) * cols, "tensor", "data length does not match shape");
  auto n = std::make_shared<Node>();
  n->rows = rows;
  n->cols = cols;
  n->value = std::move(data);
  n->requires_grad = requires_grad;
  return finish(std::move(n));
}

Tensor Tensor::scalar(double v, bool requires_grad) { return from(1, 1, {v}, requires_grad); }

int Tensor::rows() const { return node_->rows; }
int Tensor::cols() const { return node_->cols; }
std::size_t Tensor::size() const { return node_->value.size(); }
bool Tensor::requires_grad() const { return node_->requires_grad; }
std::vector<double>& Tensor::data() { return node_->value; }
const std::vector<double>& Tensor::data() const { return node_->value; }
const std::vector<double>& Tensor::grad() const { return node_->grad; }
std::vector<double>& Tensor::grad_mut() { return node_->grad_buffer(); }
double Tensor::at(int r, int c) const { return node_->value[static_cast<std::size_t>(r) * node_->cols + c]; }

double Tensor::item() const {
  require(size() == 1, "item", "tensor is " + shape_str(*node_) + ", not a scalar");
  return node_->value[0];
}

void Tensor::zero_grad() { node_->grad.clear(); }

void Tensor::backward() const {
  require(size() == 1, "backward", "root must be a scalar");
  // Iterative post-order DFS gives a topological order.
  std::vector<Node*> order;
  std::unordered_set<Node*> seen;
  std::vector<std::pair<Node*, std::size_t>> stack{{node_.get(), 0}};
  seen.insert(node_.get());
  while (!stack.empty()) {
    auto& [n, next] = stack.back();
    if (next < n->parents.size()) {
      Node* p = n->parents[next++].get();
      if (p->requires_grad && seen.insert(p).second) stack.emplace_back(p, 0);
    } else {
      order.push_back(n);
      stack.pop_back();
    }
  }
  node_->grad_buffer()[0] += 1.0;
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node* n = *it;
    if (n->backward && !n->grad.empty()) n->backward(*n);
  }
}

Tensor matmul(const Tensor& a, const Tensor& b) {
  require(a.cols() == b.rows(), "matmul", shape_str(*a.node()) + " * " + shape_str(*b.node()));
  auto n = make(a.rows(), b.cols(), "matmul", {a.ptr(), b.ptr()});
  view(n->value, n->rows, n->cols).noalias() = view(a.data(), a.rows(), a.cols()) * view(b.data(), b.rows(), b.cols());
  n->backward = [](Node& self) {
    Node& A = parent(self, 0);
    Node& B = parent(self, 1);
    const auto g = view(self.grad, self.rows, self.cols);
    if (A.requires_grad)
      view(A.grad_buffer(), A.rows, A.cols).noalias() += g * view(B.value, B.rows, B.cols).transpose();
    if (B.requires_grad)
      view(B.grad_buffer(), B.rows, B.cols).noalias() += view(A.value, A.rows, A.cols).transpose() * g;
  };
  return finish(std::move(n));
}

Tensor transpose(const Tensor& a) {
  auto n = make(a.cols(), a.rows(), "transpose", {a.ptr()});
  view(n->value, n->rows, n->cols) = view(a.data(), a.rows(), a.cols()).transpose();
  n->backward = [](Node& self) {
    Node& A = parent(self, 0);
    view(A.grad_buffer(), A.rows, A.cols) += view(self.grad, self.rows, self.cols).transpose();
  };
  return finish(std::move(n));
}

namespace {

enum class Broadcast { Same, Row, Scalar };

Broadcast broadcast_mode(const Tensor& a, const Tensor& b, const char* op) {
  if (a.rows() == b.rows() && a.cols() == b.cols()) return Broadcast::Same;
  if (b.rows() == 1 && b.cols() == a.cols()) return Broadcast::Row;
  if (b.size() == 1) return Broadcast::Scalar;
  require(false, op, shape_str(*a.node()) + " vs " + shape_str(*b.node()));
  return Broadcast::Same;
}

Tensor add_impl(const Tensor& a, const Tensor& b, double sign, const char* op) {
  const Broadcast mode = broadcast_mode(a, b, op);
  auto n = make(a.rows(), a.cols(), op, {a.ptr(), b.ptr()});
  const int cols = a.cols();
  for (std::size_t i = 0; i < n->value.size(); ++i) {
    const double bv = mode == Broadcast::Same ? b.data()[i] : mode == Broadcast::Row ? b.data()[i % cols] : b.data()[0];
    n->value[i] = a.data()[i] + sign * bv;
  }
  n->backward = [mode, sign, cols](Node& self) {
    Node& A = parent(self, 0);
    Node& B = parent(self, 1);
    if (A.requires_grad) {
      auto& ga = A.grad_buffer();
      for (std::size_t i = 0; i < self.grad.size(); ++i) ga[i] += self.grad[i];
    }
    if (B.requires_grad) {
      auto& gb = B.grad_buffer();
      for (std::size_t i = 0; i < self.grad.size(); ++i) {
        const std::size_t j = mode == Broadcast::Same ? i : mode == Broadcast::Row ? i % cols : 0;
        gb[j] += sign * self.grad[i];
      }
    }
  };
  return finish(std::move(n));
}

template <typename F, typename D>
Tensor unary(const Tensor& a, const char* op, F f, D df) {
  auto n = make(a.rows(), a.cols(), op, {a.ptr()});
  for (std::size_t i = 0; i < n->value.size(); ++i) n->value[i] = f(a.data()[i]);
  n->backward = [df](Node& self) {
    Node& A = parent(self, 0);
    auto& ga = A.grad_buffer();
    for (std::size_t i = 0; i < self.grad.size(); ++i) ga[i] += self.grad[i] * df(A.value[i], self.value[i]);
  };
  return finish(std::move(n));
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) { return add_impl(a, b, 1.0, "add"); }
Tensor sub(const Tensor& a, const Tensor& b) { return add_impl(a, b, -1.0, "sub"); }

Tensor mul(const Tensor& a, const Tensor& b) {
  require(a.rows() == b.rows() && a.cols() == b.cols(), "mul", shape_str(*a.node()) + " vs " + shape_str(*b.node()));
  auto n = make(a.rows(), a.cols(), "mul", {a.ptr(), b.ptr()});
  for (std::size_t i = 0; i < n->value.size(); ++i) n->value[i] = a.data()[i] * b.data()[i];
  n->backward = [](Node& self) {
    Node& A = parent(self, 0);
    Node& B = parent(self, 1);
    if (A.requires_grad) {
      auto& ga = A.grad_buffer();
      for (std::size_t i = 0; i < self.grad.size(); ++i) ga[i] += self.grad[i] * B.value[i];
    }
    if (B.requires_grad) {
      auto& gb = B.grad_buffer();
      for (std::size_t i = 0; i < self.grad.size(); ++i) gb[i] += self.grad[i] * A.value[i];
    }
  };
  return finish(std::move(n));
}

Tensor scale(const Tensor& a, double s) {
  return unary(a, "scale", [s](double x) { return s * x; }, [s](double, double) { return s; });
}

Tensor relu(const Tensor& a) {
  return unary(a, "relu", [](double x) { return x > 0 ? x : 0.0; }, [](double x, double) { return x > 0 ? 1.0 : 0.0; });
}

Tensor gelu(const Tensor& a) {
  constexpr double k = 0.7978845608028654;  // sqrt(2 / pi)
  constexpr double c = 0.044715;
  return unary(
      a, "gelu", [](double x) { return 0.5 * x * (1.0 + std::tanh(k * (x + c * x * x * x))); },
      [](double x, double) {
        const double t = std::tanh(k * (x + c * x * x * x));
        return 0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * k * (1.0 + 3.0 * c * x * x);
      });
}

Tensor sigmoid(const Tensor& a) {
  return unary(
      a, "sigmoid",
      [](double x) { return x >= 0 ? 1.0 / (1.0 + std::exp(-x)) : std::exp(x) / (1.0 + std::exp(x)); },
      [](double, double y) { return y * (1.0 - y); });
}

Tensor tanh(const Tensor& a) {
  return unary(a, "tanh", [](double x) { return std::tanh(x); }, [](double, double y) { return 1.0 - y * y; });
}

Tensor softmax(const Tensor& a, int axis) {
  require(axis == 0 || axis == 1, "softmax", "axis must be 0 or 1");
  auto n = make(a.rows(), a.cols(), "softmax", {a.ptr()});
  const int R = a.rows(), C = a.cols();
  const int lines = axis == 1 ? R : C, len = axis == 1 ? C : R;
  auto idx = [=](int line, int k) {
    return axis == 1 ? static_cast<std::size_t>(line) * C + k : static_cast<std::size_t>(k) * C + line;
  };
  for (int l = 0; l < lines; ++l) {
    double m = -INFINITY;
    for (int k = 0; k < len; ++k) m = std::max(m, a.data()[idx(l, k)]);
    double s = 0.0;
    for (int k = 0; k < len; ++k) s += (n->value[idx(l, k)] = std::exp(a.data()[idx(l, k)] - m));
    for (int k = 0; k < len; ++k) n->value[idx(l, k)] /= s;
  }
  n->backward = [=](Node& self) {
    Node& A = parent(self, 0);
    auto& ga = A.grad_buffer();
    for (int l = 0; l < lines; ++l) {
      double dot = 0.0;
      for (int k = 0; k < len; ++k) dot += self.grad[idx(l, k)] * self.value[idx(l, k)];
      for (int k = 0; k < len; ++k) ga[idx(l, k)] += self.value[idx(l, k)] * (self.grad[idx(l, k)] - dot);
    }
  };
  return finish(std::move(n));
}

Tensor layer_norm(const Tensor& a, const Tensor& gamma, const Tensor& beta, double eps) {
  const int R = a.rows(), C = a.cols();
  require(gamma.rows() == 1 && gamma.cols() == C && beta.rows() == 1 && beta.cols() == C, "layer_norm",
          "gamma/beta must be 1x" + std::to_string(C));
  auto n = make(R, C, "layer_norm", {a.ptr(), gamma.ptr(), beta.ptr()});
  auto xhat = std::make_shared<std::vector<double>>(a.size());
  auto rstd = std::make_shared<std::vector<double>>(R);
  for (int r = 0; r < R; ++r) {
    const double* x = a.data().data() + static_cast<std::size_t>(r) * C;
    double mu = 0.0;
    for (int c = 0; c < C; ++c) mu += x[c];
    mu /= C;
    double var = 0.0;
    for (int c = 0; c < C; ++c) var += (x[c] - mu) * (x[c] - mu);
    var /= C;
    (*rstd)[r] = 1.0 / std::sqrt(var + eps);
    for (int c = 0; c < C; ++c) {
      const std::size_t i = static_cast<std::size_t>(r) * C + c;
      (*xhat)[i] = (x[c] - mu) * (*rstd)[r];
      n->value[i] = (*xhat)[i] * gamma.data()[c] + beta.data()[c];
    }
  }
  n->backward = [xhat, rstd, R, C](Node& self) {
    Node& A = parent(self, 0);
    Node& G = parent(self, 1);
    Node& B = parent(self, 2);
    for (int r = 0; r < R; ++r) {
      const std::size_t o = static_cast<std::size_t>(r) * C;
      if (G.requires_grad || B.requires_grad) {
        auto& gg = G.grad_buffer();
        auto& gb = B.grad_buffer();
        for (int c = 0; c < C; ++c) {
          gg[c] += self.grad[o + c] * (*xhat)[o + c];
          gb[c] += self.grad[o + c];
        }
      }
      if (A.requires_grad) {
        double m1 = 0.0, m2 = 0.0;
        for (int c = 0; c < C; ++c) {
          const double d = self.grad[o + c] * G.value[c];
          m1 += d;
          m2 += d * (*xhat)[o + c];
        }
        m1 /= C;
        m2 /= C;
        auto& ga = A.grad_buffer();
        for (int c = 0; c < C; ++c) {
          const double d = self.grad[o + c] * G.value[c];
          ga[o + c] += (*rstd)[r] * (d - m1 - (*xhat)[o + c] * m2);
        }
      }
    }
  };
  return finish(std::move(n));
}

Tensor dropout(const Tensor& a, double p, std::uint64_t seed, bool training) {
  if (!training || p <= 0.0) return a;
  require(p < 1.0, "dropout", "probability must be < 1");
  auto mask = std::make_shared<std::vector<double>>(a.size());
  const double keep_scale = 1.0 / (1.0 - p);
  for (std::size_t i = 0; i < mask->size(); ++i)
    (*mask)[i] = unit_from_bits(mix64(seed + static_cast<std::uint64_t>(i))) >= p ? keep_scale : 0.0;
  auto n = make(a.rows(), a.cols(), "dropout", {a.ptr()});
  for (std::size_t i = 0; i < n->value.size(); ++i) n->value[i] = a.data()[i] * (*mask)[i];
  n->backward = [mask](Node& self) {
    auto& ga = parent(self, 0).grad_buffer();
    for (std::size_t i = 0; i < self.grad.size(); ++i) ga[i] += self.grad[i] * (*mask)[i];
  };
  return finish(std::move(n));
}

Tensor concat(std::span<const Tensor> parts, int axis) {
  require(!parts.empty(), "concat", "no inputs");
  require(axis == 0 || axis == 1, "concat", "axis must be 0 or 1");
  int rows = 0, cols = 0;
  std::vector<std::shared_ptr<Node>> parents;
  for (const auto& t : parts) {
    if (axis == 0) {
      require(t.cols() == parts[0].cols(), "concat", "column counts differ");
      rows += t.rows();
      cols = t.cols();
    } else {
      require(t.rows() == parts[0].rows(), "concat", "row counts differ");
      cols += t.cols();
      rows = t.rows();
    }
    parents.push_back(t.ptr());
  }
  auto n = make(rows, cols, "concat", parents);
  std::vector<int> offsets;
  int off = 0;
  for (const auto& t : parts) {
    offsets.push_back(off);
    for (int r = 0; r < t.rows(); ++r)
      for (int c = 0; c < t.cols(); ++c) {
        const int rr = axis == 0 ? off + r : r, cc = axis == 0 ? c : off + c;
        n->value[static_cast<std::size_t>(rr) * cols + cc] = t.at(r, c);
      }
    off += axis == 0 ? t.rows() : t.cols();
  }
  n->backward = [offsets, axis](Node& self) {
    for (std::size_t p = 0; p < self.parents.size(); ++p) {
      Node& P = *self.parents[p];
      if (!P.requires_grad) continue;
      auto& g = P.grad_buffer();
      for (int r = 0; r < P.rows; ++r)
        for (int c = 0; c < P.cols; ++c) {
          const int rr = axis == 0 ? offsets[p] + r : r, cc = axis == 0 ? c : offsets[p] + c;
          g[static_cast<std::size_t>(r) * P.cols + c] += self.grad[static_cast<std::size_t>(rr) * self.cols + cc];
        }
    }
  };
  return finish(std::move(n));
}

Tensor concat(std::initializer_list<Tensor> parts, int axis) {
  return concat(std::span<const Tensor>(parts.begin(), parts.size()), axis);
}

Tensor mean(const Tensor& a, int axis) {
  require(axis >= -1 && axis <= 1, "mean", "axis must be -1, 0 or 1");
  const int R = a.rows(), C = a.cols();
  const int out_r = axis == 1 ? R : 1, out_c = axis == 0 ? C : 1;
  const double count = axis == 0 ? R : axis == 1 ? C : static_cast<double>(R) * C;
  auto n = make(out_r, out_c, "mean", {a.ptr()});
  auto target = [=](int r, int c) {
    return axis == 0 ? static_cast<std::size_t>(c) : axis == 1 ? static_cast<std::size_t>(r) : 0;
  };
  for (int r = 0; r < R; ++r)
    for (int c = 0; c < C; ++c) n->value[target(r, c)] += a.at(r, c);
  for (double& v : n->value) v /= count;
  n->backward = [=](Node& self) {
    auto& ga = parent(self, 0).grad_buffer();
    for (int r = 0; r < R; ++r)
      for (int c = 0; c < C; ++c) ga[static_cast<std::size_t>(r) * C + c] += self.grad[target(r, c)] / count;
  };
  return finish(std::move(n));
}

Tensor sum(const Tensor& a) { return scale(mean(a, -1), static_cast<double>(a.size())); }

std::pair<Tensor, int> max_with_argmax(const Tensor& column) {
  require(column.rows() == 1 || column.cols() == 1, "max_with_argmax", "input must be a vector");
  int best = 0;
  for (std::size_t i = 1; i < column.size(); ++i)
    if (column.data()[i] > column.data()[best]) best = static_cast<int>(i);
  auto n = make(1, 1, "max", {column.ptr()});
  n->value[0] = column.data()[best];
  n->backward = [best](Node& self) { parent(self, 0).grad_buffer()[best] += self.grad[0]; };
  return {finish(std::move(n)), best};
}

Tensor select_row(const Tensor& a, int row) {
  require(row >= 0 && row < a.rows(), "select_row", "row out of range");
  auto n = make(1, a.cols(), "select_row", {a.ptr()});
  const std::size_t o = static_cast<std::size_t>(row) * a.cols();
  std::copy_n(a.data().begin() + static_cast<std::ptrdiff_t>(o), a.cols(), n->value.begin());
  n->backward = [o](Node& self) {
    auto& ga = parent(self, 0).grad_buffer();
    for (int c = 0; c < self.cols; ++c) ga[o + c] += self.grad[c];
  };
  return finish(std::move(n));
}

Tensor slice_cols(const Tensor& a, int begin, int end) {
  require(begin >= 0 && begin < end && end <= a.cols(), "slice_cols", "invalid column range");
  const int C = a.cols(), W = end - begin;
  auto n = make(a.rows(), W, "slice_cols", {a.ptr()});
  for (int r = 0; r < a.rows(); ++r)
    for (int c = 0; c < W; ++c) n->value[static_cast<std::size_t>(r) * W + c] = a.at(r, begin + c);
  n->backward = [=](Node& self) {
    auto& ga = parent(self, 0).grad_buffer();
    for (int r = 0; r < self.rows; ++r)
      for (int c = 0; c < W; ++c)
        ga[static_cast<std::size_t>(r) * C + begin + c] += self.grad[static_cast<std::size_t>(r) * W + c];
  };
  return finish(std::move(n));
}

Tensor bce_with_logits(const Tensor& logit, double target) {
  require(logit.size() == 1, "bce_with_logits", "logit must be a scalar");
  const double z = logit.data()[0];
  auto n = make(1, 1, "bce_with_logits", {logit.ptr()});
  n->value[0] = std::max(z, 0.0) - z * target + std::log1p(std::exp(-std::abs(z)));
  n->backward = [z, target](Node& self) {
    const double s = z >= 0 ? 1.0 / (1.0 + std::exp(-z)) : std::exp(z) / (1.0 + std::exp(z));
    parent(self, 0).grad_buffer()[0] += self.grad[0] * (s - target);
  };
  return finish(std::move(n));
}

}  // namespace wsimil::nn
