#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <memory>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "wcl/corpus.hpp"

namespace wcl {

#ifdef WCL_SINGLE_PRECISION
using Real = float;
#else
using Real = double;
#endif

// Every tensor is a row-major matrix; scalars are 1x1 and vectors 1xn.
struct Shape {
  std::size_t rows = 0;
  std::size_t cols = 0;

  std::size_t numel() const { return rows * cols; }
  bool operator==(const Shape&) const = default;
  std::string str() const;
};

namespace detail {

struct Node {
  Shape shape;
  std::vector<Real> value;
  std::vector<Real> grad;  // empty until a gradient reaches this node
  bool requires_grad = false;
  std::vector<std::shared_ptr<Node>> parents;
  std::function<void(Node&)> backward;

  std::vector<Real>& ensure_grad() {
    if (grad.empty()) grad.assign(value.size(), Real(0));
    return grad;
  }
};

}  // namespace detail

class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(Shape shape);
  static Tensor constant(Shape shape, std::vector<Real> values);
  static Tensor scalar(Real v) { return constant({1, 1}, {v}); }
  // Leaf whose gradient is accumulated by Tape::backward.
  static Tensor parameter(Shape shape, std::vector<Real> values);

  bool defined() const { return static_cast<bool>(node_); }
  const Shape& shape() const { return node_->shape; }
  std::size_t rows() const { return node_->shape.rows; }
  std::size_t cols() const { return node_->shape.cols; }
  std::size_t numel() const { return node_->shape.numel(); }

  std::span<const Real> values() const { return node_->value; }
  std::span<Real> mutable_values() { return node_->value; }
  Real at(std::size_t r, std::size_t c) const { return node_->value[r * cols() + c]; }
  Real item() const;

  bool requires_grad() const { return node_->requires_grad; }
  bool has_grad() const { return !node_->grad.empty(); }
  // Zero-filled view when no gradient has been accumulated yet.
  std::span<const Real> grad() const;
  std::span<Real> mutable_grad() { return node_->ensure_grad(); }
  void zero_grad() { node_->grad.clear(); }

  // Copy of the values, detached from any graph.
  Tensor detach() const { return constant(shape(), node_->value); }

 private:
  friend class Tape;
  explicit Tensor(std::shared_ptr<detail::Node> node) : node_(std::move(node)) {}
  std::shared_ptr<detail::Node> node_;
};

// Records primitive operations in execution order and runs the reverse
// sweep. A tape constructed with record = false evaluates forward values
// only. One tape belongs to one thread.
class Tape {
 public:
  explicit Tape(bool record = true) : record_(record) {}

  bool recording() const { return record_; }
  std::size_t size() const { return nodes_.size(); }

  // op(a) * op(b), where op transposes when requested.
  Tensor matmul(const Tensor& a, const Tensor& b, bool trans_a = false, bool trans_b = false);
  // Same shape, or b is a 1 x cols row broadcast over a's rows.
  Tensor add(const Tensor& a, const Tensor& b);
  Tensor mul(const Tensor& a, const Tensor& b);
  Tensor scale(const Tensor& a, Real s);
  Tensor relu(const Tensor& a);
  Tensor log(const Tensor& a);
  Tensor exp(const Tensor& a);
  // axis 1 normalizes each row, axis 0 each column.
  Tensor softmax(const Tensor& a, int axis);
  Tensor log_softmax(const Tensor& a, int axis);
  Tensor sum(const Tensor& a);
  // axis 0 averages rows into 1 x cols, axis 1 averages columns into rows x 1.
  Tensor mean(const Tensor& a, int axis);
  // Row-wise normalization with 1 x cols gain and bias.
  Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias, Real eps = Real(1e-5));
  Tensor embedding_lookup(const Tensor& table, std::span<const TokenId> ids);
  Tensor concat(const std::vector<Tensor>& parts, int axis);
  Tensor slice(const Tensor& a, int axis, std::size_t begin, std::size_t end);
  Tensor transpose(const Tensor& a);
  // Cosine between every row of a and every row of b: a.rows x b.rows.
  // Norms are clamped below at 1e-8.
  Tensor cosine_similarity(const Tensor& a, const Tensor& b);
  // Diagonal of a square matrix as 1 x n.
  Tensor diag(const Tensor& a);
  // Summed over rows: -(1-eps) log p[y] - (eps / V) sum_v log p[v].
  Tensor cross_entropy_with_label_smoothing(const Tensor& logits, std::span<const TokenId> targets, Real eps);
  // Scaled dot-product attention computed independently per (segment, head)
  // block. Segment s pairs query rows [q_off[s], q_off[s] + q_len[s]) with
  // key/value rows [k_off[s], k_off[s] + k_len[s]); head h uses columns
  // [h*dh, (h+1)*dh) of q, k and v. With causal, query i sees keys j <= i.
  Tensor attention(const Tensor& q, const Tensor& k, const Tensor& v, std::size_t heads,
                   std::span<const std::size_t> q_off, std::span<const std::size_t> q_len,
                   std::span<const std::size_t> k_off, std::span<const std::size_t> k_len, bool causal);
  // Inverted dropout; identity when rate == 0.
  Tensor dropout(const Tensor& a, Real rate, std::mt19937_64& rng);

  // Seeds d(root) = 1 and propagates to every recorded node and leaf.
  void backward(const Tensor& root);

 private:
  Tensor record(Shape shape, std::vector<Real> value, std::vector<Tensor> parents,
                std::function<void(detail::Node&)> backward);

  bool record_;
  std::vector<std::shared_ptr<detail::Node>> nodes_;
};

struct GradCheckOptions {
  double step = 1e-5;
  double tolerance = 1e-4;
  // Denominator floor for the relative error, scaled by max(1, |f|), so
  // that entries whose true gradient is below the finite-difference
  // resolution of f do not dominate.
  double abs_floor = 1e-6;
};

struct GradCheckReport {
  double max_rel_error = 0;
  double max_abs_error = 0;
  std::size_t checked = 0;
  bool finite = true;
  bool passed = false;
  std::string message;
};

// Compares reverse-mode gradients of the scalar f with central differences
// for every element of every input. f must build its graph on the tape it
// is given and reference the inputs directly.
GradCheckReport grad_check(const std::function<Tensor(Tape&)>& f, std::span<Tensor> inputs,
                           const GradCheckOptions& options = {});

}  // namespace wcl
