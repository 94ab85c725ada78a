#pragma once

// Minimal define-by-run reverse-mode differentiation over dense row-major
// matrices of doubles. Every value is a matrix: scalars are 1x1, a batch of
// n points in the plane is n x 2, a column of truth degrees is n x 1.

#include <cstddef>
#include <functional>
#include <memory>
#include <stdexcept>
#include <string>
#include <vector>

namespace ltngan::ad {

/// Clamp applied by log, div, sqrt and BCE so exact 0/1 truth degrees stay finite.
inline constexpr double kEps = 1e-12;

struct Shape {
  std::size_t rows = 1;
  std::size_t cols = 1;

  std::size_t size() const { return rows * cols; }
  bool operator==(const Shape&) const = default;
  std::string str() const;
};

class ShapeError : public std::invalid_argument {
 public:
  ShapeError(const std::string& op, Shape a, Shape b);
  explicit ShapeError(const std::string& what) : std::invalid_argument(what) {}
};

struct Node {
  Shape shape;
  std::vector<double> data;
  std::vector<double> grad;
  std::vector<std::shared_ptr<Node>> parents;
  std::function<void(Node&)> backward_fn;
  const char* op = "leaf";
  bool requires_grad = false;
};

/// Handle to a graph node. Copies share the node.
class Var {
 public:
  Var() = default;
  explicit Var(std::shared_ptr<Node> node) : node_(std::move(node)) {}

  static Var constant(Shape shape, std::vector<double> data);
  static Var constant(double value);
  static Var zeros(Shape shape);
  static Var parameter(Shape shape, std::vector<double> data);

  bool valid() const { return node_ != nullptr; }
  const Shape& shape() const { return node_->shape; }
  std::size_t rows() const { return node_->shape.rows; }
  std::size_t cols() const { return node_->shape.cols; }
  std::size_t size() const { return node_->shape.size(); }
  bool requires_grad() const { return node_->requires_grad; }

  std::vector<double>& data() { return node_->data; }
  const std::vector<double>& data() const { return node_->data; }
  std::vector<double>& grad() { return node_->grad; }
  const std::vector<double>& grad() const { return node_->grad; }

  double at(std::size_t r, std::size_t c) const { return node_->data[r * cols() + c]; }
  double grad_at(std::size_t r, std::size_t c) const { return node_->grad[r * cols() + c]; }
  /// Value of a 1x1 node.
  double item() const;

  void zero_grad();
  const char* op() const { return node_->op; }
  const std::shared_ptr<Node>& node() const { return node_; }

 private:
  std::shared_ptr<Node> node_;
};

// Elementwise binary ops broadcast numpy-style: a dimension of size 1
// stretches to match the other operand.
Var add(const Var& a, const Var& b);
Var sub(const Var& a, const Var& b);
Var mul(const Var& a, const Var& b);
Var div(const Var& a, const Var& b);
Var maximum(const Var& a, const Var& b);
Var minimum(const Var& a, const Var& b);

Var neg(const Var& a);
Var exp(const Var& a);
Var log(const Var& a);
Var sqrt(const Var& a);
Var pow(const Var& a, double exponent);
Var sigmoid(const Var& a);
Var tanh(const Var& a);
Var sin(const Var& a);
Var cos(const Var& a);
Var leaky_relu(const Var& a, double slope);
Var abs(const Var& a);
Var clip(const Var& a, double lo, double hi);
Var scale(const Var& a, double factor);
Var shift(const Var& a, double offset);
Var square(const Var& a);
/// 1 - a, the fuzzy negation.
Var one_minus(const Var& a);

Var operator+(const Var& a, const Var& b);
Var operator-(const Var& a, const Var& b);
Var operator*(const Var& a, const Var& b);
Var operator/(const Var& a, const Var& b);
Var operator-(const Var& a);
Var operator+(const Var& a, double b);
Var operator+(double a, const Var& b);
Var operator-(const Var& a, double b);
Var operator-(double a, const Var& b);
Var operator*(const Var& a, double b);
Var operator*(double a, const Var& b);
Var operator/(const Var& a, double b);

Var matmul(const Var& a, const Var& b);
Var transpose(const Var& a);

Var sum(const Var& a);
Var mean(const Var& a);
/// Reduce over rows: m x n -> 1 x n.
Var sum_rows(const Var& a);
Var mean_rows(const Var& a);
/// Reduce over columns: m x n -> m x 1.
Var sum_cols(const Var& a);
Var mean_cols(const Var& a);

Var slice_cols(const Var& a, std::size_t begin, std::size_t count);
Var concat_cols(const std::vector<Var>& parts);
Var softmax_rows(const Var& a);
Var log_softmax_rows(const Var& a);

/// Copy of the data with no history; gradients stop here.
Var detach(const Var& a);

/// Mean binary cross-entropy of probabilities p against a fixed target y.
Var bce_loss(const Var& p, double y);
/// Mean binary cross-entropy against per-element targets (same shape as p).
Var bce_loss(const Var& p, const Var& targets);
/// Mean categorical cross-entropy of logits against integer class labels.
Var cross_entropy_logits(const Var& logits, const std::vector<int>& labels);

/// Propagates d(root)/d(node) into every reachable node that requires grad.
/// Leaf gradients accumulate across calls; callers zero them between steps.
void backward(const Var& root);

struct GradCheckResult {
  double max_error = 0.0;
  std::size_t worst_param = 0;
  std::size_t worst_index = 0;
};

/// Compares backward() against central differences for every coordinate of
/// `params` (or `max_coords` evenly strided ones when nonzero). `f` must
/// rebuild the graph from the current parameter data on each call. Returns
/// max |analytic - numeric| / max(1, |analytic|).
GradCheckResult finite_difference_check(const std::function<Var()>& f, const std::vector<Var>& params,
                                        double h = 1e-5, std::size_t max_coords = 0);

}  // namespace ltngan::ad
