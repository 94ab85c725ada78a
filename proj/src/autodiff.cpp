#include "ltngan/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>
#include <unordered_set>

namespace ltngan::ad {

std::string Shape::str() const {
  std::ostringstream os;
  os << '[' << rows << 'x' << cols << ']';
  return os.str();
}

ShapeError::ShapeError(const std::string& op, Shape a, Shape b)
    : std::invalid_argument(op + ": incompatible shapes " + a.str() + " and " + b.str()) {}

Var Var::constant(Shape shape, std::vector<double> data) {
  if (data.size() != shape.size()) {
    throw ShapeError("constant: " + std::to_string(data.size()) + " values for shape " + shape.str());
  }
  auto node = std::make_shared<Node>();
  node->shape = shape;
  node->data = std::move(data);
  node->grad.assign(shape.size(), 0.0);
  return Var(std::move(node));
}

Var Var::constant(double value) { return constant({1, 1}, {value}); }

Var Var::zeros(Shape shape) { return constant(shape, std::vector<double>(shape.size(), 0.0)); }

Var Var::parameter(Shape shape, std::vector<double> data) {
  Var v = constant(shape, std::move(data));
  v.node_->requires_grad = true;
  return v;
}

double Var::item() const {
  if (size() != 1) throw ShapeError("item() on non-scalar " + shape().str());
  return node_->data[0];
}

void Var::zero_grad() { std::fill(node_->grad.begin(), node_->grad.end(), 0.0); }

namespace {

using Backward = std::function<void(Node&)>;

Var make_node(Shape shape, std::vector<double> data, const char* op, std::vector<std::shared_ptr<Node>> parents,
              Backward backward) {
  auto node = std::make_shared<Node>();
  node->shape = shape;
  node->data = std::move(data);
  node->grad.assign(shape.size(), 0.0);
  node->op = op;
  const bool needs = std::any_of(parents.begin(), parents.end(), [](const auto& p) { return p->requires_grad; });
  if (needs) {
    node->requires_grad = true;
    node->parents = std::move(parents);
    node->backward_fn = std::move(backward);
  }
  return Var(std::move(node));
}

Shape broadcast_shape(const char* op, Shape a, Shape b) {
  auto dim = [&](std::size_t x, std::size_t y) {
    if (x == y) return x;
    if (x == 1) return y;
    if (y == 1) return x;
    throw ShapeError(op, a, b);
  };
  return {dim(a.rows, b.rows), dim(a.cols, b.cols)};
}

// Flat index into an operand of shape `s` for output position (i, j).
inline std::size_t bidx(const Shape& s, std::size_t i, std::size_t j) {
  return (s.rows == 1 ? 0 : i) * s.cols + (s.cols == 1 ? 0 : j);
}

// f(x, y) forward; da(x, y, out) and db(x, y, out) are local partials.
template <typename F, typename DA, typename DB>
Var binary(const char* op, const Var& a, const Var& b, F f, DA da, DB db) {
  const Shape sa = a.shape(), sb = b.shape();
  const Shape out = broadcast_shape(op, sa, sb);
  std::vector<double> data(out.size());
  const auto& x = a.data();
  const auto& y = b.data();
  for (std::size_t i = 0; i < out.rows; ++i) {
    for (std::size_t j = 0; j < out.cols; ++j) {
      data[i * out.cols + j] = f(x[bidx(sa, i, j)], y[bidx(sb, i, j)]);
    }
  }
  return make_node(out, std::move(data), op, {a.node(), b.node()}, [sa, sb, out, da, db](Node& self) {
    Node& pa = *self.parents[0];
    Node& pb = *self.parents[1];
    for (std::size_t i = 0; i < out.rows; ++i) {
      for (std::size_t j = 0; j < out.cols; ++j) {
        const std::size_t k = i * out.cols + j;
        const std::size_t ia = bidx(sa, i, j), ib = bidx(sb, i, j);
        const double g = self.grad[k];
        if (pa.requires_grad) pa.grad[ia] += g * da(pa.data[ia], pb.data[ib], self.data[k]);
        if (pb.requires_grad) pb.grad[ib] += g * db(pa.data[ia], pb.data[ib], self.data[k]);
      }
    }
  });
}

// f(x) forward; df(x, y) local derivative given input x and output y.
template <typename F, typename DF>
Var unary(const char* op, const Var& a, F f, DF df) {
  std::vector<double> data(a.size());
  const auto& x = a.data();
  for (std::size_t k = 0; k < data.size(); ++k) data[k] = f(x[k]);
  return make_node(a.shape(), std::move(data), op, {a.node()}, [df](Node& self) {
    Node& p = *self.parents[0];
    for (std::size_t k = 0; k < self.data.size(); ++k) p.grad[k] += self.grad[k] * df(p.data[k], self.data[k]);
  });
}

double guard_denominator(double v) {
  if (std::abs(v) >= kEps) return v;
  return v < 0 ? -kEps : kEps;
}

double stable_sigmoid(double x) {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

}  // namespace

Var add(const Var& a, const Var& b) {
  return binary(
      "add", a, b, [](double x, double y) { return x + y; }, [](double, double, double) { return 1.0; },
      [](double, double, double) { return 1.0; });
}

Var sub(const Var& a, const Var& b) {
  return binary(
      "sub", a, b, [](double x, double y) { return x - y; }, [](double, double, double) { return 1.0; },
      [](double, double, double) { return -1.0; });
}

Var mul(const Var& a, const Var& b) {
  return binary(
      "mul", a, b, [](double x, double y) { return x * y; }, [](double, double y, double) { return y; },
      [](double x, double, double) { return x; });
}

Var div(const Var& a, const Var& b) {
  return binary(
      "div", a, b, [](double x, double y) { return x / guard_denominator(y); },
      [](double, double y, double) { return 1.0 / guard_denominator(y); },
      [](double x, double y, double) {
        const double d = guard_denominator(y);
        return -x / (d * d);
      });
}

// Ties route the gradient to the first operand.
Var maximum(const Var& a, const Var& b) {
  return binary(
      "max", a, b, [](double x, double y) { return x >= y ? x : y; },
      [](double x, double y, double) { return x >= y ? 1.0 : 0.0; },
      [](double x, double y, double) { return x >= y ? 0.0 : 1.0; });
}

Var minimum(const Var& a, const Var& b) {
  return binary(
      "min", a, b, [](double x, double y) { return x <= y ? x : y; },
      [](double x, double y, double) { return x <= y ? 1.0 : 0.0; },
      [](double x, double y, double) { return x <= y ? 0.0 : 1.0; });
}

Var neg(const Var& a) {
  return unary(
      "neg", a, [](double x) { return -x; }, [](double, double) { return -1.0; });
}

Var exp(const Var& a) {
  return unary(
      "exp", a, [](double x) { return std::exp(x); }, [](double, double y) { return y; });
}

Var log(const Var& a) {
  return unary(
      "log", a, [](double x) { return std::log(std::max(x, kEps)); },
      [](double x, double) { return x > kEps ? 1.0 / x : 0.0; });
}

Var sqrt(const Var& a) {
  return unary(
      "sqrt", a, [](double x) { return std::sqrt(std::max(x, 0.0)); },
      [](double x, double) { return 0.5 / std::sqrt(std::max(x, kEps)); });
}

// Negative bases are clamped to zero so fractional exponents stay real.
Var pow(const Var& a, double exponent) {
  return unary(
      "pow", a, [exponent](double x) { return std::pow(std::max(x, 0.0), exponent); },
      [exponent](double x, double) {
        if (exponent == 1.0) return x >= 0.0 ? 1.0 : 0.0;
        if (x < 0.0) return 0.0;
        if (x == 0.0 && exponent > 1.0) return 0.0;
        return exponent * std::pow(std::max(x, kEps), exponent - 1.0);
      });
}

Var sigmoid(const Var& a) {
  return unary(
      "sigmoid", a, [](double x) { return stable_sigmoid(x); }, [](double, double y) { return y * (1.0 - y); });
}

Var tanh(const Var& a) {
  return unary(
      "tanh", a, [](double x) { return std::tanh(x); }, [](double, double y) { return 1.0 - y * y; });
}

Var sin(const Var& a) {
  return unary(
      "sin", a, [](double x) { return std::sin(x); }, [](double x, double) { return std::cos(x); });
}

Var cos(const Var& a) {
  return unary(
      "cos", a, [](double x) { return std::cos(x); }, [](double x, double) { return -std::sin(x); });
}

Var leaky_relu(const Var& a, double slope) {
  return unary(
      "leaky_relu", a, [slope](double x) { return x > 0 ? x : slope * x; },
      [slope](double x, double) { return x > 0 ? 1.0 : slope; });
}

Var abs(const Var& a) {
  return unary(
      "abs", a, [](double x) { return std::abs(x); },
      [](double x, double) { return x > 0 ? 1.0 : (x < 0 ? -1.0 : 0.0); });
}

Var clip(const Var& a, double lo, double hi) {
  if (lo > hi) throw std::invalid_argument("clip: lower bound exceeds upper bound");
  return unary(
      "clip", a, [lo, hi](double x) { return std::min(std::max(x, lo), hi); },
      [lo, hi](double x, double) { return (x >= lo && x <= hi) ? 1.0 : 0.0; });
}

Var scale(const Var& a, double factor) {
  return unary(
      "scale", a, [factor](double x) { return factor * x; }, [factor](double, double) { return factor; });
}

Var shift(const Var& a, double offset) {
  return unary(
      "shift", a, [offset](double x) { return x + offset; }, [](double, double) { return 1.0; });
}

Var square(const Var& a) {
  return unary(
      "square", a, [](double x) { return x * x; }, [](double x, double) { return 2.0 * x; });
}

Var one_minus(const Var& a) {
  return unary(
      "one_minus", a, [](double x) { return 1.0 - x; }, [](double, double) { return -1.0; });
}

Var operator+(const Var& a, const Var& b) { return add(a, b); }
Var operator-(const Var& a, const Var& b) { return sub(a, b); }
Var operator*(const Var& a, const Var& b) { return mul(a, b); }
Var operator/(const Var& a, const Var& b) { return div(a, b); }
Var operator-(const Var& a) { return neg(a); }
Var operator+(const Var& a, double b) { return shift(a, b); }
Var operator+(double a, const Var& b) { return shift(b, a); }
Var operator-(const Var& a, double b) { return shift(a, -b); }
Var operator-(double a, const Var& b) { return shift(neg(b), a); }
Var operator*(const Var& a, double b) { return scale(a, b); }
Var operator*(double a, const Var& b) { return scale(b, a); }
Var operator/(const Var& a, double b) { return scale(a, 1.0 / b); }

Var matmul(const Var& a, const Var& b) {
  const std::size_t m = a.rows(), k = a.cols(), n = b.cols();
  if (b.rows() != k) throw ShapeError("matmul", a.shape(), b.shape());
  std::vector<double> out(m * n, 0.0);
  const double* x = a.data().data();
  const double* y = b.data().data();
  for (std::size_t i = 0; i < m; ++i) {
    double* row = out.data() + i * n;
    for (std::size_t p = 0; p < k; ++p) {
      const double xv = x[i * k + p];
      if (xv == 0.0) continue;
      const double* yr = y + p * n;
      for (std::size_t j = 0; j < n; ++j) row[j] += xv * yr[j];
    }
  }
  return make_node({m, n}, std::move(out), "matmul", {a.node(), b.node()}, [m, k, n](Node& self) {
    Node& pa = *self.parents[0];
    Node& pb = *self.parents[1];
    const double* g = self.grad.data();
    if (pa.requires_grad) {
      // dA = G * B^T
      for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t p = 0; p < k; ++p) {
          const double* br = pb.data.data() + p * n;
          const double* gr = g + i * n;
          double acc = 0.0;
          for (std::size_t j = 0; j < n; ++j) acc += gr[j] * br[j];
          pa.grad[i * k + p] += acc;
        }
      }
    }
    if (pb.requires_grad) {
      // dB = A^T * G
      for (std::size_t i = 0; i < m; ++i) {
        const double* gr = g + i * n;
        for (std::size_t p = 0; p < k; ++p) {
          const double av = pa.data[i * k + p];
          if (av == 0.0) continue;
          double* dbr = pb.grad.data() + p * n;
          for (std::size_t j = 0; j < n; ++j) dbr[j] += av * gr[j];
        }
      }
    }
  });
}

Var transpose(const Var& a) {
  const std::size_t m = a.rows(), n = a.cols();
  std::vector<double> out(m * n);
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) out[j * m + i] = a.data()[i * n + j];
  return make_node({n, m}, std::move(out), "transpose", {a.node()}, [m, n](Node& self) {
    Node& p = *self.parents[0];
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t j = 0; j < n; ++j) p.grad[i * n + j] += self.grad[j * m + i];
  });
}

Var sum(const Var& a) {
  double s = 0.0;
  for (double v : a.data()) s += v;
  return make_node({1, 1}, {s}, "sum", {a.node()}, [](Node& self) {
    Node& p = *self.parents[0];
    for (double& g : p.grad) g += self.grad[0];
  });
}

Var mean(const Var& a) {
  if (a.size() == 0) throw ShapeError("mean of empty array");
  return scale(sum(a), 1.0 / static_cast<double>(a.size()));
}

Var sum_rows(const Var& a) {
  const std::size_t m = a.rows(), n = a.cols();
  std::vector<double> out(n, 0.0);
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) out[j] += a.data()[i * n + j];
  return make_node({1, n}, std::move(out), "sum_rows", {a.node()}, [m, n](Node& self) {
    Node& p = *self.parents[0];
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t j = 0; j < n; ++j) p.grad[i * n + j] += self.grad[j];
  });
}

Var mean_rows(const Var& a) {
  if (a.rows() == 0) throw ShapeError("mean_rows of empty array");
  return scale(sum_rows(a), 1.0 / static_cast<double>(a.rows()));
}

Var sum_cols(const Var& a) {
  const std::size_t m = a.rows(), n = a.cols();
  std::vector<double> out(m, 0.0);
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) out[i] += a.data()[i * n + j];
  return make_node({m, 1}, std::move(out), "sum_cols", {a.node()}, [m, n](Node& self) {
    Node& p = *self.parents[0];
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t j = 0; j < n; ++j) p.grad[i * n + j] += self.grad[i];
  });
}

Var mean_cols(const Var& a) {
  if (a.cols() == 0) throw ShapeError("mean_cols of empty array");
  return scale(sum_cols(a), 1.0 / static_cast<double>(a.cols()));
}

Var slice_cols(const Var& a, std::size_t begin, std::size_t count) {
  const std::size_t m = a.rows(), n = a.cols();
  if (begin + count > n) {
    throw ShapeError("slice_cols: columns [" + std::to_string(begin) + ", " + std::to_string(begin + count) +
                     ") out of range for " + a.shape().str());
  }
  std::vector<double> out(m * count);
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < count; ++j) out[i * count + j] = a.data()[i * n + begin + j];
  return make_node({m, count}, std::move(out), "slice_cols", {a.node()}, [m, n, begin, count](Node& self) {
    Node& p = *self.parents[0];
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t j = 0; j < count; ++j) p.grad[i * n + begin + j] += self.grad[i * count + j];
  });
}

Var concat_cols(const std::vector<Var>& parts) {
  if (parts.empty()) throw ShapeError("concat_cols of no arrays");
  const std::size_t m = parts.front().rows();
  std::size_t n = 0;
  std::vector<std::shared_ptr<Node>> parents;
  std::vector<std::size_t> offsets;
  for (const auto& p : parts) {
    if (p.rows() != m) throw ShapeError("concat_cols", parts.front().shape(), p.shape());
    offsets.push_back(n);
    n += p.cols();
    parents.push_back(p.node());
  }
  std::vector<double> out(m * n);
  for (std::size_t t = 0; t < parts.size(); ++t) {
    const std::size_t w = parts[t].cols();
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t j = 0; j < w; ++j) out[i * n + offsets[t] + j] = parts[t].data()[i * w + j];
  }
  return make_node({m, n}, std::move(out), "concat_cols", std::move(parents), [m, n, offsets](Node& self) {
    for (std::size_t t = 0; t < self.parents.size(); ++t) {
      Node& p = *self.parents[t];
      if (!p.requires_grad) continue;
      const std::size_t w = p.shape.cols;
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < w; ++j) p.grad[i * w + j] += self.grad[i * n + offsets[t] + j];
    }
  });
}

Var softmax_rows(const Var& a) {
  const std::size_t m = a.rows(), n = a.cols();
  std::vector<double> out(m * n);
  for (std::size_t i = 0; i < m; ++i) {
    const double* x = a.data().data() + i * n;
    const double mx = *std::max_element(x, x + n);
    double z = 0.0;
    for (std::size_t j = 0; j < n; ++j) z += (out[i * n + j] = std::exp(x[j] - mx));
    for (std::size_t j = 0; j < n; ++j) out[i * n + j] /= z;
  }
  return make_node({m, n}, std::move(out), "softmax_rows", {a.node()}, [m, n](Node& self) {
    Node& p = *self.parents[0];
    for (std::size_t i = 0; i < m; ++i) {
      const double* y = self.data.data() + i * n;
      const double* g = self.grad.data() + i * n;
      double dot = 0.0;
      for (std::size_t j = 0; j < n; ++j) dot += g[j] * y[j];
      for (std::size_t j = 0; j < n; ++j) p.grad[i * n + j] += y[j] * (g[j] - dot);
    }
  });
}

Var log_softmax_rows(const Var& a) {
  const std::size_t m = a.rows(), n = a.cols();
  std::vector<double> out(m * n);
  for (std::size_t i = 0; i < m; ++i) {
    const double* x = a.data().data() + i * n;
    const double mx = *std::max_element(x, x + n);
    double z = 0.0;
    for (std::size_t j = 0; j < n; ++j) z += std::exp(x[j] - mx);
    const double lz = mx + std::log(z);
    for (std::size_t j = 0; j < n; ++j) out[i * n + j] = x[j] - lz;
  }
  return make_node({m, n}, std::move(out), "log_softmax_rows", {a.node()}, [m, n](Node& self) {
    Node& p = *self.parents[0];
    for (std::size_t i = 0; i < m; ++i) {
      const double* y = self.data.data() + i * n;
      const double* g = self.grad.data() + i * n;
      double gs = 0.0;
      for (std::size_t j = 0; j < n; ++j) gs += g[j];
      for (std::size_t j = 0; j < n; ++j) p.grad[i * n + j] += g[j] - std::exp(y[j]) * gs;
    }
  });
}

Var detach(const Var& a) { return Var::constant(a.shape(), a.data()); }

Var bce_loss(const Var& p, double y) {
  return bce_loss(p, Var::constant(p.shape(), std::vector<double>(p.size(), y)));
}

Var bce_loss(const Var& p, const Var& targets) {
  if (!(p.shape() == targets.shape())) throw ShapeError("bce_loss", p.shape(), targets.shape());
  if (p.size() == 0) throw ShapeError("bce_loss of empty batch");
  const std::size_t n = p.size();
  double total = 0.0;
  for (std::size_t k = 0; k < n; ++k) {
    const double q = std::clamp(p.data()[k], kEps, 1.0 - kEps);
    const double y = targets.data()[k];
    total += -y * std::log(q) - (1.0 - y) * std::log(1.0 - q);
  }
  return make_node({1, 1}, {total / static_cast<double>(n)}, "bce", {p.node(), targets.node()}, [n](Node& self) {
    Node& pp = *self.parents[0];
    const Node& pt = *self.parents[1];
    if (!pp.requires_grad) return;
    const double g = self.grad[0] / static_cast<double>(n);
    for (std::size_t k = 0; k < n; ++k) {
      const double raw = pp.data[k];
      if (raw < kEps || raw > 1.0 - kEps) continue;  // clamped region is flat
      const double y = pt.data[k];
      pp.grad[k] += g * (-y / raw + (1.0 - y) / (1.0 - raw));
    }
  });
}

Var cross_entropy_logits(const Var& logits, const std::vector<int>& labels) {
  if (labels.size() != logits.rows()) {
    throw ShapeError("cross_entropy_logits: " + std::to_string(labels.size()) + " labels for " +
                     logits.shape().str());
  }
  std::vector<double> onehot(logits.size(), 0.0);
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] < 0 || static_cast<std::size_t>(labels[i]) >= logits.cols()) {
      throw std::out_of_range("cross_entropy_logits: label out of range");
    }
    onehot[i * logits.cols() + static_cast<std::size_t>(labels[i])] = 1.0;
  }
  const Var picked = mul(log_softmax_rows(logits), Var::constant(logits.shape(), std::move(onehot)));
  return scale(sum(picked), -1.0 / static_cast<double>(labels.size()));
}

void backward(const Var& root) {
  if (root.size() != 1) throw ShapeError("backward requires a scalar root, got " + root.shape().str());
  // Iterative post-order DFS gives a topological order (parents first).
  std::vector<Node*> order;
  std::unordered_set<Node*> seen;
  std::vector<std::pair<Node*, std::size_t>> stack;
  stack.emplace_back(root.node().get(), 0);
  seen.insert(root.node().get());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->parents.size()) {
      Node* parent = node->parents[next++].get();
      if (parent->requires_grad && seen.insert(parent).second) stack.emplace_back(parent, 0);
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }
  // Interior gradients are recomputed from scratch; only leaves accumulate.
  for (Node* n : order) {
    if (!n->parents.empty()) std::fill(n->grad.begin(), n->grad.end(), 0.0);
  }
  if (!root.requires_grad()) return;
  root.node()->grad[0] += 1.0;
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node* n = *it;
    if (n->backward_fn) n->backward_fn(*n);
  }
}

GradCheckResult finite_difference_check(const std::function<Var()>& f, const std::vector<Var>& params, double h,
                                        std::size_t max_coords) {
  std::vector<Var> ps = params;
  for (auto& p : ps) p.zero_grad();
  backward(f());
  std::vector<std::vector<double>> analytic;
  std::size_t total = 0;
  for (const auto& p : ps) {
    analytic.push_back(p.grad());
    total += p.size();
  }
  const std::size_t stride = (max_coords == 0 || total <= max_coords) ? 1 : total / max_coords;

  GradCheckResult result;
  std::size_t flat = 0;
  for (std::size_t pi = 0; pi < ps.size(); ++pi) {
    auto& data = ps[pi].data();
    for (std::size_t k = 0; k < data.size(); ++k, ++flat) {
      if (flat % stride != 0) continue;
      const double saved = data[k];
      data[k] = saved + h;
      const double up = f().item();
      data[k] = saved - h;
      const double down = f().item();
      data[k] = saved;
      const double numeric = (up - down) / (2.0 * h);
      const double a = analytic[pi][k];
      const double err = std::abs(a - numeric) / std::max(1.0, std::abs(a));
      if (err > result.max_error || !std::isfinite(err)) {
        result.max_error = std::isfinite(err) ? err : std::numeric_limits<double>::infinity();
        result.worst_param = pi;
        result.worst_index = k;
      }
    }
  }
  for (auto& p : ps) p.zero_grad();
  return result;
}

}  // namespace ltngan::ad
