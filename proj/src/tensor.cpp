#include "ceb/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <sstream>
#include <unordered_set>

namespace ceb {

std::string shape_string(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << ',';
    os << shape[i];
  }
  os << ']';
  return os.str();
}

std::size_t shape_numel(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

namespace detail {

void Node::ensure_grad() {
  if (grad.empty()) grad.assign(data.size(), 0.0);
}

void Node::accumulate(std::size_t i, double g) {
  ensure_grad();
  grad[i] += g;
}

}  // namespace detail

namespace {

using detail::Node;
using NodePtr = std::shared_ptr<Node>;

[[noreturn]] void shape_fail(const char* op, const Shape& a) {
  throw ShapeError(std::string(op) + ": unsupported shape " + shape_string(a));
}

[[noreturn]] void shape_fail(const char* op, const Shape& a, const Shape& b) {
  throw ShapeError(std::string(op) + ": shape mismatch " + shape_string(a) + " vs " +
                   shape_string(b));
}

void require_rank(const char* op, const Tensor& t, std::size_t rank) {
  if (t.rank() != rank) shape_fail(op, t.shape());
}

// Builds an op output. The graph link is only kept when some input tracks
// gradients, so evaluation-mode results carry no history.
Tensor make_result(Shape shape, std::vector<double> data, std::vector<NodePtr> parents,
                   std::function<void(Node&)> backward) {
  auto node = std::make_shared<Node>();
  node->shape = std::move(shape);
  node->data = std::move(data);
  bool tracked = std::any_of(parents.begin(), parents.end(),
                             [](const NodePtr& p) { return p->requires_grad; });
  if (tracked) {
    node->requires_grad = true;
    node->parents = std::move(parents);
    node->backward = std::move(backward);
  }
  return Tensor(std::move(node));
}

}  // namespace

Tensor::Tensor() : node_(std::make_shared<Node>()) {
  node_->data.assign(1, 0.0);
}

Tensor Tensor::zeros(Shape shape, bool requires_grad) {
  return full(std::move(shape), 0.0, requires_grad);
}

Tensor Tensor::full(Shape shape, double value, bool requires_grad) {
  auto n = shape_numel(shape);
  return from(std::move(shape), std::vector<double>(n, value), requires_grad);
}

Tensor Tensor::from(Shape shape, std::vector<double> values, bool requires_grad) {
  if (shape_numel(shape) != values.size()) {
    throw ShapeError("Tensor::from: shape " + shape_string(shape) + " needs " +
                     std::to_string(shape_numel(shape)) + " values, got " +
                     std::to_string(values.size()));
  }
  auto node = std::make_shared<Node>();
  node->shape = std::move(shape);
  node->data = std::move(values);
  node->requires_grad = requires_grad;
  return Tensor(std::move(node));
}

Tensor Tensor::scalar(double value, bool requires_grad) {
  return from({}, {value}, requires_grad);
}

Tensor Tensor::identity(std::size_t n) {
  std::vector<double> v(n * n, 0.0);
  for (std::size_t i = 0; i < n; ++i) v[i * n + i] = 1.0;
  return from({n, n}, std::move(v));
}

std::size_t Tensor::dim(std::size_t axis) const {
  if (axis >= rank()) {
    throw ShapeError("dim: axis " + std::to_string(axis) + " out of range for " +
                     shape_string(shape()));
  }
  return node_->shape[axis];
}

double Tensor::item() const {
  if (numel() != 1) throw ShapeError("item: tensor " + shape_string(shape()) + " is not scalar");
  return node_->data[0];
}

double Tensor::at(std::size_t row, std::size_t col) const {
  if (rank() != 2) shape_fail("at", shape());
  return node_->data[row * node_->shape[1] + col];
}

void Tensor::set_requires_grad(bool flag) {
  if (!is_leaf()) throw std::logic_error("set_requires_grad: only leaves can change tracking");
  node_->requires_grad = flag;
}

std::vector<double> Tensor::grad() const {
  if (node_->grad.empty()) return std::vector<double>(numel(), 0.0);
  return node_->grad;
}

void Tensor::zero_grad() {
  if (!node_->grad.empty()) std::fill(node_->grad.begin(), node_->grad.end(), 0.0);
}

Tensor Tensor::detach() const {
  return from(shape(), node_->data, false);
}

void Tensor::backward() const {
  if (numel() != 1) {
    throw ShapeError("backward: loss must be scalar, got " + shape_string(shape()));
  }
  if (!node_->requires_grad) return;

  // Iterative post-order DFS gives a topological order (parents first).
  std::vector<Node*> order;
  std::unordered_set<Node*> visited;
  std::vector<std::pair<Node*, std::size_t>> stack{{node_.get(), 0}};
  visited.insert(node_.get());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->parents.size()) {
      Node* parent = node->parents[next++].get();
      if (parent->requires_grad && visited.insert(parent).second) stack.emplace_back(parent, 0);
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }

  for (Node* n : order) {
    if (!n->is_leaf()) n->grad.assign(n->data.size(), 0.0);
  }
  node_->ensure_grad();
  node_->grad[0] += 1.0;
  if (node_->is_leaf()) return;
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    if (!(*it)->is_leaf() && (*it)->backward) (*it)->backward(**it);
  }
}

void zero_grad(std::span<Tensor> tensors) {
  for (auto& t : tensors) t.zero_grad();
}

Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.rank() != 2 || b.rank() != 2 || a.dim(1) != b.dim(0)) {
    shape_fail("matmul", a.shape(), b.shape());
  }
  const std::size_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
  std::vector<double> out(m * n, 0.0);
  auto A = a.data();
  auto B = b.data();
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t p = 0; p < k; ++p) {
      const double av = A[i * k + p];
      if (av == 0.0) continue;
      for (std::size_t j = 0; j < n; ++j) out[i * n + j] += av * B[p * n + j];
    }
  }
  return make_result({m, n}, std::move(out), {a.node(), b.node()}, [m, k, n](Node& self) {
    Node& pa = *self.parents[0];
    Node& pb = *self.parents[1];
    const auto& G = self.grad;
    if (pa.requires_grad) {
      pa.ensure_grad();
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t p = 0; p < k; ++p) {
          double s = 0.0;
          for (std::size_t j = 0; j < n; ++j) s += G[i * n + j] * pb.data[p * n + j];
          pa.grad[i * k + p] += s;
        }
    }
    if (pb.requires_grad) {
      pb.ensure_grad();
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t p = 0; p < k; ++p) {
          const double av = pa.data[i * k + p];
          if (av == 0.0) continue;
          for (std::size_t j = 0; j < n; ++j) pb.grad[p * n + j] += av * G[i * n + j];
        }
    }
  });
}

Tensor transpose(const Tensor& a) {
  require_rank("transpose", a, 2);
  const std::size_t m = a.dim(0), n = a.dim(1);
  std::vector<double> out(m * n);
  auto A = a.data();
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) out[j * m + i] = A[i * n + j];
  return make_result({n, m}, std::move(out), {a.node()}, [m, n](Node& self) {
    Node& p = *self.parents[0];
    p.ensure_grad();
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t j = 0; j < n; ++j) p.grad[i * n + j] += self.grad[j * m + i];
  });
}

namespace {

template <typename Fwd>
Tensor binary_elementwise(const char* op, const Tensor& a, const Tensor& b, Fwd fwd,
                          double da_sign, double db_sign, bool product) {
  if (a.shape() != b.shape()) shape_fail(op, a.shape(), b.shape());
  std::vector<double> out(a.numel());
  auto A = a.data();
  auto B = b.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = fwd(A[i], B[i]);
  return make_result(a.shape(), std::move(out), {a.node(), b.node()},
                     [da_sign, db_sign, product](Node& self) {
                       Node& pa = *self.parents[0];
                       Node& pb = *self.parents[1];
                       const std::size_t n = self.grad.size();
                       if (pa.requires_grad) {
                         pa.ensure_grad();
                         for (std::size_t i = 0; i < n; ++i)
                           pa.grad[i] += self.grad[i] * (product ? pb.data[i] : da_sign);
                       }
                       if (pb.requires_grad) {
                         pb.ensure_grad();
                         for (std::size_t i = 0; i < n; ++i)
                           pb.grad[i] += self.grad[i] * (product ? pa.data[i] : db_sign);
                       }
                     });
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) {
  return binary_elementwise("add", a, b, [](double x, double y) { return x + y; }, 1.0, 1.0,
                            false);
}

Tensor sub(const Tensor& a, const Tensor& b) {
  return binary_elementwise("sub", a, b, [](double x, double y) { return x - y; }, 1.0, -1.0,
                            false);
}

Tensor mul(const Tensor& a, const Tensor& b) {
  return binary_elementwise("mul", a, b, [](double x, double y) { return x * y; }, 0.0, 0.0,
                            true);
}

Tensor scale(const Tensor& a, double factor) {
  std::vector<double> out(a.data().begin(), a.data().end());
  for (auto& v : out) v *= factor;
  return make_result(a.shape(), std::move(out), {a.node()}, [factor](Node& self) {
    Node& p = *self.parents[0];
    p.ensure_grad();
    for (std::size_t i = 0; i < self.grad.size(); ++i) p.grad[i] += factor * self.grad[i];
  });
}

Tensor add_scalar(const Tensor& a, double offset) {
  std::vector<double> out(a.data().begin(), a.data().end());
  for (auto& v : out) v += offset;
  return make_result(a.shape(), std::move(out), {a.node()}, [](Node& self) {
    Node& p = *self.parents[0];
    p.ensure_grad();
    for (std::size_t i = 0; i < self.grad.size(); ++i) p.grad[i] += self.grad[i];
  });
}

Tensor relu(const Tensor& a) {
  std::vector<double> out(a.data().begin(), a.data().end());
  for (auto& v : out) v = v > 0.0 ? v : 0.0;
  return make_result(a.shape(), std::move(out), {a.node()}, [](Node& self) {
    Node& p = *self.parents[0];
    p.ensure_grad();
    for (std::size_t i = 0; i < self.grad.size(); ++i)
      if (p.data[i] > 0.0) p.grad[i] += self.grad[i];
  });
}

Tensor reshape(const Tensor& a, Shape shape) {
  if (shape_numel(shape) != a.numel()) shape_fail("reshape", a.shape(), shape);
  std::vector<double> out(a.data().begin(), a.data().end());
  return make_result(std::move(shape), std::move(out), {a.node()}, [](Node& self) {
    Node& p = *self.parents[0];
    p.ensure_grad();
    for (std::size_t i = 0; i < self.grad.size(); ++i) p.grad[i] += self.grad[i];
  });
}

Tensor log_sum_exp(const Tensor& a) {
  require_rank("log_sum_exp", a, 2);
  const std::size_t b = a.dim(0), n = a.dim(1);
  if (n == 0) shape_fail("log_sum_exp", a.shape());
  auto A = a.data();
  std::vector<double> out(b);
  for (std::size_t i = 0; i < b; ++i) {
    const double* row = A.data() + i * n;
    const double mx = *std::max_element(row, row + n);
    if (!std::isfinite(mx)) {
      out[i] = mx;  // all -inf rows stay -inf; +inf/nan propagate
      continue;
    }
    double s = 0.0;
    for (std::size_t j = 0; j < n; ++j) s += std::exp(row[j] - mx);
    out[i] = mx + std::log(s);
  }
  return make_result({b}, std::move(out), {a.node()}, [b, n](Node& self) {
    Node& p = *self.parents[0];
    p.ensure_grad();
    for (std::size_t i = 0; i < b; ++i) {
      const double lse = self.data[i];
      if (!std::isfinite(lse)) continue;
      for (std::size_t j = 0; j < n; ++j)
        p.grad[i * n + j] += self.grad[i] * std::exp(p.data[i * n + j] - lse);
    }
  });
}

Tensor sum_rows(const Tensor& a) {
  require_rank("sum_rows", a, 2);
  const std::size_t b = a.dim(0), n = a.dim(1);
  auto A = a.data();
  std::vector<double> out(b, 0.0);
  for (std::size_t i = 0; i < b; ++i)
    for (std::size_t j = 0; j < n; ++j) out[i] += A[i * n + j];
  return make_result({b}, std::move(out), {a.node()}, [b, n](Node& self) {
    Node& p = *self.parents[0];
    p.ensure_grad();
    for (std::size_t i = 0; i < b; ++i)
      for (std::size_t j = 0; j < n; ++j) p.grad[i * n + j] += self.grad[i];
  });
}

Tensor reduce_sum(const Tensor& a) {
  double s = 0.0;
  for (double v : a.data()) s += v;
  return make_result({}, {s}, {a.node()}, [](Node& self) {
    Node& p = *self.parents[0];
    p.ensure_grad();
    for (auto& g : p.grad) g += self.grad[0];
  });
}

Tensor reduce_mean(const Tensor& a) {
  if (a.numel() == 0) shape_fail("reduce_mean", a.shape());
  const double n = static_cast<double>(a.numel());
  double s = 0.0;
  for (double v : a.data()) s += v;
  return make_result({}, {s / n}, {a.node()}, [n](Node& self) {
    Node& p = *self.parents[0];
    p.ensure_grad();
    for (auto& g : p.grad) g += self.grad[0] / n;
  });
}

Tensor gather_rows(const Tensor& table, std::span<const std::size_t> rows) {
  require_rank("gather_rows", table, 2);
  const std::size_t k = table.dim(0), d = table.dim(1);
  std::vector<double> out(rows.size() * d);
  auto T = table.data();
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (rows[i] >= k) {
      throw std::out_of_range("gather_rows: row " + std::to_string(rows[i]) +
                              " out of range for table " + shape_string(table.shape()));
    }
    std::copy_n(T.begin() + static_cast<std::ptrdiff_t>(rows[i] * d), d,
                out.begin() + static_cast<std::ptrdiff_t>(i * d));
  }
  std::vector<std::size_t> idx(rows.begin(), rows.end());
  return make_result({rows.size(), d}, std::move(out), {table.node()},
                     [idx = std::move(idx), d](Node& self) {
                       Node& p = *self.parents[0];
                       p.ensure_grad();
                       for (std::size_t i = 0; i < idx.size(); ++i)
                         for (std::size_t j = 0; j < d; ++j)
                           p.grad[idx[i] * d + j] += self.grad[i * d + j];
                     });
}

Tensor pick(const Tensor& a, std::span<const std::size_t> cols) {
  require_rank("pick", a, 2);
  const std::size_t b = a.dim(0), n = a.dim(1);
  if (cols.size() != b) shape_fail("pick", a.shape(), Shape{cols.size()});
  std::vector<double> out(b);
  for (std::size_t i = 0; i < b; ++i) {
    if (cols[i] >= n) {
      throw std::out_of_range("pick: column " + std::to_string(cols[i]) +
                              " out of range for " + shape_string(a.shape()));
    }
    out[i] = a.data()[i * n + cols[i]];
  }
  std::vector<std::size_t> idx(cols.begin(), cols.end());
  return make_result({b}, std::move(out), {a.node()}, [idx = std::move(idx), n](Node& self) {
    Node& p = *self.parents[0];
    p.ensure_grad();
    for (std::size_t i = 0; i < idx.size(); ++i) p.grad[i * n + idx[i]] += self.grad[i];
  });
}

Tensor expand_rows(const Tensor& v, std::size_t rows) {
  require_rank("expand_rows", v, 1);
  const std::size_t n = v.dim(0);
  std::vector<double> out(rows * n);
  for (std::size_t i = 0; i < rows; ++i)
    std::copy(v.data().begin(), v.data().end(), out.begin() + static_cast<std::ptrdiff_t>(i * n));
  return make_result({rows, n}, std::move(out), {v.node()}, [rows, n](Node& self) {
    Node& p = *self.parents[0];
    p.ensure_grad();
    for (std::size_t i = 0; i < rows; ++i)
      for (std::size_t j = 0; j < n; ++j) p.grad[j] += self.grad[i * n + j];
  });
}

Tensor expand_cols(const Tensor& v, std::size_t cols) {
  require_rank("expand_cols", v, 1);
  const std::size_t b = v.dim(0);
  std::vector<double> out(b * cols);
  for (std::size_t i = 0; i < b; ++i)
    std::fill_n(out.begin() + static_cast<std::ptrdiff_t>(i * cols), cols, v.data()[i]);
  return make_result({b, cols}, std::move(out), {v.node()}, [b, cols](Node& self) {
    Node& p = *self.parents[0];
    p.ensure_grad();
    for (std::size_t i = 0; i < b; ++i)
      for (std::size_t j = 0; j < cols; ++j) p.grad[i] += self.grad[i * cols + j];
  });
}

}  // namespace ceb
