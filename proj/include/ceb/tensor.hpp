#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace ceb {

using Shape = std::vector<std::size_t>;

std::string shape_string(const Shape& shape);
std::size_t shape_numel(const Shape& shape);

/// Raised when operand shapes do not conform. The message names the
/// operation and every offending shape.
class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

namespace detail {

struct Node {
  Shape shape;
  std::vector<double> data;
  std::vector<double> grad;  // empty until first accumulation
  bool requires_grad = false;
  std::vector<std::shared_ptr<Node>> parents;
  // Reads this->grad and accumulates into parents that require grad.
  std::function<void(Node&)> backward;

  bool is_leaf() const { return parents.empty(); }
  void accumulate(std::size_t i, double g);
  void ensure_grad();
};

}  // namespace detail

/// Dense row-major float64 tensor with reverse-mode differentiation.
///
/// A Tensor is a handle: copies share storage and graph position. Use
/// detach() for an independent copy without graph history. Operations never
/// broadcast; rank changes go through expand_rows / expand_cols / reshape.
///
/// Gradients accumulate into leaves across backward() calls until
/// zero_grad() is called. Interior nodes are recomputed fresh on each pass.
class Tensor {
 public:
  Tensor();

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor full(Shape shape, double value, bool requires_grad = false);
  static Tensor from(Shape shape, std::vector<double> values, bool requires_grad = false);
  static Tensor scalar(double value, bool requires_grad = false);
  static Tensor identity(std::size_t n);

  const Shape& shape() const { return node_->shape; }
  std::size_t rank() const { return node_->shape.size(); }
  std::size_t dim(std::size_t axis) const;
  std::size_t numel() const { return node_->data.size(); }

  std::span<const double> data() const { return node_->data; }
  /// Mutable view of the values. Intended for leaves (parameter updates,
  /// finite-difference probes); mutating an interior node does not rerun
  /// the graph.
  std::span<double> mutable_data() { return node_->data; }

  double item() const;
  double operator[](std::size_t flat) const { return node_->data[flat]; }
  double at(std::size_t row, std::size_t col) const;

  bool requires_grad() const { return node_->requires_grad; }
  void set_requires_grad(bool flag);
  bool is_leaf() const { return node_->is_leaf(); }

  bool has_grad() const { return !node_->grad.empty(); }
  /// Gradient buffer; all zeros if nothing has been accumulated yet.
  std::vector<double> grad() const;
  void zero_grad();

  Tensor detach() const;

  /// Reverse pass from a scalar. Every reachable leaf with requires_grad
  /// receives dThis/dLeaf added to its gradient buffer.
  void backward() const;

  // Used by op implementations.
  explicit Tensor(std::shared_ptr<detail::Node> node) : node_(std::move(node)) {}
  const std::shared_ptr<detail::Node>& node() const { return node_; }

 private:
  std::shared_ptr<detail::Node> node_;
};

/// Zeroes gradient buffers of every tensor in the list.
void zero_grad(std::span<Tensor> tensors);

// Linear algebra and elementwise ops. Shapes must match exactly.
Tensor matmul(const Tensor& a, const Tensor& b);  // [m,k] x [k,n] -> [m,n]
Tensor transpose(const Tensor& a);                // [m,n] -> [n,m]
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double factor);
Tensor add_scalar(const Tensor& a, double offset);
Tensor relu(const Tensor& a);
Tensor reshape(const Tensor& a, Shape shape);

// Reductions.
Tensor log_sum_exp(const Tensor& a);  // [b,n] -> [b], row-wise
Tensor sum_rows(const Tensor& a);     // [b,n] -> [b]
Tensor reduce_sum(const Tensor& a);   // any -> scalar
Tensor reduce_mean(const Tensor& a);  // any -> scalar

// Indexing and explicit rank changes.
Tensor gather_rows(const Tensor& table, std::span<const std::size_t> rows);   // [K,d] -> [b,d]
Tensor pick(const Tensor& a, std::span<const std::size_t> cols);               // [b,n] -> [b]
Tensor expand_rows(const Tensor& v, std::size_t rows);                         // [n] -> [rows,n]
Tensor expand_cols(const Tensor& v, std::size_t cols);                         // [b] -> [b,cols]

}  // namespace ceb
