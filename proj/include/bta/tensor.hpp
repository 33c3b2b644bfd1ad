#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace bta {

using Shape = std::vector<std::size_t>;

std::string shape_str(const Shape& shape);
std::size_t shape_numel(const Shape& shape);

/// Raised when operand shapes are incompatible with an operation.
class DimensionError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Raised when backward() is called on something that is not a scalar.
class RankError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Raised when a reduction runs over an axis of length zero.
class EmptyReductionError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Non-finite values: gradients, losses, or activations that overflowed.
class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class Precision { f32, f64 };

std::string precision_name(Precision p);
Precision parse_precision(const std::string& name);

namespace detail {

template <typename T>
struct Node {
  Shape shape;
  std::vector<T> data;
  std::vector<T> grad;
  bool requires_grad = false;
  std::uint64_t id = 0;
  std::vector<std::shared_ptr<Node>> parents;
  std::function<void(Node&)> backward_fn;

  void ensure_grad() {
    if (grad.size() != data.size()) grad.assign(data.size(), T(0));
  }
};

std::uint64_t next_node_id();

}  // namespace detail

/// Dense row-major tensor. Copies share the underlying node, so a Tensor is a
/// cheap handle; use detach() for an independent value copy.
template <typename T>
class Tensor {
 public:
  using value_type = T;
  using NodePtr = std::shared_ptr<detail::Node<T>>;

  Tensor() = default;
  Tensor(Shape shape, std::vector<T> data, bool requires_grad = false);

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor full(Shape shape, T value, bool requires_grad = false);
  static Tensor scalar(T value, bool requires_grad = false);
  static Tensor eye(std::size_t n);
  static Tensor from_node(NodePtr node);

  bool defined() const { return node_ != nullptr; }
  const Shape& shape() const { return node_->shape; }
  std::size_t rank() const { return node_->shape.size(); }
  std::size_t dim(std::size_t axis) const;
  std::size_t numel() const { return node_->data.size(); }
  bool requires_grad() const { return node_->requires_grad; }

  std::span<const T> data() const { return node_->data; }
  /// Direct write access; used by optimizers and finite-difference probes.
  std::span<T> mutable_data() { return node_->data; }
  bool has_grad() const { return node_->grad.size() == node_->data.size(); }
  std::span<const T> grad() const { return node_->grad; }
  std::span<T> mutable_grad() { return node_->grad; }

  T item() const;
  T at(std::size_t i) const { return node_->data[i]; }
  T at(std::size_t row, std::size_t col) const;

  void zero_grad();
  Tensor detach() const;
  Tensor grad_tensor() const;

  const NodePtr& node() const { return node_; }

 private:
  NodePtr node_;
};

template <typename T>
void zero_grads(std::span<Tensor<T>> tensors) {
  for (auto& t : tensors) t.zero_grad();
}

// ---- differentiable operations ---------------------------------------------

template <typename T> Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b);
template <typename T> Tensor<T> transpose(const Tensor<T>& x);
template <typename T> Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b);
template <typename T> Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b);
template <typename T> Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b);
template <typename T> Tensor<T> scale(const Tensor<T>& x, T factor);
template <typename T> Tensor<T> add_scalar(const Tensor<T>& x, T value);
/// Multiply every element by a scalar-shaped tensor (the single permitted broadcast).
template <typename T> Tensor<T> scale_by(const Tensor<T>& x, const Tensor<T>& factor);
/// x[n×d] + bias[d] applied to each row; rank-1 x is treated as a single row.
template <typename T> Tensor<T> add_bias_rows(const Tensor<T>& x, const Tensor<T>& bias);
template <typename T> Tensor<T> relu(const Tensor<T>& x);
template <typename T> Tensor<T> sigmoid(const Tensor<T>& x);
template <typename T> Tensor<T> tanh(const Tensor<T>& x);
/// log(max(x, floor)); the gradient is zero where the floor is active.
template <typename T> Tensor<T> log_floor(const Tensor<T>& x, T floor);
/// exp(scale * x) normalized along `axis`, with per-slice max subtraction.
template <typename T>
Tensor<T> softmax_along_axis(const Tensor<T>& x, std::size_t axis, T scale = T(1));
template <typename T> Tensor<T> mean_along_axis(const Tensor<T>& x, std::size_t axis);
template <typename T> Tensor<T> sum(const Tensor<T>& x);
template <typename T> Tensor<T> add_n(const std::vector<Tensor<T>>& parts);
template <typename T> Tensor<T> concat_last_axis(const std::vector<Tensor<T>>& parts);
template <typename T> Tensor<T> concat_rows(const std::vector<Tensor<T>>& parts);
template <typename T>
Tensor<T> slice_rows(const Tensor<T>& x, std::size_t begin, std::size_t end);
template <typename T>
Tensor<T> slice_cols(const Tensor<T>& x, std::size_t begin, std::size_t end);
template <typename T> Tensor<T> reshape(const Tensor<T>& x, Shape shape);
/// Element `index` of the flattened tensor as a scalar.
template <typename T> Tensor<T> pick(const Tensor<T>& x, std::size_t index);
/// Divide each row by its Euclidean norm.
template <typename T> Tensor<T> row_l2_normalize(const Tensor<T>& x);
/// D^{-1/2} A D^{-1/2} with D = diag(row sums of A).
template <typename T> Tensor<T> degree_normalize(const Tensor<T>& a);

/// Reverse-mode sweep from a scalar. Leaf gradients accumulate across calls;
/// reset them with zero_grads().
template <typename T> void backward(const Tensor<T>& loss);

/// Central differences of a scalar function with respect to every element of x.
template <typename T>
Tensor<T> finite_difference_gradient(const std::function<T(const Tensor<T>&)>& f,
                                     const Tensor<T>& x, T h);

/// Central differences with respect to a tensor that f reads implicitly
/// (e.g. a model parameter). The tensor is perturbed in place and restored.
template <typename T>
std::vector<T> finite_difference_inplace(const std::function<T()>& f, Tensor<T>& param,
                                         T h);

/// While alive, records the smallest |input| seen by relu on this thread so
/// gradient checks can reject points that sit on a kink.
class KinkProbe {
 public:
  KinkProbe();
  ~KinkProbe();
  KinkProbe(const KinkProbe&) = delete;
  KinkProbe& operator=(const KinkProbe&) = delete;

  double min_margin() const { return min_margin_; }
  void reset();
  static void observe(double value);

 private:
  double min_margin_;
  KinkProbe* previous_;
};

}  // namespace bta
