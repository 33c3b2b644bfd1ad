#include "bta/tensor.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <limits>
#include <numeric>
#include <sstream>
#include <unordered_set>

namespace bta {

std::string shape_str(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << 'x';
    os << shape[i];
  }
  os << ']';
  return os.str();
}

std::size_t shape_numel(const Shape& shape) {
  std::size_t n = 1;
  for (auto d : shape) n *= d;
  return n;
}

std::string precision_name(Precision p) { return p == Precision::f32 ? "f32" : "f64"; }

Precision parse_precision(const std::string& name) {
  if (name == "f32") return Precision::f32;
  if (name == "f64") return Precision::f64;
  throw std::invalid_argument("unknown precision '" + name + "' (expected f32 or f64)");
}

namespace detail {
std::uint64_t next_node_id() {
  static std::atomic<std::uint64_t> counter{0};
  return ++counter;
}
}  // namespace detail

// ---- Tensor -----------------------------------------------------------------

template <typename T>
Tensor<T>::Tensor(Shape shape, std::vector<T> data, bool requires_grad) {
  if (shape_numel(shape) != data.size()) {
    throw DimensionError("tensor data length " + std::to_string(data.size()) +
                         " does not match shape " + shape_str(shape));
  }
  node_ = std::make_shared<detail::Node<T>>();
  node_->shape = std::move(shape);
  node_->data = std::move(data);
  node_->requires_grad = requires_grad;
  node_->id = detail::next_node_id();
}

template <typename T>
Tensor<T> Tensor<T>::zeros(Shape shape, bool requires_grad) {
  auto n = shape_numel(shape);
  return Tensor(std::move(shape), std::vector<T>(n, T(0)), requires_grad);
}

template <typename T>
Tensor<T> Tensor<T>::full(Shape shape, T value, bool requires_grad) {
  auto n = shape_numel(shape);
  return Tensor(std::move(shape), std::vector<T>(n, value), requires_grad);
}

template <typename T>
Tensor<T> Tensor<T>::scalar(T value, bool requires_grad) {
  return Tensor(Shape{}, std::vector<T>{value}, requires_grad);
}

template <typename T>
Tensor<T> Tensor<T>::eye(std::size_t n) {
  std::vector<T> d(n * n, T(0));
  for (std::size_t i = 0; i < n; ++i) d[i * n + i] = T(1);
  return Tensor({n, n}, std::move(d));
}

template <typename T>
Tensor<T> Tensor<T>::from_node(NodePtr node) {
  Tensor t;
  t.node_ = std::move(node);
  return t;
}

template <typename T>
std::size_t Tensor<T>::dim(std::size_t axis) const {
  if (axis >= rank()) {
    throw DimensionError("axis " + std::to_string(axis) + " out of range for shape " +
                         shape_str(shape()));
  }
  return node_->shape[axis];
}

template <typename T>
T Tensor<T>::item() const {
  if (numel() != 1) throw RankError("item() on tensor of shape " + shape_str(shape()));
  return node_->data[0];
}

template <typename T>
T Tensor<T>::at(std::size_t row, std::size_t col) const {
  return node_->data[row * node_->shape.back() + col];
}

template <typename T>
void Tensor<T>::zero_grad() {
  if (node_) node_->grad.assign(node_->data.size(), T(0));
}

template <typename T>
Tensor<T> Tensor<T>::detach() const {
  return Tensor(node_->shape, node_->data, false);
}

template <typename T>
Tensor<T> Tensor<T>::grad_tensor() const {
  if (!has_grad()) return zeros(node_->shape);
  return Tensor(node_->shape, node_->grad, false);
}

// ---- op plumbing ------------------------------------------------------------

namespace {

template <typename T>
using NodeRef = detail::Node<T>&;

template <typename T>
Tensor<T> make_op(Shape shape, std::vector<T> data, const std::vector<Tensor<T>>& inputs,
                  std::function<void(detail::Node<T>&)> backward_fn) {
  Tensor<T> out(std::move(shape), std::move(data), false);
  bool any = std::any_of(inputs.begin(), inputs.end(),
                         [](const Tensor<T>& t) { return t.requires_grad(); });
  if (any) {
    auto& node = *out.node();
    node.requires_grad = true;
    for (const auto& in : inputs) node.parents.push_back(in.node());
    node.backward_fn = std::move(backward_fn);
  }
  return out;
}

template <typename T>
bool wants_grad(detail::Node<T>& n) {
  if (!n.requires_grad) return false;
  n.ensure_grad();
  return true;
}

template <typename T>
void require_rank2(const Tensor<T>& t, const char* op) {
  if (t.rank() != 2) {
    throw DimensionError(std::string(op) + " expects a matrix, got shape " +
                         shape_str(t.shape()));
  }
}

template <typename T>
void require_same_shape(const Tensor<T>& a, const Tensor<T>& b, const char* op) {
  if (a.shape() != b.shape()) {
    throw DimensionError(std::string(op) + ": shape mismatch " + shape_str(a.shape()) +
                         " vs " + shape_str(b.shape()));
  }
}

struct AxisSplit {
  std::size_t outer, n, inner;
};

AxisSplit split_axis(const Shape& shape, std::size_t axis, const char* op) {
  if (axis >= shape.size()) {
    throw DimensionError(std::string(op) + ": axis " + std::to_string(axis) +
                         " invalid for shape " + shape_str(shape));
  }
  AxisSplit s{1, shape[axis], 1};
  for (std::size_t i = 0; i < axis; ++i) s.outer *= shape[i];
  for (std::size_t i = axis + 1; i < shape.size(); ++i) s.inner *= shape[i];
  return s;
}

// C[m×n] += A[m×k] · B[k×n]
template <typename T>
void gemm_acc(const T* a, const T* b, T* c, std::size_t m, std::size_t k, std::size_t n) {
  for (std::size_t i = 0; i < m; ++i) {
    T* crow = c + i * n;
    for (std::size_t p = 0; p < k; ++p) {
      const T av = a[i * k + p];
      if (av == T(0)) continue;
      const T* brow = b + p * n;
      for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
}

// C[m×n] += A[m×k] · B[n×k]ᵀ
template <typename T>
void gemm_bt_acc(const T* a, const T* b, T* c, std::size_t m, std::size_t k, std::size_t n) {
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      T acc = T(0);
      for (std::size_t p = 0; p < k; ++p) acc += a[i * k + p] * b[j * k + p];
      c[i * n + j] += acc;
    }
  }
}

// C[k×n] += A[m×k]ᵀ · B[m×n]
template <typename T>
void gemm_at_acc(const T* a, const T* b, T* c, std::size_t m, std::size_t k, std::size_t n) {
  for (std::size_t i = 0; i < m; ++i) {
    const T* brow = b + i * n;
    for (std::size_t p = 0; p < k; ++p) {
      const T av = a[i * k + p];
      if (av == T(0)) continue;
      T* crow = c + p * n;
      for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
}

thread_local KinkProbe* active_probe = nullptr;

}  // namespace

// ---- KinkProbe --------------------------------------------------------------

KinkProbe::KinkProbe()
    : min_margin_(std::numeric_limits<double>::infinity()), previous_(active_probe) {
  active_probe = this;
}

KinkProbe::~KinkProbe() { active_probe = previous_; }

void KinkProbe::reset() { min_margin_ = std::numeric_limits<double>::infinity(); }

void KinkProbe::observe(double value) {
  if (active_probe) active_probe->min_margin_ = std::min(active_probe->min_margin_, std::abs(value));
}

// ---- operations -------------------------------------------------------------

template <typename T>
Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b) {
  if (a.rank() != 2 || b.rank() != 2 || a.dim(1) != b.dim(0)) {
    throw DimensionError("matmul: incompatible shapes " + shape_str(a.shape()) + " and " +
                         shape_str(b.shape()));
  }
  const std::size_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
  std::vector<T> out(m * n, T(0));
  gemm_acc(a.data().data(), b.data().data(), out.data(), m, k, n);
  return make_op<T>({m, n}, std::move(out), {a, b}, [m, k, n](detail::Node<T>& self) {
    auto& A = *self.parents[0];
    auto& B = *self.parents[1];
    if (wants_grad(A)) gemm_bt_acc(self.grad.data(), B.data.data(), A.grad.data(), m, n, k);
    if (wants_grad(B)) gemm_at_acc(A.data.data(), self.grad.data(), B.grad.data(), m, k, n);
  });
}

template <typename T>
Tensor<T> transpose(const Tensor<T>& x) {
  require_rank2(x, "transpose");
  const std::size_t r = x.dim(0), c = x.dim(1);
  std::vector<T> out(r * c);
  auto d = x.data();
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < c; ++j) out[j * r + i] = d[i * c + j];
  return make_op<T>({c, r}, std::move(out), {x}, [r, c](detail::Node<T>& self) {
    auto& X = *self.parents[0];
    if (!wants_grad(X)) return;
    for (std::size_t i = 0; i < r; ++i)
      for (std::size_t j = 0; j < c; ++j) X.grad[i * c + j] += self.grad[j * r + i];
  });
}

template <typename T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b) {
  require_same_shape(a, b, "add");
  std::vector<T> out(a.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.at(i) + b.at(i);
  return make_op<T>(a.shape(), std::move(out), {a, b}, [](detail::Node<T>& self) {
    for (auto& p : self.parents) {
      if (!wants_grad(*p)) continue;
      for (std::size_t i = 0; i < self.grad.size(); ++i) p->grad[i] += self.grad[i];
    }
  });
}

template <typename T>
Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b) {
  require_same_shape(a, b, "sub");
  std::vector<T> out(a.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.at(i) - b.at(i);
  return make_op<T>(a.shape(), std::move(out), {a, b}, [](detail::Node<T>& self) {
    auto& A = *self.parents[0];
    auto& B = *self.parents[1];
    if (wants_grad(A))
      for (std::size_t i = 0; i < self.grad.size(); ++i) A.grad[i] += self.grad[i];
    if (wants_grad(B))
      for (std::size_t i = 0; i < self.grad.size(); ++i) B.grad[i] -= self.grad[i];
  });
}

template <typename T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b) {
  require_same_shape(a, b, "mul");
  std::vector<T> out(a.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.at(i) * b.at(i);
  return make_op<T>(a.shape(), std::move(out), {a, b}, [](detail::Node<T>& self) {
    auto& A = *self.parents[0];
    auto& B = *self.parents[1];
    if (wants_grad(A))
      for (std::size_t i = 0; i < self.grad.size(); ++i) A.grad[i] += self.grad[i] * B.data[i];
    if (wants_grad(B))
      for (std::size_t i = 0; i < self.grad.size(); ++i) B.grad[i] += self.grad[i] * A.data[i];
  });
}

template <typename T>
Tensor<T> scale(const Tensor<T>& x, T factor) {
  std::vector<T> out(x.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = x.at(i) * factor;
  return make_op<T>(x.shape(), std::move(out), {x}, [factor](detail::Node<T>& self) {
    auto& X = *self.parents[0];
    if (!wants_grad(X)) return;
    for (std::size_t i = 0; i < self.grad.size(); ++i) X.grad[i] += self.grad[i] * factor;
  });
}

template <typename T>
Tensor<T> add_scalar(const Tensor<T>& x, T value) {
  std::vector<T> out(x.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = x.at(i) + value;
  return make_op<T>(x.shape(), std::move(out), {x}, [](detail::Node<T>& self) {
    auto& X = *self.parents[0];
    if (!wants_grad(X)) return;
    for (std::size_t i = 0; i < self.grad.size(); ++i) X.grad[i] += self.grad[i];
  });
}

template <typename T>
Tensor<T> scale_by(const Tensor<T>& x, const Tensor<T>& factor) {
  if (factor.numel() != 1) {
    throw DimensionError("scale_by: factor must be scalar, got " + shape_str(factor.shape()));
  }
  const T f = factor.item();
  std::vector<T> out(x.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = x.at(i) * f;
  return make_op<T>(x.shape(), std::move(out), {x, factor}, [](detail::Node<T>& self) {
    auto& X = *self.parents[0];
    auto& F = *self.parents[1];
    const T f = F.data[0];
    if (wants_grad(X))
      for (std::size_t i = 0; i < self.grad.size(); ++i) X.grad[i] += self.grad[i] * f;
    if (wants_grad(F)) {
      T acc = T(0);
      for (std::size_t i = 0; i < self.grad.size(); ++i) acc += self.grad[i] * X.data[i];
      F.grad[0] += acc;
    }
  });
}

template <typename T>
Tensor<T> add_bias_rows(const Tensor<T>& x, const Tensor<T>& bias) {
  if (bias.rank() != 1 || x.rank() < 1 || x.shape().back() != bias.dim(0)) {
    throw DimensionError("add_bias_rows: bias " + shape_str(bias.shape()) +
                         " incompatible with " + shape_str(x.shape()));
  }
  const std::size_t d = bias.dim(0);
  const std::size_t rows = x.numel() / std::max<std::size_t>(d, 1);
  std::vector<T> out(x.numel());
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t j = 0; j < d; ++j) out[r * d + j] = x.at(r * d + j) + bias.at(j);
  return make_op<T>(x.shape(), std::move(out), {x, bias}, [rows, d](detail::Node<T>& self) {
    auto& X = *self.parents[0];
    auto& B = *self.parents[1];
    if (wants_grad(X))
      for (std::size_t i = 0; i < self.grad.size(); ++i) X.grad[i] += self.grad[i];
    if (wants_grad(B))
      for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t j = 0; j < d; ++j) B.grad[j] += self.grad[r * d + j];
  });
}

template <typename T>
Tensor<T> relu(const Tensor<T>& x) {
  std::vector<T> out(x.numel());
  auto d = x.data();
  for (std::size_t i = 0; i < out.size(); ++i) {
    KinkProbe::observe(static_cast<double>(d[i]));
    out[i] = d[i] > T(0) ? d[i] : T(0);
  }
  return make_op<T>(x.shape(), std::move(out), {x}, [](detail::Node<T>& self) {
    auto& X = *self.parents[0];
    if (!wants_grad(X)) return;
    for (std::size_t i = 0; i < self.grad.size(); ++i)
      if (X.data[i] > T(0)) X.grad[i] += self.grad[i];
  });
}

template <typename T>
Tensor<T> sigmoid(const Tensor<T>& x) {
  std::vector<T> out(x.numel());
  auto d = x.data();
  for (std::size_t i = 0; i < out.size(); ++i) {
    const T v = d[i];
    out[i] = v >= T(0) ? T(1) / (T(1) + std::exp(-v)) : std::exp(v) / (T(1) + std::exp(v));
  }
  return make_op<T>(x.shape(), std::move(out), {x}, [](detail::Node<T>& self) {
    auto& X = *self.parents[0];
    if (!wants_grad(X)) return;
    for (std::size_t i = 0; i < self.grad.size(); ++i) {
      const T s = self.data[i];
      X.grad[i] += self.grad[i] * s * (T(1) - s);
    }
  });
}

template <typename T>
Tensor<T> tanh(const Tensor<T>& x) {
  std::vector<T> out(x.numel());
  auto d = x.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::tanh(d[i]);
  return make_op<T>(x.shape(), std::move(out), {x}, [](detail::Node<T>& self) {
    auto& X = *self.parents[0];
    if (!wants_grad(X)) return;
    for (std::size_t i = 0; i < self.grad.size(); ++i) {
      const T t = self.data[i];
      X.grad[i] += self.grad[i] * (T(1) - t * t);
    }
  });
}

template <typename T>
Tensor<T> log_floor(const Tensor<T>& x, T floor) {
  std::vector<T> out(x.numel());
  auto d = x.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::log(std::max(d[i], floor));
  return make_op<T>(x.shape(), std::move(out), {x}, [floor](detail::Node<T>& self) {
    auto& X = *self.parents[0];
    if (!wants_grad(X)) return;
    for (std::size_t i = 0; i < self.grad.size(); ++i)
      if (X.data[i] > floor) X.grad[i] += self.grad[i] / X.data[i];
  });
}

template <typename T>
Tensor<T> softmax_along_axis(const Tensor<T>& x, std::size_t axis, T scale_factor) {
  const auto s = split_axis(x.shape(), axis, "softmax_along_axis");
  if (s.n == 0) throw EmptyReductionError("softmax over empty axis");
  auto d = x.data();
  std::vector<T> out(x.numel());
  for (std::size_t o = 0; o < s.outer; ++o) {
    for (std::size_t in = 0; in < s.inner; ++in) {
      const std::size_t base = o * s.n * s.inner + in;
      T mx = -std::numeric_limits<T>::infinity();
      for (std::size_t k = 0; k < s.n; ++k) mx = std::max(mx, scale_factor * d[base + k * s.inner]);
      T total = T(0);
      for (std::size_t k = 0; k < s.n; ++k) {
        const T e = std::exp(scale_factor * d[base + k * s.inner] - mx);
        out[base + k * s.inner] = e;
        total += e;
      }
      for (std::size_t k = 0; k < s.n; ++k) out[base + k * s.inner] /= total;
    }
  }
  return make_op<T>(x.shape(), std::move(out), {x}, [s, scale_factor](detail::Node<T>& self) {
    auto& X = *self.parents[0];
    if (!wants_grad(X)) return;
    for (std::size_t o = 0; o < s.outer; ++o) {
      for (std::size_t in = 0; in < s.inner; ++in) {
        const std::size_t base = o * s.n * s.inner + in;
        T dot = T(0);
        for (std::size_t k = 0; k < s.n; ++k) {
          const std::size_t idx = base + k * s.inner;
          dot += self.grad[idx] * self.data[idx];
        }
        for (std::size_t k = 0; k < s.n; ++k) {
          const std::size_t idx = base + k * s.inner;
          X.grad[idx] += scale_factor * self.data[idx] * (self.grad[idx] - dot);
        }
      }
    }
  });
}

template <typename T>
Tensor<T> mean_along_axis(const Tensor<T>& x, std::size_t axis) {
  const auto s = split_axis(x.shape(), axis, "mean_along_axis");
  if (s.n == 0) throw EmptyReductionError("mean over empty axis " + std::to_string(axis));
  Shape out_shape = x.shape();
  out_shape.erase(out_shape.begin() + static_cast<std::ptrdiff_t>(axis));
  auto d = x.data();
  std::vector<T> out(s.outer * s.inner, T(0));
  const T inv = T(1) / static_cast<T>(s.n);
  for (std::size_t o = 0; o < s.outer; ++o)
    for (std::size_t k = 0; k < s.n; ++k)
      for (std::size_t in = 0; in < s.inner; ++in)
        out[o * s.inner + in] += d[(o * s.n + k) * s.inner + in];
  for (auto& v : out) v *= inv;
  return make_op<T>(std::move(out_shape), std::move(out), {x}, [s, inv](detail::Node<T>& self) {
    auto& X = *self.parents[0];
    if (!wants_grad(X)) return;
    for (std::size_t o = 0; o < s.outer; ++o)
      for (std::size_t k = 0; k < s.n; ++k)
        for (std::size_t in = 0; in < s.inner; ++in)
          X.grad[(o * s.n + k) * s.inner + in] += self.grad[o * s.inner + in] * inv;
  });
}

template <typename T>
Tensor<T> sum(const Tensor<T>& x) {
  T acc = T(0);
  for (auto v : x.data()) acc += v;
  return make_op<T>({}, {acc}, {x}, [](detail::Node<T>& self) {
    auto& X = *self.parents[0];
    if (!wants_grad(X)) return;
    for (auto& g : X.grad) g += self.grad[0];
  });
}

template <typename T>
Tensor<T> add_n(const std::vector<Tensor<T>>& parts) {
  if (parts.empty()) throw EmptyReductionError("add_n of zero tensors");
  for (const auto& p : parts) require_same_shape(parts[0], p, "add_n");
  std::vector<T> out(parts[0].numel(), T(0));
  for (const auto& p : parts)
    for (std::size_t i = 0; i < out.size(); ++i) out[i] += p.at(i);
  return make_op<T>(parts[0].shape(), std::move(out), parts, [](detail::Node<T>& self) {
    for (auto& p : self.parents) {
      if (!wants_grad(*p)) continue;
      for (std::size_t i = 0; i < self.grad.size(); ++i) p->grad[i] += self.grad[i];
    }
  });
}

template <typename T>
Tensor<T> concat_last_axis(const std::vector<Tensor<T>>& parts) {
  if (parts.empty()) throw DimensionError("concat_last_axis of zero tensors");
  const Shape& ref = parts[0].shape();
  if (ref.empty()) throw DimensionError("concat_last_axis on scalars");
  std::vector<std::size_t> widths;
  std::size_t total = 0;
  for (const auto& p : parts) {
    const Shape& s = p.shape();
    if (s.size() != ref.size() || !std::equal(s.begin(), s.end() - 1, ref.begin())) {
      throw DimensionError("concat_last_axis: leading dims of " + shape_str(s) +
                           " incompatible with " + shape_str(ref));
    }
    widths.push_back(s.back());
    total += s.back();
  }
  const std::size_t rows = shape_numel(ref) / std::max<std::size_t>(ref.back(), 1);
  Shape out_shape = ref;
  out_shape.back() = total;
  std::vector<T> out(rows * total);
  std::size_t offset = 0;
  for (std::size_t p = 0; p < parts.size(); ++p) {
    auto d = parts[p].data();
    for (std::size_t r = 0; r < rows; ++r)
      std::copy_n(d.begin() + static_cast<std::ptrdiff_t>(r * widths[p]), widths[p],
                  out.begin() + static_cast<std::ptrdiff_t>(r * total + offset));
    offset += widths[p];
  }
  return make_op<T>(std::move(out_shape), std::move(out), parts,
                    [widths, rows, total](detail::Node<T>& self) {
                      std::size_t off = 0;
                      for (std::size_t p = 0; p < self.parents.size(); ++p) {
                        auto& P = *self.parents[p];
                        if (wants_grad(P)) {
                          for (std::size_t r = 0; r < rows; ++r)
                            for (std::size_t j = 0; j < widths[p]; ++j)
                              P.grad[r * widths[p] + j] += self.grad[r * total + off + j];
                        }
                        off += widths[p];
                      }
                    });
}

template <typename T>
Tensor<T> concat_rows(const std::vector<Tensor<T>>& parts) {
  if (parts.empty()) throw DimensionError("concat_rows of zero tensors");
  const std::size_t cols = parts[0].shape().back();
  std::size_t rows = 0;
  std::vector<std::size_t> sizes;
  for (const auto& p : parts) {
    if (p.rank() < 1 || p.rank() > 2 || p.shape().back() != cols) {
      throw DimensionError("concat_rows: part " + shape_str(p.shape()) +
                           " incompatible with width " + std::to_string(cols));
    }
    rows += p.numel() / std::max<std::size_t>(cols, 1);
    sizes.push_back(p.numel());
  }
  std::vector<T> out;
  out.reserve(rows * cols);
  for (const auto& p : parts) out.insert(out.end(), p.data().begin(), p.data().end());
  return make_op<T>({rows, cols}, std::move(out), parts, [sizes](detail::Node<T>& self) {
    std::size_t off = 0;
    for (std::size_t p = 0; p < self.parents.size(); ++p) {
      auto& P = *self.parents[p];
      if (wants_grad(P))
        for (std::size_t i = 0; i < sizes[p]; ++i) P.grad[i] += self.grad[off + i];
      off += sizes[p];
    }
  });
}

template <typename T>
Tensor<T> slice_rows(const Tensor<T>& x, std::size_t begin, std::size_t end) {
  require_rank2(x, "slice_rows");
  if (begin > end || end > x.dim(0)) {
    throw DimensionError("slice_rows [" + std::to_string(begin) + "," + std::to_string(end) +
                         ") out of range for " + shape_str(x.shape()));
  }
  const std::size_t cols = x.dim(1);
  std::vector<T> out(x.data().begin() + static_cast<std::ptrdiff_t>(begin * cols),
                     x.data().begin() + static_cast<std::ptrdiff_t>(end * cols));
  return make_op<T>({end - begin, cols}, std::move(out), {x},
                    [begin, cols](detail::Node<T>& self) {
                      auto& X = *self.parents[0];
                      if (!wants_grad(X)) return;
                      for (std::size_t i = 0; i < self.grad.size(); ++i)
                        X.grad[begin * cols + i] += self.grad[i];
                    });
}

template <typename T>
Tensor<T> slice_cols(const Tensor<T>& x, std::size_t begin, std::size_t end) {
  require_rank2(x, "slice_cols");
  if (begin > end || end > x.dim(1)) {
    throw DimensionError("slice_cols [" + std::to_string(begin) + "," + std::to_string(end) +
                         ") out of range for " + shape_str(x.shape()));
  }
  const std::size_t rows = x.dim(0), cols = x.dim(1), w = end - begin;
  std::vector<T> out(rows * w);
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t j = 0; j < w; ++j) out[r * w + j] = x.at(r * cols + begin + j);
  return make_op<T>({rows, w}, std::move(out), {x}, [rows, cols, begin, w](detail::Node<T>& self) {
    auto& X = *self.parents[0];
    if (!wants_grad(X)) return;
    for (std::size_t r = 0; r < rows; ++r)
      for (std::size_t j = 0; j < w; ++j) X.grad[r * cols + begin + j] += self.grad[r * w + j];
  });
}

template <typename T>
Tensor<T> reshape(const Tensor<T>& x, Shape shape) {
  if (shape_numel(shape) != x.numel()) {
    throw DimensionError("reshape " + shape_str(x.shape()) + " -> " + shape_str(shape));
  }
  std::vector<T> out(x.data().begin(), x.data().end());
  return make_op<T>(std::move(shape), std::move(out), {x}, [](detail::Node<T>& self) {
    auto& X = *self.parents[0];
    if (!wants_grad(X)) return;
    for (std::size_t i = 0; i < self.grad.size(); ++i) X.grad[i] += self.grad[i];
  });
}

template <typename T>
Tensor<T> pick(const Tensor<T>& x, std::size_t index) {
  if (index >= x.numel()) {
    throw DimensionError("pick index " + std::to_string(index) + " out of range for " +
                         shape_str(x.shape()));
  }
  return make_op<T>({}, {x.at(index)}, {x}, [index](detail::Node<T>& self) {
    auto& X = *self.parents[0];
    if (wants_grad(X)) X.grad[index] += self.grad[0];
  });
}

template <typename T>
Tensor<T> row_l2_normalize(const Tensor<T>& x) {
  require_rank2(x, "row_l2_normalize");
  const std::size_t rows = x.dim(0), cols = x.dim(1);
  std::vector<T> norms(rows);
  std::vector<T> out(x.numel());
  for (std::size_t r = 0; r < rows; ++r) {
    T ss = T(0);
    for (std::size_t j = 0; j < cols; ++j) ss += x.at(r * cols + j) * x.at(r * cols + j);
    if (!std::isfinite(ss)) throw NumericError("row_l2_normalize: row " + std::to_string(r) + " is not finite");
    if (!(ss > T(0))) {
      throw std::domain_error("row_l2_normalize: row " + std::to_string(r) + " is all zero");
    }
    norms[r] = std::sqrt(ss);
    for (std::size_t j = 0; j < cols; ++j) out[r * cols + j] = x.at(r * cols + j) / norms[r];
  }
  return make_op<T>(x.shape(), std::move(out), {x},
                    [rows, cols, norms](detail::Node<T>& self) {
                      auto& X = *self.parents[0];
                      if (!wants_grad(X)) return;
                      for (std::size_t r = 0; r < rows; ++r) {
                        T dot = T(0);
                        for (std::size_t j = 0; j < cols; ++j)
                          dot += self.grad[r * cols + j] * self.data[r * cols + j];
                        for (std::size_t j = 0; j < cols; ++j) {
                          const std::size_t i = r * cols + j;
                          X.grad[i] += (self.grad[i] - self.data[i] * dot) / norms[r];
                        }
                      }
                    });
}

template <typename T>
Tensor<T> degree_normalize(const Tensor<T>& a) {
  require_rank2(a, "degree_normalize");
  const std::size_t n = a.dim(0);
  if (a.dim(1) != n) throw DimensionError("degree_normalize: non-square " + shape_str(a.shape()));
  std::vector<T> deg(n, T(0));
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) deg[i] += a.at(i * n + j);
  std::vector<T> s(n);
  for (std::size_t i = 0; i < n; ++i) {
    if (!std::isfinite(deg[i])) throw NumericError("degree_normalize: row " + std::to_string(i) + " is not finite");
    if (!(deg[i] > T(0))) {
      throw std::domain_error("degenerate degree: row " + std::to_string(i) + " sums to " +
                              std::to_string(static_cast<double>(deg[i])));
    }
    s[i] = T(1) / std::sqrt(deg[i]);
  }
  std::vector<T> out(n * n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) out[i * n + j] = a.at(i * n + j) * s[i] * s[j];
  return make_op<T>({n, n}, std::move(out), {a}, [n, deg, s](detail::Node<T>& self) {
    auto& A = *self.parents[0];
    if (!wants_grad(A)) return;
    std::vector<T> gs(n, T(0));
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = 0; j < n; ++j) {
        const T g = self.grad[i * n + j];
        const T aij = A.data[i * n + j];
        A.grad[i * n + j] += g * s[i] * s[j];
        gs[i] += g * aij * s[j];
        gs[j] += g * aij * s[i];
      }
    }
    for (std::size_t i = 0; i < n; ++i) {
      // ds/dd = -1/2 d^{-3/2}; every entry of row i contributes to d_i.
      const T gd = gs[i] * (T(-0.5)) * s[i] / deg[i];
      for (std::size_t j = 0; j < n; ++j) A.grad[i * n + j] += gd;
    }
  });
}

template <typename T>
void backward(const Tensor<T>& loss) {
  if (!loss.defined() || loss.numel() != 1) {
    throw RankError("backward() needs a scalar loss, got shape " +
                    (loss.defined() ? shape_str(loss.shape()) : std::string("<undefined>")));
  }
  if (!loss.requires_grad()) {
    throw std::invalid_argument("backward() on a loss that does not require grad");
  }
  std::vector<detail::Node<T>*> order;
  std::unordered_set<detail::Node<T>*> seen;
  std::vector<detail::Node<T>*> stack{loss.node().get()};
  while (!stack.empty()) {
    auto* n = stack.back();
    stack.pop_back();
    if (!seen.insert(n).second) continue;
    order.push_back(n);
    for (auto& p : n->parents)
      if (p->requires_grad && !seen.count(p.get())) stack.push_back(p.get());
  }
  // Producers always carry smaller ids than their consumers.
  std::sort(order.begin(), order.end(),
            [](const auto* a, const auto* b) { return a->id > b->id; });
  for (auto* n : order)
    if (n->backward_fn) n->grad.assign(n->data.size(), T(0));
  auto* root = loss.node().get();
  root->ensure_grad();
  root->grad[0] += T(1);
  for (auto* n : order)
    if (n->backward_fn) n->backward_fn(*n);
}

template <typename T>
Tensor<T> finite_difference_gradient(const std::function<T(const Tensor<T>&)>& f,
                                     const Tensor<T>& x, T h) {
  if (!(h > T(0))) throw std::invalid_argument("finite difference step must be positive");
  std::vector<T> base(x.data().begin(), x.data().end());
  std::vector<T> g(base.size());
  for (std::size_t i = 0; i < base.size(); ++i) {
    auto plus = base;
    auto minus = base;
    plus[i] += h;
    minus[i] -= h;
    const T fp = f(Tensor<T>(x.shape(), std::move(plus)));
    const T fm = f(Tensor<T>(x.shape(), std::move(minus)));
    g[i] = (fp - fm) / (T(2) * h);
  }
  return Tensor<T>(x.shape(), std::move(g));
}

template <typename T>
std::vector<T> finite_difference_inplace(const std::function<T()>& f, Tensor<T>& param, T h) {
  if (!(h > T(0))) throw std::invalid_argument("finite difference step must be positive");
  auto data = param.mutable_data();
  std::vector<T> g(data.size());
  for (std::size_t i = 0; i < data.size(); ++i) {
    const T orig = data[i];
    data[i] = orig + h;
    const T fp = f();
    data[i] = orig - h;
    const T fm = f();
    data[i] = orig;
    g[i] = (fp - fm) / (T(2) * h);
  }
  return g;
}

#define BTA_INSTANTIATE(T)                                                                   \
  template class Tensor<T>;                                                                  \
  template Tensor<T> matmul(const Tensor<T>&, const Tensor<T>&);                             \
  template Tensor<T> transpose(const Tensor<T>&);                                            \
  template Tensor<T> add(const Tensor<T>&, const Tensor<T>&);                                \
  template Tensor<T> sub(const Tensor<T>&, const Tensor<T>&);                                \
  template Tensor<T> mul(const Tensor<T>&, const Tensor<T>&);                                \
  template Tensor<T> scale(const Tensor<T>&, T);                                             \
  template Tensor<T> add_scalar(const Tensor<T>&, T);                                        \
  template Tensor<T> scale_by(const Tensor<T>&, const Tensor<T>&);                           \
  template Tensor<T> add_bias_rows(const Tensor<T>&, const Tensor<T>&);                      \
  template Tensor<T> relu(const Tensor<T>&);                                                 \
  template Tensor<T> sigmoid(const Tensor<T>&);                                              \
  template Tensor<T> tanh(const Tensor<T>&);                                                 \
  template Tensor<T> log_floor(const Tensor<T>&, T);                                         \
  template Tensor<T> softmax_along_axis(const Tensor<T>&, std::size_t, T);                   \
  template Tensor<T> mean_along_axis(const Tensor<T>&, std::size_t);                         \
  template Tensor<T> sum(const Tensor<T>&);                                                  \
  template Tensor<T> add_n(const std::vector<Tensor<T>>&);                                   \
  template Tensor<T> concat_last_axis(const std::vector<Tensor<T>>&);                        \
  template Tensor<T> concat_rows(const std::vector<Tensor<T>>&);                             \
  template Tensor<T> slice_rows(const Tensor<T>&, std::size_t, std::size_t);                 \
  template Tensor<T> slice_cols(const Tensor<T>&, std::size_t, std::size_t);                 \
  template Tensor<T> reshape(const Tensor<T>&, Shape);                                       \
  template Tensor<T> pick(const Tensor<T>&, std::size_t);                                    \
  template Tensor<T> row_l2_normalize(const Tensor<T>&);                                     \
  template Tensor<T> degree_normalize(const Tensor<T>&);                                     \
  template void backward(const Tensor<T>&);                                                  \
  template Tensor<T> finite_difference_gradient(const std::function<T(const Tensor<T>&)>&,   \
                                                const Tensor<T>&, T);                        \
  template std::vector<T> finite_difference_inplace(const std::function<T()>&, Tensor<T>&, T);

BTA_INSTANTIATE(float)
BTA_INSTANTIATE(double)

#undef BTA_INSTANTIATE

}  // namespace bta
