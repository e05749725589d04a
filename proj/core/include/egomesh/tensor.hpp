#pragma once

#include <cstddef>
#include <functional>
#include <initializer_list>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace egomesh {

using Shape = std::vector<std::size_t>;

std::size_t shape_numel(const Shape& shape);
std::string shape_str(const Shape& shape);

class Tape;

namespace detail {

struct Node {
  Shape shape;
  std::vector<double> value;
  // Leaves: sized on set_requires_grad. Interior nodes: allocated on first
  // accumulation and reset at the start of every backward pass.
  std::vector<double> grad;
  bool requires_grad = false;
  bool leaf = true;
  std::vector<std::shared_ptr<Node>> inputs;
  std::function<void(Node&)> backward;
  Tape* tape = nullptr;
  std::size_t tape_index = 0;

  std::vector<double>& grad_buffer();
};

}  // namespace detail

/// Dense row-major array of doubles. Copies share storage: a Tensor is a
/// handle onto a node of the computation graph.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(Shape shape);
  Tensor(Shape shape, std::vector<double> values);

  static Tensor zeros(Shape shape);
  static Tensor ones(Shape shape);
  static Tensor full(Shape shape, double value);
  static Tensor scalar(double value);
  static Tensor matrix(std::initializer_list<std::initializer_list<double>> rows);
  static Tensor vector(std::initializer_list<double> values);

  bool defined() const { return node_ != nullptr; }
  const Shape& shape() const;
  std::size_t rank() const { return shape().size(); }
  std::size_t dim(std::size_t axis) const;
  std::size_t numel() const;

  std::span<const double> values() const;
  /// Writable view of a leaf's values. Interior (recorded) tensors are
  /// immutable.
  std::span<double> mutable_values();
  double item() const;
  double at(std::size_t flat_index) const;

  bool requires_grad() const;
  bool is_leaf() const;
  /// Marks a leaf as a trainable input and allocates a zeroed gradient.
  Tensor& set_requires_grad(bool flag = true);
  std::span<const double> grad() const;
  std::span<double> mutable_grad();
  void zero_grad();

  /// A fresh leaf holding a copy of the values.
  Tensor detach() const;

  const std::shared_ptr<detail::Node>& node() const { return node_; }

 private:
  explicit Tensor(std::shared_ptr<detail::Node> node) : node_(std::move(node)) {}
  friend Tensor make_op(Shape, std::vector<double>, std::vector<Tensor>,
                        std::function<void(detail::Node&)>);

  std::shared_ptr<detail::Node> node_;
};

/// Ordered record of executed differentiable ops.
class Tape {
 public:
  Tape() = default;
  ~Tape();
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  std::size_t size() const { return nodes_.size(); }
  void clear();

  /// Populates d(loss)/d(leaf) for every requires_grad leaf reachable from
  /// loss. Leaf gradients accumulate across calls.
  void backward(const Tensor& loss);

 private:
  friend Tensor make_op(Shape, std::vector<double>, std::vector<Tensor>,
                        std::function<void(detail::Node&)>);
  std::vector<std::shared_ptr<detail::Node>> nodes_;
};

/// Makes a tape the recording target of the current thread for its lifetime.
class TapeScope {
 public:
  explicit TapeScope(Tape& tape);
  ~TapeScope();
  TapeScope(const TapeScope&) = delete;
  TapeScope& operator=(const TapeScope&) = delete;

 private:
  Tape* previous_;
};

/// Suspends recording on the current thread (inference, finite differences).
class NoGradScope {
 public:
  NoGradScope();
  ~NoGradScope();
  NoGradScope(const NoGradScope&) = delete;
  NoGradScope& operator=(const NoGradScope&) = delete;

 private:
  Tape* previous_;
};

Tape* active_tape();

/// Runs backward on the tape that recorded `loss`.
void backward(const Tensor& loss);

/// Builds an op result. When a tape is active and any input requires grad,
/// the result is recorded and `backward_fn` is invoked during the reverse
/// sweep with the result node (whose `grad` is populated).
Tensor make_op(Shape shape, std::vector<double> values, std::vector<Tensor> inputs,
               std::function<void(detail::Node&)> backward_fn);

// ---------------------------------------------------------------------------
// Op set. Binary elementwise ops accept identical shapes or a right-hand (or
// left-hand) operand whose shape is a trailing suffix of the other operand's
// shape (leading-batch expansion). Anything else is a DimensionError.

Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double factor);
Tensor abs(const Tensor& a);

/// [..., m, k] x [k, n] or [..., m, k] x [..., k, n] with equal batch dims.
Tensor matmul(const Tensor& a, const Tensor& b);

Tensor reshape(const Tensor& a, Shape shape);
Tensor permute(const Tensor& a, const std::vector<std::size_t>& axes);
/// Swaps the last two axes.
Tensor transpose(const Tensor& a);
Tensor slice(const Tensor& a, std::size_t axis, std::size_t begin, std::size_t end);
Tensor concat(const std::vector<Tensor>& parts, std::size_t axis);

/// Softmax over the last axis with max subtraction.
Tensor softmax_rows(const Tensor& x);
/// Normalizes over the last axis (population variance), then gamma * x + beta.
Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta,
                  double eps = 1e-5);
/// x * Phi(x) with the exact erf form.
Tensor gelu(const Tensor& x);

Tensor sum(const Tensor& x);
Tensor mean(const Tensor& x);
/// Mean over axis 0: [n, ...] -> [...].
Tensor mean_rows(const Tensor& x);

/// Rows of a [B, ...] table selected by index; backward scatter-adds.
Tensor gather_rows(const Tensor& table, std::span<const std::size_t> indices);

inline Tensor operator+(const Tensor& a, const Tensor& b) { return add(a, b); }
inline Tensor operator-(const Tensor& a, const Tensor& b) { return sub(a, b); }
inline Tensor operator*(const Tensor& a, const Tensor& b) { return mul(a, b); }

// Dense kernels (row-major), exposed for benchmarks and tests.
namespace kernels {
/// c[m x n] += a[m x k] * b[k x n]
void gemm_nn(std::size_t m, std::size_t k, std::size_t n, const double* a, const double* b,
             double* c);
/// c[m x n] += a^T * b with a stored [k x m]
void gemm_tn(std::size_t m, std::size_t k, std::size_t n, const double* a, const double* b,
             double* c);
/// c[m x n] += a * b^T with b stored [n x k]
void gemm_nt(std::size_t m, std::size_t k, std::size_t n, const double* a, const double* b,
             double* c);
}  // namespace kernels

}  // namespace egomesh
