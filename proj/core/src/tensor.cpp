#include "egomesh/tensor.hpp"

#include <algorithm>
#include <sstream>

#include "egomesh/error.hpp"

namespace egomesh {

namespace {
thread_local Tape* g_active_tape = nullptr;
}

std::size_t shape_numel(const Shape& shape) {
  std::size_t n = 1;
  for (std::size_t d : shape) n *= d;
  return n;
}

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

namespace detail {

std::vector<double>& Node::grad_buffer() {
  if (grad.size() != value.size()) grad.assign(value.size(), 0.0);
  return grad;
}

}  // namespace detail

namespace {

std::shared_ptr<detail::Node> new_node(Shape shape, std::vector<double> values) {
  for (std::size_t d : shape) {
    if (d == 0) throw DimensionError("tensor dimensions must be positive, got " + shape_str(shape));
  }
  if (shape_numel(shape) != values.size()) {
    throw DimensionError("shape " + shape_str(shape) + " holds " +
                         std::to_string(shape_numel(shape)) + " values, got " +
                         std::to_string(values.size()));
  }
  auto node = std::make_shared<detail::Node>();
  node->shape = std::move(shape);
  node->value = std::move(values);
  return node;
}

detail::Node& require(const std::shared_ptr<detail::Node>& node) {
  if (!node) throw ContractError("operation on an undefined tensor");
  return *node;
}

}  // namespace

Tensor::Tensor(Shape shape) {
  const std::size_t n = shape_numel(shape);
  node_ = new_node(std::move(shape), std::vector<double>(n, 0.0));
}

Tensor::Tensor(Shape shape, std::vector<double> values)
    : node_(new_node(std::move(shape), std::move(values))) {}

Tensor Tensor::zeros(Shape shape) { return Tensor(std::move(shape)); }

Tensor Tensor::ones(Shape shape) { return full(std::move(shape), 1.0); }

Tensor Tensor::full(Shape shape, double value) {
  const std::size_t n = shape_numel(shape);
  return Tensor(std::move(shape), std::vector<double>(n, value));
}

Tensor Tensor::scalar(double value) { return Tensor({1}, {value}); }

Tensor Tensor::matrix(std::initializer_list<std::initializer_list<double>> rows) {
  std::vector<double> values;
  std::size_t cols = 0;
  for (const auto& row : rows) {
    if (cols == 0) cols = row.size();
    if (row.size() != cols) throw DimensionError("ragged matrix literal");
    values.insert(values.end(), row.begin(), row.end());
  }
  return Tensor({rows.size(), cols}, std::move(values));
}

Tensor Tensor::vector(std::initializer_list<double> values) {
  return Tensor({values.size()}, std::vector<double>(values));
}

const Shape& Tensor::shape() const { return require(node_).shape; }

std::size_t Tensor::dim(std::size_t axis) const {
  const Shape& s = shape();
  if (axis >= s.size()) {
    throw DimensionError("axis " + std::to_string(axis) + " out of range for " + shape_str(s));
  }
  return s[axis];
}

std::size_t Tensor::numel() const { return require(node_).value.size(); }

std::span<const double> Tensor::values() const { return require(node_).value; }

std::span<double> Tensor::mutable_values() {
  auto& n = require(node_);
  if (!n.leaf) throw ContractError("values of a recorded tensor are immutable");
  return n.value;
}

double Tensor::item() const {
  const auto& n = require(node_);
  if (n.value.size() != 1) {
    throw ContractError("item() on non-scalar tensor " + shape_str(n.shape));
  }
  return n.value[0];
}

double Tensor::at(std::size_t flat_index) const {
  const auto& n = require(node_);
  if (flat_index >= n.value.size()) {
    throw IndexError("flat index " + std::to_string(flat_index) + " out of range for " +
                     shape_str(n.shape));
  }
  return n.value[flat_index];
}

bool Tensor::requires_grad() const { return require(node_).requires_grad; }

bool Tensor::is_leaf() const { return require(node_).leaf; }

Tensor& Tensor::set_requires_grad(bool flag) {
  auto& n = require(node_);
  if (!n.leaf) throw ContractError("requires_grad can only be set on leaf tensors");
  n.requires_grad = flag;
  if (flag) {
    n.grad.assign(n.value.size(), 0.0);
  } else {
    n.grad.clear();
  }
  return *this;
}

std::span<const double> Tensor::grad() const {
  const auto& n = require(node_);
  if (!n.requires_grad) throw ContractError("tensor does not require grad");
  if (n.grad.size() != n.value.size()) {
    throw ContractError("gradient not populated for tensor " + shape_str(n.shape));
  }
  return n.grad;
}

std::span<double> Tensor::mutable_grad() {
  auto& n = require(node_);
  if (!n.requires_grad) throw ContractError("tensor does not require grad");
  return n.grad_buffer();
}

void Tensor::zero_grad() {
  auto& n = require(node_);
  std::fill(n.grad.begin(), n.grad.end(), 0.0);
}

Tensor Tensor::detach() const {
  const auto& n = require(node_);
  return Tensor(n.shape, n.value);
}

Tape::~Tape() { clear(); }

void Tape::clear() {
  for (auto& node : nodes_) {
    node->tape = nullptr;
    node->backward = nullptr;
    node->inputs.clear();
  }
  nodes_.clear();
}

void Tape::backward(const Tensor& loss) {
  if (!loss.defined()) throw ContractError("backward on an undefined tensor");
  auto& root = *loss.node();
  if (root.value.size() != 1) {
    throw ContractError("backward requires a scalar loss, got " + shape_str(root.shape));
  }
  if (root.tape != this) throw ContractError("loss was not recorded on this tape");

  const std::size_t last = root.tape_index;
  for (std::size_t i = 0; i <= last; ++i) nodes_[i]->grad.clear();
  root.grad_buffer()[0] = 1.0;
  for (std::size_t i = last + 1; i-- > 0;) {
    auto& node = *nodes_[i];
    if (node.grad.empty() || !node.backward) continue;
    node.backward(node);
  }
}

TapeScope::TapeScope(Tape& tape) : previous_(g_active_tape) { g_active_tape = &tape; }

TapeScope::~TapeScope() { g_active_tape = previous_; }

NoGradScope::NoGradScope() : previous_(g_active_tape) { g_active_tape = nullptr; }

NoGradScope::~NoGradScope() { g_active_tape = previous_; }

Tape* active_tape() { return g_active_tape; }

void backward(const Tensor& loss) {
  if (!loss.defined() || loss.node()->tape == nullptr) {
    throw ContractError("backward: loss is not reachable from any tape");
  }
  loss.node()->tape->backward(loss);
}

Tensor make_op(Shape shape, std::vector<double> values, std::vector<Tensor> inputs,
               std::function<void(detail::Node&)> backward_fn) {
  auto node = new_node(std::move(shape), std::move(values));
  Tape* tape = g_active_tape;
  const bool needs_grad =
      tape != nullptr && std::any_of(inputs.begin(), inputs.end(), [](const Tensor& t) {
        return t.node()->requires_grad;
      });
  if (needs_grad) {
    node->requires_grad = true;
    node->leaf = false;
    node->inputs.reserve(inputs.size());
    for (auto& t : inputs) node->inputs.push_back(t.node());
    node->backward = std::move(backward_fn);
    node->tape = tape;
    node->tape_index = tape->nodes_.size();
    tape->nodes_.push_back(node);
  }
  return Tensor(std::move(node));
}

}  // namespace egomesh
