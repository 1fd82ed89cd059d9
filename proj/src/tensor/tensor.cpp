#include "zrigf/tensor.hpp"

#include <algorithm>
#include <atomic>
#include <unordered_set>
#include <utility>

#include "zrigf/error.hpp"

namespace zrigf {

namespace {

std::atomic<Precision> g_precision{Precision::kFloat32};
thread_local bool t_grad_enabled = true;

}  // namespace

std::string shape_to_string(const Shape& shape) {
  std::string out = "[";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i > 0) out += "x";
    out += std::to_string(shape[i]);
  }
  return out + "]";
}

std::size_t shape_numel(const Shape& shape) {
  std::size_t n = 1;
  for (std::size_t e : shape) n *= e;
  return n;
}

Precision precision() { return g_precision.load(std::memory_order_relaxed); }

void set_precision(Precision p) { g_precision.store(p, std::memory_order_relaxed); }

double round_to_precision(double x) {
  if (precision() == Precision::kFloat32) return static_cast<double>(static_cast<float>(x));
  return x;
}

Precision parse_precision(const std::string& text) {
  if (text == "32" || text == "f32" || text == "float32") return Precision::kFloat32;
  if (text == "64" || text == "f64" || text == "float64") return Precision::kFloat64;
  throw ConfigError("unknown precision '" + text + "' (expected 32 or 64)");
}

std::string precision_name(Precision p) { return p == Precision::kFloat32 ? "32" : "64"; }

PrecisionScope::PrecisionScope(Precision p) : previous_(precision()) { set_precision(p); }
PrecisionScope::~PrecisionScope() { set_precision(previous_); }

bool grad_enabled() { return t_grad_enabled; }

NoGradGuard::NoGradGuard() : previous_(t_grad_enabled) { t_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { t_grad_enabled = previous_; }

namespace detail {

std::span<double> TensorImpl::grad_buffer() {
  if (grad.size() != data.size()) grad.assign(data.size(), 0.0);
  return grad;
}

}  // namespace detail

Tensor Tensor::zeros(Shape shape, bool requires_grad) { return full(std::move(shape), 0.0, requires_grad); }

Tensor Tensor::full(Shape shape, double value, bool requires_grad) {
  const std::size_t n = shape_numel(shape);
  return from_data(std::move(shape), std::vector<double>(n, value), requires_grad);
}

Tensor Tensor::from_data(Shape shape, std::vector<double> data, bool requires_grad) {
  if (shape.empty()) throw DimensionError("tensor shape must have at least one extent");
  for (std::size_t e : shape) {
    if (e == 0) throw DimensionError("tensor extents must be positive, got " + shape_to_string(shape));
  }
  if (shape_numel(shape) != data.size()) {
    throw DimensionError("shape " + shape_to_string(shape) + " does not match " +
                         std::to_string(data.size()) + " values");
  }
  auto impl = std::make_shared<detail::TensorImpl>();
  impl->shape = std::move(shape);
  impl->data = std::move(data);
  if (precision() == Precision::kFloat32) {
    for (double& v : impl->data) v = round_to_precision(v);
  }
  impl->requires_grad = requires_grad;
  return Tensor(std::move(impl));
}

Tensor Tensor::scalar(double value, bool requires_grad) { return from_data({1}, {value}, requires_grad); }

detail::TensorImpl& Tensor::checked() const {
  if (!impl_) throw ContractError("use of an undefined tensor");
  return *impl_;
}

const Shape& Tensor::shape() const { return checked().shape; }

std::size_t Tensor::extent(std::size_t axis) const {
  const Shape& s = shape();
  if (axis >= s.size()) {
    throw DimensionError("axis " + std::to_string(axis) + " out of range for shape " + shape_to_string(s));
  }
  return s[axis];
}

std::size_t Tensor::numel() const { return checked().data.size(); }

std::span<const double> Tensor::data() const { return checked().data; }
std::span<double> Tensor::mutable_data() { return checked().data; }

double Tensor::item() const {
  if (numel() != 1) throw ContractError("item() on tensor of shape " + shape_to_string(shape()));
  return impl_->data[0];
}

double Tensor::at(std::size_t i) const { return checked().data.at(i); }

double Tensor::at(std::size_t row, std::size_t col) const {
  const auto& impl = checked();
  if (impl.shape.size() != 2) throw DimensionError("at(row, col) needs a matrix");
  return impl.data.at(row * impl.shape[1] + col);
}

std::vector<double> Tensor::to_vector() const { return checked().data; }

bool Tensor::requires_grad() const { return checked().requires_grad; }

void Tensor::set_requires_grad(bool value) {
  auto& impl = checked();
  if (impl.node) throw ContractError("requires_grad can only be changed on leaf tensors");
  impl.requires_grad = value;
}

bool Tensor::is_leaf() const { return checked().node == nullptr; }
bool Tensor::has_grad() const { return !checked().grad.empty(); }
std::span<const double> Tensor::grad() const { return checked().grad; }
std::span<double> Tensor::mutable_grad() { return checked().grad_buffer(); }

void Tensor::zero_grad() {
  auto& impl = checked();
  std::fill(impl.grad.begin(), impl.grad.end(), 0.0);
}

std::vector<const detail::TensorImpl*> topological_order(const Tensor& root) {
  std::vector<const detail::TensorImpl*> order;
  if (!root.defined()) return order;
  std::unordered_set<const detail::TensorImpl*> visited;
  // Iterative post-order DFS; second slot marks "children already pushed".
  std::vector<std::pair<const detail::TensorImpl*, bool>> stack;
  stack.emplace_back(root.impl().get(), false);
  while (!stack.empty()) {
    auto [node, expanded] = stack.back();
    stack.pop_back();
    if (expanded) {
      order.push_back(node);
      continue;
    }
    if (!visited.insert(node).second) continue;
    stack.emplace_back(node, true);
    if (node->node) {
      for (const auto& parent : node->node->parents) {
        if (!visited.count(parent.get())) stack.emplace_back(parent.get(), false);
      }
    }
  }
  return order;
}

void Tensor::backward() const {
  auto& root = checked();
  if (root.data.size() != 1) {
    throw ContractError("backward() needs a scalar loss, got shape " + shape_to_string(root.shape));
  }
  if (!root.requires_grad) throw ContractError("backward() on a tensor that does not require grad");

  const auto order = topological_order(*this);
  for (const auto* cimpl : order) {
    auto* impl = const_cast<detail::TensorImpl*>(cimpl);
    if (!impl->requires_grad) continue;
    if (impl->node) {
      impl->grad.assign(impl->data.size(), 0.0);
    } else {
      impl->grad_buffer();
    }
  }
  root.grad[0] += 1.0;
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    const auto* impl = *it;
    if (!impl->node || !impl->requires_grad) continue;
    impl->node->backward(*impl, impl->node->parents);
  }
}

Tensor Tensor::detach() const {
  const auto& impl = checked();
  auto copy = std::make_shared<detail::TensorImpl>();
  copy->shape = impl.shape;
  copy->data = impl.data;
  return Tensor(std::move(copy));
}

Tensor Tensor::clone() const {
  Tensor out = detach();
  out.impl_->requires_grad = checked().requires_grad;
  return out;
}

}  // namespace zrigf
