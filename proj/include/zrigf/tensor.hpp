#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace zrigf {

using Shape = std::vector<std::size_t>;

std::string shape_to_string(const Shape& shape);
std::size_t shape_numel(const Shape& shape);

// Arithmetic precision of the whole process. Storage is always binary64;
// in kFloat32 mode every op output and every parameter update is rounded
// to binary32 so training runs behave like single-precision code.
enum class Precision { kFloat32, kFloat64 };

Precision precision();
void set_precision(Precision p);
double round_to_precision(double x);
Precision parse_precision(const std::string& text);
std::string precision_name(Precision p);

class PrecisionScope {
 public:
  explicit PrecisionScope(Precision p);
  ~PrecisionScope();
  PrecisionScope(const PrecisionScope&) = delete;
  PrecisionScope& operator=(const PrecisionScope&) = delete;

 private:
  Precision previous_;
};

// Graph recording is per thread, so inference threads can run under
// NoGradGuard while sharing read-only parameters.
bool grad_enabled();

class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

namespace detail {

struct TensorImpl;
using ImplPtr = std::shared_ptr<TensorImpl>;

// Reads out.grad and accumulates into the parents' grad buffers.
using BackwardFn = std::function<void(const TensorImpl& out, std::span<const ImplPtr> parents)>;

struct Node {
  std::vector<ImplPtr> parents;
  BackwardFn backward;
  const char* op = "";
};

struct TensorImpl {
  Shape shape;
  std::vector<double> data;
  std::vector<double> grad;
  bool requires_grad = false;
  std::shared_ptr<Node> node;

  std::size_t numel() const { return data.size(); }
  // Allocates a zero gradient buffer on first use.
  std::span<double> grad_buffer();
};

}  // namespace detail

// Dense row-major array of reals with optional reverse-mode gradient
// tracking. Copies share storage; use clone() for an independent leaf.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(detail::ImplPtr impl) : impl_(std::move(impl)) {}

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor full(Shape shape, double value, bool requires_grad = false);
  static Tensor from_data(Shape shape, std::vector<double> data, bool requires_grad = false);
  static Tensor scalar(double value, bool requires_grad = false);

  bool defined() const { return impl_ != nullptr; }
  const Shape& shape() const;
  std::size_t rank() const { return shape().size(); }
  std::size_t extent(std::size_t axis) const;
  std::size_t numel() const;

  std::span<const double> data() const;
  // Direct writes bypass the graph; only for parameters and fixtures.
  std::span<double> mutable_data();
  double item() const;
  double at(std::size_t i) const;
  double at(std::size_t row, std::size_t col) const;
  std::vector<double> to_vector() const;

  bool requires_grad() const;
  void set_requires_grad(bool value);
  bool is_leaf() const;
  bool has_grad() const;
  std::span<const double> grad() const;
  std::span<double> mutable_grad();
  void zero_grad();

  // Accumulates d(this)/d(leaf) into every reachable leaf. Intermediate
  // gradients are reset at the start of each call; leaf gradients add up
  // across calls until zero_grad().
  void backward() const;

  Tensor detach() const;
  Tensor clone() const;
  bool shares_storage_with(const Tensor& other) const { return impl_ == other.impl_; }

  const detail::ImplPtr& impl() const { return impl_; }

 private:
  detail::TensorImpl& checked() const;
  detail::ImplPtr impl_;
};

// Post-order over the graph reachable from root: parents precede children.
std::vector<const detail::TensorImpl*> topological_order(const Tensor& root);

}  // namespace zrigf
