#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "spft/error.hpp"

namespace spft {

using Shape = std::vector<int64_t>;

int64_t shape_numel(const Shape& shape);
std::string shape_str(const Shape& shape);

struct TensorImpl;
using NodePtr = std::shared_ptr<TensorImpl>;

// Dense row-major 64-bit float tensor. Copying a Tensor copies the handle,
// not the storage; clone() makes a detached deep copy. Ops defined in
// ops.hpp record nodes on a reverse-mode tape unless a NoGradGuard is active.
class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(Shape shape);
  static Tensor full(Shape shape, double value);
  static Tensor from_data(Shape shape, std::vector<double> data);
  static Tensor scalar(double value);

  bool defined() const { return impl_ != nullptr; }
  const Shape& shape() const;
  int64_t numel() const;
  int64_t dim(int i) const;
  int rank() const;

  std::vector<double>& data();
  const std::vector<double>& data() const;

  bool requires_grad() const;
  void set_requires_grad(bool value);

  bool has_grad() const;
  std::vector<double>& grad();              // allocates zeros on first use
  const std::vector<double>& grad() const;  // throws if absent
  void zero_grad();                          // drops the grad buffer
  bool all_finite() const;

  double item() const;  // scalar tensors only

  Tensor clone() const;  // detached value copy, no graph node

  NodePtr node() const { return impl_; }
  explicit Tensor(NodePtr impl) : impl_(std::move(impl)) {}

 private:
  std::shared_ptr<TensorImpl> impl_;
};

struct TensorImpl {
  Shape shape;
  std::vector<double> data;
  std::vector<double> grad;  // empty until touched by backward
  bool requires_grad = false;

  // graph record (empty for leaves / no-grad mode)
  std::string op;
  std::vector<NodePtr> parents;
  std::function<void(TensorImpl&)> backward_fn;
};

// Runs reverse-mode accumulation from a scalar loss. Every reachable node
// that needs a gradient gets one; leaves with requires_grad == false are
// never given a grad buffer.
void backward(const Tensor& loss);

// While alive, ops build plain value tensors with no tape record.
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;
};

bool grad_enabled();

}  // namespace spft
