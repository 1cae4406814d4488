#include "spft/tensor.hpp"

#include <cmath>
#include <sstream>
#include <unordered_set>

namespace spft {

namespace {
thread_local int g_no_grad_depth = 0;
}

NoGradGuard::NoGradGuard() { ++g_no_grad_depth; }
NoGradGuard::~NoGradGuard() { --g_no_grad_depth; }
bool grad_enabled() { return g_no_grad_depth == 0; }

int64_t shape_numel(const Shape& shape) {
  int64_t n = 1;
  for (int64_t d : shape) n *= d;
  return n;
}

std::string shape_str(const Shape& shape) {
  std::ostringstream os;
  os << "[";
  for (size_t i = 0; i < shape.size(); ++i) {
    if (i) os << ",";
    os << shape[i];
  }
  os << "]";
  return os.str();
}

Tensor Tensor::zeros(Shape shape) {
  auto impl = std::make_shared<TensorImpl>();
  impl->data.assign(static_cast<size_t>(shape_numel(shape)), 0.0);
  impl->shape = std::move(shape);
  return Tensor(std::move(impl));
}

Tensor Tensor::full(Shape shape, double value) {
  Tensor t = zeros(std::move(shape));
  for (double& v : t.data()) v = value;
  return t;
}

Tensor Tensor::from_data(Shape shape, std::vector<double> data) {
  if (shape_numel(shape) != static_cast<int64_t>(data.size())) {
    throw_dimension("from_data: shape " + shape_str(shape) + " does not match " +
                    std::to_string(data.size()) + " values");
  }
  auto impl = std::make_shared<TensorImpl>();
  impl->shape = std::move(shape);
  impl->data = std::move(data);
  return Tensor(std::move(impl));
}

Tensor Tensor::scalar(double value) { return from_data({1}, {value}); }

const Shape& Tensor::shape() const { return impl_->shape; }
int64_t Tensor::numel() const { return static_cast<int64_t>(impl_->data.size()); }
int64_t Tensor::dim(int i) const { return impl_->shape.at(static_cast<size_t>(i)); }
int Tensor::rank() const { return static_cast<int>(impl_->shape.size()); }

std::vector<double>& Tensor::data() { return impl_->data; }
const std::vector<double>& Tensor::data() const { return impl_->data; }

bool Tensor::requires_grad() const { return impl_->requires_grad; }
void Tensor::set_requires_grad(bool value) { impl_->requires_grad = value; }

bool Tensor::has_grad() const { return !impl_->grad.empty(); }

std::vector<double>& Tensor::grad() {
  if (impl_->grad.empty()) impl_->grad.assign(impl_->data.size(), 0.0);
  return impl_->grad;
}

const std::vector<double>& Tensor::grad() const {
  if (impl_->grad.empty()) throw_contract("grad(): no gradient present");
  return impl_->grad;
}

void Tensor::zero_grad() {
  impl_->grad.clear();
  impl_->grad.shrink_to_fit();
}

bool Tensor::all_finite() const {
  for (double v : impl_->data)
    if (!std::isfinite(v)) return false;
  return true;
}

double Tensor::item() const {
  if (numel() != 1) throw_contract("item(): tensor has " + std::to_string(numel()) + " elements");
  return impl_->data[0];
}

Tensor Tensor::clone() const {
  auto impl = std::make_shared<TensorImpl>();
  impl->shape = impl_->shape;
  impl->data = impl_->data;
  return Tensor(std::move(impl));
}

namespace {

void topo_visit(const NodePtr& node, std::unordered_set<TensorImpl*>& seen,
                std::vector<NodePtr>& order) {
  if (!node || seen.count(node.get())) return;
  seen.insert(node.get());
  for (const NodePtr& p : node->parents) topo_visit(p, seen, order);
  order.push_back(node);
}

}  // namespace

void backward(const Tensor& loss) {
  if (!loss.defined()) throw_contract("backward: undefined tensor");
  if (loss.numel() != 1) {
    throw_contract("backward: loss must be scalar, got shape " + shape_str(loss.shape()));
  }
  std::vector<NodePtr> order;
  {
    std::unordered_set<TensorImpl*> seen;
    topo_visit(loss.node(), seen, order);
  }
  TensorImpl* root = loss.node().get();
  if (root->grad.empty()) root->grad.assign(root->data.size(), 0.0);
  root->grad[0] += 1.0;

  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    TensorImpl& node = **it;
    if (!node.backward_fn) continue;
    if (node.grad.empty()) continue;  // not on any path to the loss
    node.backward_fn(node);
  }

  // Interior nodes keep their buffers only while the graph is alive; leaves
  // that opted out of gradients must never end up with one.
  for (const NodePtr& n : order) {
    if (!n->backward_fn && !n->requires_grad) {
      n->grad.clear();
      n->grad.shrink_to_fit();
    }
  }
}

}  // namespace spft
