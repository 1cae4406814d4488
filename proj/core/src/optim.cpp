#include "spft/optim.hpp"

#include <cmath>

namespace spft {

Tensor& ParameterStore::create(const std::string& name, Tensor value) {
  if (entries_.count(name)) throw_contract("ParameterStore: duplicate name " + name);
  value.set_requires_grad(true);
  auto [it, ok] = entries_.emplace(name, std::move(value));
  (void)ok;
  return it->second;
}

Tensor& ParameterStore::at(const std::string& name) {
  auto it = entries_.find(name);
  if (it == entries_.end()) throw_contract("ParameterStore: no entry named " + name);
  return it->second;
}

const Tensor& ParameterStore::at(const std::string& name) const {
  auto it = entries_.find(name);
  if (it == entries_.end()) throw_contract("ParameterStore: no entry named " + name);
  return it->second;
}

bool ParameterStore::contains(const std::string& name) const { return entries_.count(name) > 0; }

void ParameterStore::freeze(const std::string& name) {
  at(name).set_requires_grad(false);
  at(name).zero_grad();
  frozen_.insert(name);
}

void ParameterStore::unfreeze(const std::string& name) {
  at(name).set_requires_grad(true);
  frozen_.erase(name);
}

void ParameterStore::freeze_prefix(const std::string& prefix) {
  for (auto& [name, tensor] : entries_) {
    if (name.rfind(prefix, 0) == 0) {
      tensor.set_requires_grad(false);
      tensor.zero_grad();
      frozen_.insert(name);
    }
  }
}

void ParameterStore::unfreeze_prefix(const std::string& prefix) {
  for (auto& [name, tensor] : entries_) {
    if (name.rfind(prefix, 0) == 0) {
      tensor.set_requires_grad(true);
      frozen_.erase(name);
    }
  }
}

void ParameterStore::freeze_all() {
  for (auto& [name, tensor] : entries_) {
    tensor.set_requires_grad(false);
    tensor.zero_grad();
    frozen_.insert(name);
  }
}

void ParameterStore::unfreeze_all() {
  for (auto& [name, tensor] : entries_) tensor.set_requires_grad(true);
  frozen_.clear();
}

bool ParameterStore::is_frozen(const std::string& name) const { return frozen_.count(name) > 0; }

void ParameterStore::set_frozen_names(const std::set<std::string>& names) {
  unfreeze_all();
  for (const std::string& n : names) freeze(n);
}

std::vector<std::string> ParameterStore::names_with_prefix(const std::string& prefix) const {
  std::vector<std::string> out;
  for (const auto& [name, tensor] : entries_) {
    if (name.rfind(prefix, 0) == 0) out.push_back(name);
  }
  return out;
}

void ParameterStore::zero_grads() {
  for (auto& [name, tensor] : entries_) tensor.zero_grad();
}

int64_t ParameterStore::total_numel() const {
  int64_t n = 0;
  for (const auto& [name, tensor] : entries_) n += tensor.numel();
  return n;
}

void AdamOptimizer::step(ParameterStore& store) {
  ++step_count_;
  double bias1 = 1.0 - std::pow(config_.beta1, static_cast<double>(step_count_));
  double bias2 = 1.0 - std::pow(config_.beta2, static_cast<double>(step_count_));

  for (auto& [name, tensor] : store.entries()) {
    if (store.is_frozen(name)) continue;
    if (!tensor.has_grad()) {
      throw_contract("adam_step: non-frozen parameter '" + name + "' has no gradient");
    }
    Slot& slot = slots_[name];
    if (slot.m.empty()) {
      slot.m.assign(tensor.data().size(), 0.0);
      slot.v.assign(tensor.data().size(), 0.0);
    }
    auto& w = tensor.data();
    const auto& g = tensor.grad();
    for (size_t i = 0; i < w.size(); ++i) {
      slot.m[i] = config_.beta1 * slot.m[i] + (1.0 - config_.beta1) * g[i];
      slot.v[i] = config_.beta2 * slot.v[i] + (1.0 - config_.beta2) * g[i] * g[i];
      double mhat = slot.m[i] / bias1;
      double vhat = slot.v[i] / bias2;
      w[i] -= config_.lr * mhat / (std::sqrt(vhat) + config_.eps);
    }
  }
  store.zero_grads();
}

double clip_global_norm(ParameterStore& store, double max_norm) {
  double sq = 0.0;
  for (auto& [name, tensor] : store.entries()) {
    if (store.is_frozen(name) || !tensor.has_grad()) continue;
    for (double g : tensor.grad()) sq += g * g;
  }
  double norm = std::sqrt(sq);
  if (norm > max_norm && norm > 0.0) {
    double s = max_norm / norm;
    for (auto& [name, tensor] : store.entries()) {
      if (store.is_frozen(name) || !tensor.has_grad()) continue;
      for (double& g : tensor.grad()) g *= s;
    }
  }
  return norm;
}

}  // namespace spft
