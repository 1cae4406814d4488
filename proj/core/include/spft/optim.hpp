#pragma once

#include <cstdint>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "spft/tensor.hpp"

namespace spft {

// Named parameter collection with a frozen set. Frozen entries keep
// requires_grad == false so backward never allocates a grad for them, and
// the optimizer skips them as well.
class ParameterStore {
 public:
  Tensor& create(const std::string& name, Tensor value);
  Tensor& at(const std::string& name);
  const Tensor& at(const std::string& name) const;
  bool contains(const std::string& name) const;

  void freeze(const std::string& name);
  void unfreeze(const std::string& name);
  void freeze_prefix(const std::string& prefix);
  void unfreeze_prefix(const std::string& prefix);
  void freeze_all();
  void unfreeze_all();
  bool is_frozen(const std::string& name) const;
  const std::set<std::string>& frozen_names() const { return frozen_; }
  void set_frozen_names(const std::set<std::string>& names);

  const std::map<std::string, Tensor>& entries() const { return entries_; }
  std::map<std::string, Tensor>& entries() { return entries_; }

  std::vector<std::string> names_with_prefix(const std::string& prefix) const;
  void zero_grads();
  int64_t total_numel() const;

 private:
  std::map<std::string, Tensor> entries_;  // ordered: deterministic iteration
  std::set<std::string> frozen_;
};

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

// Adam with bias correction. One optimizer instance per training run; moment
// slots are keyed by parameter name.
class AdamOptimizer {
 public:
  explicit AdamOptimizer(AdamConfig config) : config_(config) {}

  // Updates every non-frozen entry from its grad, then zeroes all grads.
  // Missing grad on a non-frozen entry is a contract error.
  void step(ParameterStore& store);

  int64_t step_count() const { return step_count_; }
  const AdamConfig& config() const { return config_; }
  void set_lr(double lr) { config_.lr = lr; }

 private:
  struct Slot {
    std::vector<double> m;
    std::vector<double> v;
  };
  AdamConfig config_;
  int64_t step_count_ = 0;
  std::map<std::string, Slot> slots_;
};

// Scales non-frozen grads so their global L2 norm is at most max_norm.
// Returns the pre-clip norm.
double clip_global_norm(ParameterStore& store, double max_norm);

}  // namespace spft
