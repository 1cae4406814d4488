#pragma once

#include <functional>
#include <string>
#include <vector>

#include "spft/optim.hpp"

namespace spft {

struct GradCheckEntry {
  std::string name;
  double max_rel_err = 0.0;
  int64_t checked_coords = 0;
};

struct GradCheckReport {
  std::vector<GradCheckEntry> entries;
  double worst = 0.0;
  bool passed(double tol = 1e-3) const { return worst < tol; }
  std::string summary() const;
};

struct GradCheckOptions {
  double epsilon = 1e-5;
  int64_t max_coords_per_param = 24;  // coordinates sampled per parameter
  uint64_t seed = 0;
};

// Compares backward() gradients of loss_fn against central finite
// differences over the store's non-frozen parameters. loss_fn must rebuild
// its graph from the current parameter values on every call.
GradCheckReport grad_check(ParameterStore& store, const std::function<Tensor()>& loss_fn,
                           GradCheckOptions options = {});

}  // namespace spft
