#include "spft/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "spft/rng.hpp"

namespace spft {

std::string GradCheckReport::summary() const {
  std::ostringstream os;
  for (const auto& e : entries) {
    os << e.name << ": max_rel_err=" << e.max_rel_err << " (" << e.checked_coords << " coords)\n";
  }
  os << "worst=" << worst << "\n";
  return os.str();
}

GradCheckReport grad_check(ParameterStore& store, const std::function<Tensor()>& loss_fn,
                           GradCheckOptions options) {
  store.zero_grads();
  Tensor loss = loss_fn();
  backward(loss);

  // Snapshot analytic grads before perturbing anything.
  std::map<std::string, std::vector<double>> analytic;
  for (const auto& [name, tensor] : store.entries()) {
    if (store.is_frozen(name)) continue;
    if (!tensor.has_grad()) {
      analytic[name] = std::vector<double>(tensor.data().size(), 0.0);
    } else {
      analytic[name] = tensor.grad();
    }
  }

  GradCheckReport report;
  Rng rng(mix_seed(options.seed, 0x67726164));
  for (auto& [name, tensor] : store.entries()) {
    if (store.is_frozen(name)) continue;
    auto& w = tensor.data();
    int64_t n = static_cast<int64_t>(w.size());
    std::vector<int64_t> coords;
    if (n <= options.max_coords_per_param) {
      for (int64_t i = 0; i < n; ++i) coords.push_back(i);
    } else {
      for (int64_t c = 0; c < options.max_coords_per_param; ++c) {
        coords.push_back(rng.uniform_int(0, n - 1));
      }
      std::sort(coords.begin(), coords.end());
      coords.erase(std::unique(coords.begin(), coords.end()), coords.end());
    }

    GradCheckEntry entry;
    entry.name = name;
    const auto& g = analytic.at(name);
    for (int64_t idx : coords) {
      double keep = w[static_cast<size_t>(idx)];
      w[static_cast<size_t>(idx)] = keep + options.epsilon;
      double up;
      {
        NoGradGuard ng;
        up = loss_fn().item();
      }
      w[static_cast<size_t>(idx)] = keep - options.epsilon;
      double dn;
      {
        NoGradGuard ng;
        dn = loss_fn().item();
      }
      w[static_cast<size_t>(idx)] = keep;
      double numeric = (up - dn) / (2.0 * options.epsilon);
      double a = g[static_cast<size_t>(idx)];
      double denom = std::max({std::fabs(a), std::fabs(numeric), 1e-3});
      double rel = std::fabs(a - numeric) / denom;
      entry.max_rel_err = std::max(entry.max_rel_err, rel);
      ++entry.checked_coords;
    }
    report.worst = std::max(report.worst, entry.max_rel_err);
    report.entries.push_back(std::move(entry));
  }
  store.zero_grads();
  return report;
}

}  // namespace spft
