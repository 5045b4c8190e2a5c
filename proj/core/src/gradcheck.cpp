#include "ptlab/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <vector>

#include "ptlab/rng.hpp"

namespace ptlab {

GradCheckReport check_gradients(GraphD& g, GraphD::Id loss, std::span<const GraphD::Id> params,
                                double epsilon, int64_t max_coords_per_param, uint64_t seed) {
  if (epsilon <= 0.0) throw std::invalid_argument("check_gradients: epsilon must be > 0");
  g.recompute();
  g.backward(loss);

  std::vector<std::vector<double>> analytic;
  analytic.reserve(params.size());
  for (GraphD::Id p : params) {
    if (g.has_grad(p))
      analytic.push_back(g.grad(p).data);
    else
      analytic.emplace_back(g.value(p).data.size(), 0.0);
  }

  Rng rng(derive_seed(seed, "gradcheck-coords"));
  GradCheckReport report;

  for (size_t pi = 0; pi < params.size(); ++pi) {
    const GraphD::Id p = params[pi];
    const int64_t n = static_cast<int64_t>(g.value(p).data.size());
    std::vector<int64_t> coords;
    if (n <= max_coords_per_param) {
      coords.resize(static_cast<size_t>(n));
      for (int64_t i = 0; i < n; ++i) coords[static_cast<size_t>(i)] = i;
    } else {
      coords.reserve(static_cast<size_t>(max_coords_per_param));
      for (int64_t i = 0; i < max_coords_per_param; ++i)
        coords.push_back(static_cast<int64_t>(rng.next_below(static_cast<uint64_t>(n))));
      std::sort(coords.begin(), coords.end());
      coords.erase(std::unique(coords.begin(), coords.end()), coords.end());
    }

    for (int64_t c : coords) {
      double& slot = g.mutable_leaf(p).data[static_cast<size_t>(c)];
      const double orig = slot;
      slot = orig + epsilon;
      g.recompute();
      const double f_plus = g.value(loss).data[0];
      slot = orig - epsilon;
      g.recompute();
      const double f_minus = g.value(loss).data[0];
      slot = orig;
      const double numeric = (f_plus - f_minus) / (2.0 * epsilon);
      const double a = analytic[pi][static_cast<size_t>(c)];
      const double rel = std::abs(a - numeric) / (std::abs(a) + std::abs(numeric) + epsilon);
      report.max_rel_error = std::max(report.max_rel_error, rel);
      ++report.coords_checked;
    }
  }

  g.recompute();
  return report;
}

}  // namespace ptlab
