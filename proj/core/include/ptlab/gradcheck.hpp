#pragma once

#include <cstdint>
#include <span>

#include "ptlab/graph.hpp"

namespace ptlab {

struct GradCheckReport {
  double max_rel_error = 0.0;
  int64_t coords_checked = 0;
};

// Central finite differences against the recorded backward pass. epsilon is
// both the probe step and the denominator guard:
//   rel = |analytic - numeric| / (|analytic| + |numeric| + epsilon)
// Coordinates are subsampled per parameter when numel exceeds the cap.
// Meant to run on double graphs; float graphs lose too much to FD noise.
GradCheckReport check_gradients(GraphD& g, GraphD::Id loss, std::span<const GraphD::Id> params,
                                double epsilon = 1e-5, int64_t max_coords_per_param = 16,
                                uint64_t seed = 0);

}  // namespace ptlab
