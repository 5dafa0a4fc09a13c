#pragma once

#include <cstdint>
#include <functional>
#include <vector>

#include "vfi/tensor.hpp"

namespace vfi {

struct GradCheckOptions {
  float eps = 1e-3f;
  // Coordinates sampled per parameter (all coordinates when the parameter
  // is smaller than this).
  int coords_per_param = 32;
  std::uint64_t seed = 0x9d5ec0de;
};

// Compares the analytic gradient of a deterministic scalar-valued function
// against central finite differences on a seeded coordinate subset of each
// parameter. Returns the maximum relative error, with denominator
// max(|analytic|, |numeric|, 1e-6).
double grad_check(const std::function<Tensor()>& f, const std::vector<Parameter*>& params,
                  const GradCheckOptions& opts = {});

}  // namespace vfi
