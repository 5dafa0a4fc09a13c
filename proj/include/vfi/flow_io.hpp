#pragma once

#include <string>

#include "vfi/tensor.hpp"

namespace vfi {

// Raw flow file: magic "FLO1", u32 width, u32 height (little endian), then
// row-major (dx, dy) float32 pairs.
void save_flow_file(const Tensor& flow, const std::string& path);
Tensor load_flow_file(const std::string& path);

// HSV color-wheel rendering: hue from the flow angle, saturation from the
// magnitude normalized by its 99th percentile, value 1. Zero flow maps to
// white.
Tensor flow_to_color(const Tensor& flow);

}  // namespace vfi
