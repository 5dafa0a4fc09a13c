#pragma once

#include <string>

#include "vfi/tensor.hpp"

namespace vfi {

// Reads an 8-bit PNG (gray, palette, RGB or RGBA) as a (1, 3, h, w) tensor
// with values in [0, 1].
Tensor load_png(const std::string& path);

// Writes a (1, 3, h, w) tensor as an 8-bit RGB PNG. Values are clamped to
// [0, 1]; quantization rounds half away from zero.
void save_png(const Tensor& image, const std::string& path);

}  // namespace vfi
