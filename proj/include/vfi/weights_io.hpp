#pragma once

#include <string>

#include "vfi/model.hpp"

namespace vfi {

// Binary weights container, format version 1:
//   "EMAV" | u32 version | u16 variant-name length + bytes |
//   u32 C, N1, N2, window_size | u32 parameter count |
//   per parameter: u16 name length, name, 4 x u32 shape, float32 payload.
// All integers and floats little endian. Save/load round-trips are
// bit-exact and preserve parameter order.
void save_weights(const Model& model, const std::string& path);

// Reads just the config block.
ModelConfig peek_weights_config(const std::string& path);

// Loads into an existing model, validating parameter names and shapes in
// declaration order; the first mismatch is reported by parameter name.
// Truncated files are reported with the failing byte offset.
void load_weights(Model& model, const std::string& path);

}  // namespace vfi
