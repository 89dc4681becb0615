#pragma once

#include <string>
#include <utility>
#include <vector>

#include "befseg/tensor.hpp"

namespace befseg {

// Named parameter list as owned by a model: insertion order is the
// serialization order.
using ParamList = std::vector<std::pair<std::string, Tensor*>>;

// Binary checkpoint layout (all integers little-endian):
//   magic "BEFB" | u32 version (=1) | u32 tensor count
//   per tensor: u16 name length | name bytes (UTF-8) | u8 rank
//               | rank x u32 dims | row-major f64 payload
void save_checkpoint(const std::string& path, const ParamList& params);

// Restores values into `params`. Every stored tensor must match a parameter
// by name and shape, and every parameter must be present in the file; any
// discrepancy throws and names the offending tensor.
void load_checkpoint(const std::string& path, const ParamList& params);

}  // namespace befseg
