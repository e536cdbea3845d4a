#pragma once

#include <map>
#include <string>

#include "saint/tensor.hpp"

namespace saint {

// SNT1 tensor container, little-endian, no alignment padding:
//   magic "SNT1" | u32 tensor count | per tensor:
//   u16 name length | UTF-8 name | u8 ndim | ndim x u32 dims | f32 data row-major
// Round trips are bit-exact. Names must be unique.
void write_snt1(const std::string& path, const std::map<std::string, Tensor>& tensors);
std::map<std::string, Tensor> read_snt1(const std::string& path);

}  // namespace saint
