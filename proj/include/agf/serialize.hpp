#pragma once

#include <filesystem>

#include "agf/params.hpp"
#include "agf/tensor.hpp"

namespace agf {

/// Binary tensor format (".agt"): magic "AGT1", version u16 = 1, ndim u16,
/// each dim u32, then the payload as 64-bit little-endian IEEE-754 floats in
/// row-major order. Trailing bytes are rejected.
void write_tensor_file(const std::filesystem::path& path, const Tensor& t);
Tensor read_tensor_file(const std::filesystem::path& path);

/// Weights container (".agw"): magic "AGW1", version u16 = 1, count u32, a
/// manifest of (name_len u16, name, offset u64, ndim u16, dims u32...) in
/// lexicographic name order, then one TensorFile blob per entry at the
/// recorded offsets. Every store entry is written exactly once.
void write_weights_file(const std::filesystem::path& path, const ParamStore& store);

/// Load values into an existing store. The file must contain exactly the
/// store's parameter names, with matching shapes; anything else raises
/// ParseError naming the offending entry.
void read_weights_file(const std::filesystem::path& path, ParamStore& store);

}  // namespace agf
