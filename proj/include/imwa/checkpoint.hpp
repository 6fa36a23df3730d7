#pragma once

// Flat binary checkpoint: magic "IMWA", format version u32, layer count u32,
// per-layer (in, out) u32 pairs, then every weight entry as a little-endian
// 64-bit float in canonical order. Round-trips bit-exactly.

#include <string>

#include "imwa/nn.hpp"

namespace imwa {

inline constexpr std::uint32_t kCheckpointVersion = 1;

void save_checkpoint(const WeightVector& w, const std::string& path);

// Throws FormatError naming the file on bad magic, unknown version, or a
// truncated payload.
WeightVector load_checkpoint(const std::string& path);

}  // namespace imwa
