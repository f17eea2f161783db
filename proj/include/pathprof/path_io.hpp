#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "pathprof/path.hpp"

namespace pathprof {

// EPATH1 byte format, all integers little-endian fixed width:
//   magic "EPATH1" (6 bytes), version u8 = 1, network fingerprint (32 bytes),
//   theta f64, depth u32, layer count u32,
//   kind u8 (0 = path, 1 = profile), start_rank u32, class_id i32,
//   image_count u64;
//   per layer: layer index u32, then three bitset blobs (N, S, W), each as
//   bit count u64 followed by ceil(bits/8) payload bytes (padding bits zero).

std::vector<std::uint8_t> serialize_path(const EffectivePath& path);
std::vector<std::uint8_t> serialize_profile(const ClassProfile& profile);

EffectivePath deserialize_path(const std::vector<std::uint8_t>& bytes);
ClassProfile deserialize_profile(const std::vector<std::uint8_t>& bytes);

void write_path_file(const std::string& file, const EffectivePath& path);
void write_profile_file(const std::string& file, const ClassProfile& profile);
EffectivePath read_path_file(const std::string& file);
ClassProfile read_profile_file(const std::string& file);

}  // namespace pathprof
