#pragma once

#include <array>
#include <cstdint>
#include <string>

namespace pathprof {

using Digest256 = std::array<std::uint8_t, 32>;

// FIPS 180-4 SHA-256 of a byte string. Used for network fingerprints.
Digest256 sha256(const void* data, std::size_t len);
Digest256 sha256(const std::string& s);

std::string to_hex(const Digest256& d);

}  // namespace pathprof
