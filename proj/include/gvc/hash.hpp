#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <string_view>

namespace gvc {

using Digest256 = std::array<std::uint8_t, 32>;

Digest256 sha256(std::string_view data);
std::string sha256_hex(std::string_view data);
std::string to_hex(const Digest256& digest);

// Pseudo-random unit interval value keyed by an arbitrary string.
double unit_hash(std::string_view key);

}  // namespace gvc
