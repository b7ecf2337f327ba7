#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <string_view>

namespace etomo {

/// 64-bit FNV-1a. Used for content and provenance hashes, not for security.
std::uint64_t fnv1a64(std::span<const std::byte> bytes, std::uint64_t seed = 0xcbf29ce484222325ULL);
std::uint64_t fnv1a64(std::string_view text, std::uint64_t seed = 0xcbf29ce484222325ULL);

/// Lower-case, zero-padded 16-digit hex.
std::string hex64(std::uint64_t value);

}  // namespace etomo
