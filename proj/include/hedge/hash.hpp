#pragma once

#include <cstdint>
#include <string>
#include <string_view>

#include <nlohmann/json.hpp>

namespace hedge {

/// Lowercase hex SHA-256 digest.
std::string sha256_hex(std::string_view data);

/// Digest of the canonical dump of a JSON document (object keys sorted).
std::string content_hash(const nlohmann::json& doc);

/// SplitMix64 finalizer; used to derive well-separated child seeds.
constexpr std::uint64_t mix64(std::uint64_t x) noexcept {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

/// First 64 bits of the SHA-256 of `data`, big-endian.
std::uint64_t hash64(std::string_view data);

}  // namespace hedge
