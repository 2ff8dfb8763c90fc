#pragma once

#include <cstdint>
#include <string>
#include <string_view>

namespace ticl {

/// Lowercase hex SHA-256 digest.
std::string sha256_hex(std::string_view bytes);

/// FNV-1a, 64 bit. Stable across platforms, used for seeds.
std::uint64_t fnv1a64(std::string_view bytes, std::uint64_t basis = 0xcbf29ce484222325ULL);

/// Seed for per-sample random draws: hash(run_seed, sample_id[, repeat]).
std::uint64_t derive_seed(std::uint64_t run_seed, std::string_view sample_id, int repeat = 0);

}  // namespace ticl
