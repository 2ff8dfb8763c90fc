#include "ticl/hash.hpp"

#include <array>

#include <openssl/evp.h>

#include "ticl/error.hpp"

namespace ticl {

std::string sha256_hex(std::string_view bytes) {
  std::array<unsigned char, EVP_MAX_MD_SIZE> digest{};
  unsigned int len = 0;
  if (EVP_Digest(bytes.data(), bytes.size(), digest.data(), &len, EVP_sha256(), nullptr) != 1) {
    throw Error("sha256 digest failed");
  }
  static constexpr char kHex[] = "0123456789abcdef";
  std::string out;
  out.reserve(len * 2);
  for (unsigned int i = 0; i < len; ++i) {
    out.push_back(kHex[digest[i] >> 4]);
    out.push_back(kHex[digest[i] & 0xf]);
  }
  return out;
}

std::uint64_t fnv1a64(std::string_view bytes, std::uint64_t basis) {
  std::uint64_t h = basis;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::uint64_t derive_seed(std::uint64_t run_seed, std::string_view sample_id, int repeat) {
  std::string key = std::to_string(run_seed);
  key += '\x1f';
  key += sample_id;
  if (repeat != 0) {
    key += '\x1f';
    key += std::to_string(repeat);
  }
  return fnv1a64(key);
}

}  // namespace ticl
