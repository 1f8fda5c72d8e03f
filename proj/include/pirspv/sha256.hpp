#pragma once

#include <openssl/evp.h>

#include <array>
#include <cstdint>
#include <span>
#include <stdexcept>

namespace pirspv {

using Hash256 = std::array<std::uint8_t, 32>;

inline Hash256 sha256(std::span<const std::uint8_t> data) {
  Hash256 out{};
  unsigned int len = 0;
  EVP_MD_CTX* ctx = EVP_MD_CTX_new();
  if (ctx == nullptr) throw std::runtime_error("EVP_MD_CTX_new failed");
  bool ok = EVP_DigestInit_ex(ctx, EVP_sha256(), nullptr) == 1 &&
            EVP_DigestUpdate(ctx, data.data(), data.size()) == 1 &&
            EVP_DigestFinal_ex(ctx, out.data(), &len) == 1;
  EVP_MD_CTX_free(ctx);
  if (!ok || len != out.size()) throw std::runtime_error("SHA-256 computation failed");
  return out;
}

// Double SHA-256, the digest used for txids, header hashes and base58check.
inline Hash256 dsha256(std::span<const std::uint8_t> data) {
  Hash256 first = sha256(data);
  return sha256(std::span<const std::uint8_t>(first.data(), first.size()));
}

}  // namespace pirspv
