#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "pirspv/sha256.hpp"

namespace pirspv {

inline constexpr std::string_view kBase58Alphabet =
    "123456789ABCDEFGHJKLMNPQRSTUVWXYZabcdefghijkmnopqrstuvwxyz";

inline std::string base58_encode(std::span<const std::uint8_t> data) {
  std::size_t zeros = 0;
  while (zeros < data.size() && data[zeros] == 0) ++zeros;

  // Base conversion on a little-endian digit vector.
  std::vector<std::uint8_t> digits;
  for (std::size_t i = zeros; i < data.size(); ++i) {
    unsigned carry = data[i];
    for (auto& d : digits) {
      carry += static_cast<unsigned>(d) << 8;
      d = static_cast<std::uint8_t>(carry % 58);
      carry /= 58;
    }
    while (carry > 0) {
      digits.push_back(static_cast<std::uint8_t>(carry % 58));
      carry /= 58;
    }
  }

  std::string out(zeros, '1');
  for (auto it = digits.rbegin(); it != digits.rend(); ++it) out.push_back(kBase58Alphabet[*it]);
  return out;
}

inline std::optional<std::vector<std::uint8_t>> base58_decode(std::string_view text) {
  static const auto value_of = [] {
    std::array<int, 128> v{};
    v.fill(-1);
    for (std::size_t i = 0; i < kBase58Alphabet.size(); ++i) v[kBase58Alphabet[i]] = static_cast<int>(i);
    return v;
  }();

  std::size_t zeros = 0;
  while (zeros < text.size() && text[zeros] == '1') ++zeros;

  std::vector<std::uint8_t> bytes;
  for (std::size_t i = zeros; i < text.size(); ++i) {
    unsigned char c = static_cast<unsigned char>(text[i]);
    if (c >= 128 || value_of[c] < 0) return std::nullopt;
    unsigned carry = static_cast<unsigned>(value_of[c]);
    for (auto& b : bytes) {
      carry += static_cast<unsigned>(b) * 58;
      b = static_cast<std::uint8_t>(carry & 0xff);
      carry >>= 8;
    }
    while (carry > 0) {
      bytes.push_back(static_cast<std::uint8_t>(carry & 0xff));
      carry >>= 8;
    }
  }

  std::vector<std::uint8_t> out(zeros, 0);
  out.insert(out.end(), bytes.rbegin(), bytes.rend());
  return out;
}

// version byte || payload || first 4 bytes of dsha256(version || payload)
inline std::string base58check_encode(std::uint8_t version, std::span<const std::uint8_t> payload) {
  std::vector<std::uint8_t> data;
  data.reserve(payload.size() + 5);
  data.push_back(version);
  data.insert(data.end(), payload.begin(), payload.end());
  Hash256 check = dsha256(data);
  data.insert(data.end(), check.begin(), check.begin() + 4);
  return base58_encode(data);
}

struct Base58CheckResult {
  std::uint8_t version;
  std::vector<std::uint8_t> payload;
};

inline std::optional<Base58CheckResult> base58check_decode(std::string_view text) {
  auto bytes = base58_decode(text);
  if (!bytes || bytes->size() < 5) return std::nullopt;
  std::span<const std::uint8_t> body(bytes->data(), bytes->size() - 4);
  Hash256 check = dsha256(body);
  for (int i = 0; i < 4; ++i)
    if (check[i] != (*bytes)[bytes->size() - 4 + i]) return std::nullopt;
  return Base58CheckResult{(*bytes)[0], {bytes->begin() + 1, bytes->end() - 4}};
}

}  // namespace pirspv
