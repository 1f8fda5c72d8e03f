#pragma once

#include <gmpxx.h>

#include <cstdint>
#include <span>
#include <stdexcept>
#include <vector>

#include "pirspv/itpir.hpp"  // ProtocolError
#include "pirspv/pirdb.hpp"
#include "pirspv/rng.hpp"

namespace pirspv {

// Single-server computational PIR over Paillier. The query carries one
// ciphertext per database row encrypting a 0/1 selector; the server raises
// each ciphertext to the integer value of a row chunk and multiplies down
// the column, which decrypts to the selected row's chunk. Queries address
// rows directly (recursion depth 1) and their size depends only on the
// database shape and modulus, never on the requested index.

namespace cpirdetail {

inline std::vector<std::uint8_t> export_fixed(const mpz_class& v, std::size_t len) {
  std::vector<std::uint8_t> out(len, 0);
  std::size_t count = 0;
  if (v != 0) {
    const std::size_t need = (mpz_sizeinbase(v.get_mpz_t(), 2) + 7) / 8;
    if (need > len) throw ProtocolError("cpir: value exceeds field width");
    mpz_export(out.data() + (len - need), &count, 1, 1, 1, 0, v.get_mpz_t());
  }
  return out;
}

inline mpz_class import_bytes(std::span<const std::uint8_t> bytes) {
  mpz_class v;
  if (!bytes.empty()) mpz_import(v.get_mpz_t(), bytes.size(), 1, 1, 1, 0, bytes.data());
  return v;
}

inline mpz_class random_below(Rng& rng, const mpz_class& bound, std::size_t byte_len) {
  std::vector<std::uint8_t> buf(byte_len + 8);
  rng.fill(buf);
  mpz_class v = import_bytes(buf);
  return v % bound;
}

}  // namespace cpirdetail

struct CpirKey {
  mpz_class n;
  mpz_class n_squared;
  mpz_class lambda;  // lcm(p-1, q-1)
  mpz_class mu;      // lambda^{-1} mod n
  std::uint32_t modulus_bytes = 0;

  std::uint32_t plaintext_block_bytes() const { return modulus_bytes - 1; }
};

inline CpirKey cpir_keygen(std::uint32_t modulus_bits, Rng& rng) {
  if (modulus_bits < 128 || modulus_bits % 16 != 0)
    throw std::domain_error("cpir: modulus bits must be >= 128 and divisible by 16");
  const std::uint32_t prime_bits = modulus_bits / 2;

  auto gen_prime = [&]() {
    std::vector<std::uint8_t> buf(prime_bits / 8);
    rng.fill(buf);
    mpz_class cand = cpirdetail::import_bytes(buf);
    mpz_setbit(cand.get_mpz_t(), prime_bits - 1);  // keep the product full width
    mpz_class prime;
    mpz_nextprime(prime.get_mpz_t(), cand.get_mpz_t());
    return prime;
  };

  CpirKey key;
  mpz_class p = gen_prime(), q = gen_prime();
  while (q == p) q = gen_prime();
  key.n = p * q;
  key.n_squared = key.n * key.n;
  mpz_class p1 = p - 1, q1 = q - 1;
  mpz_lcm(key.lambda.get_mpz_t(), p1.get_mpz_t(), q1.get_mpz_t());
  if (mpz_invert(key.mu.get_mpz_t(), key.lambda.get_mpz_t(), key.n.get_mpz_t()) == 0)
    throw std::runtime_error("cpir: lambda not invertible, retry keygen");
  key.modulus_bytes = (modulus_bits + 7) / 8;
  return key;
}

inline mpz_class cpir_encrypt(const CpirKey& key, const mpz_class& m, Rng& rng) {
  // g = n+1 shortcut: g^m = 1 + m*n (mod n^2)
  mpz_class gm = (1 + m * key.n) % key.n_squared;
  mpz_class r;
  do {
    r = cpirdetail::random_below(rng, key.n, key.modulus_bytes);
  } while (r == 0 || gcd(r, key.n) != 1);
  mpz_class rn;
  mpz_powm(rn.get_mpz_t(), r.get_mpz_t(), key.n.get_mpz_t(), key.n_squared.get_mpz_t());
  return (gm * rn) % key.n_squared;
}

inline mpz_class cpir_decrypt(const CpirKey& key, const mpz_class& c) {
  mpz_class u;
  mpz_powm(u.get_mpz_t(), c.get_mpz_t(), key.lambda.get_mpz_t(), key.n_squared.get_mpz_t());
  mpz_class l = (u - 1) / key.n;
  return (l * key.mu) % key.n;
}

struct CpirClientState {
  CpirKey key;
  std::uint32_t num_rows = 0;
  std::uint32_t row_width = 0;
};

inline std::size_t cpir_ciphertext_bytes(std::uint32_t modulus_bytes) {
  return 2 * static_cast<std::size_t>(modulus_bytes);
}

// Query blob: u32le n_len | n | u32le num_rows | num_rows ciphertexts of
// 2*n_len bytes each. Deterministic in (num_rows, modulus).
inline std::size_t cpir_query_size(std::uint32_t num_rows, std::uint32_t modulus_bytes) {
  return 8 + modulus_bytes + static_cast<std::size_t>(num_rows) * cpir_ciphertext_bytes(modulus_bytes);
}

inline std::size_t cpir_blocks_per_row(std::uint32_t row_width, std::uint32_t modulus_bytes) {
  const std::uint32_t block = modulus_bytes - 1;
  return (row_width + block - 1) / block;
}

// Response blob: u32le count | count ciphertexts. Deterministic in
// (row_width, modulus).
inline std::size_t cpir_response_size(std::uint32_t row_width, std::uint32_t modulus_bytes) {
  return 4 + cpir_blocks_per_row(row_width, modulus_bytes) * cpir_ciphertext_bytes(modulus_bytes);
}

inline std::vector<std::uint8_t> cpir_gen_query(std::uint32_t row_index, std::uint32_t num_rows,
                                                const CpirKey& key, Rng& rng) {
  if (row_index >= num_rows) throw std::domain_error("cpir: row index out of range");
  std::vector<std::uint8_t> blob;
  blob.reserve(cpir_query_size(num_rows, key.modulus_bytes));
  auto put_u32 = [&](std::uint32_t v) {
    for (int i = 0; i < 4; ++i) blob.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  };
  put_u32(key.modulus_bytes);
  auto n_bytes = cpirdetail::export_fixed(key.n, key.modulus_bytes);
  blob.insert(blob.end(), n_bytes.begin(), n_bytes.end());
  put_u32(num_rows);
  const std::size_t ct_len = cpir_ciphertext_bytes(key.modulus_bytes);
  for (std::uint32_t j = 0; j < num_rows; ++j) {
    mpz_class ct = cpir_encrypt(key, j == row_index ? 1 : 0, rng);
    auto bytes = cpirdetail::export_fixed(ct, ct_len);
    blob.insert(blob.end(), bytes.begin(), bytes.end());
  }
  return blob;
}

inline std::vector<std::uint8_t> cpir_compute(std::span<const std::uint8_t> query_blob,
                                              const PirDatabase& db) {
  auto get_u32 = [&](std::size_t at) {
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(query_blob[at + i]) << (8 * i);
    return v;
  };
  if (query_blob.size() < 8) throw ProtocolError("cpir: malformed query (short header)");
  const std::uint32_t n_len = get_u32(0);
  if (n_len < 16) throw ProtocolError("cpir: malformed query (modulus too small)");
  if (query_blob.size() < 8 + n_len) throw ProtocolError("cpir: malformed query (short modulus)");
  const mpz_class n = cpirdetail::import_bytes(query_blob.subspan(4, n_len));
  const mpz_class n2 = n * n;
  const std::uint32_t num_rows = get_u32(4 + n_len);
  if (num_rows != db.num_rows) throw ProtocolError("cpir: query length != database rows");
  const std::size_t ct_len = cpir_ciphertext_bytes(n_len);
  if (query_blob.size() != cpir_query_size(num_rows, n_len))
    throw ProtocolError("cpir: malformed query (size mismatch)");

  std::vector<mpz_class> cts(num_rows);
  for (std::uint32_t j = 0; j < num_rows; ++j) {
    cts[j] = cpirdetail::import_bytes(query_blob.subspan(8 + n_len + j * ct_len, ct_len));
    if (cts[j] == 0 || cts[j] >= n2) throw ProtocolError("cpir: ciphertext out of range");
  }

  const std::uint32_t block = n_len - 1;
  const std::size_t n_blocks = cpir_blocks_per_row(db.row_width, n_len);
  std::vector<std::uint8_t> out;
  out.reserve(cpir_response_size(db.row_width, n_len));
  auto put_u32 = [&](std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  };
  put_u32(static_cast<std::uint32_t>(n_blocks));
  for (std::size_t b = 0; b < n_blocks; ++b) {
    const std::size_t col0 = b * block;
    const std::size_t len = std::min<std::size_t>(block, db.row_width - col0);
    mpz_class acc = 1;
    for (std::uint32_t j = 0; j < db.num_rows; ++j) {
      auto chunk = db.row(j).subspan(col0, len);
      mpz_class m = cpirdetail::import_bytes(chunk);
      if (m == 0) continue;  // ct^0 contributes nothing to the product
      mpz_class term;
      mpz_powm(term.get_mpz_t(), cts[j].get_mpz_t(), m.get_mpz_t(), n2.get_mpz_t());
      acc = (acc * term) % n2;
    }
    auto bytes = cpirdetail::export_fixed(acc, cpir_ciphertext_bytes(n_len));
    out.insert(out.end(), bytes.begin(), bytes.end());
  }
  return out;
}

inline std::vector<std::uint8_t> cpir_decode(std::span<const std::uint8_t> response_blob,
                                             const CpirClientState& state) {
  if (response_blob.size() != cpir_response_size(state.row_width, state.key.modulus_bytes))
    throw ProtocolError("cpir: malformed response (size mismatch)");
  std::uint32_t count = 0;
  for (int i = 0; i < 4; ++i)
    count |= static_cast<std::uint32_t>(response_blob[i]) << (8 * i);
  const std::uint32_t block = state.key.plaintext_block_bytes();
  const std::size_t ct_len = cpir_ciphertext_bytes(state.key.modulus_bytes);
  if (count != cpir_blocks_per_row(state.row_width, state.key.modulus_bytes))
    throw ProtocolError("cpir: malformed response (block count)");

  std::vector<std::uint8_t> row;
  row.reserve(state.row_width);
  for (std::uint32_t b = 0; b < count; ++b) {
    mpz_class ct = cpirdetail::import_bytes(response_blob.subspan(4 + b * ct_len, ct_len));
    if (ct == 0 || ct >= state.key.n_squared)
      throw ProtocolError("cpir: response ciphertext out of range");
    mpz_class m = cpir_decrypt(state.key, ct);
    const std::size_t len = std::min<std::size_t>(block, state.row_width - b * block);
    auto bytes = cpirdetail::export_fixed(m, len);
    row.insert(row.end(), bytes.begin(), bytes.end());
  }
  return row;
}

}  // namespace pirspv
