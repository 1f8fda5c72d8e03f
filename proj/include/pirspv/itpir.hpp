#pragma once

#include <cstdint>
#include <set>
#include <span>
#include <stdexcept>
#include <vector>

#include "pirspv/gf256.hpp"
#include "pirspv/pirdb.hpp"
#include "pirspv/rng.hpp"

namespace pirspv {

struct ProtocolError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Multi-server PIR parameters: ell servers with fixed evaluation points,
// privacy level t, expected responders k, Byzantine correction budget v.
// t = 0 is the degenerate unblinded configuration used for single-server
// cost accounting.
struct PirParams {
  std::uint32_t ell = 3;
  std::uint32_t t = 1;
  std::uint32_t k = 3;
  std::uint32_t v = 0;
  std::vector<gf::Elem> alphas;  // one per server, pairwise distinct, nonzero

  static PirParams make(std::uint32_t ell, std::uint32_t t, std::uint32_t v) {
    PirParams p;
    p.ell = ell;
    p.t = t;
    p.k = ell;
    p.v = v;
    p.alphas.resize(ell);
    for (std::uint32_t i = 0; i < ell; ++i) p.alphas[i] = static_cast<gf::Elem>(i + 1);
    p.validate();
    return p;
  }

  void validate() const {
    if (ell == 0 || ell > 255) throw std::domain_error("pir params: need 1..255 servers");
    if (!(t < k && k <= ell)) throw std::domain_error("pir params: require t < k <= ell");
    if (k < t + 2 * v + 1)
      throw std::domain_error("pir params: Byzantine budget exceeds unique-decoding radius");
    if (alphas.size() != ell) throw std::domain_error("pir params: one alpha per server");
    std::set<gf::Elem> seen;
    for (gf::Elem a : alphas) {
      if (a == 0) throw std::domain_error("pir params: alphas must be nonzero");
      if (!seen.insert(a).second) throw std::domain_error("pir params: alphas must be distinct");
    }
  }
};

struct ItPirQuery {
  std::uint32_t server_index = 0;
  std::vector<std::uint8_t> shares;  // one field element per database row
};

struct ItPirResponse {
  std::uint32_t server_index = 0;
  std::vector<std::uint8_t> data;  // row_width field elements
};

// One random degree-t polynomial per database row, with f_j(0) = 1 exactly
// for the requested row; server s receives the evaluations at alpha_s.
inline std::vector<ItPirQuery> itpir_gen_queries(std::uint32_t row_index, std::uint32_t num_rows,
                                                 const PirParams& params, Rng& rng) {
  params.validate();
  if (row_index >= num_rows) throw std::domain_error("itpir: row index out of range");

  std::vector<ItPirQuery> queries(params.ell);
  for (std::uint32_t s = 0; s < params.ell; ++s) {
    queries[s].server_index = s;
    queries[s].shares.resize(num_rows);
  }
  std::vector<gf::Elem> coeffs(params.t + 1);
  for (std::uint32_t j = 0; j < num_rows; ++j) {
    coeffs[0] = (j == row_index) ? 1 : 0;
    for (std::uint32_t d = 1; d <= params.t; ++d) coeffs[d] = rng.next_byte();
    for (std::uint32_t s = 0; s < params.ell; ++s) {
      gf::Elem x = params.alphas[s];
      gf::Elem acc = 0;
      for (std::uint32_t d = params.t + 1; d-- > 0;)
        acc = static_cast<gf::Elem>(gf::mul(acc, x) ^ coeffs[d]);
      queries[s].shares[j] = acc;
    }
  }
  return queries;
}

// response[c] = sum_j shares[j] * db[j][c] over GF(2^8).
inline std::vector<std::uint8_t> itpir_compute(std::span<const std::uint8_t> shares,
                                               const PirDatabase& db) {
  if (shares.size() != db.num_rows) throw ProtocolError("itpir: query length != database rows");
  std::vector<std::uint8_t> out(db.row_width, 0);
  const auto& tables = gf::detail::tables();
  for (std::uint32_t j = 0; j < db.num_rows; ++j) {
    const gf::Elem s = shares[j];
    if (s == 0) continue;
    const unsigned log_s = tables.log[s];
    const std::uint8_t* row = db.payload.data() + static_cast<std::size_t>(j) * db.row_width;
    for (std::uint32_t c = 0; c < db.row_width; ++c) {
      const std::uint8_t b = row[c];
      if (b != 0) out[c] ^= tables.exp[log_s + tables.log[b]];
    }
  }
  return out;
}

// Column-wise reconstruction at zero. With v = 0 any t+1 responses
// suffice; with v > 0 at least t + 2v + 1 responses are required and up
// to v corrupted ones are corrected.
inline std::vector<std::uint8_t> itpir_decode(const std::vector<ItPirResponse>& responses,
                                              const PirParams& params) {
  if (responses.empty()) throw ProtocolError("itpir: no responses");
  const std::size_t width = responses[0].data.size();
  std::vector<gf::Elem> xs;
  for (const auto& r : responses) {
    if (r.server_index >= params.ell) throw ProtocolError("itpir: unknown server index");
    if (r.data.size() != width) throw ProtocolError("itpir: inconsistent response widths");
    xs.push_back(params.alphas[r.server_index]);
  }
  std::set<gf::Elem> distinct(xs.begin(), xs.end());
  if (distinct.size() != xs.size()) throw ProtocolError("itpir: duplicate server responses");

  const std::size_t needed = params.v > 0 ? params.t + 2 * params.v + 1 : params.t + 1;
  if (responses.size() < needed)
    throw ProtocolError("itpir: insufficient responses for reconstruction");

  std::vector<std::uint8_t> row(width);
  if (params.v == 0) {
    const auto weights = gf::lagrange_weights_at_zero(
        std::span<const gf::Elem>(xs.data(), params.t + 1));
    for (std::size_t c = 0; c < width; ++c) {
      gf::Elem acc = 0;
      for (std::size_t i = 0; i <= params.t; ++i)
        acc = static_cast<gf::Elem>(acc ^ gf::mul(weights[i], responses[i].data[c]));
      row[c] = acc;
    }
  } else {
    std::vector<gf::Point> pts(xs.size());
    for (std::size_t c = 0; c < width; ++c) {
      for (std::size_t i = 0; i < xs.size(); ++i) pts[i] = {xs[i], responses[i].data[c]};
      gf::Poly f = gf::berlekamp_welch(pts, params.t, params.v);
      row[c] = f.coeffs.empty() ? 0 : f.coeffs[0];
    }
  }
  return row;
}

// Full-download baseline: the whole payload is the "response".
inline std::vector<std::uint8_t> trivial_fetch(const PirDatabase& db) { return db.payload; }

}  // namespace pirspv
