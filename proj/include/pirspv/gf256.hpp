#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <stdexcept>
#include <utility>
#include <vector>

namespace pirspv::gf {

using Elem = std::uint8_t;

// Reduction polynomial x^8 + x^4 + x^3 + x + 1 (0x11b), generator 0x03.
inline constexpr unsigned kReductionPoly = 0x11b;
inline constexpr Elem kGenerator = 0x03;

namespace detail {

struct Tables {
  Elem exp[512];
  Elem log[256];

  Tables() {
    unsigned x = 1;
    for (int i = 0; i < 255; ++i) {
      exp[i] = static_cast<Elem>(x);
      log[x] = static_cast<Elem>(i);
      // multiply x by the generator 0x03 = x * 2 + x
      unsigned x2 = x << 1;
      if (x2 & 0x100) x2 ^= kReductionPoly;
      x = x2 ^ x;
    }
    for (int i = 255; i < 512; ++i) exp[i] = exp[i - 255];
    log[0] = 0;  // unused entry
  }
};

inline const Tables& tables() {
  static const Tables t;
  return t;
}

}  // namespace detail

inline Elem add(Elem a, Elem b) { return a ^ b; }

inline Elem mul(Elem a, Elem b) {
  if (a == 0 || b == 0) return 0;
  const auto& t = detail::tables();
  return t.exp[t.log[a] + t.log[b]];
}

inline Elem inv(Elem a) {
  if (a == 0) throw std::domain_error("gf256: zero has no inverse");
  const auto& t = detail::tables();
  return t.exp[255 - t.log[a]];
}

inline Elem div(Elem a, Elem b) { return mul(a, inv(b)); }

// Polynomial over GF(2^8), coefficients lowest degree first.
struct Poly {
  std::vector<Elem> coeffs;

  Elem eval(Elem x) const {
    Elem acc = 0;
    for (std::size_t i = coeffs.size(); i-- > 0;) acc = static_cast<Elem>(mul(acc, x) ^ coeffs[i]);
    return acc;
  }

  std::size_t degree() const {
    std::size_t d = coeffs.size();
    while (d > 0 && coeffs[d - 1] == 0) --d;
    return d == 0 ? 0 : d - 1;
  }

  bool operator==(const Poly& other) const {
    std::size_t n = std::max(coeffs.size(), other.coeffs.size());
    for (std::size_t i = 0; i < n; ++i) {
      Elem a = i < coeffs.size() ? coeffs[i] : 0;
      Elem b = i < other.coeffs.size() ? other.coeffs[i] : 0;
      if (a != b) return false;
    }
    return true;
  }
};

using Point = std::pair<Elem, Elem>;

namespace detail {

inline void check_xs(std::span<const Point> points) {
  for (std::size_t i = 0; i < points.size(); ++i) {
    if (points[i].first == 0) throw std::domain_error("gf256: evaluation point must be nonzero");
    for (std::size_t j = i + 1; j < points.size(); ++j)
      if (points[i].first == points[j].first)
        throw std::domain_error("gf256: duplicate evaluation points");
  }
}

// Gaussian elimination over GF(2^8). Returns a particular solution of
// A x = b (free variables set to zero), or nullopt if inconsistent.
inline std::optional<std::vector<Elem>> solve_linear(std::vector<std::vector<Elem>> a,
                                                     std::vector<Elem> b) {
  const std::size_t rows = a.size();
  const std::size_t cols = rows == 0 ? 0 : a[0].size();
  std::vector<std::size_t> pivot_col;
  std::size_t r = 0;
  for (std::size_t c = 0; c < cols && r < rows; ++c) {
    std::size_t sel = r;
    while (sel < rows && a[sel][c] == 0) ++sel;
    if (sel == rows) continue;
    std::swap(a[sel], a[r]);
    std::swap(b[sel], b[r]);
    Elem piv_inv = inv(a[r][c]);
    for (std::size_t j = c; j < cols; ++j) a[r][j] = mul(a[r][j], piv_inv);
    b[r] = mul(b[r], piv_inv);
    for (std::size_t i = 0; i < rows; ++i) {
      if (i == r || a[i][c] == 0) continue;
      Elem f = a[i][c];
      for (std::size_t j = c; j < cols; ++j) a[i][j] = static_cast<Elem>(a[i][j] ^ mul(f, a[r][j]));
      b[i] = static_cast<Elem>(b[i] ^ mul(f, b[r]));
    }
    pivot_col.push_back(c);
    ++r;
  }
  for (std::size_t i = r; i < rows; ++i)
    if (b[i] != 0) return std::nullopt;  // 0 = nonzero row: inconsistent
  std::vector<Elem> x(cols, 0);
  for (std::size_t i = 0; i < pivot_col.size(); ++i) x[pivot_col[i]] = b[i];
  return x;
}

}  // namespace detail

// Value at zero of the unique degree <= t polynomial through the first
// t+1 points. Extra consistent points do not change the result.
inline Elem lagrange_at_zero(std::span<const Point> points, std::size_t t) {
  detail::check_xs(points);
  if (points.size() < t + 1)
    throw std::invalid_argument("gf256: need at least t+1 points to interpolate");
  Elem acc = 0;
  for (std::size_t i = 0; i <= t; ++i) {
    // L_i(0) = prod_{j != i} x_j / (x_j - x_i); subtraction is XOR here.
    Elem num = 1, den = 1;
    for (std::size_t j = 0; j <= t; ++j) {
      if (j == i) continue;
      num = mul(num, points[j].first);
      den = mul(den, static_cast<Elem>(points[j].first ^ points[i].first));
    }
    acc = static_cast<Elem>(acc ^ mul(points[i].second, div(num, den)));
  }
  return acc;
}

// Lagrange basis weights at zero for a fixed set of abscissas; callers that
// reconstruct many columns against the same point set reuse these.
inline std::vector<Elem> lagrange_weights_at_zero(std::span<const Elem> xs) {
  std::vector<Elem> w(xs.size());
  for (std::size_t i = 0; i < xs.size(); ++i) {
    Elem num = 1, den = 1;
    for (std::size_t j = 0; j < xs.size(); ++j) {
      if (j == i) continue;
      num = mul(num, xs[j]);
      den = mul(den, static_cast<Elem>(xs[j] ^ xs[i]));
    }
    w[i] = div(num, den);
  }
  return w;
}

struct DecodeError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Berlekamp-Welch unique decoding: recovers the degree <= t polynomial
// agreeing with at least k - v of the k supplied points. Requires
// k >= t + 2v + 1. Throws DecodeError when no such polynomial exists.
inline Poly berlekamp_welch(std::span<const Point> points, std::size_t t, std::size_t v) {
  detail::check_xs(points);
  const std::size_t k = points.size();
  if (k < t + 2 * v + 1)
    throw std::invalid_argument("gf256: berlekamp_welch needs k >= t + 2v + 1 points");

  Poly q, e;
  if (v == 0) {
    // Plain interpolation through the first t+1 points.
    std::vector<std::vector<Elem>> a(t + 1, std::vector<Elem>(t + 1));
    std::vector<Elem> b(t + 1);
    for (std::size_t i = 0; i <= t; ++i) {
      Elem p = 1;
      for (std::size_t j = 0; j <= t; ++j) {
        a[i][j] = p;
        p = mul(p, points[i].first);
      }
      b[i] = points[i].second;
    }
    auto sol = detail::solve_linear(std::move(a), std::move(b));
    if (!sol) throw DecodeError("gf256: interpolation system unsolvable");
    q.coeffs = *sol;
    e.coeffs = {1};
  } else {
    // Unknowns: q_0..q_{t+v}, e_0..e_{v-1}; E is monic of degree v.
    // Row i: sum_m q_m x_i^m  -  y_i * sum_{m<v} e_m x_i^m  =  y_i x_i^v.
    const std::size_t nq = t + v + 1;
    const std::size_t ne = v;
    std::vector<std::vector<Elem>> a(k, std::vector<Elem>(nq + ne));
    std::vector<Elem> b(k);
    for (std::size_t i = 0; i < k; ++i) {
      Elem x = points[i].first, y = points[i].second;
      Elem p = 1;
      for (std::size_t m = 0; m < nq; ++m) {
        a[i][m] = p;
        p = mul(p, x);
      }
      p = 1;
      for (std::size_t m = 0; m < ne; ++m) {
        a[i][nq + m] = mul(y, p);  // subtraction == addition in GF(2^8)
        p = mul(p, x);
      }
      b[i] = mul(y, p);  // p == x^v after the loop
    }
    auto sol = detail::solve_linear(std::move(a), std::move(b));
    if (!sol) throw DecodeError("gf256: error locator system inconsistent (too many corruptions)");
    q.coeffs.assign(sol->begin(), sol->begin() + nq);
    e.coeffs.assign(sol->begin() + nq, sol->end());
    e.coeffs.push_back(1);  // monic
  }

  // Divide Q by E; a nonzero remainder means no codeword within radius v.
  std::vector<Elem> rem = q.coeffs;
  rem.resize(std::max(rem.size(), e.coeffs.size()), 0);
  std::size_t ed = e.coeffs.size() - 1;
  std::vector<Elem> quot(rem.size() > ed ? rem.size() - ed : 1, 0);
  for (std::size_t i = rem.size(); i-- > ed;) {
    Elem f = rem[i];  // leading E coeff is 1
    if (f == 0) continue;
    quot[i - ed] = f;
    for (std::size_t j = 0; j <= ed; ++j)
      rem[i - ed + j] = static_cast<Elem>(rem[i - ed + j] ^ mul(f, e.coeffs[j]));
  }
  for (Elem c : rem)
    if (c != 0) throw DecodeError("gf256: residual after error division, decode failed");

  Poly f{std::move(quot)};
  if (f.degree() > t) throw DecodeError("gf256: recovered polynomial exceeds degree bound");
  std::size_t agree = 0;
  for (const auto& [x, y] : points)
    if (f.eval(x) == y) ++agree;
  if (agree + v < k) throw DecodeError("gf256: recovered polynomial disagrees with too many points");
  return f;
}

}  // namespace pirspv::gf
