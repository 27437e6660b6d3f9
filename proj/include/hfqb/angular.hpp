#pragma once

// Wigner 6-j symbols evaluated with the Racah single-sum formula using exact
// integer factorials, so results are reliable well past the j ~ 10 range where
// naive floating-point prefactors start cancelling.

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <vector>

#include <boost/multiprecision/cpp_int.hpp>

#include "errors.hpp"
#include "half_int.hpp"

namespace hfqb {

using bigint = boost::multiprecision::cpp_int;
using rational = boost::multiprecision::cpp_rational;

inline double to_double(const rational& r) { return r.convert_to<double>(); }

// { j1 j2 j3 }
// { j4 j5 j6 }
struct sixj_args {
  half_int j1, j2, j3, j4, j5, j6;
};

constexpr bool triangle_ok(half_int a, half_int b, half_int c) {
  if (a.twice() < 0 || b.twice() < 0 || c.twice() < 0) return false;
  if ((a + b + c).twice() % 2 != 0) return false;  // sum must be an integer
  return abs(a - b) <= c && c <= a + b;
}

constexpr bool triads_ok(const sixj_args& a) {
  return triangle_ok(a.j1, a.j2, a.j3) && triangle_ok(a.j1, a.j5, a.j6) &&
         triangle_ok(a.j4, a.j2, a.j6) && triangle_ok(a.j4, a.j5, a.j3);
}

namespace detail {

// 6j = sign(sum) * sqrt(sum^2 * delta_product); both factors exact rationals.
struct racah_parts {
  rational sum;
  rational delta_product;
};

// (a+b-c)! (a-b+c)! (-a+b+c)! / (a+b+c+1)!, arguments in twice-units.
inline rational triangle_delta(const std::vector<bigint>& fact, int ta, int tb, int tc) {
  return rational(fact[(ta + tb - tc) / 2] * fact[(ta - tb + tc) / 2] *
                      fact[(-ta + tb + tc) / 2],
                  fact[(ta + tb + tc) / 2 + 1]);
}

inline racah_parts racah_eval(const sixj_args& a) {
  const int t1 = a.j1.twice(), t2 = a.j2.twice(), t3 = a.j3.twice();
  const int t4 = a.j4.twice(), t5 = a.j5.twice(), t6 = a.j6.twice();

  // Triad sums and opposite-pair sums, all integers once the triads pass.
  const int s[4] = {(t1 + t2 + t3) / 2, (t1 + t5 + t6) / 2, (t4 + t2 + t6) / 2,
                    (t4 + t5 + t3) / 2};
  const int p[3] = {(t1 + t2 + t4 + t5) / 2, (t2 + t3 + t5 + t6) / 2,
                    (t1 + t3 + t4 + t6) / 2};

  const int kmin = std::max({s[0], s[1], s[2], s[3]});
  const int kmax = std::min({p[0], p[1], p[2]});

  std::vector<bigint> fact(static_cast<std::size_t>(kmax) + 2, 1);
  for (std::size_t n = 2; n < fact.size(); ++n) fact[n] = fact[n - 1] * static_cast<int>(n);

  rational sum = 0;
  for (int k = kmin; k <= kmax; ++k) {
    bigint denom = 1;
    for (int si : s) denom *= fact[k - si];
    for (int pi : p) denom *= fact[pi - k];
    rational term(fact[k + 1], denom);
    sum += (k % 2 != 0) ? -term : term;
  }

  rational deltas = triangle_delta(fact, t1, t2, t3) * triangle_delta(fact, t1, t5, t6) *
                    triangle_delta(fact, t4, t2, t6) * triangle_delta(fact, t4, t5, t3);
  return {sum, deltas};
}

}  // namespace detail

// Signed square: |{...}|^2 carrying the sign of the symbol. Exact.
inline rational sixj_signed_square(const sixj_args& a) {
  if (!triads_ok(a)) return 0;
  const auto parts = detail::racah_eval(a);
  rational sq = parts.sum * parts.sum * parts.delta_product;
  return parts.sum < 0 ? -sq : sq;
}

inline rational sixj_exact_square(const sixj_args& a) {
  rational sq = sixj_signed_square(a);
  return sq < 0 ? -sq : sq;
}

inline double sixj(const sixj_args& a) {
  const rational sq = sixj_signed_square(a);
  if (sq == 0) return 0.0;
  const double mag = std::sqrt(to_double(sq < 0 ? -sq : sq));
  return sq < 0 ? -mag : mag;
}

inline double sixj(half_int j1, half_int j2, half_int j3, half_int j4, half_int j5,
                   half_int j6) {
  return sixj({j1, j2, j3, j4, j5, j6});
}

}  // namespace hfqb
