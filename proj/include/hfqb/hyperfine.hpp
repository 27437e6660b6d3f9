#pragma once

// Hyperfine structure of a fine-structure level (I, J) with magnetic-dipole
// constant A and electric-quadrupole constant B, plus the quantum-beat
// spectrum that level produces in a polarization-resolved decay signal.

#include <cmath>
#include <vector>

#include "angular.hpp"
#include "errors.hpp"
#include "half_int.hpp"

namespace hfqb {

struct hyperfine_system {
  half_int I;
  half_int J;
  double A_MHz = 0.0;
  double B_MHz = 0.0;

  hyperfine_system(half_int I_, half_int J_, double A = 0.0, double B = 0.0)
      : I(I_), J(J_), A_MHz(A), B_MHz(B) {
    if (I.twice() < 0 || J.twice() < 0) throw domain_error("spins must be non-negative");
    if (B_MHz != 0.0 && (I.twice() < 2 || J.twice() < 2))
      throw domain_error("quadrupole constant B requires I >= 1 and J >= 1");
  }
};

inline std::vector<half_int> f_values(half_int I, half_int J) {
  if (I.twice() < 0 || J.twice() < 0) throw domain_error("spins must be non-negative");
  std::vector<half_int> fs;
  for (half_int f = abs(I - J); f <= I + J; f = f + half_int(1)) fs.push_back(f);
  return fs;
}

// E_F = a*A + b*B with a, b exact rationals (Casimir formula).
struct hf_coeffs {
  rational a;
  rational b;
};

namespace detail {
inline rational jsq(half_int x) {  // x(x+1)
  return rational(x.twice() * (x.twice() + 2), 4);
}
}  // namespace detail

inline hf_coeffs energy_shift_coeffs(half_int I, half_int J, half_int F) {
  if (!triangle_ok(I, J, F))
    throw domain_error("F = " + to_string(F) + " does not couple I = " + to_string(I) +
                       " with J = " + to_string(J));
  const rational K = detail::jsq(F) - detail::jsq(I) - detail::jsq(J);
  hf_coeffs c;
  c.a = K / 2;
  if (I.twice() >= 2 && J.twice() >= 2) {
    // denominator 2I(2I-1) * 2J(2J-1), an integer in twice-units
    const int denom = I.twice() * (I.twice() - 1) * J.twice() * (J.twice() - 1);
    c.b = (rational(3, 2) * K * (K + 1) - 2 * detail::jsq(I) * detail::jsq(J)) / denom;
  } else {
    c.b = 0;  // no quadrupole interaction for I < 1 or J < 1
  }
  return c;
}

inline double energy_shift(const hyperfine_system& sys, half_int F) {
  const hf_coeffs c = energy_shift_coeffs(sys.I, sys.J, F);
  return to_double(c.a) * sys.A_MHz + to_double(c.b) * sys.B_MHz;
}

// One beat between hyperfine levels F < Fprime.
struct beat_component {
  half_int F;
  half_int Fprime;
  double nu_MHz;      // |E(Fprime) - E(F)| / h
  double amplitude;   // weight of cos(2 pi nu t), independent of A and B
};

// g2(t) = constant + sum_k amplitude_k cos(2 pi nu_k t); constant + sum = 1.
struct beat_spectrum {
  double constant = 1.0;
  std::vector<beat_component> components;
};

inline beat_spectrum make_beat_spectrum(const hyperfine_system& sys) {
  // A rank-2 multipole needs J >= 1; below that no alignment can evolve and
  // the depolarization factor stays at 1.
  if (sys.J.twice() < 2) return {};

  const std::vector<half_int> fs = f_values(sys.I, sys.J);
  const int wI = sys.I.twice() + 1;

  rational constant = 0;
  beat_spectrum spec;
  for (std::size_t i = 0; i < fs.size(); ++i) {
    const int wF = fs[i].twice() + 1;
    constant += rational(wF * wF, wI) * sixj_exact_square({fs[i], fs[i], 2, sys.J, sys.J, sys.I});
    for (std::size_t k = i + 1; k < fs.size(); ++k) {
      const rational sq = sixj_exact_square({fs[i], fs[k], 2, sys.J, sys.J, sys.I});
      if (sq == 0) continue;
      const int wFp = fs[k].twice() + 1;
      const hf_coeffs lo = energy_shift_coeffs(sys.I, sys.J, fs[i]);
      const hf_coeffs hi = energy_shift_coeffs(sys.I, sys.J, fs[k]);
      beat_component c;
      c.F = fs[i];
      c.Fprime = fs[k];
      c.amplitude = to_double(rational(2 * wF * wFp, wI) * sq);
      c.nu_MHz = std::abs(to_double(hi.a - lo.a) * sys.A_MHz + to_double(hi.b - lo.b) * sys.B_MHz);
      spec.components.push_back(c);
    }
  }
  spec.constant = to_double(constant);
  return spec;
}

}  // namespace hfqb
