#pragma once

// Time-domain polarization signal built from a beat spectrum: finite pulse
// smearing, the depolarization factor g2(t), and the mapping to the linear
// polarization degree seen by the detection geometry.

#include <cmath>
#include <numbers>
#include <optional>
#include <random>
#include <span>
#include <vector>

#include "errors.hpp"
#include "hyperfine.hpp"

namespace hfqb {

// Frequencies are MHz, times ns: omega = 2 pi nu * 1e-3 rad/ns.
inline constexpr double omega_per_MHz = 2.0 * std::numbers::pi * 1e-3;

// Amplitude reduction of a beat at nu for a square excitation pulse of width W:
// 2 (1 - cos(omega W)) / (omega W)^2.
inline double smear_factor(double nu_MHz, double width_ns) {
  if (width_ns < 0.0) throw invalid_argument("pulse width must be >= 0");
  const double x = omega_per_MHz * nu_MHz * width_ns;
  if (std::abs(x) < 1e-6) return 1.0;
  // cancellation-free form of 2 (1 - cos x) / x^2
  const double s = std::sin(0.5 * x) / (0.5 * x);
  return s * s;
}

struct pulse_model {
  double width_ns = 0.0;      // square pulse width W
  double dt_offset_ns = 0.0;  // time-origin offset: model evaluated at t + dt
};

inline double g2(const beat_spectrum& spec, const pulse_model& pulse, double t_ns) {
  const double tau = t_ns + pulse.dt_offset_ns;
  double g = spec.constant;
  for (const beat_component& c : spec.components)
    g += c.amplitude * smear_factor(c.nu_MHz, pulse.width_ns) * std::cos(omega_per_MHz * c.nu_MHz * tau);
  return g;
}

struct detection_geometry {
  double h2 = -0.25;  // detection efficiency ratio h(2)
  double a0 = -0.8;   // initial alignment a(0)
};

inline double polarization_general(const detection_geometry& geom, double alignment) {
  const double ha = geom.h2 * alignment;
  if (4.0 + ha == 0.0) throw domain_error("polarization undefined: 4 + h2*alignment = 0");
  return 3.0 * ha / (4.0 + ha);
}

// Cs case, h2 = -1/4 and a(t) = -4/5 g2(t): P_L reduces to 3 g / (20 + g).
inline double polarization_cs_from_g2(double g) { return 3.0 * g / (20.0 + g); }

inline double polarization_cs(const beat_spectrum& spec, const pulse_model& pulse, double t_ns) {
  return polarization_cs_from_g2(g2(spec, pulse, t_ns));
}

struct sim_point {
  double t_ns;
  double pl;                    // polarization degree, fraction
  std::optional<double> sigma;  // set when a noise model is active
};

// Evaluates P_L on the given delays; optional additive Gaussian noise with
// standard deviation noise_sigma, reproducible under a fixed seed.
inline std::vector<sim_point> simulate(const hyperfine_system& sys, const pulse_model& pulse,
                                       std::span<const double> times_ns,
                                       std::optional<double> noise_sigma = {},
                                       std::optional<std::uint64_t> seed = {}) {
  if (times_ns.empty()) throw invalid_argument("no sample times given");
  if (noise_sigma && *noise_sigma < 0.0) throw invalid_argument("noise sigma must be >= 0");
  if (pulse.width_ns < 0.0) throw invalid_argument("pulse width must be >= 0");

  const beat_spectrum spec = make_beat_spectrum(sys);
  std::mt19937_64 rng(seed ? *seed : std::random_device{}());
  std::normal_distribution<double> gauss(0.0, 1.0);

  std::vector<sim_point> out;
  out.reserve(times_ns.size());
  for (double t : times_ns) {
    sim_point p{t, polarization_cs(spec, pulse, t), std::nullopt};
    if (noise_sigma) {
      if (*noise_sigma > 0.0) p.pl += *noise_sigma * gauss(rng);
      p.sigma = *noise_sigma;
    }
    out.push_back(p);
  }
  return out;
}

}  // namespace hfqb
