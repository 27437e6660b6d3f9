#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <numbers>
#include <vector>

#include "hfqb/beat_model.hpp"

using hfqb::beat_spectrum;
using hfqb::detection_geometry;
using hfqb::g2;
using hfqb::half_int;
using hfqb::hyperfine_system;
using hfqb::make_beat_spectrum;
using hfqb::polarization_cs;
using hfqb::polarization_cs_from_g2;
using hfqb::polarization_general;
using hfqb::pulse_model;
using hfqb::simulate;
using hfqb::smear_factor;

namespace {
const hyperfine_system cs{half_int::from_twice(7), half_int::from_twice(3), 7.42, 0.14};
}

TEST_CASE("smear factor", "[beat_model]") {
  CHECK(smear_factor(22.16, 0.0) == 1.0);
  CHECK(smear_factor(0.0, 3.0) == 1.0);

  // omega W = pi at nu = 500 MHz, W = 1 ns
  CHECK_THAT(smear_factor(500.0, 1.0),
             Catch::Matchers::WithinAbs(4.0 / (std::numbers::pi * std::numbers::pi), 1e-15));

  // continuous across the small-argument branch and as W -> 0
  const double nu_edge = 1e-6 / hfqb::omega_per_MHz;  // omega W exactly at the branch point
  CHECK_THAT(smear_factor(nu_edge * 1.0000001, 1.0), Catch::Matchers::WithinAbs(1.0, 1e-12));
  CHECK_THAT(smear_factor(51.8, 1e-7), Catch::Matchers::WithinAbs(1.0, 1e-10));

  // decreases with pulse width over the first beat period
  double prev = 1.0;
  for (double w = 0.5; w <= 8.0; w += 0.5) {
    const double s = smear_factor(51.8, w);
    CHECK(s < prev);
    prev = s;
  }

  CHECK_THROWS_AS(smear_factor(22.16, -0.1), hfqb::invalid_argument);
}

TEST_CASE("depolarization factor g2", "[beat_model]") {
  const beat_spectrum spec = make_beat_spectrum(cs);
  CHECK_THAT(g2(spec, {0.0, 0.0}, 0.0), Catch::Matchers::WithinAbs(1.0, 1e-14));
  CHECK_THAT(g2(spec, {0.0, 0.0}, 10.0), Catch::Matchers::WithinAbs(-0.2540401113, 1e-8));

  // dt enters only as a shift of the time axis
  CHECK(g2(spec, {0.0, 1.5}, 8.5) == g2(spec, {0.0, 0.0}, 10.0));

  // bounded by the worst-case sum of weights
  for (double t = 0.0; t <= 130.0; t += 0.37) {
    const double v = g2(spec, {2.4, 0.0}, t);
    CHECK(std::abs(v) <= 1.0 + 1e-12);
  }
}

TEST_CASE("g2 matches the published numeric expansion", "[beat_model]") {
  const beat_spectrum spec = make_beat_spectrum(cs);
  const auto printed = [](double t) {
    const double w = 2.0 * std::numbers::pi * 1e-3;
    return 0.2187 + 0.09375 * std::cos(w * 22.16 * t) + 0.2009 * std::cos(w * 51.80 * t) +
           0.0375 * std::cos(w * 29.64 * t) + 0.16042 * std::cos(w * 66.84 * t) +
           0.28875 * std::cos(w * 37.20 * t);
  };
  for (double t = 0.0; t <= 120.0; t += 2.5)
    CHECK_THAT(g2(spec, {0.0, 0.0}, t), Catch::Matchers::WithinAbs(printed(t), 1e-4));
}

TEST_CASE("time scaling of the constants", "[beat_model]") {
  // frequencies are linear in (A, B): scaling both is a rescaling of time
  const beat_spectrum s1 = make_beat_spectrum(cs);
  const beat_spectrum s3 =
      make_beat_spectrum(hyperfine_system(cs.I, cs.J, 3.0 * cs.A_MHz, 3.0 * cs.B_MHz));
  for (double t = 0.0; t <= 90.0; t += 1.3)
    CHECK_THAT(g2(s3, {0.0, 0.0}, t), Catch::Matchers::WithinAbs(g2(s1, {0.0, 0.0}, 3.0 * t), 1e-12));
}

TEST_CASE("polarization mappings", "[beat_model]") {
  CHECK_THAT(polarization_cs_from_g2(1.0), Catch::Matchers::WithinAbs(1.0 / 7.0, 1e-15));
  CHECK(polarization_cs_from_g2(0.0) == 0.0);
  CHECK_THAT(polarization_cs_from_g2(1837.0 / 8400.0),
             Catch::Matchers::WithinAbs(5511.0 / 169837.0, 1e-15));

  CHECK_THAT(polarization_general({-0.25, -0.8}, 0.16), Catch::Matchers::WithinAbs(-1.0 / 33.0, 1e-15));
  CHECK_THROWS_AS(polarization_general({-0.25, -0.8}, 16.0), hfqb::domain_error);

  // the Cs shortcut is the general mapping with a(t) = -4/5 g2(t)
  const beat_spectrum spec = make_beat_spectrum(cs);
  const detection_geometry geom{};
  for (double t = 0.0; t <= 100.0; t += 3.1) {
    const double g = g2(spec, {2.4, 0.02}, t);
    CHECK_THAT(polarization_cs(spec, {2.4, 0.02}, t),
               Catch::Matchers::WithinAbs(polarization_general(geom, geom.a0 * g), 1e-14));
  }

  // strictly increasing in g
  double prev = polarization_cs_from_g2(-1.0);
  for (double g = -0.9; g <= 1.0; g += 0.1) {
    const double p = polarization_cs_from_g2(g);
    CHECK(p > prev);
    prev = p;
  }
}

TEST_CASE("polarization sign flips near the observed nodes", "[beat_model]") {
  const beat_spectrum spec = make_beat_spectrum(cs);
  CHECK(polarization_cs(spec, {0.0, 0.0}, 6.5) * polarization_cs(spec, {0.0, 0.0}, 7.0) < 0.0);
  CHECK(polarization_cs(spec, {0.0, 0.0}, 63.0) * polarization_cs(spec, {0.0, 0.0}, 64.0) < 0.0);
}

TEST_CASE("simulate", "[beat_model]") {
  std::vector<double> times;
  for (double t = 0.0; t <= 60.0; t += 2.0) times.push_back(t);
  const pulse_model pulse{2.4, 0.02};

  const auto clean = simulate(cs, pulse, times);
  REQUIRE(clean.size() == times.size());
  const beat_spectrum spec = make_beat_spectrum(cs);
  for (std::size_t i = 0; i < clean.size(); ++i) {
    CHECK(clean[i].pl == polarization_cs(spec, pulse, times[i]));
    CHECK(!clean[i].sigma);
  }

  const auto a = simulate(cs, pulse, times, 0.01, 42);
  const auto b = simulate(cs, pulse, times, 0.01, 42);
  const auto c = simulate(cs, pulse, times, 0.01, 43);
  REQUIRE(a.size() == b.size());
  bool all_equal_ac = true;
  for (std::size_t i = 0; i < a.size(); ++i) {
    CHECK(a[i].pl == b[i].pl);  // same seed: bit-identical
    REQUIRE(a[i].sigma);
    CHECK(*a[i].sigma == 0.01);
    if (a[i].pl != c[i].pl) all_equal_ac = false;
  }
  CHECK(!all_equal_ac);

  const auto silent = simulate(cs, pulse, times, 0.0, 7);
  for (std::size_t i = 0; i < silent.size(); ++i) {
    CHECK(silent[i].pl == clean[i].pl);
    CHECK(*silent[i].sigma == 0.0);
  }

  CHECK_THROWS_AS(simulate(cs, pulse, {}), hfqb::invalid_argument);
  CHECK_THROWS_AS(simulate(cs, pulse, times, -0.01), hfqb::invalid_argument);
  CHECK_THROWS_AS(simulate(cs, {-1.0, 0.0}, times), hfqb::invalid_argument);
}
