#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <limits>
#include <numbers>
#include <random>
#include <string>
#include <vector>

#include "lightvit/photonics.hpp"
#include "lightvit/quant.hpp"

using namespace lightvit;

namespace {

// Raw-formula reference kept deliberately separate from the library code.
double ref_phi(double victim_nm, double aggressor_nm, double q) {
  const double delta = victim_nm / (2.0 * q);
  const double det = victim_nm - aggressor_nm;
  return (delta * delta) / (det * det + delta * delta);
}

std::vector<double> ref_noise(const WavelengthGrid& g, double q, const std::vector<double>& p) {
  std::vector<double> out(static_cast<size_t>(g.n_channels), 0.0);
  for (int i = 0; i < g.n_channels; ++i)
    for (int j = 0; j < g.n_channels; ++j)
      if (j != i)
        out[static_cast<size_t>(i)] +=
            ref_phi(g.wavelength_nm(i), g.wavelength_nm(j), q) * p[static_cast<size_t>(j)];
  return out;
}

}  // namespace

TEST_CASE("grid: symmetric around the center wavelength") {
  WavelengthGrid g{32, 1550.0, 4.8};
  CHECK(g.wavelength_nm(0) == doctest::Approx(1550.0 - 15.5 * 4.8));
  CHECK(g.wavelength_nm(31) == doctest::Approx(1550.0 + 15.5 * 4.8));
  for (int i = 0; i < 16; ++i)
    CHECK(g.wavelength_nm(i) + g.wavelength_nm(31 - i) == doctest::Approx(2.0 * 1550.0).epsilon(1e-15));

  WavelengthGrid odd{3, 1550.0, 4.8};
  CHECK(odd.wavelength_nm(1) == doctest::Approx(1550.0));
}

TEST_CASE("ring geometry: default design resonates near 1550 nm") {
  MrDesign d;
  const double lam = resonant_wavelength_nm(d);
  CHECK(std::fabs(lam - 1550.0) <= 1.0);
  // Independent recompute from the resonance condition.
  const double circumference_nm = 2.0 * std::numbers::pi * d.radius_um * 1000.0;
  CHECK(lam == doctest::Approx(d.n_eff * circumference_nm / d.mode_order).epsilon(1e-15));
}

TEST_CASE("linewidth: pinned value at 1550 nm, Q = 5000") {
  CHECK(linewidth_nm(1550.0, 5000.0) == doctest::Approx(0.155).epsilon(1e-15));
  CHECK(linewidth_nm(1550.0, 2500.0) == doctest::Approx(0.310).epsilon(1e-15));
}

TEST_CASE("crosstalk: pinned Lorentzian value and limits") {
  // Middle channel of a 3-slot grid sits exactly on 1550 nm; neighbours are
  // one 4.8 nm slot away on either side.
  WavelengthGrid g3{3, 1550.0, 4.8};
  CHECK(crosstalk_phi(g3, 5000.0, 1, 2) == doctest::Approx(0.0010416655375633698).epsilon(1e-14));
  CHECK(crosstalk_phi(g3, 5000.0, 1, 0) == doctest::Approx(0.0010416655375633698).epsilon(1e-14));

  // A co-resonant aggressor couples fully.
  WavelengthGrid stacked{2, 1550.0, 0.0};
  CHECK(crosstalk_phi(stacked, 5000.0, 0, 1) == doctest::Approx(1.0));

  // Monotone decay with detuning, sharper rings leak less.
  double prev = 1.0;
  for (double spacing = 0.5; spacing < 24.0; spacing += 0.5) {
    WavelengthGrid g{3, 1550.0, spacing};
    const double phi = crosstalk_phi(g, 5000.0, 1, 2);
    CHECK(phi < prev);
    prev = phi;
  }
  CHECK(crosstalk_phi(g3, 10000.0, 1, 2) < crosstalk_phi(g3, 5000.0, 1, 2));
}

TEST_CASE("noise power: matches raw-formula reference") {
  std::mt19937 rng(91);
  std::uniform_real_distribution<double> dist(0.0, 1.0);
  for (int trial = 0; trial < 20; ++trial) {
    WavelengthGrid g{static_cast<int>(2 + rng() % 40), 1550.0, 1.0 + dist(rng) * 9.0};
    std::vector<double> p(static_cast<size_t>(g.n_channels));
    for (double& v : p) v = dist(rng);
    std::vector<double> want = ref_noise(g, 5000.0, p);
    for (int i = 0; i < g.n_channels; ++i)
      CHECK(noise_power(g, 5000.0, i, p) ==
            doctest::Approx(want[static_cast<size_t>(i)]).epsilon(1e-12));
  }
}

TEST_CASE("resolution: single channel is unbounded, denser grids resolve less") {
  WavelengthGrid lone{1, 1550.0, 4.8};
  CHECK(std::isinf(resolution_levels(lone, 5000.0)));

  double prev = resolution_levels(WavelengthGrid{32, 1550.0, 12.0}, 5000.0);
  for (double spacing : {10.0, 8.0, 6.0, 4.0, 2.0}) {
    const double res = resolution_levels(WavelengthGrid{32, 1550.0, spacing}, 5000.0);
    CHECK(res < prev);
    prev = res;
  }

  WavelengthGrid g{32, 1550.0, 4.8};
  // More channels pack more aggressors around the worst victim.
  CHECK(resolution_levels(WavelengthGrid{64, 1550.0, 4.8}, 5000.0) < resolution_levels(g, 5000.0));
  // Better rings resolve more levels.
  CHECK(resolution_levels(g, 10000.0) > resolution_levels(g, 5000.0));
}

TEST_CASE("calibrate_grid: 32 channels at Q = 5000 support 8-bit operands") {
  WavelengthGrid g = calibrate_grid(32, 5000.0, 8);
  CHECK(g.n_channels == 32);
  CHECK(g.center_nm == doctest::Approx(1550.0));
  CHECK(resolution_levels(g, 5000.0) >= 256.0);
  // The returned spacing is tight: 1% narrower already fails the budget.
  WavelengthGrid narrower{32, 1550.0, g.spacing_nm * 0.99};
  CHECK(resolution_levels(narrower, 5000.0) < 256.0);
  // Halving Q at the calibrated spacing drops below the 8-bit budget.
  CHECK(resolution_levels(g, 2500.0) < 256.0);

  WavelengthGrid again = calibrate_grid(32, 5000.0, 8);
  CHECK(again.spacing_nm == doctest::Approx(g.spacing_nm).epsilon(1e-15));
}

TEST_CASE("calibrate_grid: higher Q tolerates a tighter grid") {
  WavelengthGrid lo = calibrate_grid(32, 5000.0, 8);
  WavelengthGrid hi = calibrate_grid(32, 20000.0, 8);
  CHECK(hi.spacing_nm < lo.spacing_nm);

  WavelengthGrid coarse = calibrate_grid(32, 5000.0, 4);
  CHECK(coarse.spacing_nm < lo.spacing_nm);
}

TEST_CASE("calibrate_grid: infeasible demands raise a diagnostic") {
  try {
    calibrate_grid(1000, 10.0, 8);
    FAIL("expected CalibrationError");
  } catch (const CalibrationError& e) {
    CHECK(std::string(e.what()).find("channel") != std::string::npos);
  }
}

TEST_CASE("codec: ideal converter is a passthrough") {
  for (double v : {0.0, 1.25, -3.5, 1e6}) {
    bool sat = false;
    CHECK(codec_quantize(v, 0, 127.0, &sat) == v);
    CHECK_FALSE(sat);
  }
}

TEST_CASE("codec: pinned 8-bit behaviour") {
  bool sat = false;
  // full_scale 127 with 8 bits makes the step exactly 1.
  CHECK(codec_quantize(3.4, 8, 127.0, &sat) == doctest::Approx(3.0));
  CHECK_FALSE(sat);
  CHECK(codec_quantize(3.5, 8, 127.0, &sat) == doctest::Approx(4.0));
  CHECK(codec_quantize(-3.5, 8, 127.0, &sat) == doctest::Approx(-4.0));
  CHECK(codec_quantize(0.0, 8, 127.0, &sat) == 0.0);
  CHECK(codec_quantize(200.0, 8, 127.0, &sat) == doctest::Approx(127.0));
  CHECK(sat);
  sat = false;
  CHECK(codec_quantize(-200.0, 8, 127.0, &sat) == doctest::Approx(-127.0));
  CHECK(sat);
}

TEST_CASE("codec: idempotent and within half a step in range") {
  std::mt19937 rng(101);
  std::uniform_real_distribution<double> dist(-50.0, 50.0);
  for (int trial = 0; trial < 200; ++trial) {
    const int bits = 2 + static_cast<int>(rng() % 11);
    const double fs = 50.0;
    const double v = dist(rng);
    bool sat = false;
    const double q = codec_quantize(v, bits, fs, &sat);
    const double lsb = fs / code_limit(bits);
    CHECK(std::fabs(q - v) <= lsb * 0.5 + 1e-12);
    bool sat2 = false;
    CHECK(codec_quantize(q, bits, fs, &sat2) == doctest::Approx(q).epsilon(1e-15));
  }
}
