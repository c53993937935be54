#pragma once
// Microring device layer: resonance, linewidth, inter-channel crosstalk,
// wavelength-grid calibration and the converter codec.

#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>

namespace lightvit {

// ===== wavelength grid =====

/// Uniform WDM grid centered on center_nm. Channel i sits at
/// center + (i - (n-1)/2) * spacing.
struct WavelengthGrid {
  int n_channels = 32;
  double center_nm = 1550.0;
  double spacing_nm = 4.8;

  double wavelength_nm(int ch) const;
};

// ===== microring geometry =====

/// Ring defaults: 5 um radius, 400 nm input waveguide, 760 nm ring
/// waveguide. n_eff and the azimuthal order are chosen so the fundamental
/// resonance lands on the 1550 nm grid center.
struct MrDesign {
  double radius_um = 5.0;
  double input_wg_width_nm = 400.0;
  double ring_wg_width_nm = 760.0;
  double n_eff = 2.3682;
  int mode_order = 48;
  double q_factor = 5000.0;
};

/// lambda_res = n_eff * circumference / mode order.
double resonant_wavelength_nm(const MrDesign& d);

/// Full linewidth delta = lambda / (2 Q).
double linewidth_nm(double lambda_nm, double q_factor);

// ===== crosstalk model =====

/// Lorentzian leakage of the aggressor channel into the victim ring,
/// evaluated with the victim's own linewidth:
///   phi(v, a) = delta_v^2 / ((lambda_v - lambda_a)^2 + delta_v^2)
/// phi(v, v) is 1 by construction.
double crosstalk_phi(const WavelengthGrid& g, double q_factor, int victim, int aggressor);

/// Total crosstalk power seen by `victim`: sum over aggressors j != victim
/// of phi(victim, j) * p_in[j].
double noise_power(const WavelengthGrid& g, double q_factor, int victim,
                   std::span<const double> p_in);

/// Distinguishable level count 1 / max_i noise_power(i, all-ones).
/// A single-channel grid has no aggressors and returns +infinity.
double resolution_levels(const WavelengthGrid& g, double q_factor);

struct CalibrationError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Smallest channel spacing (bisected to 1e-3 nm) whose grid resolves at
/// least 2^target_bits levels at the given Q. Throws CalibrationError,
/// naming the limiting channel, when no spacing in the search band works.
WavelengthGrid calibrate_grid(int n_channels, double q_factor, int target_bits,
                              double center_nm = 1550.0);

// ===== converter codec =====

/// Uniform symmetric codec shared by the ADC and DAC models. The step is
/// full_scale / code_limit(bits); values are rounded to the nearest level
/// and clamped at +-full_scale (clamping reports saturation). bits == 0 is
/// the ideal-converter sentinel: the value passes through untouched.
/// Quantizing an in-range already-quantized value is the identity.
double codec_quantize(double v, int bits, double full_scale, bool* saturated = nullptr);

}  // namespace lightvit
