#include "lightvit/photonics.hpp"

#include <cmath>
#include <limits>
#include <vector>

#include "lightvit/quant.hpp"

namespace lightvit {

namespace {

void check_channel(const WavelengthGrid& g, int ch, const char* what) {
  if (ch < 0 || ch >= g.n_channels)
    throw std::invalid_argument(std::string(what) + ": channel " + std::to_string(ch) +
                                " outside grid of " + std::to_string(g.n_channels));
}

}  // namespace

double WavelengthGrid::wavelength_nm(int ch) const {
  check_channel(*this, ch, "wavelength_nm");
  return center_nm + (static_cast<double>(ch) - (n_channels - 1) / 2.0) * spacing_nm;
}

double resonant_wavelength_nm(const MrDesign& d) {
  if (d.mode_order < 1) throw std::invalid_argument("resonant_wavelength_nm: mode order must be >= 1");
  const double circumference_nm = 2.0 * M_PI * d.radius_um * 1000.0;
  return d.n_eff * circumference_nm / static_cast<double>(d.mode_order);
}

double linewidth_nm(double lambda_nm, double q_factor) {
  if (q_factor <= 0.0) throw std::invalid_argument("linewidth_nm: Q must be positive");
  return lambda_nm / (2.0 * q_factor);
}

double crosstalk_phi(const WavelengthGrid& g, double q_factor, int victim, int aggressor) {
  check_channel(g, victim, "crosstalk_phi");
  check_channel(g, aggressor, "crosstalk_phi");
  const double lv = g.wavelength_nm(victim);
  const double la = g.wavelength_nm(aggressor);
  const double delta = linewidth_nm(lv, q_factor);
  const double d2 = delta * delta;
  const double sep = lv - la;
  return d2 / (sep * sep + d2);
}

double noise_power(const WavelengthGrid& g, double q_factor, int victim,
                   std::span<const double> p_in) {
  check_channel(g, victim, "noise_power");
  if (static_cast<int>(p_in.size()) != g.n_channels)
    throw std::invalid_argument("noise_power: p_in has " + std::to_string(p_in.size()) +
                                " entries for a grid of " + std::to_string(g.n_channels));
  double acc = 0.0;
  for (int j = 0; j < g.n_channels; ++j) {
    if (j == victim) continue;
    acc += crosstalk_phi(g, q_factor, victim, j) * p_in[j];
  }
  return acc;
}

double resolution_levels(const WavelengthGrid& g, double q_factor) {
  if (g.n_channels < 1) throw std::invalid_argument("resolution_levels: empty grid");
  if (g.n_channels == 1) return std::numeric_limits<double>::infinity();
  std::vector<double> ones(static_cast<size_t>(g.n_channels), 1.0);
  double worst = 0.0;
  for (int i = 0; i < g.n_channels; ++i)
    worst = std::max(worst, noise_power(g, q_factor, i, ones));
  return 1.0 / worst;
}

WavelengthGrid calibrate_grid(int n_channels, double q_factor, int target_bits,
                              double center_nm) {
  if (n_channels < 1) throw std::invalid_argument("calibrate_grid: need at least one channel");
  if (target_bits < 1 || target_bits > kMaxBits)
    throw std::invalid_argument("calibrate_grid: bad target bits " + std::to_string(target_bits));

  const double target = static_cast<double>(1 << target_bits);
  WavelengthGrid g{n_channels, center_nm, 0.0};
  if (n_channels == 1) {
    g.spacing_nm = 1.0;  // spacing is irrelevant for a lone channel
    return g;
  }

  // Resolution grows with spacing over the physical band, so bisect.
  double lo = 1e-4, hi = 200.0;
  g.spacing_nm = hi;
  if (resolution_levels(g, q_factor) < target) {
    // Report which channel saturates the noise sum at the widest spacing.
    std::vector<double> ones(static_cast<size_t>(n_channels), 1.0);
    int worst_ch = 0;
    double worst = -1.0;
    for (int i = 0; i < n_channels; ++i) {
      const double p = noise_power(g, q_factor, i, ones);
      if (p > worst) { worst = p; worst_ch = i; }
    }
    throw CalibrationError("calibrate_grid: " + std::to_string(1 << target_bits) +
                           " levels unreachable; limiting channel " + std::to_string(worst_ch) +
                           " keeps noise at " + std::to_string(worst));
  }
  while (hi - lo > 1e-3) {
    const double mid = 0.5 * (lo + hi);
    g.spacing_nm = mid;
    if (resolution_levels(g, q_factor) >= target)
      hi = mid;
    else
      lo = mid;
  }
  g.spacing_nm = hi;
  return g;
}

double codec_quantize(double v, int bits, double full_scale, bool* saturated) {
  if (saturated) *saturated = false;
  if (bits == 0) return v;  // ideal converter
  if (bits < kMinBits || bits > kMaxBits)
    throw std::invalid_argument("codec_quantize: bad bit width " + std::to_string(bits));
  if (!(full_scale > 0.0)) throw std::invalid_argument("codec_quantize: full_scale must be positive");
  const int32_t limit = code_limit(bits);
  const double lsb = full_scale / static_cast<double>(limit);
  double code = std::round(v / lsb);
  if (code > limit) { code = limit; if (saturated) *saturated = true; }
  if (code < -limit) { code = -limit; if (saturated) *saturated = true; }
  return code * lsb;
}

}  // namespace lightvit
