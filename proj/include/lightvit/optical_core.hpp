#pragma once
// One 32-wavelength x 64-arm photonic crossbar: weight-bank tuning, row
// streaming, chunked matmul, converter effects, crosstalk injection and the
// event counters everything downstream is billed from.

#include <cstdint>
#include <optional>
#include <random>
#include <span>
#include <vector>

#include "lightvit/photonics.hpp"
#include "lightvit/quant.hpp"

namespace lightvit {

enum class NoiseMode { Off, WorstCase, Stochastic };

enum class AdcRangeMode {
  Conservative,  // full scale = largest dot product the operand ranges allow
  Calibrated,    // full scale = observed per-chunk percentile of |preADC|
};

struct OpticalCoreConfig {
  int n_wavelengths = 32;
  int n_arms = 64;
  WavelengthGrid grid{32, 1550.0, 4.8};
  double q_factor = 5000.0;
  int adc_bits = 8;  // 0 = ideal converter
  int dac_bits = 8;  // 0 = ideal converter
  AdcRangeMode adc_range = AdcRangeMode::Conservative;
  double adc_percentile = 99.9;  // calibrated mode only
  NoiseMode noise = NoiseMode::Off;
  uint64_t noise_seed = 0;
  bool two_rail = true;  // the only signed encoding modeled
};

/// Event counters for one operation (or a whole run when accumulated).
/// memory_* counters are in bytes.
struct TileStats {
  uint64_t optical_cycles = 0;
  uint64_t tuning_events = 0;
  uint64_t mr_writes = 0;
  uint64_t adc_conversions = 0;
  uint64_t dac_conversions = 0;
  uint64_t vcsel_symbols = 0;
  uint64_t bpd_samples = 0;
  uint64_t electronic_adds = 0;
  uint64_t memory_read_bytes = 0;
  uint64_t memory_write_bytes = 0;
  uint64_t adc_saturations = 0;

  TileStats& operator+=(const TileStats& o);
};

/// Ordered sub-steps of one tiled matmul, exposed so a scheduler can turn
/// the operation into per-resource trace events.
struct TileSegment {
  enum class Kind { WeightRead, Tune, StreamRead, Stream, Accumulate, WriteBack };
  Kind kind;
  int group = 0;
  int chunk = 0;
  TileStats counts;  // only the fields this sub-step generates are set
};

struct BroadcastReport {
  uint64_t vcsel_symbols_per_cycle = 0;
  uint64_t bpd_samples_per_cycle = 0;
  uint64_t adc_conversions_per_cycle = 0;
  bool symbols_shared_across_arms = false;
};

struct MatmulResult {
  AccumTensor out;
  TileStats stats;                    // this operation only
  std::vector<TileSegment> segments;  // in execution order
  int wavelength_chunks = 0;
  int arm_groups = 0;
};

/// Helper shared with the planners: how a d x m weight matrix tiles onto
/// one core.
constexpr int64_t ceil_div(int64_t a, int64_t b) { return (a + b - 1) / b; }

class OpticalCore {
 public:
  explicit OpticalCore(OpticalCoreConfig cfg);

  const OpticalCoreConfig& config() const { return cfg_; }
  const TileStats& stats() const { return stats_; }
  void reset_stats() { stats_ = TileStats{}; }

  /// Monotone counter bumped by every tune_bank call; 0 means untuned.
  uint64_t generation() const { return generation_; }
  int active_rows() const { return active_rows_; }
  int active_arms() const { return active_arms_; }

  /// Loads one weight chunk (rows = wavelength channels, cols = arms) into
  /// the ring bank through the DACs. Only rings whose code actually changes
  /// are written; arms beyond the chunk width are gated off.
  void tune_bank(const QuantTensor& w_chunk);

  /// Streams one input chunk (length == active rows) through the tuned
  /// bank for a single optical cycle. Returns per-arm accumulator values
  /// (length n_arms); gated arms read exactly 0 and cost no conversions.
  AccumTensor optical_vvm(const QuantTensor& x_chunk);

  /// Full tiled matmul x (n x d) times w (d x m): w is split into
  /// ceil(m/n_arms) arm groups by ceil(d/n_wavelengths) wavelength chunks,
  /// the bank is retuned per chunk, rows of x are streamed per chunk, and
  /// per-chunk partial sums are ADC-converted then summed electronically.
  MatmulResult tiled_matmul(const QuantTensor& x, const QuantTensor& w);

  /// Probes one cycle against the current bank and verifies the broadcast
  /// economics: one VCSEL symbol per wavelength regardless of arm count.
  /// All mutable core state is restored afterwards.
  BroadcastReport broadcast_check();

 private:
  struct AdcPlan {
    int bits = 0;         // 0 = ideal
    int64_t lsb = 1;      // integer step in code units
    double full_scale = 0.0;
  };

  AdcPlan conservative_adc(int64_t chunk_len, int x_bits) const;
  int64_t adc_apply(double v, const AdcPlan& plan);
  void vvm_into(std::span<const int16_t> x, int len, int64_t* out);  // exact code dot
  std::vector<double> noise_magnitudes(std::span<const int16_t> x, int len) const;
  std::vector<double> perturbed_input(std::span<const int16_t> x, int len);

  OpticalCoreConfig cfg_;
  TileStats stats_;
  std::vector<int16_t> bank_;  // arm-major [arm][wavelength]
  double bank_scale_ = 1.0;
  int bank_bits_ = 8;          // effective code width after the DAC
  int active_rows_ = 0;
  int active_arms_ = 0;
  uint64_t generation_ = 0;
  std::vector<double> phi_;    // victim-major crosstalk matrix, diagonal 0
  std::mt19937_64 rng_;
};

}  // namespace lightvit
