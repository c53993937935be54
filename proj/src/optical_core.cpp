#include "lightvit/optical_core.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <stdexcept>
#include <string>

namespace lightvit {

namespace {

int bytes_per_code(int bits) { return bits <= 8 ? 1 : 2; }

void check_converter_bits(int bits, const char* what) {
  if (bits == 0) return;
  if (bits < kMinBits || bits > kMaxBits)
    throw std::invalid_argument(std::string(what) + ": bad bit width " + std::to_string(bits));
}

void check_codes(const QuantTensor& t, const char* what) {
  const int32_t lim = t.limit();
  for (int16_t c : t.codes)
    if (c > lim || c < -lim)
      throw std::invalid_argument(std::string(what) + ": code " + std::to_string(c) +
                                  " outside the symmetric " + std::to_string(t.bits) + "-bit range");
}

}  // namespace

TileStats& TileStats::operator+=(const TileStats& o) {
  optical_cycles += o.optical_cycles;
  tuning_events += o.tuning_events;
  mr_writes += o.mr_writes;
  adc_conversions += o.adc_conversions;
  dac_conversions += o.dac_conversions;
  vcsel_symbols += o.vcsel_symbols;
  bpd_samples += o.bpd_samples;
  electronic_adds += o.electronic_adds;
  memory_read_bytes += o.memory_read_bytes;
  memory_write_bytes += o.memory_write_bytes;
  adc_saturations += o.adc_saturations;
  return *this;
}

OpticalCore::OpticalCore(OpticalCoreConfig cfg) : cfg_(std::move(cfg)) {
  if (cfg_.n_wavelengths < 1 || cfg_.n_arms < 1)
    throw std::invalid_argument("OpticalCore: need at least one wavelength and one arm");
  if (cfg_.grid.n_channels != cfg_.n_wavelengths)
    throw std::invalid_argument("OpticalCore: grid has " + std::to_string(cfg_.grid.n_channels) +
                                " channels for " + std::to_string(cfg_.n_wavelengths) +
                                " wavelengths");
  if (!(cfg_.q_factor > 0.0)) throw std::invalid_argument("OpticalCore: Q must be positive");
  check_converter_bits(cfg_.adc_bits, "OpticalCore adc_bits");
  check_converter_bits(cfg_.dac_bits, "OpticalCore dac_bits");
  if (!(cfg_.adc_percentile > 0.0 && cfg_.adc_percentile <= 100.0))
    throw std::invalid_argument("OpticalCore: adc_percentile outside (0, 100]");
  if (!cfg_.two_rail)
    throw std::invalid_argument("OpticalCore: only the two-rail signed encoding is modeled");

  bank_.assign(static_cast<size_t>(cfg_.n_arms) * cfg_.n_wavelengths, 0);

  // Victim-major crosstalk matrix with a zero diagonal; aggressors only.
  const int n = cfg_.n_wavelengths;
  phi_.assign(static_cast<size_t>(n) * n, 0.0);
  if (n > 1) {
    for (int v = 0; v < n; ++v)
      for (int a = 0; a < n; ++a)
        if (a != v) phi_[static_cast<size_t>(v) * n + a] = crosstalk_phi(cfg_.grid, cfg_.q_factor, v, a);
  }
  rng_.seed(cfg_.noise_seed);
}

void OpticalCore::tune_bank(const QuantTensor& w_chunk) {
  if (w_chunk.shape.size() != 2)
    throw std::invalid_argument("tune_bank: weight chunk must be 2-d, got " + shape_str(w_chunk.shape));
  const int rows = static_cast<int>(w_chunk.rows());
  const int cols = static_cast<int>(w_chunk.cols());
  if (rows < 1 || rows > cfg_.n_wavelengths)
    throw std::invalid_argument("tune_bank: chunk has " + std::to_string(rows) + " rows for " +
                                std::to_string(cfg_.n_wavelengths) + " wavelengths");
  if (cols < 1 || cols > cfg_.n_arms)
    throw std::invalid_argument("tune_bank: chunk has " + std::to_string(cols) + " columns for " +
                                std::to_string(cfg_.n_arms) + " arms");
  check_codes(w_chunk, "tune_bank");

  // The DAC narrows weight codes when its width is below the stored width;
  // the bank scale absorbs the rescale so dequantized values are preserved.
  const bool requant = cfg_.dac_bits != 0 && cfg_.dac_bits < w_chunk.bits;
  const int32_t src_lim = w_chunk.limit();
  const int32_t dst_lim = requant ? code_limit(cfg_.dac_bits) : src_lim;
  const double ratio = static_cast<double>(dst_lim) / static_cast<double>(src_lim);

  uint64_t writes = 0;
  for (int a = 0; a < cols; ++a) {
    for (int r = 0; r < rows; ++r) {
      int16_t code = w_chunk.codes[static_cast<size_t>(r) * cols + a];
      if (requant) code = static_cast<int16_t>(std::round(static_cast<double>(code) * ratio));
      int16_t& cell = bank_[static_cast<size_t>(a) * cfg_.n_wavelengths + r];
      if (cell != code) {
        cell = code;
        ++writes;
      }
    }
  }
  bank_scale_ = requant ? w_chunk.scale / ratio : w_chunk.scale;
  bank_bits_ = requant ? cfg_.dac_bits : w_chunk.bits;
  active_rows_ = rows;
  active_arms_ = cols;
  ++generation_;

  stats_.tuning_events += 1;
  stats_.mr_writes += writes;
  stats_.dac_conversions += writes;
  stats_.memory_read_bytes += static_cast<uint64_t>(rows) * cols * bytes_per_code(w_chunk.bits);
}

OpticalCore::AdcPlan OpticalCore::conservative_adc(int64_t chunk_len, int x_bits) const {
  AdcPlan plan;
  plan.bits = cfg_.adc_bits;
  if (plan.bits == 0) return plan;
  const int64_t levels = code_limit(plan.bits);
  const int64_t max_mag =
      std::max<int64_t>(1, chunk_len) * code_limit(x_bits) * code_limit(bank_bits_);
  plan.lsb = std::max<int64_t>(1, (max_mag + levels - 1) / levels);
  plan.full_scale = static_cast<double>(plan.lsb * levels);
  return plan;
}

int64_t OpticalCore::adc_apply(double v, const AdcPlan& plan) {
  if (plan.bits == 0) {
    // Ideal converter: the detector still reads in whole code units.
    ++stats_.adc_conversions;
    return std::llround(v);
  }
  bool sat = false;
  const double q = codec_quantize(v, plan.bits, plan.full_scale, &sat);
  ++stats_.adc_conversions;
  if (sat) ++stats_.adc_saturations;
  return std::llround(q);
}

void OpticalCore::vvm_into(std::span<const int16_t> x, int len, int64_t* out) {
  // Hot loop. Per-chunk dot products fit 32-bit whenever the operand
  // widths allow; the wider fallback covers the rest.
  const int16_t* xb = x.data();
  if (static_cast<int64_t>(len) * code_limit(bank_bits_) * code_limit(kMaxBits) <
      static_cast<int64_t>(INT32_MAX)) {
    for (int a = 0; a < active_arms_; ++a) {
      const int16_t* wrow = bank_.data() + static_cast<size_t>(a) * cfg_.n_wavelengths;
      int32_t acc = 0;
      for (int i = 0; i < len; ++i) acc += static_cast<int32_t>(xb[i]) * wrow[i];
      out[a] = acc;
    }
  } else {
    for (int a = 0; a < active_arms_; ++a) {
      const int16_t* wrow = bank_.data() + static_cast<size_t>(a) * cfg_.n_wavelengths;
      int64_t acc = 0;
      for (int i = 0; i < len; ++i) acc += static_cast<int64_t>(xb[i]) * wrow[i];
      out[a] = acc;
    }
  }
}

std::vector<double> OpticalCore::noise_magnitudes(std::span<const int16_t> x, int len) const {
  // Worst case: every aggressor term lands with full magnitude. Per arm the
  // injected power is sum_i |w_ai| * sum_{j != i} phi(i, j) |x_j|.
  const int n = cfg_.n_wavelengths;
  std::vector<double> pn(static_cast<size_t>(len), 0.0);
  for (int i = 0; i < len; ++i) {
    const double* prow = phi_.data() + static_cast<size_t>(i) * n;
    double acc = 0.0;
    for (int j = 0; j < len; ++j) acc += prow[j] * std::fabs(static_cast<double>(x[j]));
    pn[static_cast<size_t>(i)] = acc;  // diagonal of phi_ is zero
  }
  std::vector<double> out(static_cast<size_t>(active_arms_), 0.0);
  for (int a = 0; a < active_arms_; ++a) {
    const int16_t* wrow = bank_.data() + static_cast<size_t>(a) * cfg_.n_wavelengths;
    double acc = 0.0;
    for (int i = 0; i < len; ++i) acc += std::abs(static_cast<double>(wrow[i])) * pn[static_cast<size_t>(i)];
    out[static_cast<size_t>(a)] = acc;
  }
  return out;
}

std::vector<double> OpticalCore::perturbed_input(std::span<const int16_t> x, int len) {
  // Stochastic mode: each aggressor term corrupts the shared light with an
  // independent uniform sign, so all arms see the same perturbed symbols.
  const int n = cfg_.n_wavelengths;
  std::vector<double> out(static_cast<size_t>(len), 0.0);
  for (int i = 0; i < len; ++i) {
    const double* prow = phi_.data() + static_cast<size_t>(i) * n;
    double acc = static_cast<double>(x[i]);
    for (int j = 0; j < len; ++j) {
      if (j == i || x[j] == 0) continue;
      const double sign = (rng_() & 1) ? 1.0 : -1.0;
      acc += sign * prow[j] * static_cast<double>(x[j]);
    }
    out[static_cast<size_t>(i)] = acc;
  }
  return out;
}

AccumTensor OpticalCore::optical_vvm(const QuantTensor& x_chunk) {
  if (x_chunk.shape.size() != 1)
    throw std::invalid_argument("optical_vvm: input chunk must be 1-d, got " + shape_str(x_chunk.shape));
  const int len = static_cast<int>(x_chunk.numel());

  AccumTensor out;
  out.shape = {cfg_.n_arms};
  out.values.assign(static_cast<size_t>(cfg_.n_arms), 0);
  out.scale = x_chunk.scale * bank_scale_;
  if (len == 0) return out;  // nothing streamed, nothing converted

  if (generation_ == 0) throw std::logic_error("optical_vvm: weight bank was never tuned");
  if (len != active_rows_)
    throw std::invalid_argument("optical_vvm: chunk length " + std::to_string(len) +
                                " does not match the tuned " + std::to_string(active_rows_) +
                                " rows");
  check_codes(x_chunk, "optical_vvm");

  const AdcPlan plan = conservative_adc(len, x_chunk.bits);
  std::vector<int64_t> dots(static_cast<size_t>(active_arms_), 0);

  if (cfg_.noise == NoiseMode::Stochastic) {
    const std::vector<double> xt = perturbed_input({x_chunk.codes.data(), x_chunk.codes.size()}, len);
    for (int a = 0; a < active_arms_; ++a) {
      const int16_t* wrow = bank_.data() + static_cast<size_t>(a) * cfg_.n_wavelengths;
      double acc = 0.0;
      for (int i = 0; i < len; ++i) acc += static_cast<double>(wrow[i]) * xt[static_cast<size_t>(i)];
      out.values[static_cast<size_t>(a)] = adc_apply(acc, plan);
    }
  } else {
    vvm_into({x_chunk.codes.data(), x_chunk.codes.size()}, len, dots.data());
    if (cfg_.noise == NoiseMode::WorstCase) {
      const std::vector<double> mag = noise_magnitudes({x_chunk.codes.data(), x_chunk.codes.size()}, len);
      for (int a = 0; a < active_arms_; ++a)
        out.values[static_cast<size_t>(a)] =
            adc_apply(static_cast<double>(dots[static_cast<size_t>(a)]) + mag[static_cast<size_t>(a)], plan);
    } else {
      for (int a = 0; a < active_arms_; ++a)
        out.values[static_cast<size_t>(a)] = adc_apply(static_cast<double>(dots[static_cast<size_t>(a)]), plan);
    }
  }

  stats_.optical_cycles += 1;
  stats_.vcsel_symbols += static_cast<uint64_t>(len);
  stats_.dac_conversions += static_cast<uint64_t>(len);
  stats_.bpd_samples += static_cast<uint64_t>(active_arms_);
  stats_.memory_read_bytes += static_cast<uint64_t>(len) * bytes_per_code(x_chunk.bits);
  return out;
}

MatmulResult OpticalCore::tiled_matmul(const QuantTensor& x, const QuantTensor& w) {
  if (x.shape.size() != 2 || w.shape.size() != 2)
    throw std::invalid_argument("tiled_matmul: operands must be 2-d, got " + shape_str(x.shape) +
                                " and " + shape_str(w.shape));
  if (x.cols() != w.rows())
    throw std::invalid_argument("tiled_matmul: inner dims differ, " + shape_str(x.shape) + " vs " +
                                shape_str(w.shape));
  check_codes(x, "tiled_matmul x");
  check_codes(w, "tiled_matmul w");

  const int64_t n = x.rows(), d = x.cols(), m = w.cols();
  const int64_t chunks = ceil_div(d, cfg_.n_wavelengths);
  const int64_t groups = ceil_div(m, cfg_.n_arms);
  const int xb = bytes_per_code(x.bits);
  const int wb = bytes_per_code(w.bits);

  MatmulResult res;
  res.wavelength_chunks = static_cast<int>(chunks);
  res.arm_groups = static_cast<int>(groups);
  res.out.shape = {n, m};
  res.out.values.assign(static_cast<size_t>(n * m), 0);
  res.out.scale = x.scale * w.scale;  // refined after the first tune (DAC may rescale)

  const TileStats before = stats_;
  const bool calibrated = cfg_.adc_range == AdcRangeMode::Calibrated && cfg_.adc_bits != 0;

  std::vector<int16_t> chunk_codes;
  std::vector<int64_t> dots(static_cast<size_t>(cfg_.n_arms), 0);
  std::vector<double> analog;  // calibrated / noisy pre-ADC values

  for (int64_t g = 0; g < groups; ++g) {
    const int arms = static_cast<int>(std::min<int64_t>(cfg_.n_arms, m - g * cfg_.n_arms));
    for (int64_t c = 0; c < chunks; ++c) {
      const int rows = static_cast<int>(std::min<int64_t>(cfg_.n_wavelengths, d - c * cfg_.n_wavelengths));

      // Weight chunk fetch and tune.
      QuantTensor wc;
      wc.shape = {rows, arms};
      wc.bits = w.bits;
      wc.scale = w.scale;
      chunk_codes.assign(static_cast<size_t>(rows) * arms, 0);
      for (int r = 0; r < rows; ++r) {
        const int16_t* src = w.codes.data() + (c * cfg_.n_wavelengths + r) * m + g * cfg_.n_arms;
        std::memcpy(chunk_codes.data() + static_cast<size_t>(r) * arms, src,
                    sizeof(int16_t) * static_cast<size_t>(arms));
      }
      wc.codes = chunk_codes;

      TileSegment seg_read{TileSegment::Kind::WeightRead, static_cast<int>(g), static_cast<int>(c), {}};
      seg_read.counts.memory_read_bytes = static_cast<uint64_t>(rows) * arms * wb;
      res.segments.push_back(seg_read);

      const TileStats pre_tune = stats_;
      tune_bank(wc);
      TileSegment seg_tune{TileSegment::Kind::Tune, static_cast<int>(g), static_cast<int>(c), {}};
      seg_tune.counts.tuning_events = 1;
      seg_tune.counts.mr_writes = stats_.mr_writes - pre_tune.mr_writes;
      seg_tune.counts.dac_conversions = stats_.dac_conversions - pre_tune.dac_conversions;
      res.segments.push_back(seg_tune);
      if (g == 0 && c == 0) res.out.scale = x.scale * bank_scale_;

      TileSegment seg_sread{TileSegment::Kind::StreamRead, static_cast<int>(g), static_cast<int>(c), {}};
      seg_sread.counts.memory_read_bytes = static_cast<uint64_t>(n) * rows * xb;
      res.segments.push_back(seg_sread);

      // ADC plan for this chunk.
      AdcPlan plan = conservative_adc(std::min<int64_t>(cfg_.n_wavelengths, d), x.bits);
      const uint64_t sat_before = stats_.adc_saturations;

      const bool analog_path = cfg_.noise != NoiseMode::Off || calibrated;
      if (analog_path) {
        analog.assign(static_cast<size_t>(n) * arms, 0.0);
        for (int64_t r = 0; r < n; ++r) {
          const int16_t* xrow = x.codes.data() + r * d + c * cfg_.n_wavelengths;
          std::span<const int16_t> xs(xrow, static_cast<size_t>(rows));
          double* arow = analog.data() + static_cast<size_t>(r) * arms;
          if (cfg_.noise == NoiseMode::Stochastic) {
            const std::vector<double> xt = perturbed_input(xs, rows);
            for (int a = 0; a < arms; ++a) {
              const int16_t* wrow = bank_.data() + static_cast<size_t>(a) * cfg_.n_wavelengths;
              double acc = 0.0;
              for (int i = 0; i < rows; ++i) acc += static_cast<double>(wrow[i]) * xt[static_cast<size_t>(i)];
              arow[a] = acc;
            }
          } else {
            vvm_into(xs, rows, dots.data());
            if (cfg_.noise == NoiseMode::WorstCase) {
              const std::vector<double> mag = noise_magnitudes(xs, rows);
              for (int a = 0; a < arms; ++a)
                arow[a] = static_cast<double>(dots[static_cast<size_t>(a)]) + mag[static_cast<size_t>(a)];
            } else {
              for (int a = 0; a < arms; ++a) arow[a] = static_cast<double>(dots[static_cast<size_t>(a)]);
            }
          }
        }
        if (calibrated) {
          std::vector<double> mags(analog.size());
          for (size_t i = 0; i < analog.size(); ++i) mags[i] = std::fabs(analog[i]);
          const size_t idx = std::min(mags.size() - 1,
                                      static_cast<size_t>(std::ceil(cfg_.adc_percentile / 100.0 *
                                                                    static_cast<double>(mags.size()))) -
                                          1);
          std::nth_element(mags.begin(), mags.begin() + static_cast<int64_t>(idx), mags.end());
          const double p = mags[idx];
          const int64_t levels = code_limit(cfg_.adc_bits);
          plan.lsb = std::max<int64_t>(1, static_cast<int64_t>(std::ceil(p / static_cast<double>(levels))));
          plan.full_scale = static_cast<double>(plan.lsb * levels);
        }
        for (int64_t r = 0; r < n; ++r) {
          const double* arow = analog.data() + static_cast<size_t>(r) * arms;
          int64_t* orow = res.out.values.data() + r * m + g * cfg_.n_arms;
          for (int a = 0; a < arms; ++a) orow[a] += adc_apply(arow[a], plan);
        }
      } else {
        // Exact integer path (noise off). Streams row by row.
        for (int64_t r = 0; r < n; ++r) {
          const int16_t* xrow = x.codes.data() + r * d + c * cfg_.n_wavelengths;
          vvm_into({xrow, static_cast<size_t>(rows)}, rows, dots.data());
          int64_t* orow = res.out.values.data() + r * m + g * cfg_.n_arms;
          if (plan.bits == 0) {
            stats_.adc_conversions += static_cast<uint64_t>(arms);
            for (int a = 0; a < arms; ++a) orow[a] += dots[static_cast<size_t>(a)];
          } else {
            const int64_t lsb = plan.lsb, half = lsb / 2, lim = code_limit(plan.bits);
            stats_.adc_conversions += static_cast<uint64_t>(arms);
            for (int a = 0; a < arms; ++a) {
              const int64_t v = dots[static_cast<size_t>(a)];
              int64_t code = v >= 0 ? (v + half) / lsb : -((-v + half) / lsb);
              if (code > lim) { code = lim; ++stats_.adc_saturations; }
              if (code < -lim) { code = -lim; ++stats_.adc_saturations; }
              orow[a] += code * lsb;
            }
          }
        }
      }

      stats_.optical_cycles += static_cast<uint64_t>(n);
      stats_.vcsel_symbols += static_cast<uint64_t>(n) * rows;
      stats_.dac_conversions += static_cast<uint64_t>(n) * rows;
      stats_.bpd_samples += static_cast<uint64_t>(n) * arms;
      stats_.memory_read_bytes += static_cast<uint64_t>(n) * rows * xb;

      TileSegment seg_stream{TileSegment::Kind::Stream, static_cast<int>(g), static_cast<int>(c), {}};
      seg_stream.counts.optical_cycles = static_cast<uint64_t>(n);
      seg_stream.counts.vcsel_symbols = static_cast<uint64_t>(n) * rows;
      seg_stream.counts.dac_conversions = static_cast<uint64_t>(n) * rows;
      seg_stream.counts.bpd_samples = static_cast<uint64_t>(n) * arms;
      seg_stream.counts.adc_conversions = static_cast<uint64_t>(n) * arms;
      seg_stream.counts.adc_saturations = stats_.adc_saturations - sat_before;
      res.segments.push_back(seg_stream);

      if (c > 0) {
        const uint64_t adds = static_cast<uint64_t>(n) * arms;
        stats_.electronic_adds += adds;
        TileSegment seg_add{TileSegment::Kind::Accumulate, static_cast<int>(g), static_cast<int>(c), {}};
        seg_add.counts.electronic_adds = adds;
        res.segments.push_back(seg_add);
      }
    }

    const uint64_t out_bytes = static_cast<uint64_t>(n) * arms * 4;  // 32-bit partial words
    stats_.memory_write_bytes += out_bytes;
    TileSegment seg_wb{TileSegment::Kind::WriteBack, static_cast<int>(g), static_cast<int>(chunks - 1), {}};
    seg_wb.counts.memory_write_bytes = out_bytes;
    res.segments.push_back(seg_wb);
  }

  // This operation's counters = after minus before.
  TileStats delta = stats_;
  delta.optical_cycles -= before.optical_cycles;
  delta.tuning_events -= before.tuning_events;
  delta.mr_writes -= before.mr_writes;
  delta.adc_conversions -= before.adc_conversions;
  delta.dac_conversions -= before.dac_conversions;
  delta.vcsel_symbols -= before.vcsel_symbols;
  delta.bpd_samples -= before.bpd_samples;
  delta.electronic_adds -= before.electronic_adds;
  delta.memory_read_bytes -= before.memory_read_bytes;
  delta.memory_write_bytes -= before.memory_write_bytes;
  delta.adc_saturations -= before.adc_saturations;
  res.stats = delta;
  return res;
}

BroadcastReport OpticalCore::broadcast_check() {
  if (generation_ == 0) throw std::logic_error("broadcast_check: weight bank was never tuned");
  const TileStats saved_stats = stats_;
  const std::mt19937_64 saved_rng = rng_;

  QuantTensor probe;
  probe.shape = {active_rows_};
  probe.codes.assign(static_cast<size_t>(active_rows_), 0);
  probe.bits = 8;
  probe.scale = 1.0;
  optical_vvm(probe);

  BroadcastReport rep;
  rep.vcsel_symbols_per_cycle = stats_.vcsel_symbols - saved_stats.vcsel_symbols;
  rep.bpd_samples_per_cycle = stats_.bpd_samples - saved_stats.bpd_samples;
  rep.adc_conversions_per_cycle = stats_.adc_conversions - saved_stats.adc_conversions;
  rep.symbols_shared_across_arms =
      rep.vcsel_symbols_per_cycle == static_cast<uint64_t>(active_rows_) &&
      rep.bpd_samples_per_cycle == static_cast<uint64_t>(active_arms_);

  stats_ = saved_stats;
  rng_ = saved_rng;
  return rep;
}

}  // namespace lightvit
