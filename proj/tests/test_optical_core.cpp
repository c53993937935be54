#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstdint>
#include <random>
#include <vector>

#include "lightvit/optical_core.hpp"

using namespace lightvit;

namespace {

QuantTensor random_q(std::mt19937& rng, int64_t r, int64_t c, int bits = 8) {
  std::uniform_real_distribution<double> dist(-3.0, 3.0);
  Tensor t = Tensor::matrix(r, c);
  for (double& v : t.data) v = dist(rng);
  return quantize_symmetric(t, bits);
}

// Independent Lorentzian, duplicated on purpose.
double ref_phi(double victim_nm, double aggressor_nm, double q) {
  const double delta = victim_nm / (2.0 * q);
  const double det = victim_nm - aggressor_nm;
  return (delta * delta) / (det * det + delta * delta);
}

uint64_t total_of(const TileStats& s, int field) {
  switch (field) {
    case 0: return s.optical_cycles;
    case 1: return s.tuning_events;
    case 2: return s.mr_writes;
    case 3: return s.adc_conversions;
    case 4: return s.dac_conversions;
    case 5: return s.vcsel_symbols;
    case 6: return s.bpd_samples;
    case 7: return s.electronic_adds;
    case 8: return s.memory_read_bytes;
    case 9: return s.memory_write_bytes;
    default: return s.adc_saturations;
  }
}

OpticalCoreConfig ideal_config() {
  OpticalCoreConfig cfg;
  cfg.adc_bits = 0;
  cfg.dac_bits = 0;
  return cfg;
}

}  // namespace

TEST_CASE("config validation") {
  OpticalCoreConfig cfg;
  cfg.grid.n_channels = 16;  // disagrees with n_wavelengths
  CHECK_THROWS_AS(OpticalCore{cfg}, std::invalid_argument);
  cfg = OpticalCoreConfig{};
  cfg.two_rail = false;
  CHECK_THROWS_AS(OpticalCore{cfg}, std::invalid_argument);
  cfg = OpticalCoreConfig{};
  cfg.adc_bits = 1;
  CHECK_THROWS_AS(OpticalCore{cfg}, std::invalid_argument);
}

TEST_CASE("optical_vvm: exact dot products with ideal converters") {
  std::mt19937 rng(7);
  OpticalCore core(ideal_config());
  QuantTensor w = random_q(rng, 32, 64);
  core.tune_bank(w);
  CHECK(core.generation() == 1);

  Tensor xt = Tensor::matrix(1, 32);
  std::uniform_real_distribution<double> dist(-2.0, 2.0);
  for (double& v : xt.data) v = dist(rng);
  QuantTensor xq = quantize_symmetric(xt, 8);
  QuantTensor x1d = xq;
  x1d.shape = {32};

  AccumTensor got = core.optical_vvm(x1d);
  AccumTensor want = matmul_exact(xq, w);
  REQUIRE(got.numel() == 64);
  for (int a = 0; a < 64; ++a) CHECK(got.values[static_cast<size_t>(a)] == want.values[static_cast<size_t>(a)]);
  CHECK(got.scale == doctest::Approx(want.scale));
}

TEST_CASE("optical_vvm: untuned bank and length mismatches are rejected") {
  OpticalCore core(ideal_config());
  QuantTensor x;
  x.shape = {32};
  x.codes.assign(32, 1);
  CHECK_THROWS_AS(core.optical_vvm(x), std::logic_error);

  std::mt19937 rng(8);
  core.tune_bank(random_q(rng, 16, 4));
  CHECK_THROWS_AS(core.optical_vvm(x), std::invalid_argument);  // 32 codes for 16 rows
}

TEST_CASE("optical_vvm: zero-length chunk is free") {
  std::mt19937 rng(9);
  OpticalCore core(ideal_config());
  core.tune_bank(random_q(rng, 32, 64));
  const TileStats before = core.stats();
  QuantTensor empty;
  empty.shape = {0};
  AccumTensor out = core.optical_vvm(empty);
  for (int64_t v : out.values) CHECK(v == 0);
  for (int f = 0; f < 11; ++f) CHECK(total_of(core.stats(), f) == total_of(before, f));
}

TEST_CASE("gated arms read zero and cost no conversions") {
  std::mt19937 rng(10);
  OpticalCore core(ideal_config());
  core.tune_bank(random_q(rng, 32, 10));
  CHECK(core.active_arms() == 10);

  const TileStats before = core.stats();
  QuantTensor x = random_q(rng, 1, 32);
  x.shape = {32};
  AccumTensor out = core.optical_vvm(x);
  for (int a = 10; a < 64; ++a) CHECK(out.values[static_cast<size_t>(a)] == 0);
  CHECK(core.stats().adc_conversions - before.adc_conversions == 10);
  CHECK(core.stats().bpd_samples - before.bpd_samples == 10);
  CHECK(core.stats().vcsel_symbols - before.vcsel_symbols == 32);
}

TEST_CASE("broadcast economics: one symbol per wavelength, one sample per arm") {
  std::mt19937 rng(11);
  OpticalCore core(ideal_config());
  core.tune_bank(random_q(rng, 32, 64));
  const TileStats before = core.stats();
  BroadcastReport rep = core.broadcast_check();
  CHECK(rep.vcsel_symbols_per_cycle == 32);
  CHECK(rep.bpd_samples_per_cycle == 64);
  CHECK(rep.adc_conversions_per_cycle == 64);
  CHECK(rep.symbols_shared_across_arms);
  // The probe leaves no trace in the counters.
  for (int f = 0; f < 11; ++f) CHECK(total_of(core.stats(), f) == total_of(before, f));

  core.tune_bank(random_q(rng, 32, 1));
  BroadcastReport narrow = core.broadcast_check();
  CHECK(narrow.vcsel_symbols_per_cycle == 32);
  CHECK(narrow.bpd_samples_per_cycle == 1);
  CHECK(narrow.symbols_shared_across_arms);
}

TEST_CASE("tune_bank: only changed rings are written") {
  std::mt19937 rng(12);
  OpticalCore core(ideal_config());
  QuantTensor w = random_q(rng, 32, 64);
  uint64_t nonzero = 0;
  for (int16_t c : w.codes)
    if (c != 0) ++nonzero;

  core.tune_bank(w);
  CHECK(core.stats().tuning_events == 1);
  CHECK(core.stats().mr_writes == nonzero);  // bank starts all-zero
  CHECK(core.stats().dac_conversions == nonzero);

  core.tune_bank(w);  // identical retune
  CHECK(core.stats().tuning_events == 2);
  CHECK(core.stats().mr_writes == nonzero);
  CHECK(core.generation() == 2);
}

TEST_CASE("tiled_matmul: bit-exact against matmul_exact with ideal converters") {
  std::mt19937 rng(13);
  OpticalCore core(ideal_config());
  const struct { int64_t n, d, m; } shapes[] = {
      {1, 1, 1}, {3, 3, 3}, {5, 192, 64}, {3, 50, 100}, {7, 33, 65}, {2, 64, 128}, {9, 17, 200},
  };
  for (const auto& s : shapes) {
    QuantTensor x = random_q(rng, s.n, s.d);
    QuantTensor w = random_q(rng, s.d, s.m);
    MatmulResult res = core.tiled_matmul(x, w);
    AccumTensor want = matmul_exact(x, w);
    REQUIRE(res.out.values.size() == want.values.size());
    for (size_t i = 0; i < want.values.size(); ++i) CHECK(res.out.values[i] == want.values[i]);
    CHECK(res.out.scale == doctest::Approx(want.scale));
    CHECK(res.stats.adc_saturations == 0);
  }
}

TEST_CASE("tiled_matmul: counter formulas") {
  std::mt19937 rng(14);

  SUBCASE("d = 192, m = 64: six chunks, one group") {
    OpticalCore core(ideal_config());
    MatmulResult res = core.tiled_matmul(random_q(rng, 5, 192), random_q(rng, 192, 64));
    CHECK(res.wavelength_chunks == 6);
    CHECK(res.arm_groups == 1);
    CHECK(res.stats.tuning_events == 6);
    CHECK(res.stats.optical_cycles == 5 * 6);
    CHECK(res.stats.electronic_adds == 5 * 64 * 5);
    CHECK(res.stats.adc_conversions == 5 * 6 * 64);
    CHECK(res.stats.bpd_samples == 5 * 6 * 64);
    CHECK(res.stats.vcsel_symbols == 5 * 192);
    CHECK(res.stats.dac_conversions == res.stats.mr_writes + res.stats.vcsel_symbols);
    // 8-bit codes travel as single bytes.
    CHECK(res.stats.memory_read_bytes == 6ull * 32 * 64 + 5ull * 192);
    CHECK(res.stats.memory_write_bytes == 5 * 64 * 4);
    CHECK(core.generation() == 6);
  }

  SUBCASE("small square: one chunk, no electronic accumulation") {
    OpticalCore core(ideal_config());
    MatmulResult res = core.tiled_matmul(random_q(rng, 3, 3), random_q(rng, 3, 3));
    CHECK(res.wavelength_chunks == 1);
    CHECK(res.arm_groups == 1);
    CHECK(res.stats.tuning_events == 1);
    CHECK(res.stats.optical_cycles == 3);
    CHECK(res.stats.electronic_adds == 0);
    CHECK(res.stats.adc_conversions == 3 * 3);
    CHECK(res.stats.vcsel_symbols == 3 * 3);
  }

  SUBCASE("ragged tail chunks and groups") {
    OpticalCore core(ideal_config());
    MatmulResult res = core.tiled_matmul(random_q(rng, 3, 50), random_q(rng, 50, 100));
    CHECK(res.wavelength_chunks == 2);  // 32 + 18
    CHECK(res.arm_groups == 2);         // 64 + 36
    CHECK(res.stats.tuning_events == 4);
    CHECK(res.stats.optical_cycles == 3 * 2 * 2);
    CHECK(res.stats.electronic_adds == 3 * 100 * 1);
    CHECK(res.stats.adc_conversions == 3ull * 2 * 100);
    CHECK(res.stats.vcsel_symbols == 3ull * 50 * 2);
    CHECK(res.stats.memory_write_bytes == 3 * 100 * 4);
  }
}

TEST_CASE("tiled_matmul: segment totals reproduce the operation counters") {
  std::mt19937 rng(15);
  OpticalCoreConfig cfg;  // real 8-bit converters this time
  OpticalCore core(cfg);
  for (int trial = 0; trial < 6; ++trial) {
    const int64_t n = 1 + rng() % 9, d = 1 + rng() % 150, m = 1 + rng() % 150;
    MatmulResult res = core.tiled_matmul(random_q(rng, n, d), random_q(rng, d, m));
    TileStats sum;
    for (const TileSegment& seg : res.segments) sum += seg.counts;
    for (int f = 0; f < 11; ++f) {
      INFO("field ", f, " shape ", n, "x", d, "x", m);
      CHECK(total_of(sum, f) == total_of(res.stats, f));
    }
    REQUIRE(!res.segments.empty());
    CHECK(res.segments.front().kind == TileSegment::Kind::WeightRead);
    CHECK(res.segments.back().kind == TileSegment::Kind::WriteBack);
    uint64_t tunes = 0, writebacks = 0;
    for (const TileSegment& seg : res.segments) {
      if (seg.kind == TileSegment::Kind::Tune) ++tunes;
      if (seg.kind == TileSegment::Kind::WriteBack) ++writebacks;
    }
    CHECK(tunes == static_cast<uint64_t>(res.wavelength_chunks) * res.arm_groups);
    CHECK(writebacks == static_cast<uint64_t>(res.arm_groups));
  }
}

TEST_CASE("tiled_matmul: 8-bit ADC error stays within the tiling bound") {
  std::mt19937 rng(16);
  OpticalCoreConfig cfg;  // adc_bits = 8, conservative range
  OpticalCore core(cfg);
  for (int trial = 0; trial < 4; ++trial) {
    const int64_t n = 4, d = 64 + rng() % 128, m = 1 + rng() % 96;
    QuantTensor x = random_q(rng, n, d);
    QuantTensor w = random_q(rng, d, m);
    MatmulResult res = core.tiled_matmul(x, w);
    AccumTensor want = matmul_exact(x, w);

    const int64_t chunks = res.wavelength_chunks;
    const int64_t max_mag = 32LL * 127 * 127;
    const int64_t lsb = (max_mag + 126) / 127;
    const int64_t bound = chunks * (lsb / 2 + 1);
    for (size_t i = 0; i < want.values.size(); ++i)
      CHECK(std::llabs(res.out.values[i] - want.values[i]) <= bound);
    // The conservative range covers the worst case, so nothing clips.
    CHECK(res.stats.adc_saturations == 0);
  }
}

TEST_CASE("tiled_matmul: negating an operand negates the output exactly") {
  std::mt19937 rng(17);
  OpticalCoreConfig cfg;  // 8-bit ADC keeps the check honest through the codec
  OpticalCore core(cfg);
  QuantTensor x = random_q(rng, 4, 70);
  QuantTensor w = random_q(rng, 70, 80);
  QuantTensor wn = w;
  for (int16_t& c : wn.codes) c = static_cast<int16_t>(-c);

  MatmulResult pos = core.tiled_matmul(x, w);
  MatmulResult neg = core.tiled_matmul(x, wn);
  for (size_t i = 0; i < pos.out.values.size(); ++i)
    CHECK(pos.out.values[i] == -neg.out.values[i]);
}

TEST_CASE("dac requantization: equivalent to folding the weights to dac width") {
  std::mt19937 rng(18);
  OpticalCoreConfig cfg = ideal_config();
  cfg.dac_bits = 4;
  OpticalCore core(cfg);
  QuantTensor x = random_q(rng, 5, 60);
  QuantTensor w = random_q(rng, 60, 70);
  MatmulResult res = core.tiled_matmul(x, w);

  // Reference: requantize every weight code to the 4-bit grid up front.
  QuantTensor w4 = w;
  const double ratio = 7.0 / 127.0;
  for (int16_t& c : w4.codes) c = static_cast<int16_t>(std::round(static_cast<double>(c) * ratio));
  w4.scale = w.scale / ratio;
  w4.bits = 4;
  AccumTensor want = matmul_exact(x, w4);
  for (size_t i = 0; i < want.values.size(); ++i) CHECK(res.out.values[i] == want.values[i]);
  CHECK(res.out.scale == doctest::Approx(want.scale).epsilon(1e-12));
}

TEST_CASE("worst-case noise: one-sided and inside the analytic envelope") {
  std::mt19937 rng(19);
  OpticalCoreConfig cfg = ideal_config();
  cfg.noise = NoiseMode::WorstCase;
  OpticalCore core(cfg);

  const int64_t n = 3, d = 64, m = 70;
  QuantTensor x = random_q(rng, n, d);
  QuantTensor w = random_q(rng, d, m);
  MatmulResult noisy = core.tiled_matmul(x, w);
  AccumTensor clean = matmul_exact(x, w);

  // Independent per-element envelope: for each chunk and arm,
  // sum_i |w_ai| sum_{j != i} phi(i, j) |x_j|, summed over chunks.
  WavelengthGrid grid = cfg.grid;
  for (int64_t r = 0; r < n; ++r) {
    for (int64_t col = 0; col < m; ++col) {
      double env = 0.0;
      for (int64_t c0 = 0; c0 < d; c0 += 32) {
        const int64_t len = std::min<int64_t>(32, d - c0);
        for (int64_t i = 0; i < len; ++i) {
          double pn = 0.0;
          for (int64_t j = 0; j < len; ++j)
            if (j != i)
              pn += ref_phi(grid.wavelength_nm(static_cast<int>(i)), grid.wavelength_nm(static_cast<int>(j)),
                            cfg.q_factor) *
                    std::abs(x.at(r, c0 + j));
          env += std::abs(w.at(c0 + i, col)) * pn;
        }
      }
      const int64_t diff = noisy.out.at(r, col) - clean.at(r, col);
      const int64_t chunks = noisy.wavelength_chunks;
      CHECK(diff >= -chunks);  // injected power is non-negative, rounding aside
      CHECK(static_cast<double>(diff) <= env + static_cast<double>(chunks) * 0.5 + 1e-9);
    }
  }

  // Deterministic: a second run reproduces the first bit for bit.
  OpticalCore core2(cfg);
  MatmulResult again = core2.tiled_matmul(x, w);
  CHECK(again.out.values == noisy.out.values);
}

TEST_CASE("stochastic noise: seeded, reproducible, envelope-bounded") {
  std::mt19937 rng(20);
  OpticalCoreConfig cfg = ideal_config();
  cfg.noise = NoiseMode::Stochastic;
  cfg.noise_seed = 42;

  const int64_t n = 6, d = 96, m = 64;
  QuantTensor x = random_q(rng, n, d);
  QuantTensor w = random_q(rng, d, m);

  OpticalCore a(cfg), b(cfg);
  MatmulResult ra = a.tiled_matmul(x, w);
  MatmulResult rb = b.tiled_matmul(x, w);
  CHECK(ra.out.values == rb.out.values);

  OpticalCoreConfig other = cfg;
  other.noise_seed = 43;
  OpticalCore c(other);
  MatmulResult rc = c.tiled_matmul(x, w);
  CHECK(ra.out.values != rc.out.values);

  // Random signs can never exceed the all-positive worst case.
  OpticalCoreConfig worst_cfg = ideal_config();
  worst_cfg.noise = NoiseMode::WorstCase;
  OpticalCore worst(worst_cfg);
  MatmulResult wres = worst.tiled_matmul(x, w);
  AccumTensor clean = matmul_exact(x, w);
  for (size_t i = 0; i < clean.values.size(); ++i) {
    const int64_t env = wres.out.values[i] - clean.values[i];  // worst-case shift
    const int64_t diff = std::llabs(ra.out.values[i] - clean.values[i]);
    CHECK(diff <= env + ra.wavelength_chunks + 1);
  }
}

TEST_CASE("calibrated adc range: tighter steps, saturation only past the percentile") {
  std::mt19937 rng(21);
  OpticalCoreConfig cfg;
  cfg.adc_range = AdcRangeMode::Calibrated;
  cfg.adc_percentile = 100.0;
  OpticalCore core(cfg);

  QuantTensor x = random_q(rng, 6, 64);
  QuantTensor w = random_q(rng, 64, 64);
  MatmulResult res = core.tiled_matmul(x, w);
  AccumTensor want = matmul_exact(x, w);
  CHECK(res.stats.adc_saturations == 0);  // the 100th percentile covers everything

  // Calibrated full scale is never wider than the conservative one, so the
  // conservative error bound still applies.
  const int64_t lsb = (32LL * 127 * 127 + 126) / 127;
  const int64_t bound = res.wavelength_chunks * (lsb / 2 + 1);
  for (size_t i = 0; i < want.values.size(); ++i)
    CHECK(std::llabs(res.out.values[i] - want.values[i]) <= bound);

  // Clipping the range below the peaks must show up in the counters.
  OpticalCoreConfig clip = cfg;
  clip.adc_percentile = 50.0;
  OpticalCore clipped(clip);
  MatmulResult cres = clipped.tiled_matmul(x, w);
  CHECK(cres.stats.adc_saturations > 0);
}
