#pragma once
// Versioned cost tables and the energy / latency reports derived from a
// scheduled trace. Per-event energies are multiplied into trace counters;
// latency comes from the trace itself.

#include <map>
#include <string>

#include "lightvit/trace.hpp"

namespace lightvit {

/// Joules per counted event. The tuning and electronic entries carry most
/// of the run-size-independent cost, which is what keeps masked-run energy
/// savings at or below the patch skip ratio.
struct EnergyParams {
  double tune_per_mr_write = 1.6e-12;
  double tune_per_bank_event = 8.0e-10;
  double vcsel_per_symbol = 3.0e-13;
  double bpd_per_sample = 1.0e-13;
  double adc_per_conversion = 2.0e-12;
  double dac_per_conversion = 5.0e-13;
  double memory_per_byte = 2.0e-13;
  double electronic_per_op = 5.0e-13;
};

enum class TuningGranularity { PerMrWrite, PerBankEvent };

/// The default table is an illustrative calibration, not silicon data: its
/// values are chosen so converter energy dominates small-model runs and
/// buffer traffic outweighs electronic processing time.
struct CostTable {
  std::string version = "illustrative-1";
  EnergyParams energy;
  Durations latency;
  TuningGranularity tuning_granularity = TuningGranularity::PerMrWrite;

  static CostTable defaults();
};

struct EnergyReport {
  // Joules per component.
  double tuning = 0, vcsel = 0, bpd = 0, adc = 0, dac = 0, memory = 0, electronic = 0;
  double total = 0;
  double kfps_per_watt = 0;
  std::map<std::string, double> percent() const;
  std::map<std::string, double> components() const;
};

struct LatencyReport {
  // Makespan split across buckets. Overlapped busy time is scaled so the
  // three components always sum to the end-to-end figure; raw busy times
  // are kept alongside.
  double optical = 0, electronic = 0, memory = 0;
  double total = 0;
  double busy_optical = 0, busy_electronic = 0, busy_memory = 0;
  std::map<std::string, double> percent() const;
  std::map<std::string, double> components() const;
};

EnergyReport estimate_energy(const ScheduleTrace& trace, const CostTable& table);
LatencyReport estimate_latency(const ScheduleTrace& trace, const CostTable& table);

/// Frames per second per watt, in thousands: 1 / (1000 * joules_per_frame).
double kfps_per_watt(double energy_joules_per_frame);

/// 1 - masked/full on report totals. The masked report is expected to
/// already carry the mask network's own overhead.
double savings(const EnergyReport& masked, const EnergyReport& full);

/// Folds a pre-stage electronic pass (the mask network scoring an input)
/// into existing reports; the stage runs serially before the backbone.
void add_electronic_overhead(EnergyReport& e, LatencyReport& l, uint64_t elems,
                             const CostTable& table);

}  // namespace lightvit
