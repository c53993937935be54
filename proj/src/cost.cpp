#include "lightvit/cost.hpp"

#include <stdexcept>

namespace lightvit {

CostTable CostTable::defaults() { return CostTable{}; }

std::map<std::string, double> EnergyReport::components() const {
  return {{"tuning", tuning}, {"vcsel", vcsel},   {"bpd", bpd},
          {"adc", adc},       {"dac", dac},       {"memory", memory},
          {"electronic", electronic}};
}

std::map<std::string, double> EnergyReport::percent() const {
  std::map<std::string, double> p;
  for (const auto& [k, v] : components()) p[k] = total > 0 ? 100.0 * v / total : 0.0;
  return p;
}

std::map<std::string, double> LatencyReport::components() const {
  return {{"optical", optical}, {"electronic", electronic}, {"memory", memory}};
}

std::map<std::string, double> LatencyReport::percent() const {
  std::map<std::string, double> p;
  for (const auto& [k, v] : components()) p[k] = total > 0 ? 100.0 * v / total : 0.0;
  return p;
}

EnergyReport estimate_energy(const ScheduleTrace& trace, const CostTable& table) {
  TileStats t;
  uint64_t elec_elems = 0;
  for (const TraceEvent& e : trace.events) {
    t += e.counts;
    if (is_electronic(e.kind)) elec_elems += e.elems;
  }
  const EnergyParams& p = table.energy;
  EnergyReport r;
  r.tuning = table.tuning_granularity == TuningGranularity::PerMrWrite
                 ? static_cast<double>(t.mr_writes) * p.tune_per_mr_write
                 : static_cast<double>(t.tuning_events) * p.tune_per_bank_event;
  r.vcsel = static_cast<double>(t.vcsel_symbols) * p.vcsel_per_symbol;
  r.bpd = static_cast<double>(t.bpd_samples) * p.bpd_per_sample;
  r.adc = static_cast<double>(t.adc_conversions) * p.adc_per_conversion;
  r.dac = static_cast<double>(t.dac_conversions) * p.dac_per_conversion;
  r.memory = static_cast<double>(t.memory_read_bytes + t.memory_write_bytes) * p.memory_per_byte;
  r.electronic = static_cast<double>(t.electronic_adds + elec_elems) * p.electronic_per_op;
  r.total = r.tuning + r.vcsel + r.bpd + r.adc + r.dac + r.memory + r.electronic;
  r.kfps_per_watt = kfps_per_watt(r.total);
  return r;
}

LatencyReport estimate_latency(const ScheduleTrace& trace, const CostTable& table) {
  (void)table;  // durations were already stamped into the trace
  trace.validate();
  LatencyReport r;
  r.total = trace.makespan();
  r.busy_optical = trace.busy_optical();
  r.busy_electronic = trace.busy_electronic();
  r.busy_memory = trace.busy_memory();
  const double busy = r.busy_optical + r.busy_electronic + r.busy_memory;
  if (busy > 0.0) {
    // Buckets are busy-time shares normalized onto the makespan so the
    // breakdown always sums to the reported total.
    const double k = r.total / busy;
    r.optical = r.busy_optical * k;
    r.electronic = r.busy_electronic * k;
    r.memory = r.busy_memory * k;
  }
  return r;
}

double kfps_per_watt(double energy_joules_per_frame) {
  if (!(energy_joules_per_frame > 0.0))
    throw std::invalid_argument("kfps_per_watt: energy per frame must be positive");
  return 1.0 / (1000.0 * energy_joules_per_frame);
}

double savings(const EnergyReport& masked, const EnergyReport& full) {
  if (!(full.total > 0.0)) throw std::invalid_argument("savings: full-run total must be positive");
  return 1.0 - masked.total / full.total;
}

void add_electronic_overhead(EnergyReport& e, LatencyReport& l, uint64_t elems,
                             const CostTable& table) {
  const double joules = static_cast<double>(elems) * table.energy.electronic_per_op;
  e.electronic += joules;
  e.total += joules;
  e.kfps_per_watt = kfps_per_watt(e.total);
  const double secs = static_cast<double>(elems) * table.latency.electronic_op_time;
  l.electronic += secs;
  l.busy_electronic += secs;
  l.total += secs;
}

}  // namespace lightvit
