#pragma once
// Timed event traces. Every performance number the simulator reports is
// derived from one of these: an ordered list of events, each bound to a
// resource, stamped with start and end times by a shared timeline.

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "lightvit/optical_core.hpp"

namespace lightvit {

enum class EventKind {
  Tune,      // optical resource: loading a weight chunk into a ring bank
  Stream,    // optical resource: cycles of rows through a tuned bank
  Softmax,   // electronic
  Gelu,      // electronic
  Layernorm, // electronic
  Add,       // electronic: residuals and partial-sum accumulation
  Elec,      // electronic: anything else (mask net, classifier head)
  Read,      // memory
  Write,     // memory
};

const char* event_kind_name(EventKind k);
bool is_optical(EventKind k);
bool is_electronic(EventKind k);
bool is_memory(EventKind k);

/// Per-event latencies used to stamp the trace. Durations:
///   Tune            tuning_events * tune_bank_time
///   Stream          cycles * optical_cycle_time + dac_time + adc_time
///                   (converters pipeline with the symbol stream; one
///                   fill/drain latency each is exposed)
///   electronic kinds  elems * electronic_op_time
///   Read / Write    ceil(bytes / burst_bytes) * memory_access_time
struct Durations {
  double tune_bank_time = 2.0e-6;
  double optical_cycle_time = 1.0e-9;
  double adc_time = 2.0e-9;
  double dac_time = 2.0e-9;
  double electronic_op_time = 1.0e-10;
  double memory_access_time = 2.0e-8;
  uint64_t burst_bytes = 64;
};

struct TraceEvent {
  int64_t id = -1;
  std::string resource;  // "C1".."C5" (per group), "ELEC", "MEM"
  EventKind kind = EventKind::Elec;
  std::string stage;     // e.g. "blk3.h1.scores"
  int input_index = 0;
  double t_start = 0.0;
  double t_end = 0.0;
  TileStats counts;      // optical / memory payload counters
  uint64_t elems = 0;    // electronic payload
  std::vector<int64_t> deps;
};

struct TraceError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct ScheduleTrace {
  std::vector<TraceEvent> events;
  std::map<std::string, std::string> meta;

  double makespan() const;

  /// Throws TraceError unless (a) no two events on one resource overlap
  /// and (b) every event starts at or after all of its dependencies end.
  void validate() const;

  /// Sum of event durations whose kind falls in the given bucket.
  double busy_optical() const;
  double busy_electronic() const;
  double busy_memory() const;
};

double event_duration(const TraceEvent& e, const Durations& d);

/// Earliest-start list scheduler: an event begins when its resource is free
/// and all dependencies have finished.
class TraceBuilder {
 public:
  explicit TraceBuilder(Durations lat) : lat_(lat) {}

  /// Emits one event; duration is derived from the payload counters.
  int64_t emit(std::string resource, EventKind kind, std::string stage, TileStats counts,
               uint64_t elems, std::vector<int64_t> deps, int input_index = 0);

  /// Emits one event with an explicit duration (trace replays, barriers).
  /// Counters ride along untouched so the result stays billable.
  int64_t emit_timed(std::string resource, EventKind kind, std::string stage, double duration,
                     std::vector<int64_t> deps, int input_index = 0, TileStats counts = {},
                     uint64_t elems = 0);

  double event_end(int64_t id) const { return trace_.events[static_cast<size_t>(id)].t_end; }

  const Durations& durations() const { return lat_; }
  ScheduleTrace take();

 private:
  int64_t place(TraceEvent e, double duration);

  Durations lat_;
  ScheduleTrace trace_;
  std::map<std::string, double> free_at_;
};

}  // namespace lightvit
