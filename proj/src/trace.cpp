#include "lightvit/trace.hpp"

#include <algorithm>
#include <cmath>

namespace lightvit {

const char* event_kind_name(EventKind k) {
  switch (k) {
    case EventKind::Tune: return "tune";
    case EventKind::Stream: return "stream";
    case EventKind::Softmax: return "softmax";
    case EventKind::Gelu: return "gelu";
    case EventKind::Layernorm: return "layernorm";
    case EventKind::Add: return "add";
    case EventKind::Elec: return "elec";
    case EventKind::Read: return "read";
    case EventKind::Write: return "write";
  }
  return "?";
}

bool is_optical(EventKind k) { return k == EventKind::Tune || k == EventKind::Stream; }
bool is_memory(EventKind k) { return k == EventKind::Read || k == EventKind::Write; }
bool is_electronic(EventKind k) { return !is_optical(k) && !is_memory(k); }

double event_duration(const TraceEvent& e, const Durations& d) {
  switch (e.kind) {
    case EventKind::Tune:
      return static_cast<double>(std::max<uint64_t>(1, e.counts.tuning_events)) * d.tune_bank_time;
    case EventKind::Stream:
      return static_cast<double>(e.counts.optical_cycles) * d.optical_cycle_time + d.dac_time +
             d.adc_time;
    case EventKind::Read:
    case EventKind::Write: {
      const uint64_t bytes = e.counts.memory_read_bytes + e.counts.memory_write_bytes;
      const uint64_t bursts = (bytes + d.burst_bytes - 1) / std::max<uint64_t>(1, d.burst_bytes);
      return static_cast<double>(bursts) * d.memory_access_time;
    }
    default: {
      const uint64_t n = e.elems ? e.elems : e.counts.electronic_adds;
      return static_cast<double>(n) * d.electronic_op_time;
    }
  }
}

double ScheduleTrace::makespan() const {
  double lo = 0.0, hi = 0.0;
  bool first = true;
  for (const TraceEvent& e : events) {
    if (first) { lo = e.t_start; hi = e.t_end; first = false; continue; }
    lo = std::min(lo, e.t_start);
    hi = std::max(hi, e.t_end);
  }
  return hi - lo;
}

void ScheduleTrace::validate() const {
  // Dependency order.
  for (const TraceEvent& e : events) {
    for (int64_t dep : e.deps) {
      if (dep < 0 || dep >= static_cast<int64_t>(events.size()))
        throw TraceError("trace: event " + std::to_string(e.id) + " depends on missing event " +
                         std::to_string(dep));
      const TraceEvent& p = events[static_cast<size_t>(dep)];
      if (p.t_end > e.t_start + 1e-15)
        throw TraceError("trace: event " + std::to_string(e.id) + " (" + e.stage + ") starts at " +
                         std::to_string(e.t_start) + " before dependency " + std::to_string(dep) +
                         " ends at " + std::to_string(p.t_end));
    }
  }
  // Per-resource exclusivity.
  std::map<std::string, std::vector<const TraceEvent*>> by_res;
  for (const TraceEvent& e : events) by_res[e.resource].push_back(&e);
  for (auto& [res, evs] : by_res) {
    std::sort(evs.begin(), evs.end(),
              [](const TraceEvent* a, const TraceEvent* b) { return a->t_start < b->t_start; });
    for (size_t i = 1; i < evs.size(); ++i) {
      if (evs[i]->t_start + 1e-15 < evs[i - 1]->t_end)
        throw TraceError("trace: resource " + res + " overlap between events " +
                         std::to_string(evs[i - 1]->id) + " and " + std::to_string(evs[i]->id));
    }
  }
}

namespace {
double bucket_sum(const ScheduleTrace& t, bool (*pred)(EventKind)) {
  double acc = 0.0;
  for (const TraceEvent& e : t.events)
    if (pred(e.kind)) acc += e.t_end - e.t_start;
  return acc;
}
}  // namespace

double ScheduleTrace::busy_optical() const { return bucket_sum(*this, is_optical); }
double ScheduleTrace::busy_electronic() const { return bucket_sum(*this, is_electronic); }
double ScheduleTrace::busy_memory() const { return bucket_sum(*this, is_memory); }

int64_t TraceBuilder::place(TraceEvent e, double duration) {
  double start = 0.0;
  auto it = free_at_.find(e.resource);
  if (it != free_at_.end()) start = it->second;
  for (int64_t dep : e.deps) {
    if (dep < 0 || dep >= static_cast<int64_t>(trace_.events.size()))
      throw TraceError("emit: dependency " + std::to_string(dep) + " does not exist yet");
    start = std::max(start, trace_.events[static_cast<size_t>(dep)].t_end);
  }
  e.id = static_cast<int64_t>(trace_.events.size());
  e.t_start = start;
  e.t_end = start + duration;
  free_at_[e.resource] = e.t_end;
  trace_.events.push_back(std::move(e));
  return trace_.events.back().id;
}

int64_t TraceBuilder::emit(std::string resource, EventKind kind, std::string stage,
                           TileStats counts, uint64_t elems, std::vector<int64_t> deps,
                           int input_index) {
  TraceEvent e;
  e.resource = std::move(resource);
  e.kind = kind;
  e.stage = std::move(stage);
  e.input_index = input_index;
  e.counts = counts;
  e.elems = elems;
  e.deps = std::move(deps);
  const double dur = event_duration(e, lat_);
  return place(std::move(e), dur);
}

int64_t TraceBuilder::emit_timed(std::string resource, EventKind kind, std::string stage,
                                 double duration, std::vector<int64_t> deps, int input_index,
                                 TileStats counts, uint64_t elems) {
  TraceEvent e;
  e.resource = std::move(resource);
  e.kind = kind;
  e.stage = std::move(stage);
  e.input_index = input_index;
  e.counts = counts;
  e.elems = elems;
  e.deps = std::move(deps);
  return place(std::move(e), duration);
}

ScheduleTrace TraceBuilder::take() {
  ScheduleTrace out = std::move(trace_);
  trace_ = ScheduleTrace{};
  free_at_.clear();
  return out;
}

}  // namespace lightvit
