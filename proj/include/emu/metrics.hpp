#pragma once

// Trace events, NDJSON persistence, derived run statistics and CSV exports.

#include <cstdint>
#include <deque>
#include <map>
#include <mutex>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "emu/common.hpp"

namespace emu {

enum class EventKind {
  inject,
  task_ready,
  sched_decision,
  dispatch,
  task_start,
  transfer_start,
  transfer_end,
  task_end,
  instance_complete,
};

std::string_view to_string(EventKind kind);
EventKind event_kind_from_string(std::string_view name);

/// Field use per kind:
///   inject              instance_id, app
///   task_ready          instance_id, node
///   sched_decision      duration, policy, ready_len
///   dispatch/task_start instance_id, node, pe_id
///   transfer_*          instance_id, node, pe_id, direction ("in" | "out")
///   task_end            instance_id, node, pe_id, ok
///   instance_complete   instance_id, ok
struct TraceEvent {
  Nanos t{0};
  EventKind kind = EventKind::inject;
  std::int64_t instance_id = -1;
  std::string node;
  int pe_id = -1;
  std::string app;
  Nanos duration{0};
  std::string policy;
  std::uint64_t ready_len = 0;
  std::string direction;
  bool ok = true;

  bool operator==(const TraceEvent&) const = default;
};

struct TracePE {
  int pe_id = 0;
  std::string pe_type;

  bool operator==(const TracePE&) const = default;
};

struct Trace {
  std::vector<TracePE> pes;
  std::vector<TraceEvent> events;

  bool operator==(const Trace&) const = default;
};

inline constexpr std::string_view kTraceSchema = "emu-trace/1";

/// Thread-safe append; events() returns them stably sorted by time. Storage
/// never reallocates, so an append costs the same late in a long run.
class TraceSink {
 public:
  void append(TraceEvent event);
  std::vector<TraceEvent> events() const;
  std::size_t size() const;

 private:
  mutable std::mutex mutex_;
  std::deque<TraceEvent> events_;
};

/// Header line {"schema":"emu-trace/1","pes":[...]} followed by one event per
/// line.
std::string write_trace(const Trace& trace);
void write_trace(const Trace& trace, const std::string& path);
Trace parse_trace(std::string_view text);
Trace read_trace(const std::string& path);

struct AppLatency {
  std::uint64_t count = 0;
  double mean_ns = 0.0;
  std::int64_t max_ns = 0;

  bool operator==(const AppLatency&) const = default;
};

struct PEUsage {
  std::string pe_type;
  Nanos busy{0};
  double utilization = 0.0;

  bool operator==(const PEUsage&) const = default;
};

struct RunReport {
  Nanos makespan{0};
  std::map<int, PEUsage> pes;
  std::uint64_t overhead_samples = 0;
  double overhead_mean_ns = 0.0;
  Nanos overhead_max{0};
  Nanos overhead_total{0};
  std::map<std::string, AppLatency> latency;
  std::uint64_t instances_injected = 0;
  std::uint64_t instances_failed = 0;
  std::uint64_t tasks_completed = 0;
  // filled by the engine, not derivable from the trace
  std::uint64_t idle_cycles = 0;
  int manager_core = 0;
  std::map<int, int> placement;  // pe_id -> host core
  std::map<std::string, std::string> config;

  bool operator==(const RunReport&) const = default;
};

/// Makespan spans task events (task_start, task_end, transfers). A PE's busy
/// time is the sum of its task_start..task_end intervals, which enclose any
/// modeled transfers. Throws ParseError naming the task on an unmatched or
/// duplicated start/end.
RunReport compute_report(const Trace& trace);

std::string emit_report(const RunReport& report);

enum class ExportKind { gantt, utilization, overhead, latency };
ExportKind export_kind_from_string(std::string_view name);

/// gantt:        pe_id,instance_id,node,start_ns,end_ns
/// utilization:  pe_id,pe_type,fraction
/// overhead:     cycle_index,duration_ns,ready_len
/// latency:      app,instance_id,latency_ns
std::string export_csv(const Trace& trace, ExportKind kind);
void export_csv(const Trace& trace, ExportKind kind, const std::string& path);

}  // namespace emu
