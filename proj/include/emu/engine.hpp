#pragma once

// The workload-manager loop: inject due instances, collect completions,
// maintain the ready list, run the policy and dispatch through the resource
// handlers. Wall-clock mode runs real PE worker threads; virtual mode is a
// single-threaded discrete-event replay driven by the cost model.

#include <cstdint>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "emu/app_model.hpp"
#include "emu/kernels.hpp"
#include "emu/metrics.hpp"
#include "emu/platform.hpp"
#include "emu/scheduler.hpp"
#include "emu/workload.hpp"

namespace emu {

enum class ClockMode { wallclock, virtual_clock };
std::string_view to_string(ClockMode mode);
ClockMode clock_mode_from_string(std::string_view name);

/// Source of wall-clock overhead samples. Thread CPU time excludes intervals
/// where PE workers preempt the manager on an oversubscribed host.
enum class OverheadClock { wall, thread_cpu };

struct EngineOptions {
  ClockMode mode = ClockMode::virtual_clock;
  std::uint64_t seed = 0;
  std::string policy_name = "custom";
  // virtual mode: also run kernels on the instance buffers at dispatch
  bool exec_kernels = false;
  // virtual mode: synthetic cost of each scheduling cycle; tasks start this
  // long after the cycle that dispatched them
  Nanos virtual_overhead{0};
  OverheadClock overhead_clock = OverheadClock::thread_cpu;
  bool check_decisions = true;
  // for worker placement; defaults to the host's hardware concurrency
  std::optional<int> host_cores;
  int manager_core = 0;
  TransitionObserver observer;
  // wall-clock mode: abort with EngineError past this emulation time
  std::optional<Nanos> time_limit;
};

struct RunResult {
  Trace trace;
  RunReport report;
  Placement placement;
  // indexed by position in the workload queue
  std::vector<std::unique_ptr<ApplicationInstance>> instances;
  std::vector<bool> instance_failed;
  std::vector<std::string> errors;

  std::size_t failed_instances() const;
  bool ok() const { return failed_instances() == 0; }
};

/// Applications are looked up by name from the queue entries. Every app must
/// validate cleanly and every node needs a binding for some PE type present.
/// Kernels are resolved up front in wall-clock mode and with exec_kernels;
/// otherwise unresolvable run_funcs are tolerated and timing comes from
/// est_exec_time (or the kernel's declared cost).
RunResult run(const std::vector<ProcessorElement>& pes, const std::map<std::string, ApplicationSpec>& apps,
              const WorkloadQueue& workload, const Policy& policy, const KernelRegistry& registry,
              const EngineOptions& options);

RunResult run(const PlatformConfig& platform, const std::map<std::string, ApplicationSpec>& apps,
              const WorkloadQueue& workload, const Policy& policy, const KernelRegistry& registry,
              EngineOptions options);

}  // namespace emu
