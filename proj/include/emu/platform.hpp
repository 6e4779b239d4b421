#pragma once

// Emulated processing elements, their lock-protected handshake cells, and the
// per-PE resource-manager workers used in wall-clock mode.

#include <atomic>
#include <chrono>
#include <condition_variable>
#include <cstdint>
#include <functional>
#include <memory>
#include <mutex>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <thread>
#include <utility>
#include <vector>

#include "emu/accel_model.hpp"
#include "emu/common.hpp"
#include "emu/kernels.hpp"
#include "emu/scheduler.hpp"

namespace emu {

enum class PEKind { core, accelerator };
std::string_view to_string(PEKind kind);

struct ProcessorElement {
  int pe_id = 0;
  std::string pe_type;
  std::string name;  // "<type><ordinal>", e.g. cpu0, fft1
  PEKind kind = PEKind::core;
  std::optional<AccelModel> accel;
  // multiplies est_exec_time of this PE's type (odroid-like little cores)
  double cost_scale = 1.0;
  // wall-clock cores: hold each task until its scaled estimate has elapsed
  bool pace = false;
  std::optional<int> host_core_hint;
};

struct PEGroup {
  std::string pe_type;
  PEKind kind = PEKind::core;
  std::uint32_t count = 1;
  std::optional<AccelModel> accel;
  double cost_scale = 1.0;
  bool pace = false;
  std::string label;  // name prefix; defaults to pe_type
};

struct PlatformConfig {
  std::string name;
  int manager_core = 0;
  std::vector<PEGroup> groups;
};

PlatformConfig parse_platform(std::string_view text);
PlatformConfig load_platform(const std::string& path);
std::string emit_platform(const PlatformConfig& config);

/// "zcu102-like[,cpu=N,fft=M]" or "odroid-like[,big=N,little=M,ratio=R]".
PlatformConfig platform_preset(std::string_view spec);
/// A path to an existing file is loaded; anything else is a preset spec.
PlatformConfig resolve_platform(const std::string& arg);

/// PE ids are dense from 0 in group order. Throws EngineError on zero PEs or
/// an accelerator group without a model.
std::vector<ProcessorElement> build_pes(const PlatformConfig& config);

struct Placement {
  int manager_core = 0;
  std::vector<int> pe_core;  // indexed by pe_id
  std::vector<std::string> warnings;
};

/// Core-kind workers take distinct pool cores first, accelerators take the
/// remaining unused cores and then round-robin over the pool. The pool is
/// every host core except the manager's, or the manager core alone on a
/// single-core host.
Placement place_workers(std::span<const ProcessorElement> pes, int manager_core, int host_cores);

/// Everything a PE worker needs to run one task. Argument views point into
/// the owning instance's buffers.
struct DispatchedTask {
  std::int64_t instance_id = 0;
  std::string node;
  const KernelHandle* kernel = nullptr;
  std::vector<emu_arg_view> args;
  std::vector<bool> is_ptr;
  // per argument; kernels without declared outputs read and write everything
  std::vector<bool> reads;
  std::vector<bool> writes;
  std::optional<Nanos> pace_target;   // cores: scaled estimate
  std::optional<Nanos> process_time;  // accelerators
  Nanos dispatch_time{0};

  std::uint64_t total_bytes() const;
  /// Pointer arguments the kernel reads.
  std::uint64_t in_bytes() const;
  /// Pointer arguments the kernel writes.
  std::uint64_t out_bytes() const;
};

struct CompletionRecord {
  Nanos start{0};
  Nanos end{0};
  Nanos transfer_in{0};
  Nanos transfer_out{0};
  KernelStatus status = KernelStatus::ok;
  std::string error;

  bool ok() const { return status == KernelStatus::ok; }
};

enum class Actor { manager, worker };
std::string_view to_string(Actor actor);

struct Transition {
  int pe_id = 0;
  PEStatus from = PEStatus::idle;
  PEStatus to = PEStatus::idle;
  Actor actor = Actor::manager;
};

/// Called under the handler lock for every status change.
using TransitionObserver = std::function<void(const Transition&)>;

/// The idle/run/complete handshake cell of one PE. Every access to status and
/// task slot happens under the lock; illegal transitions throw logic_error.
class ResourceHandler {
 public:
  explicit ResourceHandler(int pe_id, TransitionObserver observer = {});

  int pe_id() const { return pe_id_; }
  PEStatus status() const;

  /// Manager: writes the slot, then idle -> run.
  void dispatch(DispatchedTask task);
  /// Worker: the slot while status is run, else null. The pointer stays valid
  /// until the worker calls complete().
  const DispatchedTask* running() const;
  /// Worker: like running(), but blocks up to `timeout` for a dispatch.
  const DispatchedTask* wait_running(Nanos timeout) const;
  /// Wakes a worker blocked in wait_running().
  void wake() const;
  /// Worker: run -> complete, publishing the record.
  void complete(CompletionRecord record);
  /// Manager: complete -> idle, handing back slot and record. Empty unless
  /// the status is complete.
  std::optional<std::pair<DispatchedTask, CompletionRecord>> take_completion();

 private:
  void check(PEStatus from, PEStatus to, Actor actor) const;
  void transition(PEStatus from, PEStatus to, Actor actor);

  const int pe_id_;
  TransitionObserver observer_;
  mutable std::mutex mutex_;
  mutable std::condition_variable dispatched_;
  PEStatus status_ = PEStatus::idle;
  std::optional<DispatchedTask> slot_;
  std::optional<CompletionRecord> record_;
};

/// Emulation time source for wall-clock mode.
struct WallClock {
  std::chrono::steady_clock::time_point reference = std::chrono::steady_clock::now();

  Nanos now() const;
  /// Sleeps for most of the interval, then yields until the deadline.
  void wait_until(Nanos target) const;
};

/// Core path: invoke the kernel in place; with a pace target, hold the PE
/// until start + target.
CompletionRecord run_core_task(const ProcessorElement& pe, const DispatchedTask& task, const WallClock& clock);

/// Accelerator path: copy arguments into the PE's local memory (charged as
/// transfer-in), run the reference kernel there and sleep out the modeled
/// processing time, copy outputs back (charged as transfer-out).
CompletionRecord run_accelerator_task(const ProcessorElement& pe, const DispatchedTask& task,
                                      std::vector<std::uint8_t>& local_mem, const WallClock& clock);

/// One worker thread per PE, blocked on its handler until a dispatch.
/// Destruction stops and joins them.
class WorkerPool {
 public:
  WorkerPool(std::span<const ProcessorElement> pes, std::span<ResourceHandler* const> handlers,
             const Placement& placement, WallClock clock);
  ~WorkerPool();
  WorkerPool(const WorkerPool&) = delete;
  WorkerPool& operator=(const WorkerPool&) = delete;

  void stop();

 private:
  std::atomic<bool> stop_{false};
  std::vector<ResourceHandler*> handlers_;
  std::vector<std::thread> threads_;
};

/// Best-effort: lowers the calling thread's timer slack and pins it.
void tune_current_thread(std::optional<int> core);

}  // namespace emu
