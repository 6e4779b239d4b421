#pragma once

// Scheduling policies. A policy maps a snapshot of the ready list and PE
// states to a set of (task, PE) assignments; the engine performs dispatch.

#include <cstdint>
#include <deque>
#include <functional>
#include <map>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "emu/accel_model.hpp"
#include "emu/common.hpp"

namespace emu {

struct BindingCost {
  std::string_view pe_type;
  std::optional<Nanos> est;
};

struct ReadyTask {
  std::int64_t instance_id = 0;
  std::string_view node;
  Nanos ready_time{0};
  std::vector<BindingCost> bindings;
  std::uint64_t inbound_bytes = 0;
  void* opaque = nullptr;  // engine-owned task record
  // one bit per supported PE type, matching PEView::type_bit; 0 when unset
  std::uint64_t type_mask = 0;

  const BindingCost* binding(std::string_view pe_type) const;
  bool supports(std::string_view pe_type) const { return binding(pe_type) != nullptr; }
};

/// FIFO order: (ready_time, instance_id, node).
bool ready_before(const ReadyTask& a, const ReadyTask& b);

using ReadyList = std::deque<ReadyTask>;

enum class PEStatus { idle, run, complete };
std::string_view to_string(PEStatus status);

struct PEView {
  int pe_id = 0;
  std::string_view pe_type;
  PEStatus status = PEStatus::idle;
  // start of the running task + its estimate, clamped to >= now; now if idle
  Nanos est_available{0};
  double cost_scale = 1.0;
  const AccelModel* accel = nullptr;
  std::uint64_t type_bit = 0;
};

/// Uses the precomputed type bits when both sides carry them, otherwise
/// compares type names.
inline bool supports(const ReadyTask& task, const PEView& pe) {
  if (task.type_mask != 0 && pe.type_bit != 0) return (task.type_mask & pe.type_bit) != 0;
  return task.supports(pe.pe_type);
}

struct Assignment {
  std::size_t task_index = 0;  // into SchedulerInput::ready
  int pe_id = 0;

  bool operator==(const Assignment&) const = default;
};

struct ScheduleDecision {
  std::vector<Assignment> assignments;

  bool operator==(const ScheduleDecision&) const = default;
};

struct SchedulerInput {
  const ReadyList& ready;
  std::span<const PEView> pes;  // ordered by pe_id
  Nanos now{0};
  std::mt19937_64* rng = nullptr;
};

using Policy = std::function<ScheduleDecision(const SchedulerInput&)>;

/// Binding estimate scaled by the PE's cost factor; nullopt if the task does
/// not support the PE type or declares no estimate for it.
std::optional<Nanos> estimate(const ReadyTask& task, const PEView& pe);

ScheduleDecision schedule_frfs(const SchedulerInput& in);
ScheduleDecision schedule_met(const SchedulerInput& in);
ScheduleDecision schedule_eft(const SchedulerInput& in);
ScheduleDecision schedule_random(const SchedulerInput& in);

class PolicyRegistry {
 public:
  /// Registry preloaded with frfs, met, eft and random.
  PolicyRegistry();

  void register_policy(std::string name, Policy policy);
  /// Throws LookupError listing the registered names.
  const Policy& lookup(std::string_view name) const;
  std::vector<std::string> names() const;

 private:
  std::map<std::string, Policy, std::less<>> policies_;
};

/// Violations of the decision invariants (each PE at most once, PE idle,
/// PE type supported, each task at most once, indices in range).
std::vector<std::string> check_decision(const SchedulerInput& in, const ScheduleDecision& decision);

}  // namespace emu
