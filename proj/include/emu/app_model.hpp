#pragma once

// JSON DAG applications: schema types, parsing, validation, instantiation and
// canonical re-emission.

#include <cstdint>
#include <map>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "emu/common.hpp"

namespace emu {

struct VariableSpec {
  std::string name;
  std::uint64_t bytes = 0;
  bool is_ptr = false;
  std::uint64_t ptr_alloc_bytes = 0;
  std::vector<std::uint8_t> val;

  /// Size of the buffer a kernel sees for this variable.
  std::uint64_t payload_bytes() const { return is_ptr ? ptr_alloc_bytes : bytes; }

  bool operator==(const VariableSpec&) const = default;
};

struct PlatformBinding {
  std::string platform_name;
  std::string run_func;
  std::optional<std::string> shared_object;
  std::optional<Nanos> est_exec_time;

  bool operator==(const PlatformBinding&) const = default;
};

struct TaskNodeSpec {
  std::string name;
  std::vector<std::string> arguments;
  std::vector<std::string> predecessors;
  std::vector<std::string> successors;
  std::vector<PlatformBinding> platforms;
  // successor name -> bytes carried on that edge; absent edges carry 0
  std::map<std::string, std::uint64_t> comm_bytes;

  const PlatformBinding* binding_for(std::string_view platform) const;

  bool operator==(const TaskNodeSpec&) const = default;
};

struct ApplicationSpec {
  std::string app_name;
  std::string shared_object;
  std::map<std::string, VariableSpec> variables;
  std::map<std::string, TaskNodeSpec> dag;

  /// Nodes without predecessors.
  std::vector<std::string> head_nodes() const;
  /// Kahn order with ties broken by name; nodes on cycles are omitted.
  std::vector<std::string> topological_order() const;
  /// Bytes flowing into `node` along its incoming edges.
  std::uint64_t inbound_bytes(std::string_view node) const;

  bool operator==(const ApplicationSpec&) const = default;
};

/// Parses an application document. Rejects unknown keys, duplicate keys,
/// type mismatches, dangling edges and asymmetric predecessor/successor lists.
ApplicationSpec parse_application(std::string_view text);
ApplicationSpec load_application(const std::string& path);

struct ValidationReport {
  std::vector<std::string> findings;
  bool ok() const { return findings.empty(); }
};

/// Checks every schema invariant plus acyclicity; findings are data.
ValidationReport validate_dag(const ApplicationSpec& spec);

/// Canonical JSON text: AppName, SharedObject, Variables (sorted), DAG
/// (topological, ties by name), two-space indent, scalar arrays inline.
std::string emit_application(const ApplicationSpec& spec);

enum class TaskState { pending, ready, running, complete };

struct TaskInstance {
  TaskState state = TaskState::pending;
  std::optional<int> assigned_pe;
  std::optional<Nanos> ready_time;
  std::optional<Nanos> start_time;
  std::optional<Nanos> end_time;
  bool ok = true;

  /// Enforces pending -> ready -> running -> complete.
  void advance(TaskState next);
};

/// Storage of one variable: the slot (`bytes` wide) and, for pointer
/// variables, the heap buffer the slot refers to.
struct VariableStorage {
  std::vector<std::uint8_t> slot;
  std::vector<std::uint8_t> heap;

  std::span<std::uint8_t> payload(bool is_ptr) { return is_ptr ? std::span(heap) : std::span(slot); }
};

struct ApplicationInstance {
  std::int64_t instance_id = 0;
  const ApplicationSpec* spec = nullptr;
  Nanos arrival_time{0};
  std::map<std::string, VariableStorage> store;
  std::map<std::string, TaskInstance> tasks;

  /// The buffer a kernel argument bound to `variable` reads and writes.
  std::span<std::uint8_t> payload(const std::string& variable);
  std::span<const std::uint8_t> payload(const std::string& variable) const;

  /// Little-endian scalar read of the first sizeof(T) bytes of a payload.
  template <class T>
  T read_scalar(const std::string& variable) const;
};

/// Allocates and initializes every variable; all tasks start pending.
/// Precondition: validate_dag(spec) reported no findings. `spec` must
/// outlive the instance.
std::unique_ptr<ApplicationInstance> instantiate(const ApplicationSpec& spec, std::int64_t instance_id,
                                                 Nanos arrival_time);

}  // namespace emu

#include <cstring>

template <class T>
T emu::ApplicationInstance::read_scalar(const std::string& variable) const {
  auto bytes = payload(variable);
  if (bytes.size() < sizeof(T)) throw LookupError("variable " + variable + " smaller than requested scalar");
  T value;
  std::memcpy(&value, bytes.data(), sizeof(T));
  return value;
}
