#pragma once

// Workload queues: validation mode (everything at t=0) and performance mode
// (seeded periodic injection with per-tick probability over [0, t_end)).

#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include "emu/common.hpp"

namespace emu {

struct InjectionSpec {
  std::string app_name;
  Nanos period{0};
  double probability = 1.0;

  bool operator==(const InjectionSpec&) const = default;
};

enum class WorkloadMode { validation, performance };

struct WorkloadSpec {
  WorkloadMode mode = WorkloadMode::validation;
  std::map<std::string, std::uint64_t> validation_counts;
  std::vector<InjectionSpec> injections;
  Nanos t_end{0};
  std::uint64_t seed = 0;

  bool operator==(const WorkloadSpec&) const = default;
};

struct QueueEntry {
  Nanos arrival_time{0};
  std::string app_name;
  std::int64_t instance_id = 0;

  bool operator==(const QueueEntry&) const = default;
};

struct WorkloadQueue {
  std::vector<QueueEntry> entries;

  std::size_t size() const { return entries.size(); }
  bool empty() const { return entries.empty(); }
  /// Entries per application.
  std::map<std::string, std::uint64_t> counts() const;

  bool operator==(const WorkloadQueue&) const = default;
};

/// When set, generators reject applications outside this set.
using KnownApps = std::optional<std::set<std::string, std::less<>>>;

WorkloadQueue generate_validation(const std::map<std::string, std::uint64_t>& counts, const KnownApps& known = {});

/// Ticks at k*period for k = 0 .. floor(t_end/period)-1, so every arrival
/// lies in [0, t_end) and p=1 yields exactly floor(t_end/period) instances.
/// Each tick is kept iff a uniform draw from the app's own stream (seeded
/// with seed ^ fnv1a64(app)) is below the probability.
WorkloadQueue generate_performance(const std::vector<InjectionSpec>& injections, Nanos t_end, std::uint64_t seed,
                                   const KnownApps& known = {});

WorkloadQueue generate(const WorkloadSpec& spec, const KnownApps& known = {});

/// Stable merge by arrival time; instance ids are reassigned densely.
WorkloadQueue merge(const std::vector<WorkloadQueue>& queues);

WorkloadSpec parse_workload(std::string_view text);
WorkloadSpec load_workload(const std::string& path);
std::string emit_workload(const WorkloadSpec& spec);

}  // namespace emu
