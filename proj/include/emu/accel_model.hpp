#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>

#include "emu/common.hpp"

namespace emu {

/// Processing time of one kernel on an accelerator: base + per-byte term over
/// the task's total argument bytes.
struct ProcessTime {
  Nanos base{0};
  double ns_per_byte = 0.0;

  Nanos at(std::uint64_t bytes) const;
  bool operator==(const ProcessTime&) const = default;
};

struct AccelModel {
  Nanos fixed_latency{0};
  std::uint64_t bytes_per_sec = 1;
  std::map<std::string, ProcessTime> process_time;
  std::uint64_t local_mem_bytes = 0;

  std::optional<Nanos> process_time_for(const std::string& kernel, std::uint64_t bytes) const;
  bool operator==(const AccelModel&) const = default;
};

/// fixed_latency + ceil(bytes * 1e9 / bytes_per_sec) ns.
Nanos transfer_time(std::uint64_t bytes, const AccelModel& model);

}  // namespace emu
