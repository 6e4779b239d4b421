#include "emu/accel_model.hpp"

#include <cmath>

namespace emu {

Nanos ProcessTime::at(std::uint64_t bytes) const {
  return base + Nanos(static_cast<std::int64_t>(std::ceil(ns_per_byte * static_cast<double>(bytes))));
}

std::optional<Nanos> AccelModel::process_time_for(const std::string& kernel, std::uint64_t bytes) const {
  auto it = process_time.find(kernel);
  if (it == process_time.end()) return std::nullopt;
  return it->second.at(bytes);
}

Nanos transfer_time(std::uint64_t bytes, const AccelModel& model) {
  if (model.bytes_per_sec == 0) throw EngineError("accelerator bytes_per_sec must be positive");
  const unsigned __int128 scaled = static_cast<unsigned __int128>(bytes) * 1'000'000'000u;
  const unsigned __int128 ns = (scaled + model.bytes_per_sec - 1) / model.bytes_per_sec;
  return model.fixed_latency + Nanos(static_cast<std::int64_t>(ns));
}

}  // namespace emu
