#pragma once

#include <chrono>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <string_view>

namespace emu {

/// All emulation timestamps and durations are integral nanoseconds relative
/// to the emulation reference start.
using Nanos = std::chrono::nanoseconds;

constexpr Nanos operator""_us(unsigned long long v) { return std::chrono::microseconds(v); }
constexpr Nanos operator""_ms(unsigned long long v) { return std::chrono::milliseconds(v); }

/// Malformed or inconsistent input documents (JSON, traces, CLI specs).
class ParseError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Requests that cannot be satisfied: unknown names, unresolvable kernels.
class LookupError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Failures raised while setting up or running an emulation.
class EngineError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// 64-bit FNV-1a. Used for kernel fingerprints and per-app RNG stream seeds.
constexpr std::uint64_t fnv1a64(std::string_view text) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (char c : text) {
    h ^= static_cast<std::uint8_t>(c);
    h *= 0x100000001b3ULL;
  }
  return h;
}

/// Warnings go to stderr unless a handler is installed (tests capture them).
using WarningHandler = void (*)(std::string_view message);
void set_warning_handler(WarningHandler handler);
void warn(std::string_view message);

}  // namespace emu
