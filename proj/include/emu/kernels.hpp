#pragma once

// Kernel registry: builtin signal-processing and synthetic kernels, plugin
// lookup through shared objects, invocation, and operation fingerprints.

#include <complex>
#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "emu/common.hpp"
#include "emu/kernel_abi.h"

namespace emu {

/// Normalized operation-kind multiset (op name -> static count).
using OpSummary = std::map<std::string, std::uint32_t>;

/// "op:count;op:count" sorted by op name; zero counts dropped.
std::string canonical_summary(const OpSummary& ops);

/// FNV-1a 64 over the canonical summary string.
std::uint64_t fingerprint(const OpSummary& ops);

OpSummary& operator+=(OpSummary& lhs, const OpSummary& rhs);

enum class KernelStatus { ok, arity, bad_argument, failed };

KernelStatus status_from_code(int code);
std::string_view to_string(KernelStatus status);

/// Reserved plugin id that selects the builtin registry.
inline constexpr std::string_view kBuiltinProvider = "builtin";

struct KernelProvider {
  enum class Kind { builtin, plugin };
  Kind kind = Kind::builtin;
  std::string plugin_id;

  bool operator==(const KernelProvider&) const = default;
};

struct KernelHandle {
  std::string name;
  KernelProvider provider;
  emu_kernel_fn fn = nullptr;
  std::optional<std::uint64_t> fingerprint;
  // builtins only
  std::optional<OpSummary> summary;
  std::map<std::string, Nanos> declared_cost;
  std::optional<std::size_t> arity;
  // argument positions the kernel writes; unknown for plugins
  std::optional<std::vector<std::size_t>> output_args;

  bool resolved() const { return fn != nullptr; }
};

using KernelArgs = std::span<const emu_arg_view>;

/// Calls the kernel. Arity is checked when the handle declares one.
KernelStatus invoke(const KernelHandle& handle, KernelArgs args);

class KernelRegistry {
 public:
  explicit KernelRegistry(std::vector<std::filesystem::path> plugin_dirs = {});
  ~KernelRegistry();
  KernelRegistry(KernelRegistry&&) noexcept;
  KernelRegistry& operator=(KernelRegistry&&) noexcept;

  /// A binding-level plugin overrides the application default; the reserved
  /// id "builtin" selects the builtin table.
  KernelHandle resolve(std::string_view run_func, const std::optional<std::string>& plugin,
                       std::string_view default_plugin) const;

  std::optional<KernelHandle> builtin(std::string_view name) const;
  std::vector<KernelHandle> builtin_suite() const;

  const std::vector<std::filesystem::path>& plugin_dirs() const;

 private:
  struct Plugins;
  std::unique_ptr<Plugins> plugins_;
};

/// Double-precision DSP routines the builtin kernels wrap.
namespace dsp {

using cd = std::complex<double>;

bool is_power_of_two(std::size_t n);

/// In-place iterative radix-2 transform; inverse scales by 1/N.
/// Throws std::invalid_argument unless data.size() is a power of two.
void fft_radix2(std::span<cd> data, bool inverse);

/// O(N^2) transform with exact twiddle indexing; inverse scales by 1/N.
std::vector<cd> dft_naive(std::span<const cd> input, bool inverse);

/// Linear FM chirp with instantaneous frequency sweeping 0 to half the
/// sample rate over n samples.
std::vector<cd> lfm_chirp(std::size_t n);

}  // namespace dsp

/// Complex buffers are interleaved float32 (re, im) pairs.
std::vector<std::complex<float>> load_complex(std::span<const std::uint8_t> bytes);
void store_complex(std::span<std::uint8_t> bytes, std::span<const std::complex<float>> values);

}  // namespace emu
