// Builtin kernels. Argument conventions:
//   n            application sample count (u32 slot); forward transforms use
//                it as the number of valid input samples, the rest is zero
//   complex bufs interleaved float32 pairs; transform length = out bytes / 8
//   scalars      little-endian, read from the first bytes of the slot

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstring>
#include <thread>

#include "kernels/builtin_table.hpp"

namespace emu::detail {
namespace {

using cd = dsp::cd;

std::span<std::uint8_t> bytes_of(const emu_arg_view& v) { return {static_cast<std::uint8_t*>(v.data), v.size}; }

std::uint64_t read_uint(const emu_arg_view& v) {
  std::uint64_t value = 0;
  const auto n = std::min<std::size_t>(v.size, sizeof(value));
  const auto* p = static_cast<const std::uint8_t*>(v.data);
  for (std::size_t i = 0; i < n; ++i) value |= static_cast<std::uint64_t>(p[i]) << (8 * i);
  return value;
}

template <class T>
bool write_scalar(const emu_arg_view& v, T value) {
  if (v.size < sizeof(T)) return false;
  std::memcpy(v.data, &value, sizeof(T));
  return true;
}

std::vector<cd> widen(std::span<const std::uint8_t> bytes, std::size_t count, std::size_t length) {
  auto narrow = load_complex(bytes);
  std::vector<cd> out(length);
  count = std::min({count, narrow.size(), length});
  for (std::size_t i = 0; i < count; ++i) out[i] = cd(narrow[i].real(), narrow[i].imag());
  return out;
}

void narrow_into(const emu_arg_view& dst, std::span<const cd> values) {
  std::vector<std::complex<float>> out(values.size());
  for (std::size_t i = 0; i < values.size(); ++i)
    out[i] = {static_cast<float>(values[i].real()), static_cast<float>(values[i].imag())};
  store_complex(bytes_of(dst), out);
}

int lfm_gen(std::size_t argc, const emu_arg_view* argv) {
  if (argc != 2) return EMU_STATUS_ARITY;
  const std::size_t capacity = argv[1].size / 8;
  const std::size_t n = std::min<std::size_t>(read_uint(argv[0]), capacity);
  auto chirp = dsp::lfm_chirp(n);
  chirp.resize(capacity);
  narrow_into(argv[1], chirp);
  return EMU_STATUS_OK;
}

int delay_channel(std::size_t argc, const emu_arg_view* argv) {
  if (argc != 4) return EMU_STATUS_ARITY;
  const std::size_t capacity = argv[2].size / 8;
  const std::size_t n = std::min<std::size_t>(read_uint(argv[0]), capacity);
  const std::size_t delay = read_uint(argv[3]);
  const auto src = load_complex(bytes_of(argv[1]));
  std::vector<std::complex<float>> dst(capacity);
  for (std::size_t i = delay; i < n; ++i)
    if (i - delay < src.size()) dst[i] = src[i - delay];
  store_complex(bytes_of(argv[2]), dst);
  return EMU_STATUS_OK;
}

template <bool Inverse, bool Fast>
int transform(std::size_t argc, const emu_arg_view* argv) {
  if (argc != 3) return EMU_STATUS_ARITY;
  const std::size_t length = argv[2].size / 8;
  if (length == 0) return EMU_STATUS_BAD_ARGUMENT;
  if (Fast && !dsp::is_power_of_two(length)) return EMU_STATUS_BAD_ARGUMENT;
  const std::size_t valid = Inverse ? length : std::min<std::size_t>(read_uint(argv[0]), length);
  auto data = widen(bytes_of(argv[1]), valid, length);
  if constexpr (Fast) {
    dsp::fft_radix2(data, Inverse);
  } else {
    data = dsp::dft_naive(data, Inverse);
  }
  narrow_into(argv[2], data);
  return EMU_STATUS_OK;
}

template <bool Conjugate>
int complex_multiply(std::size_t argc, const emu_arg_view* argv) {
  if (argc != 4) return EMU_STATUS_ARITY;
  const auto a = load_complex(bytes_of(argv[1]));
  const auto b = load_complex(bytes_of(argv[2]));
  const std::size_t count = std::min({a.size(), b.size(), argv[3].size / 8});
  std::vector<std::complex<float>> out(count);
  for (std::size_t i = 0; i < count; ++i) out[i] = a[i] * (Conjugate ? std::conj(b[i]) : b[i]);
  store_complex(bytes_of(argv[3]), out);
  return EMU_STATUS_OK;
}

// (n, corr, index:u32, max_corr:f32, lag:i32, sampling_rate:f32)
int max_corr(std::size_t argc, const emu_arg_view* argv) {
  if (argc != 6) return EMU_STATUS_ARITY;
  const auto corr = load_complex(bytes_of(argv[1]));
  if (corr.empty()) return EMU_STATUS_BAD_ARGUMENT;
  float rate = 0.0f;
  if (argv[5].size < sizeof(rate)) return EMU_STATUS_BAD_ARGUMENT;
  std::memcpy(&rate, argv[5].data, sizeof(rate));
  if (!(rate > 0.0f)) return EMU_STATUS_BAD_ARGUMENT;

  std::size_t best = 0;
  float peak = -1.0f;
  for (std::size_t i = 0; i < corr.size(); ++i) {
    const float mag = std::abs(corr[i]);
    if (mag > peak) {
      peak = mag;
      best = i;
    }
  }
  const auto m = static_cast<std::int64_t>(corr.size());
  const auto index = static_cast<std::int64_t>(best);
  const auto lag = static_cast<std::int32_t>(index <= m / 2 ? index : index - m);
  const bool ok = write_scalar(argv[2], static_cast<std::uint32_t>(best)) && write_scalar(argv[3], peak) &&
                  write_scalar(argv[4], lag);
  return ok ? EMU_STATUS_OK : EMU_STATUS_BAD_ARGUMENT;
}

// 802.11 frame scrambler, x^7 + x^4 + 1, fixed seed, LSB-first. Self-inverse.
int scramble(std::size_t argc, const emu_arg_view* argv) {
  if (argc != 3) return EMU_STATUS_ARITY;
  const std::size_t n = std::min({static_cast<std::size_t>(read_uint(argv[0])), argv[1].size, argv[2].size});
  const auto* in = static_cast<const std::uint8_t*>(argv[1].data);
  auto* out = static_cast<std::uint8_t*>(argv[2].data);
  std::uint8_t state = 0x5D;
  for (std::size_t i = 0; i < n; ++i) {
    std::uint8_t byte = in[i];
    std::uint8_t result = 0;
    for (int bit = 0; bit < 8; ++bit) {
      const std::uint8_t feedback = static_cast<std::uint8_t>(((state >> 6) ^ (state >> 3)) & 1);
      state = static_cast<std::uint8_t>(((state << 1) | feedback) & 0x7F);
      result |= static_cast<std::uint8_t>((((byte >> bit) & 1) ^ feedback) << bit);
    }
    out[i] = result;
  }
  return EMU_STATUS_OK;
}

int busy(std::size_t argc, const emu_arg_view* argv) {
  if (argc != 1) return EMU_STATUS_ARITY;
  const auto duration = std::chrono::nanoseconds(read_uint(argv[0]));
  const auto deadline = std::chrono::steady_clock::now() + duration;
  // sleep through most of it so a shared core stays usable, spin the tail
  constexpr auto margin = std::chrono::microseconds(60);
  if (deadline - std::chrono::steady_clock::now() > margin + std::chrono::microseconds(20))
    std::this_thread::sleep_until(deadline - margin);
  while (std::chrono::steady_clock::now() < deadline) std::this_thread::yield();
  return EMU_STATUS_OK;
}

}  // namespace

const std::vector<BuiltinKernel>& builtin_table() {
  static const std::vector<BuiltinKernel> table = {
      {"lfm_gen", &lfm_gen, 2, {1},
       {{"br", 1}, {"icmp", 1}, {"add", 1}, {"uitofp", 1}, {"fmul", 3}, {"fdiv", 1}, {"call.cos", 1},
        {"call.sin", 1}, {"store", 2}}},
      {"delay_channel", &delay_channel, 4, {2},
       {{"br", 2}, {"icmp", 2}, {"add", 1}, {"sub", 1}, {"load", 2}, {"store", 2}}},
      // naive transforms: two nested loops, modular twiddle index, complex MAC
      {"dft_naive", &transform<false, false>, 3, {2},
       {{"br", 4}, {"icmp", 2}, {"add", 3}, {"mul", 1}, {"urem", 1}, {"load", 4}, {"fmul", 4}, {"fadd", 3},
        {"fsub", 1}, {"store", 2}}},
      {"idft_naive", &transform<true, false>, 3, {2},
       {{"br", 4}, {"icmp", 2}, {"add", 3}, {"mul", 1}, {"urem", 1}, {"load", 4}, {"fmul", 4}, {"fadd", 3},
        {"fsub", 1}, {"fdiv", 2}, {"store", 2}}},
      {"fft_radix2", &transform<false, true>, 3, {2},
       {{"br", 7}, {"icmp", 4}, {"add", 5}, {"shl", 1}, {"lshr", 1}, {"xor", 2}, {"and", 1}, {"load", 4},
        {"fmul", 4}, {"fadd", 3}, {"fsub", 3}, {"store", 4}}},
      {"ifft", &transform<true, true>, 3, {2},
       {{"br", 8}, {"icmp", 5}, {"add", 6}, {"shl", 1}, {"lshr", 1}, {"xor", 2}, {"and", 1}, {"load", 4},
        {"fmul", 6}, {"fadd", 3}, {"fsub", 3}, {"store", 6}}},
      {"cmul", &complex_multiply<false>, 4, {3},
       {{"br", 1}, {"icmp", 1}, {"add", 1}, {"load", 4}, {"fmul", 4}, {"fadd", 1}, {"fsub", 1}, {"store", 2}}},
      {"cmul_conj", &complex_multiply<true>, 4, {3},
       {{"br", 1}, {"icmp", 1}, {"add", 1}, {"load", 4}, {"fmul", 4}, {"fadd", 1}, {"fsub", 1}, {"fneg", 1},
        {"store", 2}}},
      {"max_corr", &max_corr, 6, {2, 3, 4},
       {{"br", 2}, {"icmp", 1}, {"fcmp", 1}, {"add", 1}, {"load", 2}, {"fmul", 2}, {"fadd", 1},
        {"call.sqrt", 1}, {"select", 2}, {"store", 3}}},
      {"scramble", &scramble, 3, {2},
       {{"br", 2}, {"icmp", 2}, {"add", 2}, {"lshr", 3}, {"shl", 2}, {"xor", 2}, {"and", 3}, {"or", 2},
        {"load", 1}, {"store", 1}}},
      {"busy", &busy, 1, {}, {{"br", 1}, {"call.clock", 1}, {"icmp", 1}}},
  };
  return table;
}

}  // namespace emu::detail
