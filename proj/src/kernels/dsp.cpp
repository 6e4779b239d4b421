#include <cmath>
#include <cstring>
#include <numbers>
#include <stdexcept>

#include "emu/kernels.hpp"

namespace emu {
namespace dsp {

bool is_power_of_two(std::size_t n) { return n != 0 && (n & (n - 1)) == 0; }

namespace {

std::vector<cd> twiddles(std::size_t n, bool inverse) {
  const double sign = inverse ? 1.0 : -1.0;
  std::vector<cd> w(n);
  for (std::size_t k = 0; k < n; ++k) {
    const double angle = 2.0 * std::numbers::pi * static_cast<double>(k) / static_cast<double>(n);
    w[k] = cd(std::cos(angle), sign * std::sin(angle));
  }
  return w;
}

}  // namespace

void fft_radix2(std::span<cd> a, bool inverse) {
  const std::size_t n = a.size();
  if (!is_power_of_two(n)) throw std::invalid_argument("fft_radix2: length must be a power of two");
  if (n == 1) return;

  for (std::size_t i = 1, j = 0; i < n; ++i) {
    std::size_t bit = n >> 1;
    for (; j & bit; bit >>= 1) j ^= bit;
    j ^= bit;
    if (i < j) std::swap(a[i], a[j]);
  }

  const auto w = twiddles(n, inverse);
  for (std::size_t len = 2; len <= n; len <<= 1) {
    const std::size_t half = len / 2;
    const std::size_t stride = n / len;
    for (std::size_t i = 0; i < n; i += len) {
      for (std::size_t j = 0; j < half; ++j) {
        const cd u = a[i + j];
        const cd v = a[i + j + half] * w[j * stride];
        a[i + j] = u + v;
        a[i + j + half] = u - v;
      }
    }
  }
  if (inverse) {
    const double scale = 1.0 / static_cast<double>(n);
    for (auto& x : a) x *= scale;
  }
}

std::vector<cd> dft_naive(std::span<const cd> input, bool inverse) {
  const std::size_t n = input.size();
  std::vector<cd> out(n);
  if (n == 0) return out;
  const auto w = twiddles(n, inverse);
  for (std::size_t k = 0; k < n; ++k) {
    cd acc{};
    for (std::size_t j = 0; j < n; ++j) acc += input[j] * w[(j * k) % n];
    out[k] = inverse ? acc / static_cast<double>(n) : acc;
  }
  return out;
}

std::vector<cd> lfm_chirp(std::size_t n) {
  std::vector<cd> x(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double t = static_cast<double>(i);
    const double phase = std::numbers::pi * t * t / (2.0 * static_cast<double>(n));
    x[i] = cd(std::cos(phase), std::sin(phase));
  }
  return x;
}

}  // namespace dsp

std::vector<std::complex<float>> load_complex(std::span<const std::uint8_t> bytes) {
  std::vector<std::complex<float>> out(bytes.size() / 8);
  for (std::size_t i = 0; i < out.size(); ++i) {
    float pair[2];
    std::memcpy(pair, bytes.data() + 8 * i, 8);
    out[i] = {pair[0], pair[1]};
  }
  return out;
}

void store_complex(std::span<std::uint8_t> bytes, std::span<const std::complex<float>> values) {
  const std::size_t count = std::min(values.size(), bytes.size() / 8);
  for (std::size_t i = 0; i < count; ++i) {
    const float pair[2] = {values[i].real(), values[i].imag()};
    std::memcpy(bytes.data() + 8 * i, pair, 8);
  }
}

}  // namespace emu
