#pragma once

// Generated application fixtures: the range-detection pipeline and the
// builtin-backed WiFi TX/RX and Pulse-Doppler stand-ins. The shipped
// apps/*.app.json files are emitted from these.

#include <cstdint>
#include <map>
#include <string>

#include "emu/app_model.hpp"

namespace emu::fixtures {

/// LFM -> FFT_1, FFT_0 (rx), MUL, IFFT, MAX. rx is initialized to the chirp
/// delayed by `delay` samples, so MAX reports lag == delay. Transforms run
/// over 2n points (zero padded) so the correlation is linear.
ApplicationSpec range_detection(std::uint32_t n = 256, std::uint32_t delay = 10);

/// Same graph with the per-node run_func names of the original range
/// detection JSON, resolved from range_detection.so and fft_accel.so.
ApplicationSpec range_detection_plugin(std::uint32_t n = 256, std::uint32_t delay = 10);

/// cpu-only variant whose transforms are dft_naive/idft_naive; the target of
/// fingerprint substitution.
ApplicationSpec range_detection_naive(std::uint32_t n = 4096, std::uint32_t delay = 10);

/// 7-node chain: SCRAMBLE, ENCODE, INTERLEAVE, QPSK_MOD, PILOT_INSERT, IFFT,
/// CRC. About 0.13 ms on one core.
ApplicationSpec wifi_tx();

/// 9-node chain ending in VITERBI, DESCRAMBLE, CRC_CHECK. About 2.2 ms on one
/// core.
ApplicationSpec wifi_rx();

/// REF, then per pulse FFT/MUL/IFFT, a corner turn CT, then per range bin
/// FFT_D/AMP/PEAK: 2 + 6 * pulses nodes (770 at the default 128).
ApplicationSpec pulse_doppler(std::uint32_t pulses = 128);

/// GEN followed by `ffts` independent n-point transforms with cpu and fft
/// bindings. At n=128 the fft accelerator is slower end to end than a core.
ApplicationSpec fft_heavy(std::uint32_t ffts = 8, std::uint32_t n = 128);

/// range_detection, wifi_tx, wifi_rx, pulse_doppler keyed by app name.
std::map<std::string, ApplicationSpec> shipped_apps();

}  // namespace emu::fixtures
