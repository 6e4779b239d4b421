#include "emu/fixtures.hpp"

#include <bit>
#include <cstring>

#include "emu/kernels.hpp"

namespace emu::fixtures {
namespace {

template <class T>
std::vector<std::uint8_t> le_bytes(T value) {
  static_assert(std::endian::native == std::endian::little);
  std::vector<std::uint8_t> out(sizeof(T));
  std::memcpy(out.data(), &value, sizeof(T));
  return out;
}

class Builder {
 public:
  Builder(std::string app, std::string plugin) {
    spec_.app_name = std::move(app);
    spec_.shared_object = std::move(plugin);
  }

  template <class T>
  void scalar(const std::string& name, T value) {
    spec_.variables[name] = {name, sizeof(T), false, 0, le_bytes(value)};
  }

  // output scalar slot, zero initialized
  void slot(const std::string& name, std::uint64_t bytes = 4) { spec_.variables[name] = {name, bytes, false, 0, {}}; }

  void buffer(const std::string& name, std::uint64_t bytes, std::vector<std::uint8_t> val = {}) {
    spec_.variables[name] = {name, 8, true, bytes, std::move(val)};
  }

  TaskNodeSpec& node(const std::string& name, std::vector<std::string> args) {
    auto& n = spec_.dag[name];
    n.name = name;
    n.arguments = std::move(args);
    return n;
  }

  void cpu(const std::string& node, std::string run_func, Nanos est) {
    spec_.dag.at(node).platforms.push_back({"cpu", std::move(run_func), std::nullopt, est});
  }

  void fft(const std::string& node, std::string run_func, Nanos est, std::optional<std::string> plugin = {}) {
    spec_.dag.at(node).platforms.push_back({"fft", std::move(run_func), std::move(plugin), est});
  }

  // busy(duration) stand-in with its own duration slot
  void busy(const std::string& name, Nanos duration) {
    const std::string var = "t_" + name;
    scalar<std::uint64_t>(var, static_cast<std::uint64_t>(duration.count()));
    node(name, {var});
    cpu(name, "busy", duration);
  }

  void edge(const std::string& from, const std::string& to) {
    spec_.dag.at(from).successors.push_back(to);
    spec_.dag.at(to).predecessors.push_back(from);
  }

  void chain(const std::vector<std::string>& names) {
    for (std::size_t i = 1; i < names.size(); ++i) edge(names[i - 1], names[i]);
  }

  ApplicationSpec take() { return std::move(spec_); }

 private:
  ApplicationSpec spec_;
};

std::vector<std::uint8_t> complex_bytes(const std::vector<dsp::cd>& values, std::size_t capacity) {
  std::vector<std::complex<float>> narrow(capacity);
  for (std::size_t i = 0; i < values.size() && i < capacity; ++i)
    narrow[i] = {static_cast<float>(values[i].real()), static_cast<float>(values[i].imag())};
  std::vector<std::uint8_t> out(capacity * 8);
  store_complex(out, narrow);
  return out;
}

std::vector<std::uint8_t> delayed_chirp(std::uint32_t n, std::uint32_t delay) {
  const auto chirp = dsp::lfm_chirp(n);
  std::vector<dsp::cd> rx(n);
  for (std::size_t i = delay; i < n; ++i) rx[i] = chirp[i - delay];
  return complex_bytes(rx, n);
}

struct RangeNames {
  std::string lfm, fft0_cpu, fft1_cpu, mul, ifft_cpu, max;
  std::string fft0_acc, fft1_acc, ifft_acc;
  std::optional<std::string> accel_plugin;
  bool accel = true;
};

// cost scales with n log n relative to the 256-sample calibration
ApplicationSpec range_graph(const std::string& plugin, std::uint32_t n, std::uint32_t delay, const RangeNames& k) {
  Builder b("range_detection", plugin);
  const std::uint64_t sig = 8ull * n;
  const std::uint64_t pad = 16ull * n;
  b.scalar<std::uint32_t>("n_samples", n);
  b.buffer("lfm_waveform", sig);
  b.buffer("rx", sig, delayed_chirp(n, delay));
  b.buffer("X1", pad);
  b.buffer("X2", pad);
  b.buffer("corr_freq", pad);
  b.buffer("corr", pad);
  b.slot("index");
  b.slot("max_corr");
  b.slot("lag");
  b.scalar<float>("sampling_rate", 1.0e6f);

  b.node("LFM", {"n_samples", "lfm_waveform"});
  b.node("FFT_0", {"n_samples", "rx", "X1"});
  b.node("FFT_1", {"n_samples", "lfm_waveform", "X2"});
  b.node("MUL", {"n_samples", "X1", "X2", "corr_freq"});
  b.node("IFFT", {"n_samples", "corr_freq", "corr"});
  b.node("MAX", {"n_samples", "corr", "index", "max_corr", "lag", "sampling_rate"});
  b.edge("LFM", "FFT_1");
  b.edge("FFT_0", "MUL");
  b.edge("FFT_1", "MUL");
  b.chain({"MUL", "IFFT", "MAX"});

  const double s = n / 256.0;
  auto scaled = [s](long us) { return Nanos(static_cast<std::int64_t>(us * 1000 * s)); };
  b.cpu("LFM", k.lfm, scaled(60));
  b.cpu("FFT_0", k.fft0_cpu, scaled(60));
  b.cpu("FFT_1", k.fft1_cpu, scaled(60));
  b.cpu("MUL", k.mul, scaled(50));
  b.cpu("IFFT", k.ifft_cpu, scaled(60));
  b.cpu("MAX", k.max, scaled(90));
  if (k.accel) {
    // scheduler adds the fixed input latency; est covers processing plus the
    // 2n-point result transfer
    b.fft("FFT_0", k.fft0_acc, 35_us, k.accel_plugin);
    b.fft("FFT_1", k.fft1_acc, 35_us, k.accel_plugin);
    b.fft("IFFT", k.ifft_acc, 40_us, k.accel_plugin);
  }
  return b.take();
}

}  // namespace

ApplicationSpec range_detection(std::uint32_t n, std::uint32_t delay) {
  RangeNames k{"lfm_gen", "fft_radix2", "fft_radix2", "cmul_conj", "ifft", "max_corr",
               "fft_radix2", "fft_radix2", "ifft", std::nullopt, true};
  return range_graph(std::string(kBuiltinProvider), n, delay, k);
}

ApplicationSpec range_detection_plugin(std::uint32_t n, std::uint32_t delay) {
  RangeNames k{"range_detect_LFM",
               "range_detect_FFT_0_CPU",
               "range_detect_FFT_1_CPU",
               "range_detect_MUL",
               "range_detect_IFFT_CPU",
               "range_detect_MAX",
               "range_detect_FFT_0_ACCEL",
               "range_detect_FFT_1_ACCEL",
               "range_detect_IFFT_ACCEL",
               "fft_accel.so",
               true};
  return range_graph("range_detection.so", n, delay, k);
}

ApplicationSpec range_detection_naive(std::uint32_t n, std::uint32_t delay) {
  RangeNames k{"lfm_gen", "dft_naive", "dft_naive", "cmul_conj", "idft_naive", "max_corr", "", "", "", std::nullopt,
               false};
  return range_graph(std::string(kBuiltinProvider), n, delay, k);
}

ApplicationSpec wifi_tx() {
  Builder b("wifi_tx", std::string(kBuiltinProvider));
  // one 64-bit frame, 64 subcarriers
  b.scalar<std::uint32_t>("n_bytes", 8);
  b.scalar<std::uint32_t>("n_sub", 64);
  b.buffer("payload", 8, {0x12, 0x34, 0x56, 0x78, 0x9a, 0xbc, 0xde, 0xf0});
  b.buffer("scrambled", 8);
  b.buffer("symbols", 64 * 8);
  b.buffer("tx_frame", 64 * 8);

  b.node("SCRAMBLE", {"n_bytes", "payload", "scrambled"});
  b.cpu("SCRAMBLE", "scramble", 10_us);
  b.busy("ENCODE", 20_us);
  b.busy("INTERLEAVE", 10_us);
  b.busy("QPSK_MOD", 15_us);
  b.busy("PILOT_INSERT", 15_us);
  b.node("IFFT", {"n_sub", "symbols", "tx_frame"});
  b.cpu("IFFT", "ifft", 40_us);
  b.fft("IFFT", "ifft", 10_us);
  b.busy("CRC", 20_us);
  b.chain({"SCRAMBLE", "ENCODE", "INTERLEAVE", "QPSK_MOD", "PILOT_INSERT", "IFFT", "CRC"});
  return b.take();
}

ApplicationSpec wifi_rx() {
  Builder b("wifi_rx", std::string(kBuiltinProvider));
  b.scalar<std::uint32_t>("n_bytes", 8);
  b.scalar<std::uint32_t>("n_sub", 64);
  b.buffer("rx_frame", 64 * 8);
  b.buffer("spectrum", 64 * 8);
  b.buffer("decoded", 8);
  b.buffer("payload", 8);

  b.busy("MATCH_FILTER", 300_us);
  b.busy("PAYLOAD_EXTRACT", 80_us);
  b.node("FFT", {"n_sub", "rx_frame", "spectrum"});
  b.cpu("FFT", "fft_radix2", 40_us);
  b.fft("FFT", "fft_radix2", 10_us);
  b.busy("PILOT_REMOVE", 50_us);
  b.busy("QPSK_DEMOD", 100_us);
  b.busy("DEINTERLEAVE", 60_us);
  // decoder cost stand-in
  b.busy("VITERBI", 1400_us);
  b.node("DESCRAMBLE", {"n_bytes", "decoded", "payload"});
  b.cpu("DESCRAMBLE", "scramble", 40_us);
  b.busy("CRC_CHECK", 150_us);
  b.chain({"MATCH_FILTER", "PAYLOAD_EXTRACT", "FFT", "PILOT_REMOVE", "QPSK_DEMOD", "DEINTERLEAVE", "VITERBI",
           "DESCRAMBLE", "CRC_CHECK"});
  return b.take();
}

ApplicationSpec pulse_doppler(std::uint32_t pulses) {
  constexpr std::uint32_t n = 128;
  constexpr std::uint64_t bytes = 8ull * n;
  Builder b("pulse_doppler", std::string(kBuiltinProvider));
  b.scalar<std::uint32_t>("n_samples", n);
  b.scalar<float>("prf", 1.0e4f);
  b.buffer("ref_wave", bytes, complex_bytes(dsp::lfm_chirp(n), n));
  b.buffer("ref_spec", bytes);

  b.node("REF", {"n_samples", "ref_wave", "ref_spec"});
  b.cpu("REF", "fft_radix2", 30_us);
  b.fft("REF", "fft_radix2", 25_us);
  b.busy("CT", 500_us);

  for (std::uint32_t i = 0; i < pulses; ++i) {
    const auto p = std::to_string(i);
    for (const char* v : {"rx_", "X_", "Y_", "C_", "D_", "P_"}) b.buffer(v + p, bytes);
    b.slot("idx_" + p);
    b.slot("peak_" + p);
    b.slot("lag_" + p);

    b.node("FFT_" + p, {"n_samples", "rx_" + p, "X_" + p});
    b.cpu("FFT_" + p, "fft_radix2", 30_us);
    b.fft("FFT_" + p, "fft_radix2", 25_us);
    b.node("MUL_" + p, {"n_samples", "X_" + p, "ref_spec", "Y_" + p});
    b.cpu("MUL_" + p, "cmul_conj", 20_us);
    b.node("IFFT_" + p, {"n_samples", "Y_" + p, "C_" + p});
    b.cpu("IFFT_" + p, "ifft", 30_us);
    b.fft("IFFT_" + p, "ifft", 25_us);
    b.edge("REF", "MUL_" + p);
    b.chain({"FFT_" + p, "MUL_" + p, "IFFT_" + p, "CT"});

    // slow-time stage; the corner turn itself is a cost stand-in, so each
    // range bin reads its pulse buffer
    b.node("FFT_D_" + p, {"n_samples", "C_" + p, "D_" + p});
    b.cpu("FFT_D_" + p, "fft_radix2", 30_us);
    b.fft("FFT_D_" + p, "fft_radix2", 25_us);
    b.node("AMP_" + p, {"n_samples", "D_" + p, "D_" + p, "P_" + p});
    b.cpu("AMP_" + p, "cmul_conj", 20_us);
    b.node("PEAK_" + p, {"n_samples", "P_" + p, "idx_" + p, "peak_" + p, "lag_" + p, "prf"});
    b.cpu("PEAK_" + p, "max_corr", 25_us);
    b.chain({"CT", "FFT_D_" + p, "AMP_" + p, "PEAK_" + p});
  }
  return b.take();
}

ApplicationSpec fft_heavy(std::uint32_t ffts, std::uint32_t n) {
  Builder b("fft_heavy", std::string(kBuiltinProvider));
  b.scalar<std::uint32_t>("n_samples", n);
  b.buffer("wave", 8ull * n);
  b.node("GEN", {"n_samples", "wave"});
  b.cpu("GEN", "lfm_gen", 10_us);
  for (std::uint32_t i = 0; i < ffts; ++i) {
    const auto name = "FFT_" + std::to_string(i);
    const auto out = "S_" + std::to_string(i);
    b.buffer(out, 8ull * n);
    b.node(name, {"n_samples", "wave", out});
    b.cpu(name, "fft_radix2", 30_us);
    b.fft(name, "fft_radix2", 25_us);
    b.edge("GEN", name);
  }
  return b.take();
}

std::map<std::string, ApplicationSpec> shipped_apps() {
  std::map<std::string, ApplicationSpec> apps;
  for (auto spec : {range_detection(), wifi_tx(), wifi_rx(), pulse_doppler()}) {
    auto name = spec.app_name;
    apps.emplace(std::move(name), std::move(spec));
  }
  return apps;
}

}  // namespace emu::fixtures
