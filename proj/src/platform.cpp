#include "emu/platform.hpp"

#include <pthread.h>
#include <sched.h>
#include <sys/prctl.h>

#include <algorithm>
#include <charconv>
#include <cstring>
#include <filesystem>
#include <set>
#include <stdexcept>

#include "detail/json_util.hpp"

namespace emu {

std::string_view to_string(PEKind kind) { return kind == PEKind::core ? "core" : "accelerator"; }

std::string_view to_string(Actor actor) { return actor == Actor::manager ? "manager" : "worker"; }

namespace {

using detail::json;
using detail::ordered_json;

ProcessTime parse_process_time(const json& v, const std::string& where) {
  if (v.is_number_unsigned()) return {Nanos(v.get<std::uint64_t>()), 0.0};
  if (!v.is_object()) throw ParseError(where + ": expected ns or {base_ns, ns_per_byte}");
  detail::reject_unknown_keys(v, {"base_ns", "ns_per_byte"}, where);
  ProcessTime pt;
  pt.base = Nanos(detail::require_uint(v, "base_ns", where));
  if (v.contains("ns_per_byte")) pt.ns_per_byte = detail::require_number(v, "ns_per_byte", where);
  if (pt.ns_per_byte < 0) throw ParseError(where + ": ns_per_byte must be non-negative");
  return pt;
}

AccelModel parse_accel(const json& v, const std::string& where) {
  detail::reject_unknown_keys(v, {"fixed_latency_ns", "bytes_per_sec", "process_time", "local_mem_bytes"}, where);
  AccelModel m;
  m.fixed_latency = Nanos(detail::require_uint(v, "fixed_latency_ns", where));
  m.bytes_per_sec = detail::require_uint(v, "bytes_per_sec", where);
  if (m.bytes_per_sec == 0) throw ParseError(where + ": bytes_per_sec must be positive");
  m.local_mem_bytes = detail::require_uint(v, "local_mem_bytes", where);
  for (const auto& [kernel, pt] : detail::require_object(v, "process_time", where).items())
    m.process_time[kernel] = parse_process_time(pt, where + ".process_time." + kernel);
  return m;
}

ordered_json emit_accel(const AccelModel& m) {
  ordered_json pt = ordered_json::object();
  for (const auto& [kernel, p] : m.process_time) {
    if (p.ns_per_byte == 0.0)
      pt[kernel] = p.base.count();
    else
      pt[kernel] = {{"base_ns", p.base.count()}, {"ns_per_byte", p.ns_per_byte}};
  }
  return {{"fixed_latency_ns", m.fixed_latency.count()},
          {"bytes_per_sec", m.bytes_per_sec},
          {"process_time", pt},
          {"local_mem_bytes", m.local_mem_bytes}};
}

std::map<std::string, std::string> preset_options(std::string_view spec, std::string& name) {
  std::map<std::string, std::string> opts;
  std::size_t pos = spec.find(',');
  name = std::string(spec.substr(0, pos));
  while (pos != std::string_view::npos) {
    const std::size_t next = spec.find(',', pos + 1);
    const auto item = spec.substr(pos + 1, next == std::string_view::npos ? std::string_view::npos : next - pos - 1);
    const auto eq = item.find('=');
    if (eq == std::string_view::npos || eq == 0) throw ParseError("platform preset option must be key=value: " + std::string(item));
    opts[std::string(item.substr(0, eq))] = std::string(item.substr(eq + 1));
    pos = next;
  }
  return opts;
}

std::uint32_t option_count(std::map<std::string, std::string>& opts, const std::string& key, std::uint32_t fallback) {
  auto it = opts.find(key);
  if (it == opts.end()) return fallback;
  std::uint32_t value = 0;
  const auto& s = it->second;
  auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), value);
  if (ec != std::errc() || p != s.data() + s.size()) throw ParseError("platform preset: " + key + " must be a count");
  opts.erase(it);
  return value;
}

void reject_leftover(const std::map<std::string, std::string>& opts, const std::string& preset) {
  if (!opts.empty()) throw ParseError("platform preset " + preset + ": unknown option " + opts.begin()->first);
}

}  // namespace

PlatformConfig parse_platform(std::string_view text) {
  const auto doc = detail::parse_strict(text, "platform");
  const std::string where = "platform";
  detail::reject_unknown_keys(doc, {"name", "manager_core", "pes"}, where);
  PlatformConfig config;
  if (doc.contains("name")) config.name = detail::require_string(doc, "name", where);
  if (doc.contains("manager_core")) config.manager_core = static_cast<int>(detail::require_uint(doc, "manager_core", where));
  for (const auto& item : detail::require_array(doc, "pes", where)) {
    const std::string w = "platform pes entry";
    detail::reject_unknown_keys(item, {"type", "kind", "count", "accel", "cost_scale", "pace", "label"}, w);
    PEGroup g;
    g.pe_type = detail::require_string(item, "type", w);
    if (g.pe_type.empty()) throw ParseError(w + ": type must be nonempty");
    const auto kind = detail::require_string(item, "kind", w);
    if (kind == "core") {
      g.kind = PEKind::core;
    } else if (kind == "accelerator") {
      g.kind = PEKind::accelerator;
    } else {
      throw ParseError(w + ": kind must be core or accelerator, got " + kind);
    }
    g.count = static_cast<std::uint32_t>(detail::require_uint(item, "count", w));
    if (g.count == 0) throw ParseError(w + ": count must be at least 1");
    if (item.contains("accel")) g.accel = parse_accel(item["accel"], w + " " + g.pe_type + ".accel");
    if (g.kind == PEKind::accelerator && !g.accel) throw ParseError(w + ": accelerator " + g.pe_type + " needs an accel model");
    if (item.contains("cost_scale")) g.cost_scale = detail::require_number(item, "cost_scale", w);
    if (!(g.cost_scale > 0)) throw ParseError(w + ": cost_scale must be positive");
    if (item.contains("pace")) g.pace = detail::require_bool(item, "pace", w);
    if (item.contains("label")) g.label = detail::require_string(item, "label", w);
    config.groups.push_back(std::move(g));
  }
  return config;
}

PlatformConfig load_platform(const std::string& path) { return parse_platform(detail::read_file(path)); }

std::string emit_platform(const PlatformConfig& config) {
  ordered_json doc;
  if (!config.name.empty()) doc["name"] = config.name;
  doc["manager_core"] = config.manager_core;
  doc["pes"] = ordered_json::array();
  for (const auto& g : config.groups) {
    ordered_json e;
    e["type"] = g.pe_type;
    e["kind"] = std::string(to_string(g.kind));
    e["count"] = g.count;
    if (g.accel) e["accel"] = emit_accel(*g.accel);
    if (g.cost_scale != 1.0) e["cost_scale"] = g.cost_scale;
    if (g.pace) e["pace"] = true;
    if (!g.label.empty()) e["label"] = g.label;
    doc["pes"].push_back(std::move(e));
  }
  return detail::pretty(doc);
}

PlatformConfig platform_preset(std::string_view spec) {
  std::string name;
  auto opts = preset_options(spec, name);
  PlatformConfig config;
  config.name = std::string(spec);
  config.manager_core = 0;

  if (name == "zcu102-like") {
    const auto cpus = option_count(opts, "cpu", 3);
    const auto ffts = option_count(opts, "fft", 2);
    reject_leftover(opts, name);
    if (cpus > 0) config.groups.push_back({"cpu", PEKind::core, cpus, std::nullopt, 1.0, true, ""});
    if (ffts > 0) {
      // Transfer-dominated: a 128-point transform (1 KiB each way) costs
      // 2 x (15 us + 2.56 us) + 5 us, slower than a cpu core.
      AccelModel m;
      m.fixed_latency = 15_us;
      m.bytes_per_sec = 400'000'000;
      m.process_time["fft_radix2"] = {5_us, 0.0};
      m.process_time["ifft"] = {5_us, 0.0};
      m.local_mem_bytes = 64 * 1024;
      config.groups.push_back({"fft", PEKind::accelerator, ffts, m, 1.0, false, ""});
    }
  } else if (name == "odroid-like") {
    const auto big = option_count(opts, "big", 4);
    const auto little = option_count(opts, "little", 3);
    double ratio = 1.8;
    if (auto it = opts.find("ratio"); it != opts.end()) {
      try {
        std::size_t used = 0;
        ratio = std::stod(it->second, &used);
        if (used != it->second.size()) throw std::invalid_argument("trailing");
      } catch (const std::exception&) {
        throw ParseError("platform preset: ratio must be a number");
      }
      if (!(ratio > 0)) throw ParseError("platform preset: ratio must be positive");
      opts.erase(it);
    }
    reject_leftover(opts, name);
    if (big > 0) config.groups.push_back({"cpu", PEKind::core, big, std::nullopt, 1.0, true, "big"});
    if (little > 0) config.groups.push_back({"cpu", PEKind::core, little, std::nullopt, ratio, true, "little"});
  } else {
    throw LookupError("unknown platform preset " + name + "; available: {odroid-like,zcu102-like}");
  }
  return config;
}

PlatformConfig resolve_platform(const std::string& arg) {
  std::error_code ec;
  if (std::filesystem::is_regular_file(arg, ec)) return load_platform(arg);
  return platform_preset(arg);
}

std::vector<ProcessorElement> build_pes(const PlatformConfig& config) {
  std::vector<ProcessorElement> pes;
  std::map<std::string, int> ordinal;
  for (const auto& g : config.groups) {
    if (g.kind == PEKind::accelerator && !g.accel) throw EngineError("accelerator group " + g.pe_type + " has no model");
    const std::string prefix = g.label.empty() ? g.pe_type : g.label;
    for (std::uint32_t i = 0; i < g.count; ++i) {
      ProcessorElement pe;
      pe.pe_id = static_cast<int>(pes.size());
      pe.pe_type = g.pe_type;
      pe.name = prefix + std::to_string(ordinal[prefix]++);
      pe.kind = g.kind;
      pe.accel = g.accel;
      pe.cost_scale = g.cost_scale;
      pe.pace = g.pace;
      pes.push_back(std::move(pe));
    }
  }
  if (pes.empty()) throw EngineError("platform has zero PEs");
  return pes;
}

Placement place_workers(std::span<const ProcessorElement> pes, int manager_core, int host_cores) {
  Placement out;
  host_cores = std::max(host_cores, 1);
  if (manager_core < 0 || manager_core >= host_cores) {
    out.warnings.push_back("manager core " + std::to_string(manager_core) + " not on this host; using core 0");
    manager_core = 0;
  }
  out.manager_core = manager_core;

  std::vector<int> pool;
  for (int c = 0; c < host_cores; ++c)
    if (c != manager_core) pool.push_back(c);
  if (pool.empty()) {
    pool.push_back(manager_core);
    if (!pes.empty()) out.warnings.push_back("single host core: PE workers share the manager's core");
  }

  out.pe_core.assign(pes.size(), -1);
  std::set<int> used;
  std::size_t next_unused = 0;
  std::size_t round_robin = 0;
  bool shared = false;
  auto take = [&]() {
    while (next_unused < pool.size() && used.contains(pool[next_unused])) ++next_unused;
    if (next_unused < pool.size()) {
      used.insert(pool[next_unused]);
      return pool[next_unused];
    }
    shared = true;
    return pool[round_robin++ % pool.size()];
  };

  bool any_core = false;
  for (const auto& pe : pes)
    if (pe.kind == PEKind::core) {
      any_core = true;
      out.pe_core[pe.pe_id] = pe.host_core_hint.value_or(take());
    }
  for (const auto& pe : pes)
    if (pe.kind == PEKind::accelerator) out.pe_core[pe.pe_id] = pe.host_core_hint.value_or(take());

  if (!any_core && !pes.empty()) out.warnings.push_back("no core-kind PEs; only accelerator workers on the pool cores");
  if (shared && pool.size() > 1) out.warnings.push_back("more workers than pool cores; some workers share a host core");
  return out;
}

std::uint64_t DispatchedTask::total_bytes() const {
  std::uint64_t sum = 0;
  for (const auto& a : args) sum += a.size;
  return sum;
}

std::uint64_t DispatchedTask::in_bytes() const {
  std::uint64_t sum = 0;
  for (std::size_t i = 0; i < args.size(); ++i)
    if (is_ptr[i] && reads[i]) sum += args[i].size;
  return sum;
}

std::uint64_t DispatchedTask::out_bytes() const {
  std::uint64_t sum = 0;
  for (std::size_t i = 0; i < args.size(); ++i)
    if (is_ptr[i] && writes[i]) sum += args[i].size;
  return sum;
}

ResourceHandler::ResourceHandler(int pe_id, TransitionObserver observer)
    : pe_id_(pe_id), observer_(std::move(observer)) {}

PEStatus ResourceHandler::status() const {
  std::lock_guard lock(mutex_);
  return status_;
}

void ResourceHandler::check(PEStatus from, PEStatus to, Actor actor) const {
  if (status_ != from)
    throw std::logic_error("pe " + std::to_string(pe_id_) + ": " + std::string(to_string(actor)) + " cannot move " +
                           std::string(to_string(status_)) + " -> " + std::string(to_string(to)));
}

void ResourceHandler::transition(PEStatus from, PEStatus to, Actor actor) {
  check(from, to, actor);
  status_ = to;
  if (observer_) observer_({pe_id_, from, to, actor});
}

void ResourceHandler::dispatch(DispatchedTask task) {
  std::lock_guard lock(mutex_);
  check(PEStatus::idle, PEStatus::run, Actor::manager);
  slot_ = std::move(task);
  record_.reset();
  transition(PEStatus::idle, PEStatus::run, Actor::manager);
  dispatched_.notify_one();
}

const DispatchedTask* ResourceHandler::running() const {
  std::lock_guard lock(mutex_);
  return status_ == PEStatus::run ? &*slot_ : nullptr;
}

const DispatchedTask* ResourceHandler::wait_running(Nanos timeout) const {
  std::unique_lock lock(mutex_);
  dispatched_.wait_for(lock, timeout, [&] { return status_ == PEStatus::run; });
  return status_ == PEStatus::run ? &*slot_ : nullptr;
}

void ResourceHandler::wake() const { dispatched_.notify_all(); }

void ResourceHandler::complete(CompletionRecord record) {
  std::lock_guard lock(mutex_);
  check(PEStatus::run, PEStatus::complete, Actor::worker);
  record_ = std::move(record);
  transition(PEStatus::run, PEStatus::complete, Actor::worker);
}

std::optional<std::pair<DispatchedTask, CompletionRecord>> ResourceHandler::take_completion() {
  std::lock_guard lock(mutex_);
  if (status_ != PEStatus::complete) return std::nullopt;
  std::pair<DispatchedTask, CompletionRecord> out{std::move(*slot_), std::move(*record_)};
  slot_.reset();
  record_.reset();
  transition(PEStatus::complete, PEStatus::idle, Actor::manager);
  return out;
}

Nanos WallClock::now() const {
  return std::chrono::duration_cast<Nanos>(std::chrono::steady_clock::now() - reference);
}

void WallClock::wait_until(Nanos target) const {
  // Sleeps overshoot by a few to tens of microseconds; sleep through the bulk
  // and yield for the tail.
  constexpr Nanos sleep_margin = 60_us;
  for (;;) {
    const Nanos remaining = target - now();
    if (remaining <= Nanos{0}) return;
    if (remaining > sleep_margin + 20_us)
      std::this_thread::sleep_for(remaining - sleep_margin);
    else
      std::this_thread::yield();
  }
}

namespace {

KernelStatus call_kernel(const DispatchedTask& task, std::span<const emu_arg_view> args, std::string& error) {
  if (task.kernel == nullptr || !task.kernel->resolved()) {
    error = "kernel for " + task.node + " is not resolved";
    return KernelStatus::failed;
  }
  const auto status = invoke(*task.kernel, args);
  if (status != KernelStatus::ok) error = task.kernel->name + ": " + std::string(to_string(status));
  return status;
}

}  // namespace

CompletionRecord run_core_task(const ProcessorElement& pe, const DispatchedTask& task, const WallClock& clock) {
  CompletionRecord rec;
  rec.start = clock.now();
  rec.status = call_kernel(task, task.args, rec.error);
  if (pe.pace && task.pace_target) clock.wait_until(rec.start + *task.pace_target);
  rec.end = clock.now();
  return rec;
}

CompletionRecord run_accelerator_task(const ProcessorElement& pe, const DispatchedTask& task,
                                      std::vector<std::uint8_t>& local_mem, const WallClock& clock) {
  CompletionRecord rec;
  rec.start = clock.now();
  if (!pe.accel) {
    rec.status = KernelStatus::failed;
    rec.error = "pe " + pe.name + " has no accelerator model";
    rec.end = rec.start;
    return rec;
  }
  const auto& model = *pe.accel;
  if (task.total_bytes() > model.local_mem_bytes) {
    rec.status = KernelStatus::failed;
    rec.error = task.node + ": " + std::to_string(task.total_bytes()) + " argument bytes exceed local memory of " +
                pe.name + " (" + std::to_string(model.local_mem_bytes) + ")";
    rec.end = rec.start;
    return rec;
  }
  if (local_mem.size() < model.local_mem_bytes) local_mem.resize(model.local_mem_bytes);

  std::vector<emu_arg_view> local(task.args.size());
  std::size_t offset = 0;
  for (std::size_t i = 0; i < task.args.size(); ++i) {
    local[i] = {local_mem.data() + offset, task.args[i].size};
    if (task.args[i].size > 0) std::memcpy(local[i].data, task.args[i].data, task.args[i].size);
    offset += task.args[i].size;
  }
  clock.wait_until(rec.start + transfer_time(task.in_bytes(), model));
  const Nanos process_start = clock.now();
  rec.transfer_in = process_start - rec.start;

  rec.status = call_kernel(task, local, rec.error);
  clock.wait_until(process_start + task.process_time.value_or(Nanos{0}));

  const Nanos out_start = clock.now();
  if (rec.status == KernelStatus::ok) {
    for (std::size_t i = 0; i < task.args.size(); ++i)
      if (task.writes[i] && task.args[i].size > 0) std::memcpy(task.args[i].data, local[i].data, task.args[i].size);
  }
  clock.wait_until(out_start + transfer_time(task.out_bytes(), model));
  rec.end = clock.now();
  rec.transfer_out = rec.end - out_start;
  return rec;
}

void tune_current_thread(std::optional<int> core) {
  prctl(PR_SET_TIMERSLACK, 1000UL, 0, 0, 0);
  if (!core || *core < 0 || *core >= CPU_SETSIZE) return;
  cpu_set_t set;
  CPU_ZERO(&set);
  CPU_SET(*core, &set);
  pthread_setaffinity_np(pthread_self(), sizeof(set), &set);
}

WorkerPool::WorkerPool(std::span<const ProcessorElement> pes, std::span<ResourceHandler* const> handlers,
                       const Placement& placement, WallClock clock) {
  if (pes.size() != handlers.size()) throw EngineError("worker pool: one handler per PE required");
  handlers_.assign(handlers.begin(), handlers.end());
  threads_.reserve(pes.size());
  try {
    for (std::size_t i = 0; i < pes.size(); ++i) {
      const ProcessorElement* pe = &pes[i];
      ResourceHandler* handler = handlers[i];
      std::optional<int> core;
      if (static_cast<std::size_t>(pe->pe_id) < placement.pe_core.size()) core = placement.pe_core[pe->pe_id];
      threads_.emplace_back([this, pe, handler, core, clock] {
        tune_current_thread(core);
        std::vector<std::uint8_t> local_mem;
        while (!stop_.load(std::memory_order_relaxed)) {
          const DispatchedTask* task = handler->wait_running(10_ms);
          if (task == nullptr) continue;
          handler->complete(pe->kind == PEKind::core ? run_core_task(*pe, *task, clock)
                                                     : run_accelerator_task(*pe, *task, local_mem, clock));
        }
      });
    }
  } catch (...) {
    stop();
    throw;
  }
}

WorkerPool::~WorkerPool() { stop(); }

void WorkerPool::stop() {
  stop_.store(true);
  for (auto* h : handlers_) h->wake();
  for (auto& t : threads_)
    if (t.joinable()) t.join();
}

}  // namespace emu
