#include "oracles.hpp"

#include <algorithm>
#include <complex>
#include <cstring>
#include <set>

namespace emu::testing {

std::size_t count_kind(const Trace& trace, EventKind kind) {
  return static_cast<std::size_t>(
      std::count_if(trace.events.begin(), trace.events.end(), [&](const TraceEvent& e) { return e.kind == kind; }));
}

std::vector<std::string> dependency_violations(const Trace& trace,
                                               const std::map<std::string, ApplicationSpec>& apps) {
  std::vector<std::string> out;
  std::map<std::int64_t, std::pair<std::string, std::int64_t>> injected;  // id -> (app, t)
  std::map<std::pair<std::int64_t, std::string>, std::int64_t> starts, ends;
  for (const auto& e : trace.events) {
    if (e.kind == EventKind::inject) injected[e.instance_id] = {e.app, e.t.count()};
    if (e.kind == EventKind::task_start) starts[{e.instance_id, e.node}] = e.t.count();
    if (e.kind == EventKind::task_end) ends[{e.instance_id, e.node}] = e.t.count();
  }
  for (const auto& [key, start] : starts) {
    const auto& [id, node] = key;
    auto inj = injected.find(id);
    if (inj == injected.end()) {
      out.push_back("task " + node + "#" + std::to_string(id) + " of an instance never injected");
      continue;
    }
    if (start < inj->second.second) out.push_back(node + "#" + std::to_string(id) + " starts before arrival");
    const auto& spec = apps.at(inj->second.first);
    for (const auto& pred : spec.dag.at(node).predecessors) {
      auto pe = ends.find({id, pred});
      if (pe == ends.end())
        out.push_back(node + "#" + std::to_string(id) + " ran but predecessor " + pred + " never ended");
      else if (start < pe->second)
        out.push_back(node + "#" + std::to_string(id) + " starts before predecessor " + pred + " ends");
    }
  }
  return out;
}

std::vector<std::string> overlap_violations(const Trace& trace) {
  std::vector<std::string> out;
  std::map<std::tuple<int, std::int64_t, std::string>, std::int64_t> open;
  std::map<int, std::vector<std::pair<std::int64_t, std::int64_t>>> intervals;
  for (const auto& e : trace.events) {
    if (e.kind == EventKind::task_start) open[{e.pe_id, e.instance_id, e.node}] = e.t.count();
    if (e.kind == EventKind::task_end) {
      auto it = open.find({e.pe_id, e.instance_id, e.node});
      if (it == open.end()) {
        out.push_back("task_end without start for " + e.node);
        continue;
      }
      intervals[e.pe_id].push_back({it->second, e.t.count()});
      open.erase(it);
    }
  }
  for (auto& [pe, list] : intervals) {
    std::sort(list.begin(), list.end());
    for (std::size_t i = 1; i < list.size(); ++i)
      if (list[i].first < list[i - 1].second)
        out.push_back("pe " + std::to_string(pe) + " overlap at " + std::to_string(list[i].first));
  }
  return out;
}

AccelModel test_accel_model() {
  AccelModel m;
  m.fixed_latency = Nanos(2000);
  m.bytes_per_sec = 1'000'000'000;
  m.process_time["fft_radix2"] = {Nanos(3000), 0.0};
  m.local_mem_bytes = 64 * 1024;
  return m;
}

namespace {

template <class T>
std::vector<std::uint8_t> raw(T v) {
  std::vector<std::uint8_t> out(sizeof(T));
  std::memcpy(out.data(), &v, sizeof(T));
  return out;
}

}  // namespace

ApplicationSpec random_app(std::mt19937_64& rng, const std::string& name, const RandomDagOptions& options) {
  ApplicationSpec spec;
  spec.app_name = name;
  spec.shared_object = "builtin";
  std::uniform_int_distribution<std::size_t> count(1, options.max_nodes);
  std::uniform_int_distribution<std::int64_t> est(options.min_est_us, options.max_est_us);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  const std::size_t n = count(rng);
  spec.variables["n"] = {"n", 4, false, 0, raw<std::uint32_t>(64)};

  std::vector<std::string> names;
  for (std::size_t i = 0; i < n; ++i) {
    // zero padded so name order matches creation order
    char buf[24];
    std::snprintf(buf, sizeof buf, "T%02zu", i);
    names.emplace_back(buf);
  }
  for (std::size_t i = 0; i < n; ++i) {
    TaskNodeSpec node;
    node.name = names[i];
    const Nanos cpu_est = std::chrono::microseconds(est(rng));
    if (u(rng) < options.fft_fraction) {
      const auto in = "in_" + names[i], out = "out_" + names[i];
      spec.variables[in] = {in, 8, true, 512, {}};
      spec.variables[out] = {out, 8, true, 512, {}};
      node.arguments = {"n", in, out};
      node.platforms.push_back({"cpu", "fft_radix2", std::nullopt, cpu_est});
      node.platforms.push_back({"fft", "fft_radix2", std::nullopt, std::chrono::microseconds(est(rng))});
    } else {
      const auto t = "t_" + names[i];
      spec.variables[t] = {t, 8, false, 0, raw<std::uint64_t>(static_cast<std::uint64_t>(cpu_est.count()))};
      node.arguments = {t};
      node.platforms.push_back({"cpu", "busy", std::nullopt, cpu_est});
    }
    spec.dag[node.name] = node;
  }
  for (std::size_t j = 1; j < n; ++j)
    for (std::size_t i = 0; i < j; ++i)
      if (u(rng) < options.edge_probability) {
        spec.dag[names[i]].successors.push_back(names[j]);
        spec.dag[names[j]].predecessors.push_back(names[i]);
      }
  return spec;
}

std::vector<ProcessorElement> random_platform(std::size_t cpus, std::size_t ffts, bool pace) {
  std::vector<ProcessorElement> pes;
  for (std::size_t i = 0; i < std::max<std::size_t>(cpus, 1); ++i) {
    ProcessorElement pe;
    pe.pe_id = static_cast<int>(pes.size());
    pe.pe_type = "cpu";
    pe.name = "cpu" + std::to_string(i);
    pe.pace = pace;
    pes.push_back(pe);
  }
  for (std::size_t i = 0; i < ffts; ++i) {
    ProcessorElement pe;
    pe.pe_id = static_cast<int>(pes.size());
    pe.pe_type = "fft";
    pe.name = "fft" + std::to_string(i);
    pe.kind = PEKind::accelerator;
    pe.accel = test_accel_model();
    pes.push_back(pe);
  }
  return pes;
}

namespace {

std::int64_t oracle_transfer(std::uint64_t bytes, const AccelModel& m) {
  const std::uint64_t bps = m.bytes_per_sec;
  const std::uint64_t scaled = bytes * 1'000'000'000ull;
  return m.fixed_latency.count() + static_cast<std::int64_t>((scaled + bps - 1) / bps);
}

struct OracleReady {
  std::int64_t ready = 0;
  std::int64_t id = 0;
  std::string node;
  std::string app;
};

}  // namespace

OracleSchedule frfs_oracle(const std::vector<ProcessorElement>& pes,
                           const std::map<std::string, ApplicationSpec>& apps, const WorkloadQueue& workload,
                           const std::map<std::string, std::vector<std::size_t>>& writes) {
  OracleSchedule out;
  std::map<std::int64_t, std::string> app_of;
  std::map<std::pair<std::int64_t, std::string>, std::size_t> waiting;
  std::vector<OracleReady> ready;
  std::vector<std::optional<std::pair<std::int64_t, std::string>>> running(pes.size());
  std::set<std::int64_t> times;
  for (const auto& e : workload.entries) times.insert(e.arrival_time.count());

  std::size_t injected = 0;
  std::size_t done = 0, total = 0;
  for (const auto& e : workload.entries) total += apps.at(e.app_name).dag.size();

  while (!times.empty()) {
    const std::int64_t now = *times.begin();
    times.erase(times.begin());

    for (; injected < workload.entries.size() && workload.entries[injected].arrival_time.count() <= now; ++injected) {
      const auto& e = workload.entries[injected];
      app_of[e.instance_id] = e.app_name;
      for (const auto& [name, node] : apps.at(e.app_name).dag) {
        waiting[{e.instance_id, name}] = node.predecessors.size();
        if (node.predecessors.empty()) ready.push_back({now, e.instance_id, name, e.app_name});
      }
    }
    for (std::size_t p = 0; p < pes.size(); ++p) {
      if (!running[p] || out.at(*running[p]).end > now) continue;
      const auto [id, name] = *running[p];
      running[p].reset();
      ++done;
      for (const auto& s : apps.at(app_of[id]).dag.at(name).successors)
        if (--waiting[{id, s}] == 0) ready.push_back({now, id, s, app_of[id]});
    }

    std::stable_sort(ready.begin(), ready.end(), [](const OracleReady& a, const OracleReady& b) {
      return std::tie(a.ready, a.id, a.node) < std::tie(b.ready, b.id, b.node);
    });
    for (std::size_t p = 0; p < pes.size(); ++p) {
      if (running[p]) continue;
      const auto& pe = pes[p];
      for (std::size_t r = 0; r < ready.size(); ++r) {
        const auto& spec = apps.at(ready[r].app);
        const auto& node = spec.dag.at(ready[r].node);
        const PlatformBinding* b = nullptr;
        for (const auto& pb : node.platforms)
          if (pb.platform_name == pe.pe_type) {
            b = &pb;
            break;
          }
        if (!b) continue;
        std::int64_t duration = 0;
        if (pe.kind == PEKind::core) {
          duration = b->est_exec_time->count();
        } else {
          const auto& outs = writes.at(b->run_func);
          std::uint64_t in = 0, outb = 0;
          for (std::size_t a = 0; a < node.arguments.size(); ++a) {
            const auto& v = spec.variables.at(node.arguments[a]);
            if (!v.is_ptr) continue;
            const bool w = std::find(outs.begin(), outs.end(), a) != outs.end();
            (w ? outb : in) += v.ptr_alloc_bytes;
          }
          duration = oracle_transfer(in, *pe.accel) + pe.accel->process_time.at(b->run_func).base.count() +
                     oracle_transfer(outb, *pe.accel);
        }
        const std::pair<std::int64_t, std::string> key{ready[r].id, ready[r].node};
        out[key] = {static_cast<int>(p), now, now + duration};
        running[p] = key;
        times.insert(now + duration);
        ready.erase(ready.begin() + static_cast<std::ptrdiff_t>(r));
        break;
      }
    }
  }
  if (done != total) throw std::runtime_error("oracle stalled");
  return out;
}

OracleSchedule schedule_from_trace(const Trace& trace) {
  OracleSchedule out;
  for (const auto& e : trace.events) {
    if (e.kind == EventKind::task_start) {
      auto& t = out[{e.instance_id, e.node}];
      t.pe = e.pe_id;
      t.start = e.t.count();
    } else if (e.kind == EventKind::task_end) {
      out[{e.instance_id, e.node}].end = e.t.count();
    }
  }
  return out;
}

int direct_correlation_lag(const std::vector<std::complex<double>>& rx, const std::vector<std::complex<double>>& ref) {
  const int n = static_cast<int>(rx.size());
  int best = 0;
  double peak = -1.0;
  for (int lag = -n / 2 + 1; lag <= n / 2; ++lag) {
    std::complex<double> acc{};
    for (int m = 0; m < static_cast<int>(ref.size()); ++m) {
      const int k = m + lag;
      if (k >= 0 && k < n) acc += rx[k] * std::conj(ref[m]);
    }
    if (std::abs(acc) > peak) {
      peak = std::abs(acc);
      best = lag;
    }
  }
  return best;
}

}  // namespace emu::testing
