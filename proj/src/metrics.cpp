#include "emu/metrics.hpp"

#include <algorithm>
#include <charconv>
#include <sstream>
#include <tuple>

#include "detail/json_util.hpp"

namespace emu {

namespace {

constexpr std::pair<EventKind, std::string_view> kKindNames[] = {
    {EventKind::inject, "inject"},
    {EventKind::task_ready, "task_ready"},
    {EventKind::sched_decision, "sched_decision"},
    {EventKind::dispatch, "dispatch"},
    {EventKind::task_start, "task_start"},
    {EventKind::transfer_start, "transfer_start"},
    {EventKind::transfer_end, "transfer_end"},
    {EventKind::task_end, "task_end"},
    {EventKind::instance_complete, "instance_complete"},
};

bool has_pe(EventKind k) {
  return k == EventKind::dispatch || k == EventKind::task_start || k == EventKind::transfer_start ||
         k == EventKind::transfer_end || k == EventKind::task_end;
}

bool is_task_event(EventKind k) {
  return k == EventKind::task_start || k == EventKind::task_end || k == EventKind::transfer_start ||
         k == EventKind::transfer_end;
}

std::string task_label(std::int64_t instance, const std::string& node) {
  return node + "#" + std::to_string(instance);
}

std::string format_double(double v) {
  char buf[64];
  auto [p, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, p);
}

}  // namespace

std::string_view to_string(EventKind kind) {
  for (const auto& [k, name] : kKindNames)
    if (k == kind) return name;
  return "inject";
}

EventKind event_kind_from_string(std::string_view name) {
  for (const auto& [k, n] : kKindNames)
    if (n == name) return k;
  throw ParseError("unknown trace event kind " + std::string(name));
}

void TraceSink::append(TraceEvent event) {
  std::lock_guard lock(mutex_);
  events_.push_back(std::move(event));
}

std::vector<TraceEvent> TraceSink::events() const {
  std::lock_guard lock(mutex_);
  std::vector<TraceEvent> out(events_.begin(), events_.end());
  std::stable_sort(out.begin(), out.end(), [](const TraceEvent& a, const TraceEvent& b) { return a.t < b.t; });
  return out;
}

std::size_t TraceSink::size() const {
  std::lock_guard lock(mutex_);
  return events_.size();
}

std::string write_trace(const Trace& trace) {
  using detail::ordered_json;
  std::string out;
  ordered_json header;
  header["schema"] = kTraceSchema;
  header["pes"] = ordered_json::array();
  for (const auto& pe : trace.pes) header["pes"].push_back({{"pe_id", pe.pe_id}, {"pe_type", pe.pe_type}});
  out += header.dump();
  out += '\n';
  for (const auto& e : trace.events) {
    ordered_json j;
    j["t"] = e.t.count();
    j["kind"] = to_string(e.kind);
    switch (e.kind) {
      case EventKind::inject:
        j["instance_id"] = e.instance_id;
        j["app"] = e.app;
        break;
      case EventKind::sched_decision:
        j["duration_ns"] = e.duration.count();
        j["policy"] = e.policy;
        j["ready_len"] = e.ready_len;
        break;
      case EventKind::instance_complete:
        j["instance_id"] = e.instance_id;
        j["ok"] = e.ok;
        break;
      default:
        j["instance_id"] = e.instance_id;
        j["node"] = e.node;
        if (has_pe(e.kind)) j["pe_id"] = e.pe_id;
        if (e.kind == EventKind::transfer_start || e.kind == EventKind::transfer_end) j["direction"] = e.direction;
        if (e.kind == EventKind::task_end) j["ok"] = e.ok;
        break;
    }
    out += j.dump();
    out += '\n';
  }
  return out;
}

void write_trace(const Trace& trace, const std::string& path) { detail::write_file(path, write_trace(trace)); }

Trace parse_trace(std::string_view text) {
  using namespace detail;
  Trace trace;
  std::size_t line_no = 0;
  std::size_t pos = 0;
  bool have_header = false;
  while (pos < text.size()) {
    std::size_t end = text.find('\n', pos);
    if (end == std::string_view::npos) end = text.size();
    const auto line = text.substr(pos, end - pos);
    pos = end + 1;
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string_view::npos) continue;
    const std::string where = "trace line " + std::to_string(line_no);
    const auto j = parse_strict(line, where);
    if (!have_header) {
      reject_unknown_keys(j, {"schema", "pes"}, where);
      const auto schema = require_string(j, "schema", where);
      if (schema != kTraceSchema)
        throw ParseError("trace schema mismatch: expected " + std::string(kTraceSchema) + ", got " + schema);
      for (const auto& pe : require_array(j, "pes", where)) {
        reject_unknown_keys(pe, {"pe_id", "pe_type"}, where);
        trace.pes.push_back({static_cast<int>(require_uint(pe, "pe_id", where)), require_string(pe, "pe_type", where)});
      }
      have_header = true;
      continue;
    }
    TraceEvent e;
    e.kind = event_kind_from_string(require_string(j, "kind", where));
    e.t = Nanos(require_int(j, "t", where));
    switch (e.kind) {
      case EventKind::inject:
        reject_unknown_keys(j, {"t", "kind", "instance_id", "app"}, where);
        e.instance_id = require_int(j, "instance_id", where);
        e.app = require_string(j, "app", where);
        break;
      case EventKind::sched_decision:
        reject_unknown_keys(j, {"t", "kind", "duration_ns", "policy", "ready_len"}, where);
        e.duration = Nanos(require_int(j, "duration_ns", where));
        e.policy = require_string(j, "policy", where);
        e.ready_len = require_uint(j, "ready_len", where);
        break;
      case EventKind::instance_complete:
        reject_unknown_keys(j, {"t", "kind", "instance_id", "ok"}, where);
        e.instance_id = require_int(j, "instance_id", where);
        e.ok = require_bool(j, "ok", where);
        break;
      default: {
        const bool transfer = e.kind == EventKind::transfer_start || e.kind == EventKind::transfer_end;
        if (transfer)
          reject_unknown_keys(j, {"t", "kind", "instance_id", "node", "pe_id", "direction"}, where);
        else if (e.kind == EventKind::task_end)
          reject_unknown_keys(j, {"t", "kind", "instance_id", "node", "pe_id", "ok"}, where);
        else if (has_pe(e.kind))
          reject_unknown_keys(j, {"t", "kind", "instance_id", "node", "pe_id"}, where);
        else
          reject_unknown_keys(j, {"t", "kind", "instance_id", "node"}, where);
        e.instance_id = require_int(j, "instance_id", where);
        e.node = require_string(j, "node", where);
        if (has_pe(e.kind)) e.pe_id = static_cast<int>(require_int(j, "pe_id", where));
        if (transfer) {
          e.direction = require_string(j, "direction", where);
          if (e.direction != "in" && e.direction != "out") throw ParseError(where + ": direction must be in or out");
        }
        if (e.kind == EventKind::task_end) e.ok = require_bool(j, "ok", where);
        break;
      }
    }
    trace.events.push_back(std::move(e));
  }
  if (!have_header) throw ParseError("trace is missing its schema header");
  return trace;
}

Trace read_trace(const std::string& path) { return parse_trace(detail::read_file(path)); }

namespace {

struct TaskInterval {
  int pe_id = -1;
  std::int64_t instance_id = 0;
  std::string node;
  Nanos start{0};
  Nanos end{0};
};

std::vector<TaskInterval> match_tasks(const Trace& trace) {
  std::map<std::pair<std::int64_t, std::string>, std::size_t> open;
  std::map<std::pair<std::int64_t, std::string>, bool> closed;
  std::vector<TaskInterval> out;
  for (const auto& e : trace.events) {
    if (e.kind != EventKind::task_start && e.kind != EventKind::task_end) continue;
    auto key = std::make_pair(e.instance_id, e.node);
    if (e.kind == EventKind::task_start) {
      if (open.contains(key) || closed.contains(key))
        throw ParseError("inconsistent trace: task " + task_label(e.instance_id, e.node) + " started twice");
      open[key] = out.size();
      out.push_back({e.pe_id, e.instance_id, e.node, e.t, e.t});
    } else {
      auto it = open.find(key);
      if (it == open.end())
        throw ParseError("inconsistent trace: task_end without task_start for " + task_label(e.instance_id, e.node));
      auto& iv = out[it->second];
      if (iv.pe_id != e.pe_id)
        throw ParseError("inconsistent trace: task " + task_label(e.instance_id, e.node) + " ended on another pe");
      if (e.t < iv.start)
        throw ParseError("inconsistent trace: task " + task_label(e.instance_id, e.node) + " ends before it starts");
      iv.end = e.t;
      open.erase(it);
      closed[key] = true;
    }
  }
  if (!open.empty()) {
    const auto& [instance, node] = open.begin()->first;
    throw ParseError("inconsistent trace: task_start without task_end for " + task_label(instance, node));
  }
  return out;
}

}  // namespace

RunReport compute_report(const Trace& trace) {
  RunReport r;
  for (const auto& pe : trace.pes) r.pes[pe.pe_id].pe_type = pe.pe_type;

  std::optional<Nanos> first, last;
  for (const auto& e : trace.events) {
    if (!is_task_event(e.kind)) continue;
    first = first ? std::min(*first, e.t) : e.t;
    last = last ? std::max(*last, e.t) : e.t;
  }
  if (first) r.makespan = *last - *first;

  const auto intervals = match_tasks(trace);
  r.tasks_completed = intervals.size();
  for (const auto& iv : intervals) r.pes[iv.pe_id].busy += iv.end - iv.start;
  for (auto& [id, usage] : r.pes)
    usage.utilization = r.makespan.count() > 0
                            ? static_cast<double>(usage.busy.count()) / static_cast<double>(r.makespan.count())
                            : 0.0;

  std::map<std::int64_t, std::pair<std::string, Nanos>> injected;
  std::map<std::string, std::vector<std::int64_t>> latencies;
  for (const auto& e : trace.events) {
    if (e.kind == EventKind::sched_decision) {
      ++r.overhead_samples;
      r.overhead_total += e.duration;
      r.overhead_max = std::max(r.overhead_max, e.duration);
    } else if (e.kind == EventKind::inject) {
      injected[e.instance_id] = {e.app, e.t};
      ++r.instances_injected;
    } else if (e.kind == EventKind::instance_complete) {
      auto it = injected.find(e.instance_id);
      if (it == injected.end())
        throw ParseError("inconsistent trace: instance " + std::to_string(e.instance_id) + " completed without inject");
      if (!e.ok) ++r.instances_failed;
      latencies[it->second.first].push_back((e.t - it->second.second).count());
    }
  }
  if (r.overhead_samples > 0)
    r.overhead_mean_ns = static_cast<double>(r.overhead_total.count()) / static_cast<double>(r.overhead_samples);
  for (const auto& [app, values] : latencies) {
    AppLatency l;
    l.count = values.size();
    double sum = 0;
    for (auto v : values) {
      sum += static_cast<double>(v);
      l.max_ns = std::max(l.max_ns, v);
    }
    l.mean_ns = sum / static_cast<double>(values.size());
    r.latency[app] = l;
  }
  return r;
}

std::string emit_report(const RunReport& r) {
  using detail::ordered_json;
  ordered_json doc;
  doc["makespan_ns"] = r.makespan.count();
  doc["pes"] = ordered_json::array();
  for (const auto& [id, u] : r.pes) {
    ordered_json pe{{"pe_id", id}, {"pe_type", u.pe_type}, {"busy_ns", u.busy.count()}, {"utilization", u.utilization}};
    if (auto it = r.placement.find(id); it != r.placement.end()) pe["host_core"] = it->second;
    doc["pes"].push_back(std::move(pe));
  }
  doc["overhead"] = {{"samples", r.overhead_samples},
                     {"mean_ns", r.overhead_mean_ns},
                     {"max_ns", r.overhead_max.count()},
                     {"total_ns", r.overhead_total.count()},
                     {"idle_cycles", r.idle_cycles}};
  doc["latency"] = ordered_json::object();
  for (const auto& [app, l] : r.latency)
    doc["latency"][app] = {{"count", l.count}, {"mean_ns", l.mean_ns}, {"max_ns", l.max_ns}};
  doc["instances_injected"] = r.instances_injected;
  doc["instances_failed"] = r.instances_failed;
  doc["tasks_completed"] = r.tasks_completed;
  doc["manager_core"] = r.manager_core;
  doc["config"] = ordered_json::object();
  for (const auto& [k, v] : r.config) doc["config"][k] = v;
  return detail::pretty(doc);
}

ExportKind export_kind_from_string(std::string_view name) {
  if (name == "gantt") return ExportKind::gantt;
  if (name == "utilization") return ExportKind::utilization;
  if (name == "overhead") return ExportKind::overhead;
  if (name == "latency") return ExportKind::latency;
  throw LookupError("unknown export kind " + std::string(name) + "; available: {gantt,latency,overhead,utilization}");
}

std::string export_csv(const Trace& trace, ExportKind kind) {
  std::ostringstream out;
  switch (kind) {
    case ExportKind::gantt: {
      out << "pe_id,instance_id,node,start_ns,end_ns\n";
      auto rows = match_tasks(trace);
      std::stable_sort(rows.begin(), rows.end(), [](const TaskInterval& a, const TaskInterval& b) {
        return std::tie(a.pe_id, a.start) < std::tie(b.pe_id, b.start);
      });
      for (const auto& r : rows)
        out << r.pe_id << ',' << r.instance_id << ',' << r.node << ',' << r.start.count() << ',' << r.end.count() << '\n';
      break;
    }
    case ExportKind::utilization: {
      out << "pe_id,pe_type,fraction\n";
      for (const auto& [id, u] : compute_report(trace).pes)
        out << id << ',' << u.pe_type << ',' << format_double(u.utilization) << '\n';
      break;
    }
    case ExportKind::overhead: {
      out << "cycle_index,duration_ns,ready_len\n";
      std::uint64_t index = 0;
      for (const auto& e : trace.events)
        if (e.kind == EventKind::sched_decision) out << index++ << ',' << e.duration.count() << ',' << e.ready_len << '\n';
      break;
    }
    case ExportKind::latency: {
      out << "app,instance_id,latency_ns\n";
      std::map<std::int64_t, std::pair<std::string, Nanos>> injected;
      for (const auto& e : trace.events) {
        if (e.kind == EventKind::inject) injected[e.instance_id] = {e.app, e.t};
        if (e.kind == EventKind::instance_complete) {
          auto it = injected.find(e.instance_id);
          if (it == injected.end()) continue;
          out << it->second.first << ',' << e.instance_id << ',' << (e.t - it->second.second).count() << '\n';
        }
      }
      break;
    }
  }
  return out.str();
}

void export_csv(const Trace& trace, ExportKind kind, const std::string& path) {
  detail::write_file(path, export_csv(trace, kind));
}

}  // namespace emu
