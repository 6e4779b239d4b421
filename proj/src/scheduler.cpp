#include "emu/scheduler.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <mutex>
#include <set>
#include <tuple>

namespace emu {

const BindingCost* ReadyTask::binding(std::string_view pe_type) const {
  for (const auto& b : bindings)
    if (b.pe_type == pe_type) return &b;
  return nullptr;
}

bool ready_before(const ReadyTask& a, const ReadyTask& b) {
  return std::tie(a.ready_time, a.instance_id, a.node) < std::tie(b.ready_time, b.instance_id, b.node);
}

std::string_view to_string(PEStatus status) {
  switch (status) {
    case PEStatus::idle:
      return "idle";
    case PEStatus::run:
      return "run";
    case PEStatus::complete:
      return "complete";
  }
  return "idle";
}

std::optional<Nanos> estimate(const ReadyTask& task, const PEView& pe) {
  const auto* b = task.binding(pe.pe_type);
  if (b == nullptr || !b->est) return std::nullopt;
  if (pe.cost_scale == 1.0) return *b->est;
  return Nanos(static_cast<std::int64_t>(std::llround(static_cast<double>(b->est->count()) * pe.cost_scale)));
}

namespace {

bool all_estimates_present(const ReadyTask& task, std::string_view policy) {
  bool complete = std::all_of(task.bindings.begin(), task.bindings.end(), [](const auto& b) { return b.est.has_value(); });
  if (!complete) {
    static std::mutex mutex;
    static std::set<std::string> warned;
    std::lock_guard lock(mutex);
    std::string key = std::string(policy) + ":" + std::string(task.node);
    if (warned.insert(key).second)
      warn(std::string(policy) + ": task " + std::string(task.node) + " lacks est_exec_time for some binding; skipped");
  }
  return complete;
}

struct CycleState {
  explicit CycleState(const SchedulerInput& in) : taken(in.pes.size(), false) {}
  std::vector<bool> taken;

  bool available(const SchedulerInput& in, std::size_t p) const {
    return !taken[p] && in.pes[p].status == PEStatus::idle;
  }
};

}  // namespace

ScheduleDecision schedule_frfs(const SchedulerInput& in) {
  ScheduleDecision d;
  // Per-type scan cursors: every task before the cursor is assigned or does
  // not support that type, so each cursor only moves forward. Work is bounded
  // by the idle PEs, not the ready list, except for skipped unsupported tasks.
  std::vector<std::pair<std::string_view, std::size_t>> cursor;
  auto taken = [&](std::size_t i) {
    for (const auto& a : d.assignments)
      if (a.task_index == i) return true;
    return false;
  };
  for (const auto& pe : in.pes) {
    if (pe.status != PEStatus::idle) continue;
    auto it = std::find_if(cursor.begin(), cursor.end(), [&](const auto& c) { return c.first == pe.pe_type; });
    if (it == cursor.end()) it = cursor.insert(cursor.end(), {pe.pe_type, 0});
    auto& c = it->second;
    while (c < in.ready.size() && (!supports(in.ready[c], pe) || taken(c))) ++c;
    if (c == in.ready.size()) continue;
    d.assignments.push_back({c, pe.pe_id});
  }
  return d;
}

ScheduleDecision schedule_met(const SchedulerInput& in) {
  ScheduleDecision d;
  CycleState cycle(in);
  for (std::size_t t = 0; t < in.ready.size(); ++t) {
    const auto& task = in.ready[t];
    if (!all_estimates_present(task, "met")) continue;

    std::optional<Nanos> best;
    std::string_view best_type;
    for (const auto& pe : in.pes) {
      auto est = estimate(task, pe);
      if (!est) continue;
      if (!best || *est < *best || (*est == *best && pe.pe_type < best_type)) {
        best = est;
        best_type = pe.pe_type;
      }
    }
    if (!best) continue;
    for (std::size_t p = 0; p < in.pes.size(); ++p) {
      const auto& pe = in.pes[p];
      if (pe.pe_type != best_type || estimate(task, pe) != best || !cycle.available(in, p)) continue;
      cycle.taken[p] = true;
      d.assignments.push_back({t, pe.pe_id});
      break;
    }
  }
  return d;
}

ScheduleDecision schedule_eft(const SchedulerInput& in) {
  ScheduleDecision d;
  CycleState cycle(in);
  std::vector<Nanos> available(in.pes.size());
  for (std::size_t p = 0; p < in.pes.size(); ++p) available[p] = std::max(in.now, in.pes[p].est_available);

  for (std::size_t t = 0; t < in.ready.size(); ++t) {
    const auto& task = in.ready[t];
    if (!all_estimates_present(task, "eft")) continue;

    std::optional<std::size_t> best;
    Nanos best_finish = Nanos::max();
    Nanos best_start_cost{0};
    for (std::size_t p = 0; p < in.pes.size(); ++p) {
      const auto& pe = in.pes[p];
      auto est = estimate(task, pe);
      if (!est) continue;
      const Nanos transfer = pe.accel ? transfer_time(task.inbound_bytes, *pe.accel) : Nanos{0};
      const Nanos finish = available[p] + transfer + *est;
      if (finish < best_finish) {
        best_finish = finish;
        best = p;
        best_start_cost = transfer + *est;
      }
    }
    if (!best || !cycle.available(in, *best)) continue;
    cycle.taken[*best] = true;
    available[*best] = in.now + best_start_cost;
    d.assignments.push_back({t, in.pes[*best].pe_id});
  }
  return d;
}

ScheduleDecision schedule_random(const SchedulerInput& in) {
  if (in.rng == nullptr) throw EngineError("random policy needs a seeded rng");
  ScheduleDecision d;
  CycleState cycle(in);
  std::vector<std::size_t> candidates;
  for (std::size_t t = 0; t < in.ready.size(); ++t) {
    candidates.clear();
    for (std::size_t p = 0; p < in.pes.size(); ++p)
      if (cycle.available(in, p) && in.ready[t].supports(in.pes[p].pe_type)) candidates.push_back(p);
    if (candidates.empty()) continue;
    std::uniform_int_distribution<std::size_t> pick(0, candidates.size() - 1);
    const std::size_t p = candidates[pick(*in.rng)];
    cycle.taken[p] = true;
    d.assignments.push_back({t, in.pes[p].pe_id});
  }
  return d;
}

PolicyRegistry::PolicyRegistry() {
  policies_.emplace("frfs", schedule_frfs);
  policies_.emplace("met", schedule_met);
  policies_.emplace("eft", schedule_eft);
  policies_.emplace("random", schedule_random);
}

void PolicyRegistry::register_policy(std::string name, Policy policy) {
  if (name.empty()) throw LookupError("policy name must be nonempty");
  if (!policy) throw LookupError("policy " + name + " has no entry point");
  policies_[std::move(name)] = std::move(policy);
}

const Policy& PolicyRegistry::lookup(std::string_view name) const {
  auto it = policies_.find(name);
  if (it != policies_.end()) return it->second;
  std::string available;
  for (const auto& [n, p] : policies_) available += (available.empty() ? "" : ",") + n;
  throw LookupError("unknown policy " + std::string(name) + "; available: {" + available + "}");
}

std::vector<std::string> PolicyRegistry::names() const {
  std::vector<std::string> out;
  for (const auto& [n, p] : policies_) out.push_back(n);
  return out;
}

std::vector<std::string> check_decision(const SchedulerInput& in, const ScheduleDecision& decision) {
  std::vector<std::string> out;
  std::set<int> pes_used;
  std::set<std::size_t> tasks_used;
  for (const auto& a : decision.assignments) {
    const std::string tag = "pe " + std::to_string(a.pe_id);
    if (a.task_index >= in.ready.size()) {
      out.push_back(tag + ": task index out of range");
      continue;
    }
    const auto& task = in.ready[a.task_index];
    const std::string what = std::string(task.node) + "#" + std::to_string(task.instance_id);
    auto pe = std::find_if(in.pes.begin(), in.pes.end(), [&](const PEView& v) { return v.pe_id == a.pe_id; });
    if (pe == in.pes.end()) {
      out.push_back(tag + ": unknown pe");
      continue;
    }
    if (!pes_used.insert(a.pe_id).second) out.push_back(tag + ": assigned twice");
    if (!tasks_used.insert(a.task_index).second) out.push_back(what + ": assigned twice");
    if (pe->status != PEStatus::idle) out.push_back(tag + ": not idle");
    if (!task.supports(pe->pe_type)) out.push_back(what + ": no binding for " + std::string(pe->pe_type));
  }
  return out;
}

}  // namespace emu
