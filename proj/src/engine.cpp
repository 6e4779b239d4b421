#include "emu/engine.hpp"

#include <time.h>

#include <algorithm>
#include <set>
#include <thread>

namespace emu {

std::string_view to_string(ClockMode mode) { return mode == ClockMode::wallclock ? "wallclock" : "virtual"; }

ClockMode clock_mode_from_string(std::string_view name) {
  if (name == "wallclock") return ClockMode::wallclock;
  if (name == "virtual") return ClockMode::virtual_clock;
  throw ParseError("mode must be wallclock or virtual, got " + std::string(name));
}

std::size_t RunResult::failed_instances() const {
  return static_cast<std::size_t>(std::count(instance_failed.begin(), instance_failed.end(), true));
}

namespace {

struct BindingPlan {
  const PlatformBinding* binding = nullptr;
  KernelHandle kernel;
};

struct NodePlan {
  const TaskNodeSpec* spec = nullptr;
  std::vector<std::size_t> successors;
  std::size_t predecessor_count = 0;
  std::uint64_t inbound_bytes = 0;
  std::map<std::string, BindingPlan, std::less<>> bindings;  // platform types only
  std::vector<BindingCost> costs;
  std::uint64_t type_mask = 0;
  std::vector<bool> arg_is_ptr;
};

struct AppPlan {
  const ApplicationSpec* spec = nullptr;
  std::vector<NodePlan> nodes;  // dag order (by name)
  std::vector<std::size_t> heads;
};

struct LiveInstance;

struct TaskRecord {
  LiveInstance* owner = nullptr;
  std::size_t node = 0;
  std::size_t waiting = 0;  // predecessors not yet complete
  TaskInstance* state = nullptr;
};

struct LiveInstance {
  std::size_t queue_index = 0;
  std::int64_t id = 0;
  const AppPlan* plan = nullptr;
  ApplicationInstance* instance = nullptr;
  std::vector<TaskRecord> tasks;
  std::size_t remaining = 0;
  std::size_t running = 0;
  bool failed = false;
};

struct PESlot {
  const ProcessorElement* pe = nullptr;
  std::unique_ptr<ResourceHandler> handler;
  Nanos expected_free{0};
  // virtual mode: the worker's outcome, published when the clock reaches it
  std::optional<CompletionRecord> pending;
};

Nanos overhead_now(OverheadClock clock) {
  if (clock == OverheadClock::thread_cpu) {
    timespec ts{};
    clock_gettime(CLOCK_THREAD_CPUTIME_ID, &ts);
    return Nanos(static_cast<std::int64_t>(ts.tv_sec) * 1'000'000'000 + ts.tv_nsec);
  }
  return std::chrono::duration_cast<Nanos>(std::chrono::steady_clock::now().time_since_epoch());
}

class Manager {
 public:
  Manager(const std::vector<ProcessorElement>& pes, const std::map<std::string, ApplicationSpec>& apps,
          const WorkloadQueue& workload, const Policy& policy, const KernelRegistry& registry,
          const EngineOptions& options)
      : pes_(pes), workload_(workload), policy_(policy), options_(options), rng_(options.seed) {
    if (pes_.empty()) throw EngineError("platform has zero PEs");
    for (std::size_t i = 0; i < pes_.size(); ++i)
      if (pes_[i].pe_id != static_cast<int>(i)) throw EngineError("PE ids must be dense from 0 in order");
    for (const auto& pe : pes_)
      if (!type_bits_.contains(pe.pe_type) && type_bits_.size() < 64)
        type_bits_.emplace(pe.pe_type, std::uint64_t{1} << type_bits_.size());
    plan_apps(apps, registry);
    for (const auto& pe : pes_) {
      PESlot slot;
      slot.pe = &pe;
      slot.handler = std::make_unique<ResourceHandler>(pe.pe_id, options_.observer);
      slots_.push_back(std::move(slot));
      views_.push_back({pe.pe_id, pe.pe_type, PEStatus::idle, Nanos{0}, pe.cost_scale,
                        pe.accel ? &*pe.accel : nullptr, bit_of(pe.pe_type)});
    }
    instances_.resize(workload_.size());
    lives_.resize(workload_.size());
  }

  RunResult run() {
    RunResult result;
    result.placement = place_workers(pes_, options_.manager_core,
                                     options_.host_cores.value_or(static_cast<int>(std::max(1u, std::thread::hardware_concurrency()))));
    // no worker threads exist in virtual mode
    if (options_.mode == ClockMode::wallclock)
      for (const auto& w : result.placement.warnings) warn(w);

    if (options_.mode == ClockMode::virtual_clock)
      run_virtual();
    else
      run_wallclock(result.placement);

    for (const auto& pe : pes_) result.trace.pes.push_back({pe.pe_id, pe.pe_type});
    result.trace.events = sink_.events();
    result.report = compute_report(result.trace);
    result.report.idle_cycles = idle_cycles_;
    result.report.manager_core = result.placement.manager_core;
    for (std::size_t i = 0; i < result.placement.pe_core.size(); ++i)
      result.report.placement[static_cast<int>(i)] = result.placement.pe_core[i];
    result.report.config = {{"mode", std::string(to_string(options_.mode))},
                            {"policy", options_.policy_name},
                            {"seed", std::to_string(options_.seed)},
                            {"pes", std::to_string(pes_.size())},
                            {"overhead_clock", options_.overhead_clock == OverheadClock::wall ? "wall" : "thread_cpu"},
                            {"instances", std::to_string(workload_.size())}};
    if (options_.mode == ClockMode::virtual_clock) {
      result.report.config["virtual_overhead_ns"] = std::to_string(options_.virtual_overhead.count());
      result.report.config["exec_kernels"] = options_.exec_kernels ? "true" : "false";
    }
    result.instance_failed.resize(workload_.size(), false);
    for (std::size_t i = 0; i < lives_.size(); ++i)
      if (lives_[i]) result.instance_failed[i] = lives_[i]->failed;
    result.instances = std::move(instances_);
    result.errors = std::move(errors_);
    return result;
  }

 private:
  bool needs_kernels() const { return options_.mode == ClockMode::wallclock || options_.exec_kernels; }

  void plan_apps(const std::map<std::string, ApplicationSpec>& apps, const KernelRegistry& registry) {
    std::set<std::string, std::less<>> types;
    for (const auto& pe : pes_) types.insert(pe.pe_type);

    std::set<std::string> used;
    for (const auto& e : workload_.entries) used.insert(e.app_name);

    for (const auto& name : used) {
      auto it = apps.find(name);
      if (it == apps.end()) throw LookupError("workload references unknown app " + name);
      const auto& spec = it->second;
      const auto report = validate_dag(spec);
      if (!report.ok()) throw EngineError("application " + name + " is invalid: " + report.findings.front());

      AppPlan plan;
      plan.spec = &spec;
      std::map<std::string, std::size_t> index;
      for (const auto& [node, _] : spec.dag) index.emplace(node, index.size());
      for (const auto& [node_name, node] : spec.dag) {
        NodePlan np;
        np.spec = &node;
        for (const auto& s : node.successors) np.successors.push_back(index.at(s));
        np.predecessor_count = node.predecessors.size();
        np.inbound_bytes = spec.inbound_bytes(node_name);
        for (const auto& arg : node.arguments) np.arg_is_ptr.push_back(spec.variables.at(arg).is_ptr);
        for (const auto& b : node.platforms) {
          if (!types.contains(b.platform_name) || np.bindings.contains(b.platform_name)) continue;
          BindingPlan bp;
          bp.binding = &b;
          try {
            bp.kernel = registry.resolve(b.run_func, b.shared_object, spec.shared_object);
          } catch (const LookupError& err) {
            if (needs_kernels())
              throw EngineError("app " + name + " node " + node_name + ": " + err.what());
            bp.kernel.name = b.run_func;
          }
          np.bindings.emplace(b.platform_name, std::move(bp));
        }
        // views into the map keys stay valid when the node plan moves
        for (const auto& [type, bp] : np.bindings) {
          np.costs.push_back({type, bp.binding->est_exec_time});
          np.type_mask |= bit_of(type);
        }
        if (np.bindings.empty())
          throw EngineError("app " + name + " node " + node_name + " has no binding for any PE type on this platform");
        if (np.predecessor_count == 0) plan.heads.push_back(plan.nodes.size());
        plan.nodes.push_back(std::move(np));
      }
      plans_.emplace(name, std::move(plan));
    }

    for (const auto& [name, plan] : plans_) {
      for (const auto& np : plan.nodes) {
        for (const auto& pe : pes_) {
          auto b = np.bindings.find(pe.pe_type);
          if (b == np.bindings.end()) continue;
          const std::string where = "app " + name + " node " + np.spec->name + " on " + pe.name;
          if (pe.kind == PEKind::accelerator) {
            if (!pe.accel || !pe.accel->process_time.contains(b->second.binding->run_func))
              throw EngineError(where + ": no process_time for kernel " + b->second.binding->run_func);
          } else if (options_.mode == ClockMode::virtual_clock && !b->second.binding->est_exec_time &&
                     !b->second.kernel.declared_cost.contains(pe.pe_type)) {
            throw EngineError(where + ": no est_exec_time or declared cost");
          }
        }
      }
    }
  }

  void emit(TraceEvent e) { sink_.append(std::move(e)); }

  TraceEvent task_event(EventKind kind, Nanos t, const TaskRecord& rec, int pe_id = -1) const {
    TraceEvent e;
    e.t = t;
    e.kind = kind;
    e.instance_id = rec.owner->id;
    e.node = rec.owner->plan->nodes[rec.node].spec->name;
    e.pe_id = pe_id;
    return e;
  }

  bool inject_due(Nanos now) {
    bool any = false;
    while (cursor_ < workload_.size() && workload_.entries[cursor_].arrival_time <= now) {
      const auto& entry = workload_.entries[cursor_];
      const AppPlan& plan = plans_.at(entry.app_name);
      auto instance = instantiate(*plan.spec, entry.instance_id, entry.arrival_time);
      auto live = std::make_unique<LiveInstance>();
      live->queue_index = cursor_;
      live->id = entry.instance_id;
      live->plan = &plan;
      live->instance = instance.get();
      live->remaining = plan.nodes.size();
      live->tasks.resize(plan.nodes.size());
      for (std::size_t i = 0; i < plan.nodes.size(); ++i) {
        auto& t = live->tasks[i];
        t.owner = live.get();
        t.node = i;
        t.waiting = plan.nodes[i].predecessor_count;
        t.state = &instance->tasks.at(plan.nodes[i].spec->name);
      }
      TraceEvent e;
      e.t = now;
      e.kind = EventKind::inject;
      e.instance_id = entry.instance_id;
      e.app = entry.app_name;
      emit(std::move(e));
      for (auto head : plan.heads) make_ready(live->tasks[head], now);
      instances_[cursor_] = std::move(instance);
      lives_[cursor_] = std::move(live);
      ++live_count_;
      ++cursor_;
      any = true;
    }
    return any;
  }

  void make_ready(TaskRecord& rec, Nanos now) {
    rec.state->advance(TaskState::ready);
    rec.state->ready_time = now;
    emit(task_event(EventKind::task_ready, now, rec));
    const NodePlan& np = rec.owner->plan->nodes[rec.node];
    ReadyTask rt;
    rt.instance_id = rec.owner->id;
    rt.node = np.spec->name;
    rt.ready_time = now;
    rt.bindings = np.costs;
    rt.inbound_bytes = np.inbound_bytes;
    rt.type_mask = np.type_mask;
    rt.opaque = &rec;
    auto pos = ready_.end();
    while (pos != ready_.begin() && ready_before(rt, *std::prev(pos))) --pos;
    ready_.insert(pos, std::move(rt));
  }

  bool collect_completions(Nanos now) {
    bool any = false;
    for (auto& slot : slots_) {
      auto done = slot.handler->take_completion();
      if (!done) continue;
      any = true;
      finish_task(slot, done->first, done->second, now);
    }
    return any;
  }

  void finish_task(PESlot& slot, const DispatchedTask& task, const CompletionRecord& rec, Nanos now) {
    auto* record = static_cast<TaskRecord*>(running_task_[slot.pe->pe_id]);
    running_task_[slot.pe->pe_id] = nullptr;
    if (record == nullptr) throw EngineError("completion on pe " + slot.pe->name + " without a running task");
    const int pe = slot.pe->pe_id;
    emit(task_event(EventKind::task_start, rec.start, *record, pe));
    if (slot.pe->kind == PEKind::accelerator) {
      auto transfer = [&](EventKind kind, Nanos t, const char* dir) {
        auto e = task_event(kind, t, *record, pe);
        e.direction = dir;
        emit(std::move(e));
      };
      transfer(EventKind::transfer_start, rec.start, "in");
      transfer(EventKind::transfer_end, rec.start + rec.transfer_in, "in");
      transfer(EventKind::transfer_start, rec.end - rec.transfer_out, "out");
      transfer(EventKind::transfer_end, rec.end, "out");
    }
    auto end = task_event(EventKind::task_end, rec.end, *record, pe);
    end.ok = rec.ok();
    emit(std::move(end));

    record->state->start_time = rec.start;
    record->state->end_time = rec.end;
    record->state->ok = rec.ok();
    record->state->advance(TaskState::complete);

    LiveInstance& live = *record->owner;
    --live.running;
    --live.remaining;
    if (!rec.ok()) {
      errors_.push_back("instance " + std::to_string(live.id) + " task " + task.node + ": " + rec.error);
      if (!live.failed) fail_instance(live);
    } else if (!live.failed) {
      for (auto succ : live.plan->nodes[record->node].successors) {
        auto& s = live.tasks[succ];
        if (--s.waiting == 0) make_ready(s, now);
      }
    }
    if (live.running == 0 && (live.remaining == 0 || live.failed)) {
      TraceEvent e;
      e.t = now;
      e.kind = EventKind::instance_complete;
      e.instance_id = live.id;
      e.ok = !live.failed;
      emit(std::move(e));
      --live_count_;
    }
  }

  void fail_instance(LiveInstance& live) {
    live.failed = true;
    std::erase_if(ready_, [&](const ReadyTask& t) { return static_cast<TaskRecord*>(t.opaque)->owner == &live; });
  }

  /// Runs the policy and dispatches. Returns the number of assignments.
  std::size_t schedule(Nanos now, Nanos start_offset, Nanos& excluded) {
    for (std::size_t i = 0; i < slots_.size(); ++i) {
      auto& v = views_[i];
      v.status = slots_[i].handler->status();
      v.est_available = v.status == PEStatus::idle ? now : std::max(now, slots_[i].expected_free);
    }
    SchedulerInput input{ready_, views_, now, &rng_};
    ScheduleDecision decision = policy_(input);

    if (options_.check_decisions) {
      const Nanos c0 = overhead_now(options_.overhead_clock);
      auto violations = check_decision(input, decision);
      if (!violations.empty()) throw EngineError("illegal schedule decision: " + violations.front());
      excluded += overhead_now(options_.overhead_clock) - c0;
    }
    if (decision.assignments.empty()) return 0;

    for (const auto& a : decision.assignments) dispatch(ready_[a.task_index], a.pe_id, now, start_offset);

    std::vector<std::size_t> taken;
    taken.reserve(decision.assignments.size());
    for (const auto& a : decision.assignments) taken.push_back(a.task_index);
    std::sort(taken.rbegin(), taken.rend());
    for (auto idx : taken) ready_.erase(ready_.begin() + static_cast<std::ptrdiff_t>(idx));
    return decision.assignments.size();
  }

  void dispatch(const ReadyTask& ready, int pe_id, Nanos now, Nanos start_offset) {
    auto& slot = slots_[pe_id];
    const ProcessorElement& pe = *slot.pe;
    auto* record = static_cast<TaskRecord*>(ready.opaque);
    LiveInstance& live = *record->owner;
    const NodePlan& np = live.plan->nodes[record->node];
    const BindingPlan& bp = np.bindings.find(pe.pe_type)->second;

    DispatchedTask task;
    task.instance_id = live.id;
    task.node = np.spec->name;
    task.kernel = &bp.kernel;
    task.dispatch_time = now;
    const auto& outputs = bp.kernel.output_args;
    for (std::size_t i = 0; i < np.spec->arguments.size(); ++i) {
      auto payload = live.instance->payload(np.spec->arguments[i]);
      task.args.push_back({payload.data(), payload.size()});
      task.is_ptr.push_back(np.arg_is_ptr[i]);
      const bool writes = !outputs || std::find(outputs->begin(), outputs->end(), i) != outputs->end();
      task.writes.push_back(writes);
      task.reads.push_back(!outputs || !writes);
    }
    std::optional<Nanos> est = estimate(ready, views_[pe_id]);
    if (!est) {
      auto it = bp.kernel.declared_cost.find(pe.pe_type);
      if (it != bp.kernel.declared_cost.end())
        est = Nanos(static_cast<std::int64_t>(static_cast<double>(it->second.count()) * pe.cost_scale));
    }
    if (pe.kind == PEKind::core) {
      task.pace_target = est;
    } else {
      task.process_time = pe.accel->process_time_for(bp.binding->run_func, task.total_bytes());
      if (!task.process_time) throw EngineError("no process_time for " + bp.binding->run_func + " on " + pe.name);
    }

    const Nanos transfer = pe.accel ? transfer_time(ready.inbound_bytes, *pe.accel) : Nanos{0};
    slot.expected_free = now + transfer + est.value_or(Nanos{0});

    emit(task_event(EventKind::dispatch, now, *record, pe_id));
    record->state->advance(TaskState::running);
    record->state->assigned_pe = pe_id;
    ++live.running;
    running_task_[pe_id] = record;

    if (options_.mode == ClockMode::virtual_clock) slot.pending = model_completion(pe, task, est, now + start_offset);
    slot.handler->dispatch(std::move(task));
  }

  CompletionRecord model_completion(const ProcessorElement& pe, const DispatchedTask& task, std::optional<Nanos> est,
                                    Nanos start) {
    CompletionRecord rec;
    rec.start = start;
    if (pe.kind == PEKind::core) {
      rec.end = start + est.value_or(Nanos{0});
    } else if (task.total_bytes() > pe.accel->local_mem_bytes) {
      rec.status = KernelStatus::failed;
      rec.error = task.node + ": argument bytes exceed local memory of " + pe.name;
      rec.end = start;
      return rec;
    } else {
      rec.transfer_in = transfer_time(task.in_bytes(), *pe.accel);
      rec.transfer_out = transfer_time(task.out_bytes(), *pe.accel);
      rec.end = start + rec.transfer_in + *task.process_time + rec.transfer_out;
    }
    if (options_.exec_kernels) {
      rec.status = invoke(*task.kernel, task.args);
      if (!rec.ok()) rec.error = task.kernel->name + ": " + std::string(to_string(rec.status));
    }
    return rec;
  }

  bool finished() const { return cursor_ == workload_.size() && live_count_ == 0; }

  bool any_running() const {
    return std::any_of(running_task_.begin(), running_task_.end(), [](void* p) { return p != nullptr; });
  }

  void check_progress() const {
    if (!ready_.empty() && !any_running() && cursor_ == workload_.size())
      throw EngineError("stalled: " + std::to_string(ready_.size()) +
                        " ready tasks but the policy assigns none and nothing is running");
  }

  void run_virtual() {
    running_task_.assign(slots_.size(), nullptr);
    Nanos now{0};
    for (;;) {
      inject_due(now);
      for (auto& slot : slots_) {
        if (slot.pending && slot.pending->end <= now) {
          slot.handler->complete(std::move(*slot.pending));
          slot.pending.reset();
        }
      }
      collect_completions(now);
      if (!ready_.empty()) {
        Nanos excluded{0};
        const std::size_t ready_len = ready_.size();
        schedule(now, options_.virtual_overhead, excluded);
        TraceEvent e;
        e.t = now;
        e.kind = EventKind::sched_decision;
        e.duration = options_.virtual_overhead;
        e.policy = options_.policy_name;
        e.ready_len = ready_len;
        emit(std::move(e));
      }
      if (finished()) break;
      std::optional<Nanos> next;
      if (cursor_ < workload_.size()) next = workload_.entries[cursor_].arrival_time;
      for (const auto& slot : slots_)
        if (slot.pending) next = next ? std::min(*next, slot.pending->end) : slot.pending->end;
      if (!next) {
        check_progress();
        throw EngineError("virtual clock has no next event");
      }
      now = std::max(now, *next);
    }
  }

  void run_wallclock(const Placement& placement) {
    running_task_.assign(slots_.size(), nullptr);
    tune_current_thread(placement.manager_core);
    WallClock clock;
    std::vector<ResourceHandler*> handlers;
    for (auto& slot : slots_) handlers.push_back(slot.handler.get());
    WorkerPool workers(pes_, handlers, placement, clock);

    bool first = true;
    while (!finished()) {
      const Nanos now = clock.now();
      if (options_.time_limit && now > *options_.time_limit)
        throw EngineError("wall-clock run exceeded its time limit");
      // instantiation is application setup, not scheduling overhead
      bool dirty = inject_due(now);
      const Nanos t0 = overhead_now(options_.overhead_clock);
      dirty = collect_completions(now) || dirty;
      if ((dirty || first) && !ready_.empty()) {
        Nanos excluded{0};
        const std::size_t ready_len = ready_.size();
        const std::size_t assigned = schedule(now, Nanos{0}, excluded);
        const Nanos sample = overhead_now(options_.overhead_clock) - t0 - excluded;
        TraceEvent e;
        e.t = now;
        e.kind = EventKind::sched_decision;
        e.duration = sample;
        e.policy = options_.policy_name;
        e.ready_len = ready_len;
        emit(std::move(e));
        if (assigned == 0) check_progress();
      } else {
        ++idle_cycles_;
      }
      first = false;
      std::this_thread::yield();
    }
    workers.stop();
  }

  const std::vector<ProcessorElement>& pes_;
  const WorkloadQueue& workload_;
  const Policy& policy_;
  const EngineOptions& options_;
  std::mt19937_64 rng_;

  std::map<std::string, AppPlan> plans_;
  std::vector<PESlot> slots_;
  std::vector<PEView> views_;
  std::map<std::string, std::uint64_t, std::less<>> type_bits_;

  std::uint64_t bit_of(std::string_view type) const {
    auto it = type_bits_.find(type);
    return it == type_bits_.end() ? 0 : it->second;
  }
  std::vector<void*> running_task_;

  ReadyList ready_;
  std::size_t cursor_ = 0;
  std::size_t live_count_ = 0;
  std::vector<std::unique_ptr<ApplicationInstance>> instances_;
  std::vector<std::unique_ptr<LiveInstance>> lives_;
  std::vector<std::string> errors_;
  std::uint64_t idle_cycles_ = 0;
  TraceSink sink_;
};

}  // namespace

RunResult run(const std::vector<ProcessorElement>& pes, const std::map<std::string, ApplicationSpec>& apps,
              const WorkloadQueue& workload, const Policy& policy, const KernelRegistry& registry,
              const EngineOptions& options) {
  Manager manager(pes, apps, workload, policy, registry, options);
  return manager.run();
}

RunResult run(const PlatformConfig& platform, const std::map<std::string, ApplicationSpec>& apps,
              const WorkloadQueue& workload, const Policy& policy, const KernelRegistry& registry,
              EngineOptions options) {
  options.manager_core = platform.manager_core;
  auto pes = build_pes(platform);
  auto result = run(pes, apps, workload, policy, registry, options);
  result.report.config["platform"] = platform.name;
  return result;
}

}  // namespace emu
