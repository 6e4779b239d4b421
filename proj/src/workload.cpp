#include "emu/workload.hpp"

#include <algorithm>
#include <random>

#include "detail/json_util.hpp"

namespace emu {

std::map<std::string, std::uint64_t> WorkloadQueue::counts() const {
  std::map<std::string, std::uint64_t> out;
  for (const auto& e : entries) ++out[e.app_name];
  return out;
}

namespace {

void check_known(std::string_view app, const KnownApps& known) {
  if (known && !known->contains(app)) throw LookupError("unknown app name " + std::string(app));
}

void renumber(WorkloadQueue& q) {
  for (std::size_t i = 0; i < q.entries.size(); ++i) q.entries[i].instance_id = static_cast<std::int64_t>(i);
}

void sort_stable(WorkloadQueue& q) {
  std::stable_sort(q.entries.begin(), q.entries.end(),
                   [](const QueueEntry& a, const QueueEntry& b) { return a.arrival_time < b.arrival_time; });
}

}  // namespace

WorkloadQueue generate_validation(const std::map<std::string, std::uint64_t>& counts, const KnownApps& known) {
  WorkloadQueue q;
  for (const auto& [app, count] : counts) {
    check_known(app, known);
    for (std::uint64_t i = 0; i < count; ++i) q.entries.push_back({Nanos{0}, app, 0});
  }
  renumber(q);
  return q;
}

WorkloadQueue generate_performance(const std::vector<InjectionSpec>& injections, Nanos t_end, std::uint64_t seed,
                                   const KnownApps& known) {
  WorkloadQueue q;
  for (const auto& inj : injections) {
    check_known(inj.app_name, known);
    if (inj.period <= Nanos{0}) throw ParseError("injection for " + inj.app_name + ": period must be positive");
    if (!(inj.probability >= 0.0 && inj.probability <= 1.0))
      throw ParseError("injection for " + inj.app_name + ": probability must lie in [0,1]");

    std::mt19937_64 rng(seed ^ fnv1a64(inj.app_name));
    const std::int64_t ticks = t_end.count() / inj.period.count();
    for (std::int64_t k = 0; k < ticks; ++k) {
      const double u = static_cast<double>(rng() >> 11) * 0x1.0p-53;
      if (u < inj.probability) q.entries.push_back({inj.period * k, inj.app_name, 0});
    }
  }
  sort_stable(q);
  renumber(q);
  return q;
}

WorkloadQueue generate(const WorkloadSpec& spec, const KnownApps& known) {
  if (spec.mode == WorkloadMode::validation) return generate_validation(spec.validation_counts, known);
  return generate_performance(spec.injections, spec.t_end, spec.seed, known);
}

WorkloadQueue merge(const std::vector<WorkloadQueue>& queues) {
  WorkloadQueue out;
  for (const auto& q : queues) out.entries.insert(out.entries.end(), q.entries.begin(), q.entries.end());
  sort_stable(out);
  renumber(out);
  return out;
}

WorkloadSpec parse_workload(std::string_view text) {
  using namespace detail;
  const auto doc = parse_strict(text, "workload");
  const std::string where = "workload";
  reject_unknown_keys(doc, {"mode", "counts", "injections", "t_end_ns", "seed"}, where);

  WorkloadSpec spec;
  const auto mode = require_string(doc, "mode", where);
  if (mode == "validation") {
    spec.mode = WorkloadMode::validation;
  } else if (mode == "performance") {
    spec.mode = WorkloadMode::performance;
  } else {
    throw ParseError("workload: mode must be validation or performance, got " + mode);
  }
  if (doc.contains("seed")) spec.seed = require_uint(doc, "seed", where);
  if (doc.contains("t_end_ns")) spec.t_end = Nanos(require_uint(doc, "t_end_ns", where));

  if (spec.mode == WorkloadMode::validation) {
    const auto& counts = require_object(doc, "counts", where);
    for (const auto& [app, n] : counts.items()) spec.validation_counts[app] = as_uint(n, "workload counts." + app);
    if (spec.validation_counts.empty()) throw ParseError("workload: validation counts must be nonempty");
  } else {
    const auto& list = require_array(doc, "injections", where);
    for (const auto& item : list) {
      const std::string w = "workload injection";
      reject_unknown_keys(item, {"app", "period_ns", "probability"}, w);
      InjectionSpec inj;
      inj.app_name = require_string(item, "app", w);
      inj.period = Nanos(require_uint(item, "period_ns", w));
      inj.probability = item.contains("probability") ? require_number(item, "probability", w) : 1.0;
      if (inj.period <= Nanos{0}) throw ParseError("workload: period_ns must be positive for " + inj.app_name);
      if (!(inj.probability >= 0.0 && inj.probability <= 1.0))
        throw ParseError("workload: probability must lie in [0,1] for " + inj.app_name);
      spec.injections.push_back(std::move(inj));
    }
    if (spec.injections.empty()) throw ParseError("workload: performance injections must be nonempty");
    if (spec.t_end <= Nanos{0}) throw ParseError("workload: performance mode needs t_end_ns > 0");
  }
  return spec;
}

WorkloadSpec load_workload(const std::string& path) { return parse_workload(detail::read_file(path)); }

std::string emit_workload(const WorkloadSpec& spec) {
  detail::ordered_json doc;
  doc["mode"] = spec.mode == WorkloadMode::validation ? "validation" : "performance";
  if (spec.mode == WorkloadMode::validation) {
    doc["counts"] = detail::ordered_json::object();
    for (const auto& [app, n] : spec.validation_counts) doc["counts"][app] = n;
  } else {
    doc["injections"] = detail::ordered_json::array();
    for (const auto& inj : spec.injections)
      doc["injections"].push_back(
          {{"app", inj.app_name}, {"period_ns", inj.period.count()}, {"probability", inj.probability}});
    doc["t_end_ns"] = spec.t_end.count();
  }
  doc["seed"] = spec.seed;
  return detail::pretty(doc);
}

}  // namespace emu
