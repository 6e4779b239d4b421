#include "emu/app_model.hpp"

#include <algorithm>
#include <functional>
#include <queue>
#include <set>

#include "detail/json_util.hpp"

namespace emu {

using detail::json;
using detail::ordered_json;

const PlatformBinding* TaskNodeSpec::binding_for(std::string_view platform) const {
  for (const auto& b : platforms)
    if (b.platform_name == platform) return &b;
  return nullptr;
}

std::vector<std::string> ApplicationSpec::head_nodes() const {
  std::vector<std::string> heads;
  for (const auto& [name, node] : dag)
    if (node.predecessors.empty()) heads.push_back(name);
  return heads;
}

std::vector<std::string> ApplicationSpec::topological_order() const {
  std::map<std::string, std::size_t> indegree;
  for (const auto& [name, node] : dag) indegree[name] += 0;
  for (const auto& [name, node] : dag)
    for (const auto& s : node.successors)
      if (dag.count(s)) ++indegree[s];

  std::priority_queue<std::string, std::vector<std::string>, std::greater<>> frontier;
  for (const auto& [name, deg] : indegree)
    if (deg == 0) frontier.push(name);

  std::vector<std::string> order;
  order.reserve(dag.size());
  while (!frontier.empty()) {
    auto name = frontier.top();
    frontier.pop();
    order.push_back(name);
    for (const auto& s : dag.at(name).successors) {
      auto it = indegree.find(s);
      if (it != indegree.end() && --it->second == 0) frontier.push(s);
    }
  }
  return order;
}

std::uint64_t ApplicationSpec::inbound_bytes(std::string_view node) const {
  auto it = dag.find(std::string(node));
  if (it == dag.end()) return 0;
  std::uint64_t total = 0;
  for (const auto& p : it->second.predecessors) {
    auto pit = dag.find(p);
    if (pit == dag.end()) continue;
    auto c = pit->second.comm_bytes.find(it->first);
    if (c != pit->second.comm_bytes.end()) total += c->second;
  }
  return total;
}

namespace {

bool contains(const std::vector<std::string>& list, const std::string& value) {
  return std::find(list.begin(), list.end(), value) != list.end();
}

// Edge findings shared by parsing (hard errors) and validation (findings).
std::vector<std::string> edge_findings(const ApplicationSpec& spec) {
  std::vector<std::string> out;
  for (const auto& [name, node] : spec.dag) {
    for (const auto& s : node.successors) {
      auto it = spec.dag.find(s);
      if (it == spec.dag.end())
        out.push_back("unknown node " + s + " in successors of " + name);
      else if (!contains(it->second.predecessors, name))
        out.push_back("asymmetric edge " + name + "→" + s);
    }
    for (const auto& p : node.predecessors) {
      auto it = spec.dag.find(p);
      if (it == spec.dag.end())
        out.push_back("unknown node " + p + " in predecessors of " + name);
      else if (!contains(it->second.successors, name))
        out.push_back("asymmetric edge " + p + "→" + name);
    }
  }
  return out;
}

// Tarjan SCC; every component with a back edge is reported.
std::vector<std::vector<std::string>> cycles(const ApplicationSpec& spec) {
  std::map<std::string, int> index, low;
  std::set<std::string> on_stack;
  std::vector<std::string> stack;
  std::vector<std::vector<std::string>> found;
  int counter = 0;

  std::function<void(const std::string&)> visit = [&](const std::string& v) {
    index[v] = low[v] = counter++;
    stack.push_back(v);
    on_stack.insert(v);
    for (const auto& w : spec.dag.at(v).successors) {
      if (!spec.dag.count(w)) continue;
      if (!index.count(w)) {
        visit(w);
        low[v] = std::min(low[v], low[w]);
      } else if (on_stack.count(w)) {
        low[v] = std::min(low[v], index[w]);
      }
    }
    if (low[v] == index[v]) {
      std::vector<std::string> component;
      std::string w;
      do {
        w = stack.back();
        stack.pop_back();
        on_stack.erase(w);
        component.push_back(w);
      } while (w != v);
      const auto& succ = spec.dag.at(v).successors;
      bool self_loop = component.size() == 1 && contains(succ, v);
      if (component.size() > 1 || self_loop) {
        std::sort(component.begin(), component.end());
        found.push_back(std::move(component));
      }
    }
  };
  for (const auto& [name, node] : spec.dag)
    if (!index.count(name)) visit(name);
  std::sort(found.begin(), found.end());
  return found;
}

std::vector<std::uint8_t> parse_bytes(const json& v, std::string_view where) {
  if (!v.is_array()) throw ParseError(std::string(where) + ": key val must be an array of bytes");
  std::vector<std::uint8_t> out;
  out.reserve(v.size());
  for (const auto& e : v) {
    if (!e.is_number_unsigned() || e.get<std::uint64_t>() > 255)
      throw ParseError(std::string(where) + ": val entries must be integers in [0, 255]");
    out.push_back(static_cast<std::uint8_t>(e.get<std::uint64_t>()));
  }
  return out;
}

PlatformBinding parse_binding(const json& j, const std::string& where) {
  if (!j.is_object()) throw ParseError(where + ": platform entries must be objects");
  detail::reject_unknown_keys(j, {"name", "runfunc", "shared_object", "est_exec_time"}, where);
  PlatformBinding b;
  b.platform_name = detail::require_string(j, "name", where);
  b.run_func = detail::require_string(j, "runfunc", where);
  if (j.contains("shared_object")) b.shared_object = detail::require_string(j, "shared_object", where);
  if (j.contains("est_exec_time")) b.est_exec_time = Nanos(detail::require_uint(j, "est_exec_time", where));
  return b;
}

}  // namespace

ApplicationSpec parse_application(std::string_view text) {
  const json doc = detail::parse_strict(text, "application");
  if (!doc.is_object()) throw ParseError("application: top level must be an object");
  detail::reject_unknown_keys(doc, {"AppName", "SharedObject", "Variables", "DAG"}, "application");

  ApplicationSpec spec;
  spec.app_name = detail::require_string(doc, "AppName", "application");
  spec.shared_object = detail::require_string(doc, "SharedObject", "application");

  for (const auto& item : detail::require_object(doc, "Variables", "application").items()) {
    const std::string where = "variable " + item.key();
    const auto& j = item.value();
    if (!j.is_object()) throw ParseError(where + ": must be an object");
    detail::reject_unknown_keys(j, {"bytes", "is_ptr", "ptr_alloc_bytes", "val"}, where);
    VariableSpec v;
    v.name = item.key();
    v.bytes = detail::require_uint(j, "bytes", where);
    v.is_ptr = detail::require_bool(j, "is_ptr", where);
    v.ptr_alloc_bytes = detail::require_uint(j, "ptr_alloc_bytes", where);
    v.val = parse_bytes(detail::require(j, "val", where), where);
    spec.variables.emplace(v.name, std::move(v));
  }

  for (const auto& item : detail::require_object(doc, "DAG", "application").items()) {
    const std::string where = "node " + item.key();
    const auto& j = item.value();
    if (!j.is_object()) throw ParseError(where + ": must be an object");
    detail::reject_unknown_keys(j, {"arguments", "predecessors", "successors", "platforms", "comm_bytes"}, where);
    TaskNodeSpec node;
    node.name = item.key();
    node.arguments = detail::as_string_list(detail::require(j, "arguments", where), where + " arguments");
    node.predecessors = detail::as_string_list(detail::require(j, "predecessors", where), where + " predecessors");
    node.successors = detail::as_string_list(detail::require(j, "successors", where), where + " successors");
    for (const auto& p : detail::require_array(j, "platforms", where))
      node.platforms.push_back(parse_binding(p, where + " platform"));
    if (j.contains("comm_bytes")) {
      for (const auto& c : detail::require_object(j, "comm_bytes", where).items())
        node.comm_bytes[c.key()] = detail::as_uint(c.value(), where + " comm_bytes." + c.key());
    }
    spec.dag.emplace(node.name, std::move(node));
  }

  if (auto edges = edge_findings(spec); !edges.empty()) throw ParseError(edges.front());
  return spec;
}

ApplicationSpec load_application(const std::string& path) {
  try {
    return parse_application(detail::read_file(path));
  } catch (const ParseError& e) {
    throw ParseError(path + ": " + e.what());
  }
}

ValidationReport validate_dag(const ApplicationSpec& spec) {
  ValidationReport report;
  auto& f = report.findings;

  if (spec.app_name.empty()) f.push_back("empty AppName");
  for (const auto& [key, v] : spec.variables) {
    if (v.name != key) f.push_back("variable key " + key + " does not match name " + v.name);
    if (v.bytes == 0) f.push_back("variable " + key + ": bytes must be positive");
    if (!v.is_ptr) {
      if (v.ptr_alloc_bytes != 0) f.push_back("variable " + key + ": ptr_alloc_bytes must be 0 for non-pointers");
      if (v.val.size() > v.bytes) f.push_back("variable " + key + ": initializer longer than bytes");
    } else {
      if (v.ptr_alloc_bytes == 0) f.push_back("variable " + key + ": pointer with zero ptr_alloc_bytes");
      if (v.val.size() > v.ptr_alloc_bytes)
        f.push_back("variable " + key + ": initializer longer than ptr_alloc_bytes");
    }
  }

  for (const auto& [key, node] : spec.dag) {
    if (node.name != key) f.push_back("node key " + key + " does not match name " + node.name);
    if (node.platforms.empty()) f.push_back("node " + key + ": no platforms");
    for (const auto& b : node.platforms) {
      if (b.platform_name.empty()) f.push_back("node " + key + ": platform with empty name");
      if (b.run_func.empty()) f.push_back("node " + key + ": platform with empty runfunc");
    }
    for (const auto& a : node.arguments)
      if (!spec.variables.count(a)) f.push_back("unknown variable " + a + " (node " + key + ")");
    for (const auto* list : {&node.predecessors, &node.successors}) {
      std::set<std::string> unique(list->begin(), list->end());
      if (unique.size() != list->size()) f.push_back("node " + key + ": duplicate edge entries");
    }
    for (const auto& [succ, bytes] : node.comm_bytes)
      if (!contains(node.successors, succ)) f.push_back("node " + key + ": comm_bytes for non-successor " + succ);
  }

  for (auto& e : edge_findings(spec)) f.push_back(std::move(e));

  if (spec.head_nodes().empty()) f.push_back("no head node");
  for (const auto& cyc : cycles(spec)) {
    std::string msg = "cycle: ";
    for (std::size_t i = 0; i < cyc.size(); ++i) msg += (i ? "," : "") + cyc[i];
    f.push_back(msg);
  }
  return report;
}

std::string emit_application(const ApplicationSpec& spec) {
  ordered_json doc;
  doc["AppName"] = spec.app_name;
  doc["SharedObject"] = spec.shared_object;

  ordered_json vars = ordered_json::object();
  for (const auto& [name, v] : spec.variables) {
    ordered_json j;
    j["bytes"] = v.bytes;
    j["is_ptr"] = v.is_ptr;
    j["ptr_alloc_bytes"] = v.ptr_alloc_bytes;
    j["val"] = v.val;
    vars[name] = std::move(j);
  }
  doc["Variables"] = std::move(vars);

  auto order = spec.topological_order();
  // nodes on cycles are not in the Kahn order; append them by name
  for (const auto& [name, node] : spec.dag)
    if (std::find(order.begin(), order.end(), name) == order.end()) order.push_back(name);

  ordered_json dag = ordered_json::object();
  for (const auto& name : order) {
    const auto& node = spec.dag.at(name);
    ordered_json j;
    j["arguments"] = node.arguments;
    j["predecessors"] = node.predecessors;
    j["successors"] = node.successors;
    ordered_json platforms = ordered_json::array();
    for (const auto& b : node.platforms) {
      ordered_json p;
      p["name"] = b.platform_name;
      p["runfunc"] = b.run_func;
      if (b.shared_object) p["shared_object"] = *b.shared_object;
      if (b.est_exec_time) p["est_exec_time"] = b.est_exec_time->count();
      platforms.push_back(std::move(p));
    }
    j["platforms"] = std::move(platforms);
    if (!node.comm_bytes.empty()) {
      ordered_json comm = ordered_json::object();
      for (const auto& [succ, bytes] : node.comm_bytes) comm[succ] = bytes;
      j["comm_bytes"] = std::move(comm);
    }
    dag[name] = std::move(j);
  }
  doc["DAG"] = std::move(dag);
  return detail::pretty(doc);
}

void TaskInstance::advance(TaskState next) {
  const bool legal = (state == TaskState::pending && next == TaskState::ready) ||
                     (state == TaskState::ready && next == TaskState::running) ||
                     (state == TaskState::running && next == TaskState::complete);
  if (!legal) throw std::logic_error("illegal task state transition");
  state = next;
}

std::span<std::uint8_t> ApplicationInstance::payload(const std::string& variable) {
  auto it = store.find(variable);
  if (it == store.end()) throw LookupError("unknown variable " + variable);
  return it->second.payload(spec->variables.at(variable).is_ptr);
}

std::span<const std::uint8_t> ApplicationInstance::payload(const std::string& variable) const {
  return const_cast<ApplicationInstance*>(this)->payload(variable);
}

std::unique_ptr<ApplicationInstance> instantiate(const ApplicationSpec& spec, std::int64_t instance_id,
                                                 Nanos arrival_time) {
  auto inst = std::make_unique<ApplicationInstance>();
  inst->instance_id = instance_id;
  inst->spec = &spec;
  inst->arrival_time = arrival_time;
  for (const auto& [name, v] : spec.variables) {
    VariableStorage storage;
    storage.slot.assign(v.bytes, 0);
    if (v.is_ptr) {
      storage.heap.assign(v.ptr_alloc_bytes, 0);
      std::copy(v.val.begin(), v.val.end(), storage.heap.begin());
      // the slot holds an opaque handle to the heap buffer
      const auto* address = storage.heap.data();
      std::memcpy(storage.slot.data(), &address, std::min<std::size_t>(sizeof(address), storage.slot.size()));
    } else {
      std::copy(v.val.begin(), v.val.end(), storage.slot.begin());
    }
    inst->store.emplace(name, std::move(storage));
  }
  for (const auto& [name, node] : spec.dag) inst->tasks.emplace(name, TaskInstance{});
  return inst;
}

}  // namespace emu
