#include "emu/dag_extract.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstring>
#include <numeric>
#include <random>
#include <set>
#include <unordered_map>

#include "detail/json_util.hpp"

namespace emu::extract {

using detail::json;
using detail::ordered_json;

// ---- file formats ------------------------------------------------------------

std::vector<std::uint32_t> parse_block_ids(std::string_view contents) {
  std::vector<std::uint32_t> ids;
  if (contents.size() >= kBinaryMagic.size() && contents.substr(0, kBinaryMagic.size()) == kBinaryMagic) {
    const auto body = contents.substr(kBinaryMagic.size());
    if (body.size() % 4 != 0) throw ParseError("block trace: binary body is not a multiple of 4 bytes");
    ids.reserve(body.size() / 4);
    for (std::size_t i = 0; i < body.size(); i += 4) {
      std::uint32_t v = 0;
      for (int b = 3; b >= 0; --b) v = (v << 8) | static_cast<std::uint8_t>(body[i + b]);
      ids.push_back(v);
    }
    return ids;
  }
  std::size_t line = 1;
  std::size_t i = 0;
  while (i < contents.size()) {
    const char c = contents[i];
    if (c == '\n') {
      ++line;
      ++i;
    } else if (c == ' ' || c == '\t' || c == '\r') {
      ++i;
    } else if (c == '#') {
      while (i < contents.size() && contents[i] != '\n') ++i;
    } else {
      std::size_t j = i;
      while (j < contents.size() && !std::isspace(static_cast<unsigned char>(contents[j])) && contents[j] != '#') ++j;
      const auto token = contents.substr(i, j - i);
      std::uint32_t v = 0;
      const auto [ptr, ec] = std::from_chars(token.data(), token.data() + token.size(), v);
      if (ec != std::errc{} || ptr != token.data() + token.size())
        throw ParseError("block trace line " + std::to_string(line) + ": bad block id '" + std::string(token) + "'");
      ids.push_back(v);
      i = j;
    }
  }
  return ids;
}

std::vector<std::uint32_t> read_block_ids(const std::string& path) { return parse_block_ids(detail::read_file(path)); }

std::string encode_block_ids(const std::vector<std::uint32_t>& ids, bool binary) {
  std::string out;
  if (binary) {
    out.reserve(kBinaryMagic.size() + 4 * ids.size());
    out.append(kBinaryMagic);
    for (auto v : ids)
      for (int b = 0; b < 4; ++b) out.push_back(static_cast<char>((v >> (8 * b)) & 0xFF));
    return out;
  }
  for (auto v : ids) {
    out += std::to_string(v);
    out += '\n';
  }
  return out;
}

TraceMeta parse_meta(std::string_view text) {
  const json doc = detail::parse_strict(text, "trace metadata");
  if (!doc.is_object()) throw ParseError("trace metadata: document must be an object");
  detail::reject_unknown_keys(doc, {"blocks", "variables"}, "trace metadata");
  TraceMeta meta;
  for (const auto& v : detail::require_array(doc, "variables", "trace metadata")) {
    if (!v.is_object()) throw ParseError("trace metadata: variables must be objects");
    VariableMeta var;
    var.name = detail::require_string(v, "name", "variable");
    const std::string where = "variable " + var.name;
    detail::reject_unknown_keys(v, {"name", "element_bytes", "count", "alloc", "size"}, where);
    const auto alloc = detail::require_string(v, "alloc", where);
    if (alloc == "static") {
      var.alloc = AllocKind::static_alloc;
      var.element_bytes = detail::require_uint(v, "element_bytes", where);
      var.count = v.contains("count") ? detail::require_uint(v, "count", where) : 1;
      if (var.element_bytes == 0 || var.count == 0) throw ParseError(where + ": static size must be positive");
      if (v.contains("size")) throw ParseError(where + ": static variables take count, not size");
    } else if (alloc == "dynamic") {
      var.alloc = AllocKind::dynamic_alloc;
      var.size_expr = detail::require_string(v, "size", where);
      if (v.contains("element_bytes")) var.element_bytes = detail::require_uint(v, "element_bytes", where);
      if (v.contains("count")) throw ParseError(where + ": dynamic variables take size, not count");
    } else {
      throw ParseError(where + ": alloc must be static or dynamic, got " + alloc);
    }
    if (!meta.variables.emplace(var.name, var).second) throw ParseError("duplicate variable " + var.name);
  }
  for (const auto& b : detail::require_array(doc, "blocks", "trace metadata")) {
    if (!b.is_object()) throw ParseError("trace metadata: blocks must be objects");
    detail::reject_unknown_keys(b, {"id", "function", "ops", "reads", "writes"}, "block");
    BlockMeta block;
    const auto id = detail::require_uint(b, "id", "block");
    if (id > UINT32_MAX) throw ParseError("block id out of range: " + std::to_string(id));
    block.id = static_cast<std::uint32_t>(id);
    const std::string where = "block " + std::to_string(id);
    block.function = b.contains("function") ? detail::require_string(b, "function", where) : "";
    if (b.contains("ops")) {
      const auto& ops = detail::require_object(b, "ops", where);
      for (const auto& [op, count] : ops.items()) {
        const auto c = detail::as_uint(count, where + " op " + op);
        if (c > UINT32_MAX) throw ParseError(where + ": op count out of range");
        block.ops[op] = static_cast<std::uint32_t>(c);
      }
    }
    if (b.contains("reads")) block.reads = detail::as_string_list(b["reads"], where + " reads");
    if (b.contains("writes")) block.writes = detail::as_string_list(b["writes"], where + " writes");
    for (const auto* list : {&block.reads, &block.writes})
      for (const auto& name : *list)
        if (!meta.variables.count(name)) throw ParseError(where + ": unknown variable " + name);
    if (!meta.blocks.emplace(block.id, block).second) throw ParseError("duplicate block " + std::to_string(id));
  }
  return meta;
}

TraceMeta load_meta(const std::string& path) { return parse_meta(detail::read_file(path)); }

std::string emit_meta(const TraceMeta& meta) {
  ordered_json doc;
  ordered_json blocks = ordered_json::array();
  for (const auto& [id, b] : meta.blocks) {
    ordered_json j;
    j["id"] = id;
    j["function"] = b.function;
    ordered_json ops = ordered_json::object();
    for (const auto& [op, c] : b.ops) ops[op] = c;
    j["ops"] = std::move(ops);
    j["reads"] = b.reads;
    j["writes"] = b.writes;
    blocks.push_back(std::move(j));
  }
  ordered_json vars = ordered_json::array();
  for (const auto& [name, v] : meta.variables) {
    ordered_json j;
    j["name"] = name;
    if (v.alloc == AllocKind::static_alloc) {
      j["alloc"] = "static";
      j["element_bytes"] = v.element_bytes;
      j["count"] = v.count;
    } else {
      j["alloc"] = "dynamic";
      j["size"] = v.size_expr;
      if (v.element_bytes) j["element_bytes"] = v.element_bytes;
    }
    vars.push_back(std::move(j));
  }
  doc["blocks"] = std::move(blocks);
  doc["variables"] = std::move(vars);
  return detail::pretty(doc);
}

void check_consistent(const BlockTrace& trace) {
  std::set<std::uint32_t> seen;
  for (auto id : trace.blocks) {
    if (seen.insert(id).second && !trace.meta.blocks.count(id))
      throw ParseError("traced block " + std::to_string(id) + " has no metadata");
  }
  for (const auto& [id, b] : trace.meta.blocks)
    for (const auto* list : {&b.reads, &b.writes})
      for (const auto& name : *list)
        if (!trace.meta.variables.count(name))
          throw ParseError("block " + std::to_string(id) + ": unknown variable " + name);
}

BlockTrace load_block_trace(const std::string& trace_path, const std::string& meta_path) {
  BlockTrace t{read_block_ids(trace_path), load_meta(meta_path)};
  check_consistent(t);
  return t;
}

// ---- detection -----------------------------------------------------------------

namespace {

struct UnionFind {
  std::vector<std::size_t> parent;
  explicit UnionFind(std::size_t n) : parent(n) { std::iota(parent.begin(), parent.end(), 0); }
  std::size_t find(std::size_t x) {
    while (parent[x] != x) x = parent[x] = parent[parent[x]];
    return x;
  }
  void unite(std::size_t a, std::size_t b) {
    a = find(a);
    b = find(b);
    if (a != b) parent[std::max(a, b)] = std::min(a, b);
  }
};

std::vector<std::string> sorted_union(const TraceMeta& meta, const std::vector<std::uint32_t>& blocks, bool writes) {
  std::set<std::string> out;
  for (auto id : blocks) {
    const auto& b = meta.blocks.at(id);
    const auto& list = writes ? b.writes : b.reads;
    out.insert(list.begin(), list.end());
  }
  return {out.begin(), out.end()};
}

}  // namespace

std::vector<KernelGroup> detect_kernels(const BlockTrace& trace, const DetectParams& params) {
  const auto& seq = trace.blocks;
  const std::size_t n = seq.size();

  std::unordered_map<std::uint32_t, std::uint64_t> counts;
  std::unordered_map<std::uint32_t, std::size_t> first_pos;
  for (std::size_t p = 0; p < n; ++p) {
    ++counts[seq[p]];
    first_pos.try_emplace(seq[p], p);
  }

  // hot blocks get dense indices in order of first appearance
  std::vector<std::uint32_t> hot;
  for (const auto& [id, c] : counts)
    if (c >= params.hot_threshold) hot.push_back(id);
  std::sort(hot.begin(), hot.end(), [&](auto a, auto b) { return first_pos.at(a) < first_pos.at(b); });
  if (hot.empty()) return {};
  std::unordered_map<std::uint32_t, std::int32_t> index;
  for (std::size_t h = 0; h < hot.size(); ++h) index[hot[h]] = static_cast<std::int32_t>(h);

  std::vector<std::int32_t> seq_h(n, -1);
  for (std::size_t p = 0; p < n; ++p) {
    const auto it = index.find(seq[p]);
    if (it != index.end()) seq_h[p] = it->second;
  }

  // Sliding window [p - w, p + w] with per-block occupancy and a compact list
  // of the blocks present.
  const std::size_t H = hot.size();
  const std::size_t w = params.window;
  std::vector<std::uint32_t> in_window(H, 0);
  std::vector<std::int32_t> active, slot(H, -1);
  auto add = [&](std::size_t pos) {
    const auto h = seq_h[pos];
    if (h < 0) return;
    if (in_window[h]++ == 0) {
      slot[h] = static_cast<std::int32_t>(active.size());
      active.push_back(h);
    }
  };
  auto remove = [&](std::size_t pos) {
    const auto h = seq_h[pos];
    if (h < 0) return;
    if (--in_window[h] == 0) {
      const auto s = slot[h];
      const auto last = active.back();
      active[s] = last;
      slot[last] = s;
      active.pop_back();
      slot[h] = -1;
    }
  };

  const bool dense = H <= 4096;
  std::vector<std::uint32_t> co_dense(dense ? H * H : 0, 0);
  std::unordered_map<std::uint64_t, std::uint32_t> co_sparse;
  std::vector<std::uint64_t> occ(H, 0);

  for (std::size_t p = 0; p <= std::min(w, n - 1); ++p) add(p);
  for (std::size_t p = 0; p < n; ++p) {
    if (p > 0) {
      if (p + w < n) add(p + w);
      if (p >= w + 1) remove(p - w - 1);
    }
    const auto a = seq_h[p];
    if (a < 0) continue;
    ++occ[a];
    for (const auto b : active) {
      if (b == a) continue;
      if (dense)
        ++co_dense[static_cast<std::size_t>(a) * H + b];
      else
        ++co_sparse[static_cast<std::uint64_t>(a) * H + b];
    }
  }
  auto co = [&](std::size_t a, std::size_t b) -> std::uint64_t {
    if (dense) return co_dense[a * H + b];
    const auto it = co_sparse.find(static_cast<std::uint64_t>(a) * H + b);
    return it == co_sparse.end() ? 0 : it->second;
  };
  auto affine = [&](std::size_t a, std::size_t b) {
    return static_cast<double>(co(a, b)) >= params.affinity * static_cast<double>(occ[a]) - 1e-9;
  };

  UnionFind uf(H);
  for (std::size_t a = 0; a < H; ++a)
    for (std::size_t b = a + 1; b < H; ++b)
      if (co(a, b) > 0 && affine(a, b) && affine(b, a)) uf.unite(a, b);

  // roots are the smallest index, i.e. the earliest member
  std::map<std::size_t, std::vector<std::uint32_t>> groups;
  for (std::size_t h = 0; h < H; ++h) groups[uf.find(h)].push_back(hot[h]);

  std::vector<KernelGroup> kernels;
  for (auto& [root, members] : groups) {
    KernelGroup k;
    k.count = counts.at(hot[root]);
    std::sort(members.begin(), members.end());
    k.blocks = members;
    for (auto id : members) k.ops += trace.meta.blocks.at(id).ops;
    k.fingerprint = fingerprint(k.ops);
    k.live_in = sorted_union(trace.meta, members, false);
    k.live_out = sorted_union(trace.meta, members, true);
    kernels.push_back(std::move(k));
  }
  return kernels;
}

// ---- partition -----------------------------------------------------------------

std::vector<ProgramNode> partition_program(const BlockTrace& trace, const std::vector<KernelGroup>& kernels) {
  std::unordered_map<std::uint32_t, std::size_t> owner;
  for (std::size_t k = 0; k < kernels.size(); ++k)
    for (auto id : kernels[k].blocks) owner[id] = k;
  auto owner_of = [&](std::uint32_t id) -> std::optional<std::size_t> {
    const auto it = owner.find(id);
    if (it == owner.end()) return std::nullopt;
    return it->second;
  };

  const auto& seq = trace.blocks;
  std::vector<ProgramNode> nodes;
  for (std::size_t p = 0; p < seq.size();) {
    ProgramNode node;
    node.kernel = owner_of(seq[p]);
    node.begin = p;
    while (p < seq.size() && owner_of(seq[p]) == node.kernel) ++p;
    node.end = p;
    nodes.push_back(std::move(node));
  }

  // Per-node upward-exposed reads, writes and first-use positions.
  struct Access {
    // variable -> ordinal of its first use inside the node
    std::map<std::string, std::size_t> first_use;
    std::set<std::string> exposed;
    std::set<std::string> written;
  };
  std::vector<Access> acc(nodes.size());
  std::unordered_map<std::uint32_t, std::uint64_t> block_ops;
  for (const auto& [id, b] : trace.meta.blocks) {
    std::uint64_t total = 0;
    for (const auto& [op, c] : b.ops) total += c;
    block_ops[id] = total;
  }
  for (std::size_t i = 0; i < nodes.size(); ++i) {
    auto& a = acc[i];
    // a block's later visits cannot change how its variables were classified
    std::set<std::uint32_t> settled;
    for (std::size_t p = nodes[i].begin; p < nodes[i].end; ++p) {
      const auto id = seq[p];
      nodes[i].dynamic_ops += block_ops.at(id);
      if (settled.count(id)) continue;
      const auto& b = trace.meta.blocks.at(id);
      for (const auto& v : b.reads) {
        a.first_use.try_emplace(v, a.first_use.size());
        if (!a.written.count(v)) a.exposed.insert(v);
      }
      for (const auto& v : b.writes) {
        a.first_use.try_emplace(v, a.first_use.size());
        a.written.insert(v);
      }
      settled.insert(id);
    }
  }

  for (std::size_t i = 0; i < nodes.size(); ++i) {
    std::set<std::string> out;
    for (const auto& v : acc[i].written) {
      bool read_later = false, rewritten = false;
      for (std::size_t j = i + 1; j < nodes.size() && !read_later; ++j) {
        if (acc[j].exposed.count(v)) read_later = true;
        if (acc[j].written.count(v)) rewritten = true;
      }
      if (read_later || !rewritten) out.insert(v);
    }
    std::vector<std::pair<std::size_t, std::string>> in_order, out_order, all;
    for (const auto& v : acc[i].exposed) in_order.emplace_back(acc[i].first_use.at(v), v);
    for (const auto& v : out) out_order.emplace_back(acc[i].first_use.at(v), v);
    std::set<std::string> live(acc[i].exposed.begin(), acc[i].exposed.end());
    live.insert(out.begin(), out.end());
    for (const auto& v : live) all.emplace_back(acc[i].first_use.at(v), v);
    for (auto* list : {&in_order, &out_order, &all}) std::sort(list->begin(), list->end());
    for (auto& [pos, v] : in_order) nodes[i].live_in.push_back(v);
    for (auto& [pos, v] : out_order) nodes[i].live_out.push_back(v);
    for (auto& [pos, v] : all) nodes[i].arguments.push_back(v);
  }
  return nodes;
}

// ---- memory ----------------------------------------------------------------------

std::optional<std::uint64_t> eval_size_expression(std::string_view expr) {
  std::uint64_t product = 1;
  bool any = false;
  std::size_t i = 0;
  while (true) {
    while (i < expr.size() && std::isspace(static_cast<unsigned char>(expr[i]))) ++i;
    std::size_t j = i;
    while (j < expr.size() && std::isdigit(static_cast<unsigned char>(expr[j]))) ++j;
    if (j == i) return std::nullopt;
    std::uint64_t v = 0;
    const auto [ptr, ec] = std::from_chars(expr.data() + i, expr.data() + j, v);
    if (ec != std::errc{} || ptr != expr.data() + j) return std::nullopt;
    if (v != 0 && product > UINT64_MAX / v) return std::nullopt;
    product *= v;
    any = true;
    i = j;
    while (i < expr.size() && std::isspace(static_cast<unsigned char>(expr[i]))) ++i;
    if (i == expr.size()) break;
    if (expr[i] != '*') return std::nullopt;
    ++i;
  }
  if (!any) return std::nullopt;
  return product;
}

MemoryInference infer_memory(const TraceMeta& meta) {
  MemoryInference m;
  for (const auto& [name, v] : meta.variables) {
    VariableSpec spec;
    spec.name = name;
    if (v.alloc == AllocKind::static_alloc) {
      if (v.count == 1) {
        spec.bytes = v.element_bytes;
      } else {
        spec.is_ptr = true;
        spec.bytes = 8;
        spec.ptr_alloc_bytes = v.element_bytes * v.count;
      }
    } else {
      const auto size = eval_size_expression(v.size_expr);
      if (!size || *size == 0) {
        m.unresolved[name] = v.size_expr;
        continue;
      }
      spec.is_ptr = true;
      spec.bytes = 8;
      spec.ptr_alloc_bytes = *size;
    }
    m.variables[name] = std::move(spec);
  }
  return m;
}

// ---- emission --------------------------------------------------------------------

ExtractedApp emit_dag(const std::vector<ProgramNode>& nodes, const std::vector<KernelGroup>& kernels,
                      const MemoryInference& memory, const std::string& app_name, const EmitOptions& options) {
  ExtractedApp out;
  auto& spec = out.spec;
  spec.app_name = app_name;
  spec.shared_object = app_name + ".so";
  for (std::size_t k = 0; k < nodes.size(); ++k) {
    const auto& n = nodes[k];
    TaskNodeSpec t;
    t.name = "node" + std::to_string(k);
    for (const auto& v : n.arguments) {
      if (memory.unresolved.count(v))
        throw LookupError("node " + t.name + " references variable " + v + " with unresolved size " +
                          memory.unresolved.at(v));
      const auto it = memory.variables.find(v);
      if (it == memory.variables.end()) throw LookupError("node " + t.name + " references unknown variable " + v);
      spec.variables[v] = it->second;
      t.arguments.push_back(v);
    }
    if (k > 0) t.predecessors = {"node" + std::to_string(k - 1)};
    if (k + 1 < nodes.size()) t.successors = {"node" + std::to_string(k + 1)};
    const auto est = std::max<std::int64_t>(1, std::llround(static_cast<double>(n.dynamic_ops) * options.ns_per_op));
    t.platforms = {{"cpu", app_name + "_node" + std::to_string(k), std::nullopt, Nanos(est)}};
    if (n.kernel) out.fingerprints[t.name] = kernels.at(*n.kernel).fingerprint;
    spec.dag[t.name] = std::move(t);
  }
  return out;
}

Extraction extract(const BlockTrace& trace, const std::string& app_name, const DetectParams& params,
                   const EmitOptions& options) {
  if (trace.blocks.empty()) throw ParseError("block trace is empty");
  check_consistent(trace);
  Extraction x;
  x.kernels = detect_kernels(trace, params);
  x.nodes = partition_program(trace, x.kernels);
  x.memory = infer_memory(trace.meta);
  x.app = emit_dag(x.nodes, x.kernels, x.memory, app_name, options);
  return x;
}

// ---- recognition -----------------------------------------------------------------

namespace {

std::uint64_t builtin_fingerprint(const KernelRegistry& registry, const std::string& name) {
  const auto h = registry.builtin(name);
  if (!h) throw LookupError("unknown builtin " + name);
  if (!h->fingerprint) throw LookupError("builtin " + name + " declares no summary");
  return *h->fingerprint;
}

std::uint64_t parse_fingerprint(const std::string& text) {
  std::string_view s = text;
  if (s.starts_with("0x") || s.starts_with("0X")) s.remove_prefix(2);
  std::uint64_t v = 0;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v, 16);
  if (s.empty() || ec != std::errc{} || ptr != s.data() + s.size())
    throw ParseError("recognition table: bad fingerprint " + text);
  return v;
}

}  // namespace

RecognitionTable parse_recognition_table(std::string_view text) {
  const json doc = detail::parse_strict(text, "recognition table");
  if (!doc.is_object()) throw ParseError("recognition table: document must be an object");
  detail::reject_unknown_keys(doc, {"policy", "entries"}, "recognition table");
  RecognitionTable table;
  if (doc.contains("policy")) {
    const auto p = detail::require_string(doc, "policy", "recognition table");
    if (p == "replace")
      table.policy = RecognitionTable::Policy::replace;
    else if (p == "append")
      table.policy = RecognitionTable::Policy::append;
    else
      throw ParseError("recognition table: policy must be replace or append, got " + p);
  }
  const KernelRegistry registry;
  for (const auto& e : detail::require_array(doc, "entries", "recognition table")) {
    if (!e.is_object()) throw ParseError("recognition table: entries must be objects");
    detail::reject_unknown_keys(e, {"fingerprint", "match_builtin", "platforms"}, "recognition entry");
    if (e.contains("fingerprint") == e.contains("match_builtin"))
      throw ParseError("recognition entry: exactly one of fingerprint and match_builtin is required");
    const std::uint64_t fp = e.contains("fingerprint")
                                 ? parse_fingerprint(detail::require_string(e, "fingerprint", "recognition entry"))
                                 : builtin_fingerprint(registry, detail::require_string(e, "match_builtin", "recognition entry"));
    std::vector<PlatformBinding> bindings;
    for (const auto& p : detail::require_array(e, "platforms", "recognition entry")) {
      if (!p.is_object()) throw ParseError("recognition entry: platforms must be objects");
      detail::reject_unknown_keys(p, {"name", "runfunc", "shared_object", "est_exec_time"}, "recognition platform");
      PlatformBinding b;
      b.platform_name = detail::require_string(p, "name", "recognition platform");
      b.run_func = detail::require_string(p, "runfunc", "recognition platform");
      b.shared_object = p.contains("shared_object") ? detail::require_string(p, "shared_object", "recognition platform")
                                                    : std::string(kBuiltinProvider);
      if (p.contains("est_exec_time"))
        b.est_exec_time = Nanos(detail::require_uint(p, "est_exec_time", "recognition platform"));
      bindings.push_back(std::move(b));
    }
    if (bindings.empty()) throw ParseError("recognition entry: platforms must not be empty");
    if (!table.entries.emplace(fp, std::move(bindings)).second)
      throw ParseError("recognition table: duplicate fingerprint");
  }
  return table;
}

RecognitionTable load_recognition_table(const std::string& path) {
  return parse_recognition_table(detail::read_file(path));
}

RecognitionTable default_recognition_table() {
  const KernelRegistry registry;
  const std::string builtin(kBuiltinProvider);
  RecognitionTable t;
  t.entries[builtin_fingerprint(registry, "dft_naive")] = {{"cpu", "fft_radix2", builtin, std::nullopt},
                                                           {"fft", "fft_radix2", builtin, std::nullopt}};
  t.entries[builtin_fingerprint(registry, "idft_naive")] = {{"cpu", "ifft", builtin, std::nullopt},
                                                            {"fft", "ifft", builtin, std::nullopt}};
  return t;
}

SubstitutionResult substitute_optimized(const ApplicationSpec& spec,
                                        const std::map<std::string, std::uint64_t>& fingerprints,
                                        const RecognitionTable& table) {
  SubstitutionResult r{spec, {}};
  for (auto& [name, node] : r.spec.dag) {
    const auto fp = fingerprints.find(name);
    if (fp == fingerprints.end()) continue;
    const auto hit = table.entries.find(fp->second);
    if (hit == table.entries.end()) continue;
    auto incoming = hit->second;
    for (auto& b : incoming) {
      if (b.est_exec_time) continue;
      if (const auto* old = node.binding_for(b.platform_name)) b.est_exec_time = old->est_exec_time;
    }
    if (table.policy == RecognitionTable::Policy::replace) {
      node.platforms = std::move(incoming);
    } else {
      for (auto& b : incoming) {
        std::erase_if(node.platforms, [&](const PlatformBinding& old) { return old.platform_name == b.platform_name; });
        node.platforms.push_back(std::move(b));
      }
    }
    r.hits.push_back(name);
  }
  return r;
}

std::map<std::string, std::uint64_t> binding_fingerprints(const ApplicationSpec& spec,
                                                          const KernelRegistry& registry) {
  std::map<std::string, std::uint64_t> out;
  for (const auto& [name, node] : spec.dag) {
    for (const auto& b : node.platforms) {
      try {
        const auto h = registry.resolve(b.run_func, b.shared_object, spec.shared_object);
        if (h.provider.kind == KernelProvider::Kind::builtin && h.fingerprint) {
          out[name] = *h.fingerprint;
          break;
        }
      } catch (const LookupError&) {
      }
    }
  }
  return out;
}

// ---- planted traces --------------------------------------------------------------

namespace {

const std::vector<std::string> kOpPool{"add", "sub", "mul", "fadd", "fmul", "fsub", "load", "store",
                                       "br",  "icmp", "shl", "and", "xor", "select", "getelementptr"};

OpSummary random_ops(std::mt19937_64& rng) {
  OpSummary ops;
  const std::size_t kinds = 1 + rng() % 5;
  for (std::size_t i = 0; i < kinds; ++i) ops[kOpPool[rng() % kOpPool.size()]] += 1 + rng() % 4;
  return ops;
}

// Splits `total` over `parts` summaries so that each part is non-empty.
std::vector<OpSummary> split_ops(std::mt19937_64& rng, const OpSummary& total, std::size_t parts) {
  std::vector<OpSummary> out(parts);
  std::vector<std::string> units;
  for (const auto& [op, c] : total)
    for (std::uint32_t i = 0; i < c; ++i) units.push_back(op);
  std::shuffle(units.begin(), units.end(), rng);
  for (std::size_t i = 0; i < units.size(); ++i) ++out[i < parts ? i : rng() % parts][units[i]];
  return out;
}

struct PlantedKernel {
  std::vector<std::uint32_t> body;        // fixed blocks in loop order
  std::optional<std::size_t> branch_at;   // position of the two-way branch in body
  std::uint32_t branch_alt = 0;           // alternative block at that position
};

}  // namespace

PlantedTrace plant_trace(std::uint64_t seed, const PlantOptions& options) {
  std::mt19937_64 rng(seed);
  PlantedTrace out;
  auto& meta = out.trace.meta;
  auto& seq = out.trace.blocks;
  std::uint32_t next_id = 1 + static_cast<std::uint32_t>(rng() % 50);
  auto fresh_id = [&] { return next_id += 1 + static_cast<std::uint32_t>(rng() % 3); };

  auto add_var = [&](VariableMeta v) { meta.variables[v.name] = std::move(v); };
  add_var({"n", 4, 1, AllocKind::static_alloc, ""});
  add_var({"status", 4, 1, AllocKind::static_alloc, ""});

  const std::size_t nk = options.min_kernels + rng() % (options.max_kernels - options.min_kernels + 1);
  std::optional<std::size_t> dft = options.plant_dft ? std::optional<std::size_t>(rng() % nk) : std::nullopt;
  out.dft_kernel = dft;
  const OpSummary dft_ops = *KernelRegistry().builtin("dft_naive")->summary;

  std::vector<PlantedKernel> kernels(nk);
  for (std::size_t k = 0; k < nk; ++k) {
    const std::string in = "buf" + std::to_string(k), outv = "buf" + std::to_string(k + 1);
    if (k == 0) add_var({in, 8, 512, AllocKind::static_alloc, ""});
    if (rng() % 2)
      add_var({outv, 8, 512, AllocKind::static_alloc, ""});
    else
      add_var({outv, 8, 1, AllocKind::dynamic_alloc, std::to_string(64 << (rng() % 4)) + " * 8"});

    auto& pk = kernels[k];
    const bool is_dft = dft && *dft == k;
    const std::size_t len = is_dft ? 3 : 1 + rng() % options.max_blocks_per_kernel;
    std::vector<OpSummary> ops(len);
    if (is_dft) {
      ops = split_ops(rng, dft_ops, len);
    } else {
      for (auto& o : ops) o = random_ops(rng);
    }
    for (std::size_t i = 0; i < len; ++i) {
      BlockMeta b;
      b.id = fresh_id();
      b.function = "kernel" + std::to_string(k);
      b.ops = ops[i];
      if (i == 0) b.reads = {"n"};
      if (i == len / 2) {
        b.reads.push_back(in);
        b.writes = {outv};
      }
      pk.body.push_back(b.id);
      meta.blocks[b.id] = std::move(b);
    }
    if (!is_dft && len >= 2 && std::generate_canonical<double, 53>(rng) < options.branch_probability) {
      const std::size_t at = 1 + rng() % (len - 1);
      BlockMeta alt = meta.blocks.at(pk.body[at]);
      alt.id = fresh_id();
      alt.ops = random_ops(rng);
      pk.branch_at = at;
      pk.branch_alt = alt.id;
      meta.blocks[alt.id] = std::move(alt);
    }
  }

  auto cold_segment = [&](std::size_t index) {
    const std::size_t len = 1 + rng() % options.max_cold_blocks;
    for (std::size_t i = 0; i < len; ++i) {
      BlockMeta b;
      b.id = fresh_id();
      b.function = "main";
      b.ops = random_ops(rng);
      if (i == 0) b.reads = {"status"};
      b.writes = {"status"};
      if (index == 0 && i == 0) b.writes.push_back("n");
      seq.push_back(b.id);
      meta.blocks[b.id] = std::move(b);
    }
    out.segments.push_back(std::nullopt);
  };

  const double log_lo = std::log(static_cast<double>(options.min_iterations));
  const double log_hi = std::log(static_cast<double>(options.max_iterations));
  auto run_kernel = [&](std::size_t k) {
    const auto& pk = kernels[k];
    const auto iters = static_cast<std::uint64_t>(
        std::exp(log_lo + (log_hi - log_lo) * std::generate_canonical<double, 53>(rng)));
    for (std::uint64_t it = 0; it < iters; ++it)
      for (std::size_t i = 0; i < pk.body.size(); ++i)
        seq.push_back(pk.branch_at == i && (rng() & 1) ? pk.branch_alt : pk.body[i]);
    out.segments.push_back(k);
  };

  // every kernel runs once in order; reuse inserts extra runs of earlier ones
  std::size_t segment = 0;
  if (rng() % 10 >= 3) cold_segment(segment++);
  for (std::size_t k = 0; k < nk; ++k) {
    if (k > 0) cold_segment(segment++);
    run_kernel(k);
    if (k > 0 && std::generate_canonical<double, 53>(rng) < options.reuse_probability) {
      cold_segment(segment++);
      run_kernel(rng() % k);
    }
  }
  if (rng() % 2) cold_segment(segment++);

  for (const auto& pk : kernels) {
    std::vector<std::uint32_t> members = pk.body;
    if (pk.branch_at) members.push_back(pk.branch_alt);
    std::sort(members.begin(), members.end());
    out.kernels.push_back(std::move(members));
  }
  return out;
}

}  // namespace emu::extract
