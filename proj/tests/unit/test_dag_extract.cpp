#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <random>
#include <set>

#include "emu/dag_extract.hpp"
#include "emu/engine.hpp"
#include "emu/fixtures.hpp"
#include "oracles.hpp"

namespace emu::extract {
namespace {

// Metadata where every id in `ids` is a block with one add and no variables.
TraceMeta plain_meta(const std::vector<std::uint32_t>& ids) {
  TraceMeta m;
  for (auto id : ids) m.blocks[id] = {id, "f", {{"add", 1}}, {}, {}};
  return m;
}

BlockTrace make_trace(std::vector<std::uint32_t> seq) {
  std::set<std::uint32_t> ids(seq.begin(), seq.end());
  return {std::move(seq), plain_meta({ids.begin(), ids.end()})};
}

void repeat(std::vector<std::uint32_t>& seq, const std::vector<std::uint32_t>& body, int times) {
  for (int i = 0; i < times; ++i) seq.insert(seq.end(), body.begin(), body.end());
}

std::vector<std::vector<std::uint32_t>> groups(const std::vector<KernelGroup>& kernels) {
  std::vector<std::vector<std::uint32_t>> out;
  for (const auto& k : kernels) out.push_back(k.blocks);
  return out;
}

TEST(BlockTraceIO, TextAndBinary) {
  const std::vector<std::uint32_t> ids{1, 2, 3, 4000000000u, 0};
  EXPECT_EQ(parse_block_ids(encode_block_ids(ids, true)), ids);
  EXPECT_EQ(parse_block_ids(encode_block_ids(ids, false)), ids);
  EXPECT_EQ(encode_block_ids({1}, true), std::string("EMUBLK1\0\x01\0\0\0", 12));
  EXPECT_EQ(parse_block_ids("# header\n1 2\t3\n\n4 # tail\n"), (std::vector<std::uint32_t>{1, 2, 3, 4}));
  EXPECT_THROW(parse_block_ids("1\n2x\n"), ParseError);
  EXPECT_THROW(parse_block_ids(std::string("EMUBLK1\0\x01\0", 10)), ParseError);
  EXPECT_TRUE(parse_block_ids("").empty());
}

TEST(BlockTraceIO, MetaRoundTripAndErrors) {
  const auto planted = plant_trace(5);
  const auto text = emit_meta(planted.trace.meta);
  EXPECT_EQ(parse_meta(text), planted.trace.meta);

  EXPECT_THROW(parse_meta(R"({"blocks":[{"id":1,"reads":["ghost"]}],"variables":[]})"), ParseError);
  EXPECT_THROW(parse_meta(R"({"blocks":[],"variables":[{"name":"x","alloc":"heap","size":"4"}]})"), ParseError);
  EXPECT_THROW(parse_meta(R"({"blocks":[],"variables":[{"name":"x","alloc":"static"}]})"), ParseError);
  EXPECT_THROW(parse_meta(R"({"blocks":[{"id":1},{"id":1}],"variables":[]})"), ParseError);
  EXPECT_THROW(parse_meta(R"({"blocks":[],"variables":[],"extra":0})"), ParseError);

  BlockTrace t{{1, 2}, plain_meta({1})};
  try {
    check_consistent(t);
    FAIL();
  } catch (const ParseError& e) {
    EXPECT_NE(std::string(e.what()).find("traced block 2"), std::string::npos);
  }
}

TEST(BlockTraceIO, LoadFromFiles) {
  const auto planted = plant_trace(6);
  const auto dir = std::filesystem::temp_directory_path();
  const auto blk = (dir / "emu_extract_test.blk").string(), meta = (dir / "emu_extract_test.meta.json").string();
  {
    std::ofstream(blk, std::ios::binary) << encode_block_ids(planted.trace.blocks, true);
    std::ofstream(meta) << emit_meta(planted.trace.meta);
  }
  const auto loaded = load_block_trace(blk, meta);
  EXPECT_EQ(loaded.blocks, planted.trace.blocks);
  EXPECT_EQ(loaded.meta, planted.trace.meta);
  std::filesystem::remove(blk);
  std::filesystem::remove(meta);
}

TEST(Detect, SingleLoop) {
  std::vector<std::uint32_t> seq{1};
  repeat(seq, {2, 3, 4}, 1000);
  seq.push_back(5);
  const auto k = detect_kernels(make_trace(seq));
  ASSERT_EQ(k.size(), 1u);
  EXPECT_EQ(k[0].blocks, (std::vector<std::uint32_t>{2, 3, 4}));
  EXPECT_EQ(k[0].count, 1000u);
  EXPECT_EQ(k[0].ops, (OpSummary{{"add", 3}}));
  EXPECT_EQ(k[0].fingerprint, fingerprint(OpSummary{{"add", 3}}));
}

TEST(Detect, NothingHot) {
  std::vector<std::uint32_t> seq;
  repeat(seq, {1, 2, 3}, 127);
  EXPECT_TRUE(detect_kernels(make_trace(seq)).empty());
  DetectParams p;
  p.hot_threshold = 127;
  EXPECT_EQ(detect_kernels(make_trace(seq), p).size(), 1u);
}

TEST(Detect, TwoSequentialLoops) {
  std::vector<std::uint32_t> seq;
  repeat(seq, {10, 11}, 500);
  repeat(seq, {20, 21}, 500);
  const auto k = detect_kernels(make_trace(seq));
  EXPECT_EQ(groups(k), (std::vector<std::vector<std::uint32_t>>{{10, 11}, {20, 21}}));
}

TEST(Detect, InterleavedLoopsMerge) {
  // alternating bodies keep all four blocks within the window of each other
  std::vector<std::uint32_t> seq;
  repeat(seq, {10, 11, 20, 21}, 400);
  EXPECT_EQ(groups(detect_kernels(make_trace(seq))), (std::vector<std::vector<std::uint32_t>>{{10, 11, 20, 21}}));
}

// Brute force straight from the definition: for every occurrence of a, scan
// the trace window for b.
std::vector<std::vector<std::uint32_t>> detect_oracle(const std::vector<std::uint32_t>& seq, const DetectParams& p) {
  std::map<std::uint32_t, std::vector<std::size_t>> pos;
  for (std::size_t i = 0; i < seq.size(); ++i) pos[seq[i]].push_back(i);
  std::vector<std::uint32_t> hot;
  for (const auto& [id, ps] : pos)
    if (ps.size() >= p.hot_threshold) hot.push_back(id);
  auto affine = [&](std::uint32_t a, std::uint32_t b) {
    std::size_t hits = 0;
    for (auto i : pos[a]) {
      const std::size_t lo = i >= p.window ? i - p.window : 0, hi = std::min(seq.size() - 1, i + p.window);
      for (std::size_t j = lo; j <= hi; ++j)
        if (seq[j] == b) {
          ++hits;
          break;
        }
    }
    return hits >= p.affinity * pos[a].size() - 1e-9;
  };
  std::map<std::uint32_t, std::uint32_t> comp;
  for (auto h : hot) comp[h] = h;
  bool changed = true;
  while (changed) {
    changed = false;
    for (auto a : hot)
      for (auto b : hot)
        if (a != b && affine(a, b) && affine(b, a) && comp[a] != comp[b]) {
          const auto lo = std::min(comp[a], comp[b]), hi = std::max(comp[a], comp[b]);
          for (auto& [id, c] : comp)
            if (c == hi) c = lo;
          changed = true;
        }
  }
  std::map<std::uint32_t, std::vector<std::uint32_t>> by;
  for (auto [id, c] : comp) by[c].push_back(id);
  std::vector<std::pair<std::size_t, std::vector<std::uint32_t>>> ordered;
  for (auto& [c, members] : by) {
    std::size_t first = SIZE_MAX;
    for (auto m : members) first = std::min(first, pos[m].front());
    ordered.emplace_back(first, members);
  }
  std::sort(ordered.begin(), ordered.end());
  std::vector<std::vector<std::uint32_t>> out;
  for (auto& [f, m] : ordered) out.push_back(m);
  return out;
}

TEST(Detect, MatchesDefinitionOracle) {
  std::mt19937_64 rng(17);
  for (int trial = 0; trial < 200; ++trial) {
    DetectParams p;
    p.hot_threshold = 3 + rng() % 6;
    p.window = 1 + rng() % 6;
    p.affinity = 0.5 + 0.1 * (rng() % 5);
    std::vector<std::uint32_t> seq(20 + rng() % 150);
    const std::uint32_t alphabet = 2 + rng() % 8;
    for (auto& id : seq) id = static_cast<std::uint32_t>(rng() % alphabet);
    EXPECT_EQ(groups(detect_kernels(make_trace(seq), p)), detect_oracle(seq, p)) << trial;
  }
}

TEST(Partition, Shapes) {
  std::vector<std::uint32_t> seq{1, 2};
  repeat(seq, {10, 11}, 300);
  seq.push_back(3);
  repeat(seq, {20}, 300);
  auto t = make_trace(seq);
  auto k = detect_kernels(t);
  auto nodes = partition_program(t, k);
  ASSERT_EQ(nodes.size(), 4u);
  EXPECT_FALSE(nodes[0].kernel);
  EXPECT_EQ(nodes[1].kernel, 0u);
  EXPECT_FALSE(nodes[2].kernel);
  EXPECT_EQ(nodes[3].kernel, 1u);
  EXPECT_EQ(nodes[1].begin, 2u);
  EXPECT_EQ(nodes[1].end, 602u);
  EXPECT_EQ(nodes[1].dynamic_ops, 600u);

  const auto cold = make_trace({1, 2, 3});
  EXPECT_EQ(partition_program(cold, detect_kernels(cold)).size(), 1u);

  std::vector<std::uint32_t> first;
  repeat(first, {7, 8}, 200);
  first.push_back(9);
  const auto kf = make_trace(first);
  const auto nf = partition_program(kf, detect_kernels(kf));
  ASSERT_EQ(nf.size(), 2u);
  EXPECT_TRUE(nf[0].kernel.has_value());
}

TEST(Partition, LiveVariables) {
  TraceMeta m;
  for (const char* v : {"a", "b", "tmp", "out", "dead"}) m.variables[v] = {v, 4, 1, AllocKind::static_alloc, ""};
  m.blocks[1] = {1, "main", {{"store", 1}}, {}, {"a", "dead"}};
  m.blocks[2] = {2, "k", {{"fadd", 1}}, {"a"}, {"tmp"}};
  m.blocks[3] = {3, "k", {{"fmul", 1}}, {"tmp"}, {"b"}};
  m.blocks[4] = {4, "main", {{"load", 1}}, {"b"}, {"out", "dead"}};
  std::vector<std::uint32_t> seq{1};
  repeat(seq, {2, 3}, 200);
  seq.push_back(4);
  BlockTrace t{seq, m};
  const auto nodes = partition_program(t, detect_kernels(t));
  ASSERT_EQ(nodes.size(), 3u);
  // dead is overwritten by node 2 before anyone reads it
  EXPECT_EQ(nodes[0].live_out, (std::vector<std::string>{"a"}));
  EXPECT_EQ(nodes[1].live_in, (std::vector<std::string>{"a"}));
  // tmp is never rewritten, so it is kept as a possible program output
  EXPECT_EQ(nodes[1].live_out, (std::vector<std::string>{"tmp", "b"}));
  EXPECT_EQ(nodes[1].arguments, (std::vector<std::string>{"a", "tmp", "b"}));
  EXPECT_EQ(nodes[2].arguments, (std::vector<std::string>{"b", "out", "dead"}));
}

TEST(Memory, SizeExpressions) {
  EXPECT_EQ(eval_size_expression("512*8"), 4096u);
  EXPECT_EQ(eval_size_expression(" 7 "), 7u);
  EXPECT_EQ(eval_size_expression("2 * 3 * 4"), 24u);
  EXPECT_FALSE(eval_size_expression("n*8"));
  EXPECT_FALSE(eval_size_expression(""));
  EXPECT_FALSE(eval_size_expression("8*"));
  EXPECT_FALSE(eval_size_expression("8+1"));
  EXPECT_FALSE(eval_size_expression("4294967296*4294967296"));
}

TEST(Memory, Inference) {
  TraceMeta m;
  m.variables["i"] = {"i", 4, 1, AllocKind::static_alloc, ""};
  m.variables["arr"] = {"arr", 8, 64, AllocKind::static_alloc, ""};
  m.variables["heap"] = {"heap", 0, 0, AllocKind::dynamic_alloc, "512*8"};
  m.variables["dyn"] = {"dyn", 0, 0, AllocKind::dynamic_alloc, "n*8"};
  const auto r = infer_memory(m);
  EXPECT_EQ(r.variables.at("i"), (VariableSpec{"i", 4, false, 0, {}}));
  EXPECT_EQ(r.variables.at("arr"), (VariableSpec{"arr", 8, true, 512, {}}));
  EXPECT_EQ(r.variables.at("heap"), (VariableSpec{"heap", 8, true, 4096, {}}));
  EXPECT_FALSE(r.variables.count("dyn"));
  EXPECT_EQ(r.unresolved.at("dyn"), "n*8");
}

TEST(Emit, PlantedFourNodeChain) {
  TraceMeta m;
  m.variables["x"] = {"x", 8, 256, AllocKind::static_alloc, ""};
  m.variables["y"] = {"y", 0, 0, AllocKind::dynamic_alloc, "256*8"};
  m.variables["scratch"] = {"scratch", 0, 0, AllocKind::dynamic_alloc, "len*8"};
  m.blocks[1] = {1, "main", {{"store", 2}}, {}, {"x"}};
  m.blocks[2] = {2, "k1", {{"fmul", 2}}, {"x"}, {"y"}};
  m.blocks[3] = {3, "main", {{"br", 1}}, {}, {}};
  m.blocks[4] = {4, "k2", {{"fadd", 1}}, {"y"}, {"x"}};
  std::vector<std::uint32_t> seq{1};
  repeat(seq, {2}, 300);
  seq.push_back(3);
  repeat(seq, {4}, 300);
  const auto x = extract({seq, m}, "planted");
  const auto& spec = x.app.spec;
  ASSERT_EQ(spec.dag.size(), 4u);
  EXPECT_TRUE(validate_dag(spec).ok());
  EXPECT_EQ(spec.dag.at("node1").predecessors, (std::vector<std::string>{"node0"}));
  EXPECT_EQ(spec.dag.at("node2").successors, (std::vector<std::string>{"node3"}));
  EXPECT_EQ(spec.dag.at("node1").platforms[0].run_func, "planted_node1");
  EXPECT_EQ(spec.dag.at("node1").platforms[0].est_exec_time, Nanos(600));
  EXPECT_EQ(x.app.fingerprints.size(), 2u);
  EXPECT_FALSE(x.app.fingerprints.count("node0"));
  EXPECT_EQ(parse_application(emit_application(spec)), spec);
  // scratch is unresolved but unused
  EXPECT_EQ(x.memory.unresolved.size(), 1u);
  EXPECT_FALSE(spec.variables.count("scratch"));

  m.blocks[3].writes = {"scratch"};
  EXPECT_THROW(extract({seq, m}, "planted"), LookupError);
}

TEST(Emit, AllColdIsOneNode) {
  const auto x = extract(make_trace({1, 2, 3, 1}), "cold");
  EXPECT_EQ(x.app.spec.dag.size(), 1u);
  EXPECT_TRUE(validate_dag(x.app.spec).ok());
  EXPECT_THROW(extract(make_trace({}), "empty"), ParseError);
}

TEST(Emit, EmittedChainRunsSerially) {
  const auto planted = plant_trace(11);
  const auto x = extract(planted.trace, "chain");
  const KernelRegistry registry;
  EngineOptions o;
  o.mode = ClockMode::virtual_clock;
  o.policy_name = "frfs";
  const auto r = run(testing::random_platform(3, 0, false), {{"chain", x.app.spec}},
                     generate_validation({{"chain", 1}}), schedule_frfs, registry, o);
  ASSERT_TRUE(r.ok());
  std::map<std::string, std::pair<Nanos, Nanos>> span;
  for (const auto& e : r.trace.events) {
    if (e.kind == EventKind::task_start) span[e.node].first = e.t;
    if (e.kind == EventKind::task_end) span[e.node].second = e.t;
  }
  for (std::size_t k = 1; k < x.nodes.size(); ++k)
    EXPECT_GE(span.at("node" + std::to_string(k)).first, span.at("node" + std::to_string(k - 1)).second);
}

TEST(Recognition, PlantedDftMatchesBuiltin) {
  PlantOptions opt;
  opt.plant_dft = true;
  const auto planted = plant_trace(21, opt);
  ASSERT_TRUE(planted.dft_kernel);
  const auto x = extract(planted.trace, "dftapp");
  const KernelRegistry registry;
  const auto dft_fp = *registry.builtin("dft_naive")->fingerprint;
  ASSERT_EQ(x.kernels.size(), planted.kernels.size());
  EXPECT_EQ(x.kernels[*planted.dft_kernel].fingerprint, dft_fp);
  EXPECT_NE(dft_fp, *registry.builtin("cmul")->fingerprint);

  const auto sub = substitute_optimized(x.app.spec, x.app.fingerprints, default_recognition_table());
  ASSERT_FALSE(sub.hits.empty());
  for (const auto& name : sub.hits) {
    const auto& p = sub.spec.dag.at(name).platforms;
    ASSERT_EQ(p.size(), 2u);
    EXPECT_EQ(p[0].platform_name, "cpu");
    EXPECT_EQ(p[0].run_func, "fft_radix2");
    EXPECT_EQ(p[1].platform_name, "fft");
    EXPECT_EQ(p[0].shared_object, "builtin");
  }
  EXPECT_TRUE(validate_dag(sub.spec).ok());

  const auto none = substitute_optimized(x.app.spec, x.app.fingerprints, RecognitionTable{});
  EXPECT_EQ(none.spec, x.app.spec);
  EXPECT_TRUE(none.hits.empty());
}

TEST(Recognition, TableParsing) {
  const KernelRegistry registry;
  char hex[32];
  std::snprintf(hex, sizeof hex, "0x%llx", static_cast<unsigned long long>(*registry.builtin("cmul")->fingerprint));
  const auto t = parse_recognition_table(std::string(R"({"policy":"append","entries":[
      {"match_builtin":"dft_naive","platforms":[{"name":"fft","runfunc":"accel_fft","shared_object":"fft_accel.so"}]},
      {"fingerprint":")") + hex + R"(","platforms":[{"name":"cpu","runfunc":"cmul","est_exec_time":500}]}]})");
  EXPECT_EQ(t.policy, RecognitionTable::Policy::append);
  ASSERT_EQ(t.entries.size(), 2u);
  const auto& cm = t.entries.at(*registry.builtin("cmul")->fingerprint);
  EXPECT_EQ(cm[0].shared_object, "builtin");
  EXPECT_EQ(cm[0].est_exec_time, Nanos(500));
  EXPECT_EQ(t.entries.at(*registry.builtin("dft_naive")->fingerprint)[0].shared_object, "fft_accel.so");

  EXPECT_THROW(parse_recognition_table(R"({"entries":[{"platforms":[{"name":"cpu","runfunc":"x"}]}]})"), ParseError);
  EXPECT_THROW(parse_recognition_table(R"({"entries":[{"fingerprint":"zz","platforms":[{"name":"cpu","runfunc":"x"}]}]})"),
               ParseError);
  EXPECT_THROW(parse_recognition_table(R"({"entries":[{"match_builtin":"nope","platforms":[{"name":"cpu","runfunc":"x"}]}]})"),
               LookupError);
  EXPECT_THROW(parse_recognition_table(R"({"policy":"merge","entries":[]})"), ParseError);
}

TEST(Recognition, AppendKeepsOtherPlatforms) {
  ApplicationSpec spec;
  spec.app_name = "a";
  spec.shared_object = "a.so";
  spec.dag["N"] = {"N", {}, {}, {}, {{"cpu", "slow", std::nullopt, 10_us}, {"dsp", "slow_dsp", std::nullopt, 5_us}}, {}};
  RecognitionTable t;
  t.policy = RecognitionTable::Policy::append;
  t.entries[42] = {{"cpu", "fast", std::string("builtin"), std::nullopt}, {"fft", "fast", std::string("builtin"), std::nullopt}};
  const auto r = substitute_optimized(spec, {{"N", 42}}, t);
  const auto& p = r.spec.dag.at("N").platforms;
  ASSERT_EQ(p.size(), 3u);
  EXPECT_EQ(p[0].platform_name, "dsp");
  EXPECT_EQ(p[1].run_func, "fast");
  EXPECT_EQ(p[1].est_exec_time, 10_us);
  EXPECT_FALSE(p[2].est_exec_time);
  EXPECT_EQ(r.hits, (std::vector<std::string>{"N"}));
  EXPECT_TRUE(substitute_optimized(spec, {{"N", 41}}, t).hits.empty());
}

TEST(Recognition, SubstitutedRangeDetectionKeepsOutputs) {
  const auto naive = fixtures::range_detection_naive(256, 10);
  const KernelRegistry registry;
  const auto fps = binding_fingerprints(naive, registry);
  const auto sub = substitute_optimized(naive, fps, default_recognition_table());
  EXPECT_EQ(sub.hits, (std::vector<std::string>{"FFT_0", "FFT_1", "IFFT"}));
  // wall clock so both variants execute their kernels
  EngineOptions o;
  o.mode = ClockMode::wallclock;
  o.policy_name = "frfs";
  const auto pes = testing::random_platform(1, 0, false);
  const auto a = run(pes, {{naive.app_name, naive}}, generate_validation({{naive.app_name, 1}}), schedule_frfs,
                     registry, o);
  const auto b = run(pes, {{naive.app_name, sub.spec}}, generate_validation({{naive.app_name, 1}}), schedule_frfs,
                     registry, o);
  ASSERT_TRUE(a.ok() && b.ok());
  EXPECT_EQ(a.instances[0]->read_scalar<std::int32_t>("lag"), 10);
  EXPECT_EQ(b.instances[0]->read_scalar<std::int32_t>("lag"), 10);
  const float pa = a.instances[0]->read_scalar<float>("max_corr"), pb = b.instances[0]->read_scalar<float>("max_corr");
  EXPECT_LE(std::abs(pa - pb), 1e-6 * std::abs(pa));
}

TEST(Planted, RecoveredExactly) {
  for (std::uint64_t seed = 100; seed < 110; ++seed) {
    const auto planted = plant_trace(seed);
    const auto x = extract(planted.trace, "p" + std::to_string(seed));
    EXPECT_EQ(groups(x.kernels), planted.kernels) << seed;
    std::vector<std::optional<std::size_t>> shape;
    for (const auto& n : x.nodes) shape.push_back(n.kernel);
    EXPECT_EQ(shape, planted.segments) << seed;
    EXPECT_TRUE(validate_dag(x.app.spec).ok()) << seed;
  }
}

}  // namespace
}  // namespace emu::extract
