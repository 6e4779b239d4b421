#include <gtest/gtest.h>

#include <cstring>
#include <set>

#include "emu/platform.hpp"

namespace emu {
namespace {

TEST(Platform, ParseEmitRoundTrip) {
  const char* text = R"({"name":"mini","manager_core":0,"pes":[
    {"type":"cpu","kind":"core","count":2,"pace":true},
    {"type":"fft","kind":"accelerator","count":1,
     "accel":{"fixed_latency_ns":1000,"bytes_per_sec":1000000000,
              "process_time":{"fft_radix2":5000,"ifft":{"base_ns":4000,"ns_per_byte":0.5}},
              "local_mem_bytes":65536}}]})";
  const auto cfg = parse_platform(text);
  ASSERT_EQ(cfg.groups.size(), 2u);
  EXPECT_EQ(cfg.groups[1].accel->process_time.at("ifft").ns_per_byte, 0.5);
  EXPECT_EQ(parse_platform(emit_platform(cfg)).groups.size(), 2u);
  EXPECT_EQ(emit_platform(parse_platform(emit_platform(cfg))), emit_platform(cfg));

  const auto pes = build_pes(cfg);
  ASSERT_EQ(pes.size(), 3u);
  EXPECT_EQ(pes[0].name, "cpu0");
  EXPECT_EQ(pes[1].name, "cpu1");
  EXPECT_EQ(pes[2].name, "fft0");
  EXPECT_EQ(pes[2].pe_id, 2);
  EXPECT_TRUE(pes[0].pace);

  EXPECT_THROW(parse_platform(R"({"name":"x","pes":[{"type":"fft","kind":"accelerator","count":1}]})"), ParseError);
  EXPECT_THROW(parse_platform(R"({"name":"x","pes":[{"type":"cpu","kind":"core","count":0}]})"), ParseError);
  EXPECT_THROW(parse_platform(R"({"name":"x","pes":[{"type":"cpu","kind":"gpu","count":1}]})"), ParseError);
  EXPECT_THROW(parse_platform(R"({"name":"x","pes":[{"type":"cpu","count":1,"speed":2}]})"), ParseError);
}

TEST(Platform, Presets) {
  const auto z = build_pes(platform_preset("zcu102-like"));
  ASSERT_EQ(z.size(), 5u);
  EXPECT_EQ(z[3].pe_type, "fft");
  // 128-point transform: 1 KiB in and out, 5 us processing
  const auto& m = *z[3].accel;
  const Nanos accel = transfer_time(1024, m) + *m.process_time_for("fft_radix2", 2052) + transfer_time(1024, m);
  EXPECT_GT(accel, 30_us);

  const auto small = build_pes(platform_preset("zcu102-like,cpu=1,fft=1"));
  EXPECT_EQ(small.size(), 2u);
  EXPECT_EQ(build_pes(platform_preset("zcu102-like,cpu=2,fft=0")).size(), 2u);

  const auto o = build_pes(platform_preset("odroid-like"));
  ASSERT_EQ(o.size(), 7u);
  EXPECT_EQ(o[0].name, "big0");
  EXPECT_EQ(o[4].name, "little0");
  EXPECT_EQ(o[4].pe_type, "cpu");
  EXPECT_DOUBLE_EQ(o[4].cost_scale, 1.8);
  EXPECT_DOUBLE_EQ(build_pes(platform_preset("odroid-like,ratio=2.5"))[6].cost_scale, 2.5);

  EXPECT_THROW(platform_preset("nonsense"), LookupError);
  EXPECT_THROW(platform_preset("zcu102-like,gpu=1"), ParseError);
  EXPECT_THROW(platform_preset("zcu102-like,cpu=x"), ParseError);
  EXPECT_THROW(build_pes(platform_preset("zcu102-like,cpu=0,fft=0")), EngineError);
}

TEST(Platform, PlacementDistinctCores) {
  const auto pes = build_pes(platform_preset("zcu102-like"));
  const auto p = place_workers(pes, 0, 8);
  EXPECT_TRUE(p.warnings.empty());
  std::set<int> cores(p.pe_core.begin(), p.pe_core.end());
  EXPECT_EQ(cores.size(), 5u);
  EXPECT_FALSE(cores.contains(0));
  // cpu workers first
  EXPECT_EQ(p.pe_core[0], 1);
}

TEST(Platform, PlacementOversubscribed) {
  const auto pes = build_pes(platform_preset("zcu102-like"));
  const auto p = place_workers(pes, 0, 3);
  EXPECT_FALSE(p.warnings.empty());
  EXPECT_NE(p.pe_core[0], p.pe_core[1]);
  for (int c : p.pe_core) EXPECT_TRUE(c == 1 || c == 2);

  const auto single = place_workers(pes, 0, 1);
  for (int c : single.pe_core) EXPECT_EQ(c, 0);
  EXPECT_FALSE(single.warnings.empty());

  const auto bad = place_workers(pes, 9, 4);
  EXPECT_EQ(bad.manager_core, 0);
  EXPECT_FALSE(bad.warnings.empty());
}

TEST(Handler, LegalSequenceAndObserver) {
  std::vector<Transition> seen;
  ResourceHandler h(3, [&](const Transition& t) { seen.push_back(t); });
  EXPECT_EQ(h.status(), PEStatus::idle);
  EXPECT_EQ(h.running(), nullptr);
  EXPECT_FALSE(h.take_completion());
  DispatchedTask task;
  task.node = "A";
  h.dispatch(task);
  EXPECT_EQ(h.status(), PEStatus::run);
  ASSERT_NE(h.running(), nullptr);
  EXPECT_EQ(h.running()->node, "A");
  EXPECT_THROW(h.dispatch(task), std::logic_error);
  CompletionRecord rec;
  rec.end = Nanos(5);
  h.complete(rec);
  EXPECT_THROW(h.complete(rec), std::logic_error);
  auto done = h.take_completion();
  ASSERT_TRUE(done);
  EXPECT_EQ(done->first.node, "A");
  EXPECT_EQ(done->second.end, Nanos(5));
  EXPECT_EQ(h.status(), PEStatus::idle);

  ASSERT_EQ(seen.size(), 3u);
  EXPECT_EQ(seen[0].actor, Actor::manager);
  EXPECT_EQ(seen[1].from, PEStatus::run);
  EXPECT_EQ(seen[1].actor, Actor::worker);
  EXPECT_EQ(seen[2].to, PEStatus::idle);
  EXPECT_EQ(seen[2].pe_id, 3);
}

TEST(Handler, CompleteFromIdleThrows) {
  ResourceHandler h(0);
  EXPECT_THROW(h.complete({}), std::logic_error);
}

TEST(Handler, WaitRunningWakesOnDispatch) {
  ResourceHandler h(0);
  EXPECT_EQ(h.wait_running(1_ms), nullptr);
  std::thread t([&] {
    std::this_thread::sleep_for(std::chrono::milliseconds(2));
    h.dispatch({});
  });
  const auto t0 = std::chrono::steady_clock::now();
  EXPECT_NE(h.wait_running(5'000_ms), nullptr);
  EXPECT_LT(std::chrono::steady_clock::now() - t0, std::chrono::seconds(2));
  t.join();
}

struct TaskFixture {
  KernelRegistry registry;
  KernelHandle handle = *registry.builtin("fft_radix2");
  std::uint32_t n = 128;
  std::vector<std::uint8_t> in = std::vector<std::uint8_t>(1024, 0), out = std::vector<std::uint8_t>(1024, 0);

  DispatchedTask task() {
    DispatchedTask t;
    t.node = "FFT";
    t.kernel = &handle;
    t.args = {{&n, 4}, {in.data(), in.size()}, {out.data(), out.size()}};
    t.is_ptr = {false, true, true};
    t.reads = {true, true, false};
    t.writes = {false, false, true};
    return t;
  }
};

TEST(Worker, TransferBytesSplitByDirection) {
  TaskFixture f;
  auto t = f.task();
  EXPECT_EQ(t.total_bytes(), 2052u);
  EXPECT_EQ(t.in_bytes(), 1024u);
  EXPECT_EQ(t.out_bytes(), 1024u);
}

TEST(Worker, CorePacesToTarget) {
  TaskFixture f;
  ProcessorElement pe;
  pe.pace = true;
  auto t = f.task();
  t.pace_target = 2_ms;
  WallClock clock;
  const auto rec = run_core_task(pe, t, clock);
  EXPECT_TRUE(rec.ok());
  EXPECT_GE(rec.end - rec.start, 2_ms);
}

TEST(Worker, AcceleratorModelsTransfersAndCopiesOutputsOnly) {
  TaskFixture f;
  f.in[0] = 0;
  // impulse at sample 0 -> flat spectrum of ones
  const float one = 1.0f;
  std::memcpy(f.in.data(), &one, 4);
  ProcessorElement pe;
  pe.kind = PEKind::accelerator;
  AccelModel m;
  m.fixed_latency = 200_us;
  m.bytes_per_sec = 1'000'000'000;
  m.process_time["fft_radix2"] = {300_us, 0.0};
  m.local_mem_bytes = 4096;
  pe.accel = m;
  auto t = f.task();
  t.process_time = 300_us;
  std::vector<std::uint8_t> local;
  WallClock clock;
  const auto before_in = f.in;
  const auto rec = run_accelerator_task(pe, t, local, clock);
  ASSERT_TRUE(rec.ok()) << rec.error;
  EXPECT_GE(rec.transfer_in, transfer_time(1024, m));
  EXPECT_GE(rec.transfer_out, transfer_time(1024, m));
  EXPECT_GE(rec.end - rec.start, 2 * transfer_time(1024, m) + 300_us);
  EXPECT_EQ(f.in, before_in);
  float re = 0;
  std::memcpy(&re, f.out.data() + 8 * 77, 4);
  EXPECT_FLOAT_EQ(re, 1.0f);

  pe.accel->local_mem_bytes = 1000;
  const auto too_big = run_accelerator_task(pe, t, local, clock);
  EXPECT_FALSE(too_big.ok());
  EXPECT_NE(too_big.error.find("local memory"), std::string::npos);
}

TEST(Worker, PoolRunsDispatchedTasks) {
  TaskFixture f;
  std::vector<ProcessorElement> pes(2);
  pes[1].pe_id = 1;
  std::vector<Transition> seen;
  std::mutex m;
  auto observer = [&](const Transition& t) {
    std::lock_guard lock(m);
    seen.push_back(t);
  };
  ResourceHandler h0(0, observer), h1(1, observer);
  std::vector<ResourceHandler*> handlers{&h0, &h1};
  Placement placement = place_workers(pes, 0, 1);
  {
    WorkerPool pool(pes, handlers, placement, WallClock{});
    for (int round = 0; round < 20; ++round) {
      for (auto* h : handlers) h->dispatch(f.task());
      for (auto* h : handlers) {
        while (!h->take_completion()) std::this_thread::yield();
      }
    }
  }
  std::lock_guard lock(m);
  EXPECT_EQ(seen.size(), 20u * 2 * 3);
  for (const auto& t : seen) {
    const bool legal = (t.from == PEStatus::idle && t.to == PEStatus::run && t.actor == Actor::manager) ||
                       (t.from == PEStatus::run && t.to == PEStatus::complete && t.actor == Actor::worker) ||
                       (t.from == PEStatus::complete && t.to == PEStatus::idle && t.actor == Actor::manager);
    EXPECT_TRUE(legal);
  }
}

}  // namespace
}  // namespace emu
