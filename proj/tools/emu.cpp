// emu: command-line front end for the emulation runtime.
//
//   emu run --platform zcu102-like --app apps/range_detection.app.json
//       --workload workloads/validation.wl.json --scheduler frfs --mode virtual
//   emu validate apps/*.app.json
//   emu report --trace t.trace.json --export gantt=g.csv,utilization=u.csv
//   emu extract-dag --trace t.blk --meta t.meta.json -o out.app.json
//   emu generate --root .
//
// Exit codes: 0 success, 1 failed instances or validation findings,
// 2 bad input.

#include <CLI11.hpp>
#include <json.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>

#include "emu/dag_extract.hpp"
#include "emu/engine.hpp"
#include "emu/fixtures.hpp"

namespace fs = std::filesystem;
using namespace emu;

namespace {

void write_text(const fs::path& path, std::string_view text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw EngineError("cannot write " + path.string());
  out << text;
}

std::vector<std::pair<ExportKind, std::string>> parse_exports(const std::string& arg) {
  std::vector<std::pair<ExportKind, std::string>> out;
  std::size_t start = 0;
  while (start < arg.size()) {
    const auto comma = arg.find(',', start);
    const auto item = arg.substr(start, comma == std::string::npos ? std::string::npos : comma - start);
    const auto eq = item.find('=');
    if (eq == std::string::npos || eq == 0 || eq + 1 == item.size())
      throw ParseError("--export expects kind=path[,kind=path...], got " + item);
    out.emplace_back(export_kind_from_string(item.substr(0, eq)), item.substr(eq + 1));
    if (comma == std::string::npos) break;
    start = comma + 1;
  }
  return out;
}

// ---- run -----------------------------------------------------------------------

struct RunArgs {
  std::string platform = "zcu102-like";
  std::vector<std::string> apps;
  std::string workload;
  std::string scheduler = "frfs";
  std::string mode = "virtual";
  std::uint64_t seed = 0;
  bool exec_kernels = false;
  std::int64_t overhead_ns = 0;
  std::vector<std::string> plugin_dirs;
  std::string trace;
  std::string report;
};

int cmd_run(const RunArgs& a) {
  std::map<std::string, ApplicationSpec> apps;
  for (const auto& path : a.apps) {
    auto spec = load_application(path);
    const auto v = validate_dag(spec);
    if (!v.ok()) {
      for (const auto& f : v.findings) std::cerr << path << ": " << f << "\n";
      return 2;
    }
    const auto name = spec.app_name;
    if (!apps.emplace(name, std::move(spec)).second) throw ParseError("two --app files define " + name);
  }
  std::set<std::string, std::less<>> names;
  for (const auto& [name, spec] : apps) names.insert(name);
  const auto queue = generate(load_workload(a.workload), names);

  std::vector<fs::path> dirs(a.plugin_dirs.begin(), a.plugin_dirs.end());
  const KernelRegistry registry(dirs);
  const PolicyRegistry policies;
  EngineOptions o;
  o.mode = clock_mode_from_string(a.mode);
  o.seed = a.seed;
  o.policy_name = a.scheduler;
  o.exec_kernels = a.exec_kernels;
  o.virtual_overhead = Nanos(a.overhead_ns);

  const auto result = run(resolve_platform(a.platform), apps, queue, policies.lookup(a.scheduler), registry, o);
  if (!a.trace.empty()) write_trace(result.trace, a.trace);
  if (!a.report.empty()) write_text(a.report, emit_report(result.report));
  for (const auto& e : result.errors) std::cerr << "error: " << e << "\n";
  std::cout << "instances " << queue.size() << ", failed " << result.failed_instances() << ", makespan "
            << result.report.makespan.count() << " ns, overhead mean " << result.report.overhead_mean_ns << " ns\n";
  return result.ok() ? 0 : 1;
}

// ---- validate ------------------------------------------------------------------

int cmd_validate(const std::vector<std::string>& paths) {
  int status = 0;
  for (const auto& path : paths) {
    try {
      const auto v = validate_dag(load_application(path));
      for (const auto& f : v.findings) std::cout << path << ": " << f << "\n";
      if (!v.ok()) status = std::max(status, 1);
      else std::cout << path << ": ok\n";
    } catch (const ParseError& e) {
      std::cout << path << ": " << e.what() << "\n";
      status = 2;
    }
  }
  return status;
}

// ---- report --------------------------------------------------------------------

int cmd_report(const std::string& trace_path, const std::string& exports, const std::string& out) {
  const auto trace = read_trace(trace_path);
  const auto report = emit_report(compute_report(trace));
  if (out.empty())
    std::cout << report;
  else
    write_text(out, report);
  if (!exports.empty())
    for (const auto& [kind, path] : parse_exports(exports)) write_text(path, export_csv(trace, kind));
  return 0;
}

// ---- extract-dag ---------------------------------------------------------------

struct ExtractArgs {
  std::string trace;
  std::string meta;
  extract::DetectParams params;
  std::string recognize;
  std::string app_name = "extracted";
  double ns_per_op = 1.0;
  std::string out;
  std::string report;
};

int cmd_extract(const ExtractArgs& a) {
  const auto trace = extract::load_block_trace(a.trace, a.meta);
  extract::EmitOptions emit;
  emit.ns_per_op = a.ns_per_op;
  auto x = extract::extract(trace, a.app_name, a.params, emit);
  std::vector<std::string> hits;
  if (!a.recognize.empty()) {
    const auto table = a.recognize == "default" ? extract::default_recognition_table()
                                                : extract::load_recognition_table(a.recognize);
    auto sub = extract::substitute_optimized(x.app.spec, x.app.fingerprints, table);
    x.app.spec = std::move(sub.spec);
    hits = std::move(sub.hits);
    for (const auto& h : hits) std::cerr << "recognized " << h << "\n";
  }
  write_text(a.out, emit_application(x.app.spec));

  nlohmann::ordered_json r;
  r["positions"] = trace.blocks.size();
  nlohmann::ordered_json kernels = nlohmann::ordered_json::array();
  for (const auto& k : x.kernels) {
    char fp[24];
    std::snprintf(fp, sizeof fp, "0x%016llx", static_cast<unsigned long long>(k.fingerprint));
    kernels.push_back({{"blocks", k.blocks}, {"count", k.count}, {"fingerprint", fp}, {"live_in", k.live_in},
                       {"live_out", k.live_out}});
  }
  r["kernels"] = std::move(kernels);
  r["nodes"] = x.nodes.size();
  nlohmann::ordered_json unresolved = nlohmann::ordered_json::object();
  for (const auto& [name, expr] : x.memory.unresolved) unresolved[name] = expr;
  r["unresolved"] = std::move(unresolved);
  r["substituted"] = hits;
  const auto text = r.dump(2) + "\n";
  if (a.report.empty())
    std::cout << text;
  else
    write_text(a.report, text);
  return 0;
}

// ---- generate ------------------------------------------------------------------

// Injection counts per 100 ms frame: pulse_doppler, range_detection, wifi_tx, wifi_rx.
constexpr std::array<std::array<std::uint64_t, 4>, 5> kRateRows{{
    {8, 123, 20, 20}, {10, 164, 27, 27}, {15, 245, 41, 41}, {18, 329, 55, 55}, {32, 495, 82, 83}}};
constexpr std::array<const char*, 4> kRateApps{"pulse_doppler", "range_detection", "wifi_tx", "wifi_rx"};

int cmd_generate(const fs::path& root) {
  auto apps = fixtures::shipped_apps();
  for (const auto& [name, spec] : apps) write_text(root / "apps" / (name + ".app.json"), emit_application(spec));
  write_text(root / "apps" / "range_detection_naive.app.json",
             emit_application(fixtures::range_detection_naive()));
  write_text(root / "apps" / "fft_heavy.app.json", emit_application(fixtures::fft_heavy()));

  for (const char* preset : {"zcu102-like", "odroid-like"})
    write_text(root / "platforms" / (std::string(preset) + ".plat.json"), emit_platform(platform_preset(preset)));

  const Nanos frame = 100_ms;
  for (std::size_t row = 0; row < kRateRows.size(); ++row) {
    WorkloadSpec w;
    w.mode = WorkloadMode::performance;
    w.t_end = frame;
    w.seed = 1;
    for (std::size_t i = 0; i < kRateApps.size(); ++i)
      w.injections.push_back({kRateApps[i], Nanos(frame.count() / static_cast<std::int64_t>(kRateRows[row][i])), 1.0});
    write_text(root / "workloads" / ("rate" + std::to_string(row + 1) + ".wl.json"), emit_workload(w));
  }
  WorkloadSpec v;
  v.validation_counts = {{"pulse_doppler", 1}, {"range_detection", 1}, {"wifi_rx", 1}, {"wifi_tx", 1}};
  write_text(root / "workloads" / "validation.wl.json", emit_workload(v));
  WorkloadSpec rd;
  rd.validation_counts = {{"range_detection", 3}};
  write_text(root / "workloads" / "range_detection_x3.wl.json", emit_workload(rd));

  extract::PlantOptions plant;
  plant.plant_dft = true;
  plant.max_kernels = 4;
  const auto planted = extract::plant_trace(7, plant);
  write_text(root / "data" / "planted.blk", extract::encode_block_ids(planted.trace.blocks, true));
  write_text(root / "data" / "planted.meta.json", extract::emit_meta(planted.trace.meta));
  nlohmann::ordered_json table;
  table["policy"] = "replace";
  table["entries"] = {
      {{"match_builtin", "dft_naive"},
       {"platforms", {{{"name", "cpu"}, {"runfunc", "fft_radix2"}}, {{"name", "fft"}, {"runfunc", "fft_radix2"}}}}},
      {{"match_builtin", "idft_naive"},
       {"platforms", {{{"name", "cpu"}, {"runfunc", "ifft"}}, {{"name", "fft"}, {"runfunc", "ifft"}}}}}};
  write_text(root / "data" / "recognize.json", table.dump(2) + "\n");

  // sample trace for the plotting scripts: one of each app, virtual clock
  const KernelRegistry registry;
  EngineOptions o;
  o.mode = ClockMode::virtual_clock;
  o.policy_name = "eft";
  o.virtual_overhead = 2_us;
  const auto result = run(platform_preset("zcu102-like"), apps, generate(v), schedule_eft, registry, o);
  write_trace(result.trace, (root / "data" / "sample.trace.json").string());
  for (const char* kind : {"gantt", "utilization", "overhead", "latency"})
    write_text(root / "data" / ("sample_" + std::string(kind) + ".csv"),
               export_csv(result.trace, export_kind_from_string(kind)));
  std::cout << "wrote apps/, platforms/, workloads/, data/ under " << root.string() << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Heterogeneous SoC emulation runtime"};
  app.require_subcommand(1);

  RunArgs run_args;
  auto* run_cmd = app.add_subcommand("run", "Emulate a workload on a platform");
  run_cmd->add_option("--platform", run_args.platform, "Platform file or preset (zcu102-like[,cpu=N,fft=M])");
  run_cmd->add_option("--app", run_args.apps, "Application JSON files")->required()->check(CLI::ExistingFile);
  run_cmd->add_option("--workload", run_args.workload, "Workload JSON file")->required()->check(CLI::ExistingFile);
  run_cmd->add_option("--scheduler", run_args.scheduler, "frfs, met, eft or random");
  run_cmd->add_option("--mode", run_args.mode, "wallclock or virtual");
  run_cmd->add_option("--seed", run_args.seed, "Seed for the random policy");
  run_cmd->add_flag("--exec-kernels", run_args.exec_kernels, "Virtual mode: also execute kernels");
  run_cmd->add_option("--overhead-ns", run_args.overhead_ns, "Virtual mode: cost of each scheduling cycle");
  run_cmd->add_option("--plugin-dir", run_args.plugin_dirs, "Directories searched for kernel shared objects");
  run_cmd->add_option("--trace", run_args.trace, "Write the event trace here");
  run_cmd->add_option("--report", run_args.report, "Write the run report here");

  std::vector<std::string> validate_paths;
  auto* validate_cmd = app.add_subcommand("validate", "Check application files");
  validate_cmd->add_option("apps", validate_paths, "Application JSON files")->required();

  std::string report_trace, report_exports, report_out;
  auto* report_cmd = app.add_subcommand("report", "Summarize a trace and export CSVs");
  report_cmd->add_option("--trace", report_trace, "Trace file")->required()->check(CLI::ExistingFile);
  report_cmd->add_option("--export", report_exports, "kind=path[,kind=path...]; kinds gantt, utilization, overhead, latency");
  report_cmd->add_option("-o,--out", report_out, "Write the report here instead of stdout");

  ExtractArgs ex;
  auto* extract_cmd = app.add_subcommand("extract-dag", "Build an application from a basic-block trace");
  extract_cmd->add_option("--trace", ex.trace, "Block trace (binary or text)")->required()->check(CLI::ExistingFile);
  extract_cmd->add_option("--meta", ex.meta, "Block and variable metadata")->required()->check(CLI::ExistingFile);
  extract_cmd->add_option("--hot", ex.params.hot_threshold, "Minimum executions for a hot block");
  extract_cmd->add_option("--window", ex.params.window, "Co-occurrence window in trace positions");
  extract_cmd->add_option("--affinity", ex.params.affinity, "Fraction of occurrences that must co-occur")
      ->check(CLI::Range(0.0, 1.0));
  extract_cmd->add_option("--recognize", ex.recognize, "Recognition table file, or 'default'");
  extract_cmd->add_option("--app-name", ex.app_name, "AppName of the emitted spec");
  extract_cmd->add_option("--ns-per-op", ex.ns_per_op, "Estimate scale for emitted nodes");
  extract_cmd->add_option("-o,--out", ex.out, "Output application JSON")->required();
  extract_cmd->add_option("--report", ex.report, "Write the extraction report here instead of stdout");

  std::string root = ".";
  auto* gen_cmd = app.add_subcommand("generate", "Write the shipped apps, platforms, workloads and sample data");
  gen_cmd->add_option("--root", root, "Output root directory");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*run_cmd) return cmd_run(run_args);
    if (*validate_cmd) return cmd_validate(validate_paths);
    if (*report_cmd) return cmd_report(report_trace, report_exports, report_out);
    if (*extract_cmd) return cmd_extract(ex);
    if (*gen_cmd) return cmd_generate(root);
  } catch (const std::exception& e) {
    std::cerr << "emu: " << e.what() << "\n";
    return 2;
  }
  return 2;
}
