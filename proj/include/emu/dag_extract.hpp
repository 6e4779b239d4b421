#pragma once

// Block-trace kernel extraction: detect hot block groups by temporal
// affinity, cut the program into a serial chain of kernel / non-kernel
// nodes, infer buffer sizes and emit an application spec. Recognized kernels
// can then be redirected to optimized bindings by fingerprint.

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "emu/app_model.hpp"
#include "emu/kernels.hpp"

namespace emu::extract {

struct BlockMeta {
  std::uint32_t id = 0;
  std::string function;
  OpSummary ops;
  std::vector<std::string> reads;
  std::vector<std::string> writes;

  bool operator==(const BlockMeta&) const = default;
};

enum class AllocKind { static_alloc, dynamic_alloc };

struct VariableMeta {
  std::string name;
  std::uint64_t element_bytes = 0;
  // static allocations
  std::uint64_t count = 1;
  AllocKind alloc = AllocKind::static_alloc;
  // dynamic allocations: size in bytes as written at the allocation site
  std::string size_expr;

  bool operator==(const VariableMeta&) const = default;
};

struct TraceMeta {
  std::map<std::uint32_t, BlockMeta> blocks;
  std::map<std::string, VariableMeta> variables;

  bool operator==(const TraceMeta&) const = default;
};

struct BlockTrace {
  std::vector<std::uint32_t> blocks;
  TraceMeta meta;
};

// ---- file formats ------------------------------------------------------------

/// Binary traces start with this 8-byte magic and hold u32 little-endian ids.
inline constexpr std::string_view kBinaryMagic{"EMUBLK1\0", 8};

/// Accepts the binary form or text with one id per whitespace-separated
/// token; '#' starts a comment in text form.
std::vector<std::uint32_t> parse_block_ids(std::string_view contents);
std::vector<std::uint32_t> read_block_ids(const std::string& path);
std::string encode_block_ids(const std::vector<std::uint32_t>& ids, bool binary);

/// {"blocks":[{"id","function","ops","reads","writes"}],
///  "variables":[{"name","element_bytes","count"|"size","alloc"}]}
TraceMeta parse_meta(std::string_view text);
TraceMeta load_meta(const std::string& path);
std::string emit_meta(const TraceMeta& meta);

/// Throws ParseError when a traced block has no metadata or a block names an
/// unknown variable.
void check_consistent(const BlockTrace& trace);
BlockTrace load_block_trace(const std::string& trace_path, const std::string& meta_path);

// ---- analysis ----------------------------------------------------------------

struct DetectParams {
  std::uint64_t hot_threshold = 128;
  std::size_t window = 32;
  double affinity = 0.9;
};

struct KernelGroup {
  // sorted by id
  std::vector<std::uint32_t> blocks;
  // executions of the member that appears first in the trace
  std::uint64_t count = 0;
  OpSummary ops;
  std::uint64_t fingerprint = 0;
  // static unions of the members' read and write sets, sorted
  std::vector<std::string> live_in;
  std::vector<std::string> live_out;
};

/// Hot blocks (count >= hot_threshold) a and b share a kernel when at least an
/// `affinity` fraction of a's occurrences have b within `window` positions and
/// vice versa; kernels are the transitive closure. Ordered by first
/// appearance.
std::vector<KernelGroup> detect_kernels(const BlockTrace& trace, const DetectParams& params = {});

struct ProgramNode {
  // index into the kernel list, nullopt for cold code
  std::optional<std::size_t> kernel;
  std::size_t begin = 0;  // trace positions [begin, end)
  std::size_t end = 0;
  std::uint64_t dynamic_ops = 0;
  // first-use order
  std::vector<std::string> live_in;
  std::vector<std::string> live_out;
  // live_in and live_out merged, first-use order
  std::vector<std::string> arguments;
};

/// Maximal runs of positions with the same owner (one kernel or cold code).
/// A variable is live-in where it is read before any write inside the node,
/// live-out where the node writes it and a later node reads it or no later
/// node writes it again.
std::vector<ProgramNode> partition_program(const BlockTrace& trace, const std::vector<KernelGroup>& kernels);

/// Literal or product of literals ("512*8"); nullopt otherwise.
std::optional<std::uint64_t> eval_size_expression(std::string_view expr);

struct MemoryInference {
  std::map<std::string, VariableSpec> variables;
  // name -> size expression that could not be evaluated
  std::map<std::string, std::string> unresolved;
};

MemoryInference infer_memory(const TraceMeta& meta);

struct EmitOptions {
  // est_exec_time of a node = its dynamic op count times this
  double ns_per_op = 1.0;
};

struct ExtractedApp {
  ApplicationSpec spec;
  // kernel nodes only
  std::map<std::string, std::uint64_t> fingerprints;
};

/// Nodes node0..nodeK-1 in a serial chain, each bound to cpu/<app>_node<k>.
/// Throws LookupError when a node references an unresolved variable.
ExtractedApp emit_dag(const std::vector<ProgramNode>& nodes, const std::vector<KernelGroup>& kernels,
                      const MemoryInference& memory, const std::string& app_name, const EmitOptions& options = {});

struct Extraction {
  std::vector<KernelGroup> kernels;
  std::vector<ProgramNode> nodes;
  MemoryInference memory;
  ExtractedApp app;
};

Extraction extract(const BlockTrace& trace, const std::string& app_name, const DetectParams& params = {},
                   const EmitOptions& options = {});

// ---- recognition ---------------------------------------------------------------

struct RecognitionTable {
  enum class Policy { replace, append };
  Policy policy = Policy::replace;
  std::map<std::uint64_t, std::vector<PlatformBinding>> entries;
};

/// {"policy":"replace"|"append","entries":[{"fingerprint":"0x..."|"match_builtin":"dft_naive",
///   "platforms":[<application platform entries>]}]}. Entries without a
/// shared_object bind builtins.
RecognitionTable parse_recognition_table(std::string_view text);
RecognitionTable load_recognition_table(const std::string& path);

/// dft_naive -> fft_radix2 and idft_naive -> ifft on cpu and fft.
RecognitionTable default_recognition_table();

struct SubstitutionResult {
  ApplicationSpec spec;
  // node names whose bindings changed
  std::vector<std::string> hits;
};

/// A table binding without est_exec_time takes the estimate of the binding it
/// displaces on the same platform, an upper bound until measured.
SubstitutionResult substitute_optimized(const ApplicationSpec& spec,
                                        const std::map<std::string, std::uint64_t>& fingerprints,
                                        const RecognitionTable& table);

/// Fingerprints of hand-written apps: for each node, the first binding whose
/// kernel is a builtin with a declared summary.
std::map<std::string, std::uint64_t> binding_fingerprints(const ApplicationSpec& spec,
                                                          const KernelRegistry& registry);

// ---- planted traces ------------------------------------------------------------

struct PlantOptions {
  std::size_t min_kernels = 1;
  std::size_t max_kernels = 8;
  std::size_t max_blocks_per_kernel = 6;
  // loop iterations per kernel occurrence, drawn log-uniformly
  std::uint64_t min_iterations = 1280;
  std::uint64_t max_iterations = 128000;
  std::size_t max_cold_blocks = 5;
  // chance that a segment re-runs an earlier kernel
  double reuse_probability = 0.2;
  // chance that a kernel body has a two-way branch
  double branch_probability = 0.3;
  // make one kernel's summed op summary equal dft_naive's
  bool plant_dft = false;
};

struct PlantedTrace {
  BlockTrace trace;
  // member ids of each planted kernel, sorted, in order of first appearance
  std::vector<std::vector<std::uint32_t>> kernels;
  // owner of each node in trace order: kernel index or nullopt for cold code
  std::vector<std::optional<std::size_t>> segments;
  std::optional<std::size_t> dft_kernel;
};

PlantedTrace plant_trace(std::uint64_t seed, const PlantOptions& options = {});

}  // namespace emu::extract
