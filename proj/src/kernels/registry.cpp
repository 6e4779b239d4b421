#include <dlfcn.h>

#include <mutex>
#include <sstream>

#include "kernels/builtin_table.hpp"

namespace emu {

std::string canonical_summary(const OpSummary& ops) {
  std::string out;
  for (const auto& [op, count] : ops) {
    if (count == 0) continue;
    if (!out.empty()) out += ';';
    out += op;
    out += ':';
    out += std::to_string(count);
  }
  return out;
}

std::uint64_t fingerprint(const OpSummary& ops) { return fnv1a64(canonical_summary(ops)); }

OpSummary& operator+=(OpSummary& lhs, const OpSummary& rhs) {
  for (const auto& [op, count] : rhs) lhs[op] += count;
  return lhs;
}

KernelStatus status_from_code(int code) {
  switch (code) {
    case EMU_STATUS_OK:
      return KernelStatus::ok;
    case EMU_STATUS_ARITY:
      return KernelStatus::arity;
    case EMU_STATUS_BAD_ARGUMENT:
      return KernelStatus::bad_argument;
    default:
      return KernelStatus::failed;
  }
}

std::string_view to_string(KernelStatus status) {
  switch (status) {
    case KernelStatus::ok:
      return "ok";
    case KernelStatus::arity:
      return "arity mismatch";
    case KernelStatus::bad_argument:
      return "bad argument";
    case KernelStatus::failed:
      return "failed";
  }
  return "failed";
}

KernelStatus invoke(const KernelHandle& handle, KernelArgs args) {
  if (!handle.resolved()) throw LookupError("kernel " + handle.name + " is not resolved");
  if (handle.arity && *handle.arity != args.size()) return KernelStatus::arity;
  return status_from_code(handle.fn(args.size(), args.data()));
}

namespace {

KernelHandle make_builtin_handle(const detail::BuiltinKernel& k) {
  KernelHandle h;
  h.name = std::string(k.name);
  h.provider = {KernelProvider::Kind::builtin, std::string(kBuiltinProvider)};
  h.fn = k.fn;
  h.fingerprint = fingerprint(k.summary);
  h.summary = k.summary;
  h.arity = k.arity;
  h.output_args = k.outputs;
  return h;
}

}  // namespace

struct KernelRegistry::Plugins {
  std::vector<std::filesystem::path> dirs;
  std::mutex mutex;
  std::map<std::string, void*, std::less<>> loaded;

  ~Plugins() {
    for (auto& [id, handle] : loaded) dlclose(handle);
  }

  void* open(const std::string& id) {
    std::lock_guard lock(mutex);
    if (auto it = loaded.find(id); it != loaded.end()) return it->second;

    std::vector<std::filesystem::path> candidates;
    const std::filesystem::path as_path(id);
    if (as_path.has_parent_path()) candidates.push_back(as_path);
    for (const auto& dir : dirs) candidates.push_back(dir / id);

    std::string last_error = "not found in plugin directories";
    for (const auto& candidate : candidates) {
      std::error_code ec;
      if (!std::filesystem::exists(candidate, ec)) continue;
      dlerror();
      if (void* handle = dlopen(candidate.c_str(), RTLD_NOW | RTLD_LOCAL)) {
        loaded.emplace(id, handle);
        return handle;
      }
      if (const char* err = dlerror()) last_error = err;
    }
    throw LookupError("plugin not loadable: " + id + " (" + last_error + ")");
  }
};

KernelRegistry::KernelRegistry(std::vector<std::filesystem::path> plugin_dirs) : plugins_(std::make_unique<Plugins>()) {
  plugins_->dirs = std::move(plugin_dirs);
}

KernelRegistry::~KernelRegistry() = default;
KernelRegistry::KernelRegistry(KernelRegistry&&) noexcept = default;
KernelRegistry& KernelRegistry::operator=(KernelRegistry&&) noexcept = default;

const std::vector<std::filesystem::path>& KernelRegistry::plugin_dirs() const { return plugins_->dirs; }

std::optional<KernelHandle> KernelRegistry::builtin(std::string_view name) const {
  for (const auto& k : detail::builtin_table())
    if (k.name == name) return make_builtin_handle(k);
  return std::nullopt;
}

std::vector<KernelHandle> KernelRegistry::builtin_suite() const {
  std::vector<KernelHandle> out;
  for (const auto& k : detail::builtin_table()) out.push_back(make_builtin_handle(k));
  return out;
}

KernelHandle KernelRegistry::resolve(std::string_view run_func, const std::optional<std::string>& plugin,
                                     std::string_view default_plugin) const {
  const std::string provider = plugin ? *plugin : std::string(default_plugin);
  if (provider == kBuiltinProvider) {
    if (auto h = builtin(run_func)) return *h;
    throw LookupError("unknown symbol " + std::string(run_func));
  }

  void* lib = plugins_->open(provider);
  const std::string symbol(run_func);
  dlerror();
  void* sym = dlsym(lib, symbol.c_str());
  if (dlerror() != nullptr || sym == nullptr) throw LookupError("unknown symbol " + symbol + " in plugin " + provider);

  KernelHandle h;
  h.name = symbol;
  h.provider = {KernelProvider::Kind::plugin, provider};
  h.fn = reinterpret_cast<emu_kernel_fn>(sym);
  return h;
}

}  // namespace emu
