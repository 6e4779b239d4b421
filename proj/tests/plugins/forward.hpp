#pragma once

// Test plugins forward to the builtin kernels so their outputs can be
// compared with the builtin-backed application.

#include "emu/kernels.hpp"

namespace emu::testplugin {

inline int forward(const char* builtin, std::size_t argc, const emu_arg_view* argv) {
  static const KernelRegistry registry;
  auto handle = registry.builtin(builtin);
  if (!handle) return EMU_STATUS_FAILED;
  return handle->fn(argc, argv);
}

}  // namespace emu::testplugin

#define EMU_FORWARD(symbol, builtin)                                      \
  extern "C" int symbol(std::size_t argc, const emu_arg_view* argv) {     \
    return emu::testplugin::forward(builtin, argc, argv);                 \
  }
