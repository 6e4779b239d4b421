#include "emu/common.hpp"

#include <atomic>
#include <iostream>

namespace emu {
namespace {

std::atomic<WarningHandler> g_handler{nullptr};

}  // namespace

void set_warning_handler(WarningHandler handler) { g_handler.store(handler); }

void warn(std::string_view message) {
  if (auto handler = g_handler.load()) {
    handler(message);
    return;
  }
  std::cerr << "warning: " << message << '\n';
}

}  // namespace emu
