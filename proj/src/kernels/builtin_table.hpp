#pragma once

#include <cstddef>
#include <span>
#include <string_view>
#include <vector>

#include "emu/kernels.hpp"

namespace emu::detail {

struct BuiltinKernel {
  std::string_view name;
  emu_kernel_fn fn;
  std::size_t arity;
  std::vector<std::size_t> outputs;
  OpSummary summary;
};

const std::vector<BuiltinKernel>& builtin_table();

}  // namespace emu::detail
