/*
 * Kernel plugin ABI.
 *
 * A plugin is a shared library exporting one C symbol per `runfunc` named in
 * an application document. Each symbol has the signature
 *
 *     int fn(size_t argc, const emu_arg_view* argv);
 *
 * argv[i] is a view of the i-th entry of the node's "arguments" list: the
 * variable's slot for non-pointer variables, or its heap buffer for pointer
 * variables. Kernels may only touch the bytes inside these views. The return
 * value is one of the EMU_STATUS_* codes; any other nonzero value is treated
 * as a generic failure.
 */
#ifndef EMU_KERNEL_ABI_H
#define EMU_KERNEL_ABI_H

#include <stddef.h>

#ifdef __cplusplus
extern "C" {
#endif

typedef struct emu_arg_view {
  void* data;
  size_t size;
} emu_arg_view;

typedef int (*emu_kernel_fn)(size_t argc, const emu_arg_view* argv);

enum {
  EMU_STATUS_OK = 0,
  EMU_STATUS_ARITY = 1,
  EMU_STATUS_BAD_ARGUMENT = 2,
  EMU_STATUS_FAILED = 3
};

#ifdef __cplusplus
}
#endif

#endif /* EMU_KERNEL_ABI_H */
