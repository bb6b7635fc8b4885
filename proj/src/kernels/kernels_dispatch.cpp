#include "rbclab/kernels/kernels.hpp"

#include <atomic>
#include <cstdlib>
#include <cstring>

namespace rbclab::kernels {
namespace {

std::atomic<const Ops*> g_override{nullptr};

const Ops* pick() {
  const char* env = std::getenv("RBCLAB_KERNELS");
  if (env && std::strcmp(env, "scalar") == 0) return &scalar_ops();
#if defined(__x86_64__) || defined(_M_X64)
  if (const Ops* avx2 = avx2_ops(); avx2 && __builtin_cpu_supports("avx2") &&
                                    __builtin_cpu_supports("fma")) {
    return avx2;
  }
#endif
  return &scalar_ops();
}

}  // namespace

const Ops& active() {
  if (const Ops* o = g_override.load(std::memory_order_acquire)) return *o;
  static const Ops* chosen = pick();
  return *chosen;
}

void set_active(const Ops* ops) { g_override.store(ops, std::memory_order_release); }

}  // namespace rbclab::kernels
