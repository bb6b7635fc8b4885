// AVX2+FMA kernel variant. Compiled with -mavx2 -mfma; only ever called
// after the runtime CPU check in kernels_dispatch.cpp.
#include "rbclab/kernels/kernels.hpp"

#ifdef RBCLAB_HAVE_AVX2

#include <immintrin.h>

#include "kernels_impl.hpp"

namespace rbclab::kernels {
namespace {

struct Avx2 {
  static constexpr std::size_t width = 4;
  using reg = __m256d;
  static reg load(const double* p) { return _mm256_loadu_pd(p); }
  static void store(double* p, reg r) { _mm256_storeu_pd(p, r); }
  static reg broadcast(double s) { return _mm256_set1_pd(s); }
  static reg add(reg a, reg b) { return _mm256_add_pd(a, b); }
  static reg sub(reg a, reg b) { return _mm256_sub_pd(a, b); }
  static reg mul(reg a, reg b) { return _mm256_mul_pd(a, b); }
  static reg fma(reg a, reg b, reg c) { return _mm256_fmadd_pd(a, b, c); }
  static void lanes(reg a, double out[4]) { _mm256_storeu_pd(out, a); }
};

}  // namespace

const Ops* avx2_ops() {
  static const Ops table = [] {
    Ops t{};
    RBCLAB_KERNELS_FILL_TABLE(Avx2, t, "avx2");
    return t;
  }();
  return &table;
}

}  // namespace rbclab::kernels

#else

namespace rbclab::kernels {
const Ops* avx2_ops() { return nullptr; }
}  // namespace rbclab::kernels

#endif
