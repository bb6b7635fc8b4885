#pragma once

#include <cstddef>

namespace rbclab::kernels {

/// Double-precision arithmetic kernels behind everything hot: tensor
/// elementwise ops, the matmul forms used by dense layers (forward and
/// both backward products), the 3x3 zero-padded convolution, and the
/// solver's derivative GEMMs.
///
/// Two implementations exist: a scalar reference and an AVX2+FMA variant,
/// selected once at runtime. Both are written against the same accumulation
/// contract so their results are bit-identical:
///   - every multiply-add is a fused fma (std::fma / vfmadd),
///   - reductions accumulate into 4 independent lanes over blocks of 4,
///     tail elements go to lanes 0..r-1, and the final combine is
///     (lane0 + lane2) + (lane1 + lane3).
/// Equivalence tests assert exact equality between the paths, so kernel
/// selection can never change a result.
struct Ops {
  // Elementwise, out may alias inputs.
  void (*add)(const double* a, const double* b, double* out, std::size_t n);
  void (*sub)(const double* a, const double* b, double* out, std::size_t n);
  void (*mul)(const double* a, const double* b, double* out, std::size_t n);
  void (*scale)(const double* a, double s, double* out, std::size_t n);
  // y += s * x
  void (*axpy)(double s, const double* x, double* y, std::size_t n);
  // out += a * b (elementwise)
  void (*fmadd)(const double* a, const double* b, double* out, std::size_t n);

  double (*dot)(const double* a, const double* b, std::size_t n);
  double (*sum)(const double* a, std::size_t n);

  // Row-major matrix products. C is m x n.
  // nn:  C = A[m x k] * B[k x n]          (saxpy form, overwrite)
  // nn_acc: C += A * B
  // nt:  C = A[m x k] * B[n x k]^T        (dot form, overwrite)
  // tn_acc: C += A[k x m]^T * B[k x n]    (axpy form, accumulate)
  void (*matmul_nn)(const double* a, const double* b, double* c,
                    std::size_t m, std::size_t k, std::size_t n);
  void (*matmul_nn_acc)(const double* a, const double* b, double* c,
                        std::size_t m, std::size_t k, std::size_t n);
  void (*matmul_nt)(const double* a, const double* b, double* c,
                    std::size_t m, std::size_t k, std::size_t n);
  void (*matmul_tn_acc)(const double* a, const double* b, double* c,
                        std::size_t m, std::size_t k, std::size_t n);

  // 3x3 cross-correlation with one-cell zero padding, stride 1.
  // in: C x H x W, kernels: K x C x 3 x 3, out: K x H x W.
  void (*conv3x3)(const double* in, const double* kernels, double* out,
                  std::size_t C, std::size_t K, std::size_t H, std::size_t W);
  // d(in) += correlation backward given d(out); same shapes as forward.
  void (*conv3x3_grad_input)(const double* dout, const double* kernels, double* din,
                             std::size_t C, std::size_t K, std::size_t H, std::size_t W);
  // d(kernels) += backward given d(out) and the forward input.
  void (*conv3x3_grad_kernels)(const double* dout, const double* in, double* dkernels,
                               std::size_t C, std::size_t K, std::size_t H, std::size_t W);

  const char* name;
};

/// The dispatch result: AVX2 when the CPU supports it and the build has the
/// variant, otherwise scalar. RBCLAB_KERNELS=scalar in the environment
/// forces the reference path.
const Ops& active();

const Ops& scalar_ops();

/// AVX2 table, or nullptr when unavailable (non-x86 build or older CPU).
const Ops* avx2_ops();

/// Test hook: override dispatch. Pass nullptr to restore automatic choice.
void set_active(const Ops* ops);

}  // namespace rbclab::kernels
