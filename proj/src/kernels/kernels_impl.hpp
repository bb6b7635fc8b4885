// Shared kernel bodies, instantiated once per lane type. The scalar TU
// instantiates with Lanes4 (four plain doubles mimicking a 256-bit register)
// and the AVX2 TU with a __m256d wrapper; loop structure and accumulation
// order are identical by construction, which is what makes the two paths
// bit-identical.
#pragma once

#include <cmath>
#include <cstddef>
#include <cstring>

namespace rbclab::kernels::detail {

// V must provide: width, load, store, broadcast, add, sub, mul, fma(a,b,c)=a*b+c,
// and reduce_lanes writing the 4 lane sums of an accumulator group.

template <class V>
void k_add(const double* a, const double* b, double* out, std::size_t n) {
  std::size_t i = 0;
  for (; i + V::width <= n; i += V::width)
    V::store(out + i, V::add(V::load(a + i), V::load(b + i)));
  for (; i < n; ++i) out[i] = a[i] + b[i];
}

template <class V>
void k_sub(const double* a, const double* b, double* out, std::size_t n) {
  std::size_t i = 0;
  for (; i + V::width <= n; i += V::width)
    V::store(out + i, V::sub(V::load(a + i), V::load(b + i)));
  for (; i < n; ++i) out[i] = a[i] - b[i];
}

template <class V>
void k_mul(const double* a, const double* b, double* out, std::size_t n) {
  std::size_t i = 0;
  for (; i + V::width <= n; i += V::width)
    V::store(out + i, V::mul(V::load(a + i), V::load(b + i)));
  for (; i < n; ++i) out[i] = a[i] * b[i];
}

template <class V>
void k_scale(const double* a, double s, double* out, std::size_t n) {
  const auto vs = V::broadcast(s);
  std::size_t i = 0;
  for (; i + V::width <= n; i += V::width)
    V::store(out + i, V::mul(V::load(a + i), vs));
  for (; i < n; ++i) out[i] = a[i] * s;
}

template <class V>
void k_axpy(double s, const double* x, double* y, std::size_t n) {
  const auto vs = V::broadcast(s);
  std::size_t i = 0;
  for (; i + V::width <= n; i += V::width)
    V::store(y + i, V::fma(vs, V::load(x + i), V::load(y + i)));
  for (; i < n; ++i) y[i] = std::fma(s, x[i], y[i]);
}

template <class V>
void k_fmadd(const double* a, const double* b, double* out, std::size_t n) {
  std::size_t i = 0;
  for (; i + V::width <= n; i += V::width)
    V::store(out + i, V::fma(V::load(a + i), V::load(b + i), V::load(out + i)));
  for (; i < n; ++i) out[i] = std::fma(a[i], b[i], out[i]);
}

// Reduction contract: 4 lane accumulators over blocks of 4, tail elements
// folded into lanes 0..r-1 with fma, combine as (l0+l2)+(l1+l3).
template <class V>
double k_dot(const double* a, const double* b, std::size_t n) {
  auto acc = V::broadcast(0.0);
  std::size_t i = 0;
  for (; i + V::width <= n; i += V::width)
    acc = V::fma(V::load(a + i), V::load(b + i), acc);
  double lanes[4];
  V::lanes(acc, lanes);
  for (std::size_t j = 0; i < n; ++i, ++j) lanes[j] = std::fma(a[i], b[i], lanes[j]);
  return (lanes[0] + lanes[2]) + (lanes[1] + lanes[3]);
}

template <class V>
double k_sum(const double* a, std::size_t n) {
  auto acc = V::broadcast(0.0);
  std::size_t i = 0;
  for (; i + V::width <= n; i += V::width) acc = V::add(acc, V::load(a + i));
  double lanes[4];
  V::lanes(acc, lanes);
  for (std::size_t j = 0; i < n; ++i, ++j) lanes[j] += a[i];
  return (lanes[0] + lanes[2]) + (lanes[1] + lanes[3]);
}

template <class V>
void k_matmul_nn_acc(const double* a, const double* b, double* c,
                     std::size_t m, std::size_t k, std::size_t n) {
  for (std::size_t i = 0; i < m; ++i) {
    double* crow = c + i * n;
    for (std::size_t l = 0; l < k; ++l) {
      k_axpy<V>(a[i * k + l], b + l * n, crow, n);
    }
  }
}

template <class V>
void k_matmul_nn(const double* a, const double* b, double* c,
                 std::size_t m, std::size_t k, std::size_t n) {
  std::memset(c, 0, m * n * sizeof(double));
  k_matmul_nn_acc<V>(a, b, c, m, k, n);
}

template <class V>
void k_matmul_nt(const double* a, const double* b, double* c,
                 std::size_t m, std::size_t k, std::size_t n) {
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j)
      c[i * n + j] = k_dot<V>(a + i * k, b + j * k, k);
}

template <class V>
void k_matmul_tn_acc(const double* a, const double* b, double* c,
                     std::size_t m, std::size_t k, std::size_t n) {
  // a is k x m, b is k x n; C[i][:] += a[l][i] * b[l][:]
  for (std::size_t l = 0; l < k; ++l) {
    const double* brow = b + l * n;
    for (std::size_t i = 0; i < m; ++i) {
      k_axpy<V>(a[l * m + i], brow, c + i * n, n);
    }
  }
}

// 3x3 zero-padded cross-correlation. out[kk][y][x] accumulates
// K[kk][c][dy][dx] * in[c][y+dy-1][x+dx-1], loop order (c, dy, dx) so the
// per-element fma order is pinned.
template <class V>
void k_conv3x3(const double* in, const double* kernels, double* out,
               std::size_t C, std::size_t K, std::size_t H, std::size_t W) {
  std::memset(out, 0, K * H * W * sizeof(double));
  for (std::size_t kk = 0; kk < K; ++kk) {
    double* omap = out + kk * H * W;
    for (std::size_t c = 0; c < C; ++c) {
      const double* imap = in + c * H * W;
      const double* kw = kernels + (kk * C + c) * 9;
      for (int dy = -1; dy <= 1; ++dy) {
        for (int dx = -1; dx <= 1; ++dx) {
          const double w = kw[(dy + 1) * 3 + (dx + 1)];
          const std::size_t y0 = dy < 0 ? 1 : 0;
          const std::size_t y1 = dy > 0 ? H - 1 : H;
          const std::size_t x0 = dx < 0 ? 1 : 0;
          const std::size_t x1 = dx > 0 ? W - 1 : W;
          for (std::size_t y = y0; y < y1; ++y) {
            const double* irow = imap + (y + dy) * W + dx;
            double* orow = omap + y * W;
            k_axpy<V>(w, irow + x0, orow + x0, x1 - x0);
          }
        }
      }
    }
  }
}

template <class V>
void k_conv3x3_grad_input(const double* dout, const double* kernels, double* din,
                          std::size_t C, std::size_t K, std::size_t H, std::size_t W) {
  // din[c][y+dy-1][x+dx-1] += K[kk][c][dy][dx] * dout[kk][y][x]
  for (std::size_t kk = 0; kk < K; ++kk) {
    const double* omap = dout + kk * H * W;
    for (std::size_t c = 0; c < C; ++c) {
      double* imap = din + c * H * W;
      const double* kw = kernels + (kk * C + c) * 9;
      for (int dy = -1; dy <= 1; ++dy) {
        for (int dx = -1; dx <= 1; ++dx) {
          const double w = kw[(dy + 1) * 3 + (dx + 1)];
          const std::size_t y0 = dy < 0 ? 1 : 0;
          const std::size_t y1 = dy > 0 ? H - 1 : H;
          const std::size_t x0 = dx < 0 ? 1 : 0;
          const std::size_t x1 = dx > 0 ? W - 1 : W;
          for (std::size_t y = y0; y < y1; ++y) {
            double* irow = imap + (y + dy) * W + dx;
            const double* orow = omap + y * W;
            k_axpy<V>(w, orow + x0, irow + x0, x1 - x0);
          }
        }
      }
    }
  }
}

template <class V>
void k_conv3x3_grad_kernels(const double* dout, const double* in, double* dkernels,
                            std::size_t C, std::size_t K, std::size_t H, std::size_t W) {
  for (std::size_t kk = 0; kk < K; ++kk) {
    const double* omap = dout + kk * H * W;
    for (std::size_t c = 0; c < C; ++c) {
      const double* imap = in + c * H * W;
      double* kw = dkernels + (kk * C + c) * 9;
      for (int dy = -1; dy <= 1; ++dy) {
        for (int dx = -1; dx <= 1; ++dx) {
          const std::size_t y0 = dy < 0 ? 1 : 0;
          const std::size_t y1 = dy > 0 ? H - 1 : H;
          const std::size_t x0 = dx < 0 ? 1 : 0;
          const std::size_t x1 = dx > 0 ? W - 1 : W;
          double acc = 0.0;
          for (std::size_t y = y0; y < y1; ++y) {
            const double* irow = imap + (y + dy) * W + dx;
            const double* orow = omap + y * W;
            acc += k_dot<V>(orow + x0, irow + x0, x1 - x0);
          }
          kw[(dy + 1) * 3 + (dx + 1)] += acc;
        }
      }
    }
  }
}

}  // namespace rbclab::kernels::detail

#define RBCLAB_KERNELS_FILL_TABLE(V, table, path_name)                          \
  do {                                                                          \
    using namespace rbclab::kernels::detail;                                    \
    (table).add = &k_add<V>;                                                    \
    (table).sub = &k_sub<V>;                                                    \
    (table).mul = &k_mul<V>;                                                    \
    (table).scale = &k_scale<V>;                                                \
    (table).axpy = &k_axpy<V>;                                                  \
    (table).fmadd = &k_fmadd<V>;                                                \
    (table).dot = &k_dot<V>;                                                    \
    (table).sum = &k_sum<V>;                                                    \
    (table).matmul_nn = &k_matmul_nn<V>;                                        \
    (table).matmul_nn_acc = &k_matmul_nn_acc<V>;                                \
    (table).matmul_nt = &k_matmul_nt<V>;                                        \
    (table).matmul_tn_acc = &k_matmul_tn_acc<V>;                                \
    (table).conv3x3 = &k_conv3x3<V>;                                            \
    (table).conv3x3_grad_input = &k_conv3x3_grad_input<V>;                      \
    (table).conv3x3_grad_kernels = &k_conv3x3_grad_kernels<V>;                  \
    (table).name = path_name;                                                   \
  } while (0)
