#include <doctest.h>

#include <cmath>
#include <cstring>
#include <string>
#include <tuple>
#include <vector>

#include "rbclab/kernels/kernels.hpp"
#include "rbclab/rng.hpp"

using namespace rbclab;

namespace {

std::vector<double> random_vec(RandomStream& rng, std::size_t n, double scale = 1.0) {
  std::vector<double> v(n);
  for (auto& x : v) x = rng.gaussian() * scale;
  return v;
}

bool bitwise_equal(const std::vector<double>& a, const std::vector<double>& b) {
  if (a.size() != b.size()) return false;
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (std::memcmp(&a[i], &b[i], sizeof(double)) != 0) return false;
  }
  return true;
}

}  // namespace

TEST_CASE("elementwise kernels match a plain loop") {
  RandomStream rng(101);
  const auto& k = kernels::active();
  for (std::size_t n : {1u, 3u, 4u, 7u, 32u, 113u}) {
    auto a = random_vec(rng, n);
    auto b = random_vec(rng, n);
    std::vector<double> out(n), ref(n);

    k.add(a.data(), b.data(), out.data(), n);
    for (std::size_t i = 0; i < n; ++i) ref[i] = a[i] + b[i];
    CHECK(bitwise_equal(out, ref));

    k.mul(a.data(), b.data(), out.data(), n);
    for (std::size_t i = 0; i < n; ++i) ref[i] = a[i] * b[i];
    CHECK(bitwise_equal(out, ref));

    k.scale(a.data(), 0.37, out.data(), n);
    for (std::size_t i = 0; i < n; ++i) ref[i] = a[i] * 0.37;
    CHECK(bitwise_equal(out, ref));
  }
}

TEST_CASE("matmul_nn matches a naive triple loop") {
  RandomStream rng(102);
  const auto& k = kernels::active();
  const std::vector<std::tuple<int, int, int>> cases = {
      {1, 1, 1}, {3, 4, 5}, {7, 13, 9}, {16, 32, 8}};
  for (auto [m, kk, n] : cases) {
    auto a = random_vec(rng, m * kk);
    auto b = random_vec(rng, kk * n);
    std::vector<double> c(m * n), ref(m * n, 0.0);
    k.matmul_nn(a.data(), b.data(), c.data(), m, kk, n);
    for (int i = 0; i < m; ++i)
      for (int l = 0; l < kk; ++l)
        for (int j = 0; j < n; ++j) ref[i * n + j] += a[i * kk + l] * b[l * n + j];
    for (int i = 0; i < m * n; ++i) CHECK(c[i] == doctest::Approx(ref[i]).epsilon(1e-13));
  }
}

TEST_CASE("matmul transpose forms agree with nn on transposed operands") {
  RandomStream rng(103);
  const auto& k = kernels::active();
  const int m = 5, kk = 7, n = 6;
  auto a = random_vec(rng, m * kk);
  auto b = random_vec(rng, kk * n);

  // nt: C = A * (B^T)^T computed from bt stored row-major as n x k
  std::vector<double> bt(n * kk);
  for (int i = 0; i < kk; ++i)
    for (int j = 0; j < n; ++j) bt[j * kk + i] = b[i * n + j];
  std::vector<double> c1(m * n), c2(m * n);
  k.matmul_nn(a.data(), b.data(), c1.data(), m, kk, n);
  k.matmul_nt(a.data(), bt.data(), c2.data(), m, kk, n);
  for (int i = 0; i < m * n; ++i) CHECK(c1[i] == doctest::Approx(c2[i]).epsilon(1e-13));

  // tn_acc: C += A^T * B with A stored k x m
  std::vector<double> at(kk * m);
  for (int i = 0; i < m; ++i)
    for (int l = 0; l < kk; ++l) at[l * m + i] = a[i * kk + l];
  std::vector<double> c3(m * n, 0.0);
  k.matmul_tn_acc(at.data(), b.data(), c3.data(), m, kk, n);
  for (int i = 0; i < m * n; ++i) CHECK(c1[i] == doctest::Approx(c3[i]).epsilon(1e-13));
}

TEST_CASE("conv3x3 zero padding: ones box counts overlap") {
  const auto& k = kernels::active();
  // 1 x 3 x 3 input of ones, single all-ones kernel: center 9, corners 4
  std::vector<double> in(9, 1.0), ker(9, 1.0), out(9);
  k.conv3x3(in.data(), ker.data(), out.data(), 1, 1, 3, 3);
  CHECK(out[4] == 9.0);
  CHECK(out[0] == 4.0);
  CHECK(out[2] == 4.0);
  CHECK(out[6] == 4.0);
  CHECK(out[8] == 4.0);
  CHECK(out[1] == 6.0);
}

TEST_CASE("scalar and AVX2 paths are bit-identical") {
  const auto* avx2 = kernels::avx2_ops();
  if (!avx2) {
    MESSAGE("AVX2 path not available on this build/CPU; skipping");
    return;
  }
  const auto& sc = kernels::scalar_ops();
  RandomStream rng(104);

  for (std::size_t n : {1u, 5u, 8u, 31u, 64u, 257u}) {
    auto a = random_vec(rng, n);
    auto b = random_vec(rng, n);
    std::vector<double> o1(n), o2(n);

    sc.add(a.data(), b.data(), o1.data(), n);
    avx2->add(a.data(), b.data(), o2.data(), n);
    CHECK(bitwise_equal(o1, o2));

    sc.mul(a.data(), b.data(), o1.data(), n);
    avx2->mul(a.data(), b.data(), o2.data(), n);
    CHECK(bitwise_equal(o1, o2));

    o1 = b;
    o2 = b;
    sc.axpy(1.7, a.data(), o1.data(), n);
    avx2->axpy(1.7, a.data(), o2.data(), n);
    CHECK(bitwise_equal(o1, o2));

    CHECK(sc.dot(a.data(), b.data(), n) == avx2->dot(a.data(), b.data(), n));
    CHECK(sc.sum(a.data(), n) == avx2->sum(a.data(), n));
  }

  SUBCASE("matmul forms") {
    const int m = 9, kk = 17, n = 13;
    auto a = random_vec(rng, m * kk);
    auto b = random_vec(rng, kk * n);
    std::vector<double> c1(m * n), c2(m * n);
    sc.matmul_nn(a.data(), b.data(), c1.data(), m, kk, n);
    avx2->matmul_nn(a.data(), b.data(), c2.data(), m, kk, n);
    CHECK(bitwise_equal(c1, c2));

    auto bt = random_vec(rng, n * kk);
    sc.matmul_nt(a.data(), bt.data(), c1.data(), m, kk, n);
    avx2->matmul_nt(a.data(), bt.data(), c2.data(), m, kk, n);
    CHECK(bitwise_equal(c1, c2));

    auto at = random_vec(rng, kk * m);
    std::fill(c1.begin(), c1.end(), 0.5);
    std::fill(c2.begin(), c2.end(), 0.5);
    sc.matmul_tn_acc(at.data(), b.data(), c1.data(), m, kk, n);
    avx2->matmul_tn_acc(at.data(), b.data(), c2.data(), m, kk, n);
    CHECK(bitwise_equal(c1, c2));
  }

  SUBCASE("conv3x3 family") {
    const std::size_t C = 3, K = 4, H = 8, W = 32;
    auto in = random_vec(rng, C * H * W);
    auto ker = random_vec(rng, K * C * 9);
    std::vector<double> o1(K * H * W), o2(K * H * W);
    sc.conv3x3(in.data(), ker.data(), o1.data(), C, K, H, W);
    avx2->conv3x3(in.data(), ker.data(), o2.data(), C, K, H, W);
    CHECK(bitwise_equal(o1, o2));

    auto dout = random_vec(rng, K * H * W);
    std::vector<double> di1(C * H * W, 0.0), di2(C * H * W, 0.0);
    sc.conv3x3_grad_input(dout.data(), ker.data(), di1.data(), C, K, H, W);
    avx2->conv3x3_grad_input(dout.data(), ker.data(), di2.data(), C, K, H, W);
    CHECK(bitwise_equal(di1, di2));

    std::vector<double> dk1(K * C * 9, 0.0), dk2(K * C * 9, 0.0);
    sc.conv3x3_grad_kernels(dout.data(), in.data(), dk1.data(), C, K, H, W);
    avx2->conv3x3_grad_kernels(dout.data(), in.data(), dk2.data(), C, K, H, W);
    CHECK(bitwise_equal(dk1, dk2));
  }
}

TEST_CASE("dispatch override hook") {
  kernels::set_active(&kernels::scalar_ops());
  CHECK(std::string(kernels::active().name) == "scalar");
  kernels::set_active(nullptr);
}
