#include "rbclab/kernels/kernels.hpp"

#include "kernels_impl.hpp"

namespace rbclab::kernels {
namespace {

// Four plain-double lanes arranged exactly like one 256-bit register.
struct Lanes4 {
  static constexpr std::size_t width = 4;
  struct reg {
    double v[4];
  };
  static reg load(const double* p) { return {p[0], p[1], p[2], p[3]}; }
  static void store(double* p, reg r) {
    p[0] = r.v[0];
    p[1] = r.v[1];
    p[2] = r.v[2];
    p[3] = r.v[3];
  }
  static reg broadcast(double s) { return {s, s, s, s}; }
  static reg add(reg a, reg b) {
    return {a.v[0] + b.v[0], a.v[1] + b.v[1], a.v[2] + b.v[2], a.v[3] + b.v[3]};
  }
  static reg sub(reg a, reg b) {
    return {a.v[0] - b.v[0], a.v[1] - b.v[1], a.v[2] - b.v[2], a.v[3] - b.v[3]};
  }
  static reg mul(reg a, reg b) {
    return {a.v[0] * b.v[0], a.v[1] * b.v[1], a.v[2] * b.v[2], a.v[3] * b.v[3]};
  }
  static reg fma(reg a, reg b, reg c) {
    return {std::fma(a.v[0], b.v[0], c.v[0]), std::fma(a.v[1], b.v[1], c.v[1]),
            std::fma(a.v[2], b.v[2], c.v[2]), std::fma(a.v[3], b.v[3], c.v[3])};
  }
  static void lanes(reg a, double out[4]) {
    out[0] = a.v[0];
    out[1] = a.v[1];
    out[2] = a.v[2];
    out[3] = a.v[3];
  }
};

}  // namespace

const Ops& scalar_ops() {
  static const Ops table = [] {
    Ops t{};
    RBCLAB_KERNELS_FILL_TABLE(Lanes4, t, "scalar");
    return t;
  }();
  return table;
}

}  // namespace rbclab::kernels
