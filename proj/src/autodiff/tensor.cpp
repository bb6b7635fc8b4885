#include "rbclab/autodiff/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <unordered_set>

#include "rbclab/autodiff/gaussian.hpp"
#include "rbclab/errors.hpp"
#include "rbclab/kernels/kernels.hpp"

namespace rbclab::autodiff {

namespace {

using Node = Tensor::Node;
using NodePtr = std::shared_ptr<Node>;

const kernels::Ops& ops() { return kernels::active(); }

NodePtr make_leaf(Shape shape, std::vector<double> values, bool requires_grad) {
  auto n = std::make_shared<Node>();
  n->shape = std::move(shape);
  n->val = std::move(values);
  n->requires_grad = requires_grad;
  n->track = requires_grad;
  return n;
}

std::vector<double>& grad_buf(Node& n) {
  if (n.grad.empty()) n.grad.assign(n.val.size(), 0.0);
  return n.grad;
}

// Result node; parents and the adjoint rule are recorded (and memory spent)
// only when some operand belongs to a gradient graph.
Tensor make_result(Shape shape, std::vector<double> values,
                   std::vector<NodePtr> parents,
                   std::function<void(Node&)> backward_fn) {
  auto n = std::make_shared<Node>();
  n->shape = std::move(shape);
  n->val = std::move(values);
  bool track = false;
  for (const auto& p : parents) track = track || p->track;
  n->track = track;
  if (track) {
    n->parents = std::move(parents);
    n->backward_fn = std::move(backward_fn);
  }
  return Tensor(std::move(n));
}

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() != b.shape()) {
    throw DimensionError(std::string(op) + ": shape mismatch " + shape_str(a.shape()) +
                         " vs " + shape_str(b.shape()));
  }
}

bool is_scalar(const Tensor& t) { return t.size() == 1; }

// Generic unary elementwise op. dfn(i, g) must accumulate the adjoint into
// the parent gradient buffer.
template <class Fwd, class Bwd>
Tensor unary_op(const Tensor& a, Fwd&& fwd, Bwd&& make_backward) {
  const auto n = a.size();
  std::vector<double> out(n);
  const auto av = a.values();
  for (int64_t i = 0; i < n; ++i) out[i] = fwd(av[i]);
  return make_result(a.shape(), std::move(out), {a.handle()}, make_backward());
}

}  // namespace

int64_t shape_size(const Shape& s) {
  int64_t n = 1;
  for (int e : s) n *= e;
  return n;
}

std::string shape_str(const Shape& s) {
  std::ostringstream os;
  os << "[";
  for (std::size_t i = 0; i < s.size(); ++i) os << (i ? "x" : "") << s[i];
  os << "]";
  return os.str();
}

Tensor Tensor::zeros(Shape shape, bool requires_grad) {
  auto n = shape_size(shape);
  return Tensor(make_leaf(std::move(shape), std::vector<double>(n, 0.0), requires_grad));
}

Tensor Tensor::full(Shape shape, double value, bool requires_grad) {
  auto n = shape_size(shape);
  return Tensor(make_leaf(std::move(shape), std::vector<double>(n, value), requires_grad));
}

Tensor Tensor::from(Shape shape, std::vector<double> values, bool requires_grad) {
  if (shape_size(shape) != static_cast<int64_t>(values.size())) {
    throw DimensionError("Tensor::from: " + shape_str(shape) + " does not hold " +
                         std::to_string(values.size()) + " values");
  }
  return Tensor(make_leaf(std::move(shape), std::move(values), requires_grad));
}

Tensor Tensor::scalar(double value, bool requires_grad) {
  return Tensor(make_leaf({1}, {value}, requires_grad));
}

const Shape& Tensor::shape() const { return n_->shape; }
int64_t Tensor::size() const { return static_cast<int64_t>(n_->val.size()); }
std::span<double> Tensor::values() { return n_->val; }
std::span<const double> Tensor::values() const { return n_->val; }

double Tensor::scalar_value() const {
  if (size() != 1) throw UsageError("scalar_value on tensor of shape " + shape_str(shape()));
  return n_->val[0];
}

bool Tensor::requires_grad() const { return n_->requires_grad; }
bool Tensor::tracked() const { return n_->track; }

std::span<double> Tensor::grad() { return grad_buf(*n_); }
std::span<const double> Tensor::grad() const { return grad_buf(*n_); }

void Tensor::zero_grad() { std::fill(n_->grad.begin(), n_->grad.end(), 0.0); }

// ---- add / sub / mul --------------------------------------------------------

namespace {

enum class Bin { Add, Sub, Mul };

Tensor binary_op(const Tensor& a, const Tensor& b, Bin kind, const char* name) {
  const bool sa = is_scalar(a), sb = is_scalar(b);
  if (!sa && !sb) require_same_shape(a, b, name);
  const Shape out_shape = (sa && !sb) ? b.shape() : a.shape();
  const auto n = shape_size(out_shape);
  std::vector<double> out(n);

  const auto av = a.values();
  const auto bv = b.values();
  if (!sa && !sb) {
    switch (kind) {
      case Bin::Add: ops().add(av.data(), bv.data(), out.data(), n); break;
      case Bin::Sub: ops().sub(av.data(), bv.data(), out.data(), n); break;
      case Bin::Mul: ops().mul(av.data(), bv.data(), out.data(), n); break;
    }
  } else {
    for (int64_t i = 0; i < n; ++i) {
      const double x = sa ? av[0] : av[i];
      const double y = sb ? bv[0] : bv[i];
      out[i] = kind == Bin::Add ? x + y : (kind == Bin::Sub ? x - y : x * y);
    }
  }

  const bool bcast_a = sa && n > 1;
  const bool bcast_b = sb && n > 1;
  return make_result(out_shape, std::move(out), {a.handle(), b.handle()},
                     [kind, bcast_a, bcast_b](Node& self) {
    Node& A = *self.parents[0];
    Node& B = *self.parents[1];
    const auto n = self.val.size();
    const double* g = self.grad.data();
    if (A.track) {
      auto& da = grad_buf(A);
      switch (kind) {
        case Bin::Add:
        case Bin::Sub:
          if (bcast_a) da[0] += ops().sum(g, n);
          else ops().axpy(1.0, g, da.data(), n);
          break;
        case Bin::Mul:
          if (bcast_a) da[0] += ops().dot(g, B.val.data(), n);
          else if (bcast_b) ops().axpy(B.val[0], g, da.data(), n);
          else ops().fmadd(g, B.val.data(), da.data(), n);
          break;
      }
    }
    if (B.track) {
      auto& db = grad_buf(B);
      switch (kind) {
        case Bin::Add:
          if (bcast_b) db[0] += ops().sum(g, n);
          else ops().axpy(1.0, g, db.data(), n);
          break;
        case Bin::Sub:
          if (bcast_b) db[0] -= ops().sum(g, n);
          else ops().axpy(-1.0, g, db.data(), n);
          break;
        case Bin::Mul:
          if (bcast_b) db[0] += ops().dot(g, A.val.data(), n);
          else if (bcast_a) ops().axpy(A.val[0], g, db.data(), n);
          else ops().fmadd(g, A.val.data(), db.data(), n);
          break;
      }
    }
  });
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) { return binary_op(a, b, Bin::Add, "add"); }
Tensor sub(const Tensor& a, const Tensor& b) { return binary_op(a, b, Bin::Sub, "sub"); }
Tensor mul(const Tensor& a, const Tensor& b) { return binary_op(a, b, Bin::Mul, "mul"); }

Tensor scale(const Tensor& a, double s) {
  const auto n = a.size();
  std::vector<double> out(n);
  ops().scale(a.values().data(), s, out.data(), n);
  return make_result(a.shape(), std::move(out), {a.handle()}, [s](Node& self) {
    Node& A = *self.parents[0];
    if (A.track) ops().axpy(s, self.grad.data(), grad_buf(A).data(), self.val.size());
  });
}

// ---- transcendental elementwise ---------------------------------------------

Tensor tanh_(const Tensor& a) {
  return unary_op(a, [](double x) { return std::tanh(x); }, [] {
    return [](Node& self) {
      Node& A = *self.parents[0];
      if (!A.track) return;
      auto& da = grad_buf(A);
      for (std::size_t i = 0; i < self.val.size(); ++i) {
        const double y = self.val[i];
        da[i] += self.grad[i] * (1.0 - y * y);
      }
    };
  });
}

Tensor softplus(const Tensor& a) {
  auto f = [](double x) { return x > 0.0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x)); };
  return unary_op(a, f, [] {
    return [](Node& self) {
      Node& A = *self.parents[0];
      if (!A.track) return;
      auto& da = grad_buf(A);
      for (std::size_t i = 0; i < self.val.size(); ++i) {
        const double x = A.val[i];
        const double sig = x > 0.0 ? 1.0 / (1.0 + std::exp(-x)) : std::exp(x) / (1.0 + std::exp(x));
        da[i] += self.grad[i] * sig;
      }
    };
  });
}

Tensor exp_(const Tensor& a) {
  return unary_op(a, [](double x) { return std::exp(x); }, [] {
    return [](Node& self) {
      Node& A = *self.parents[0];
      if (!A.track) return;
      ops().fmadd(self.grad.data(), self.val.data(), grad_buf(A).data(), self.val.size());
    };
  });
}

Tensor log_(const Tensor& a) {
  const auto av = a.values();
  for (int64_t i = 0; i < a.size(); ++i) {
    if (!(av[i] > 0.0)) {
      throw DomainError("log of non-positive value " + std::to_string(av[i]) + " at index " +
                        std::to_string(i));
    }
  }
  return unary_op(a, [](double x) { return std::log(x); }, [] {
    return [](Node& self) {
      Node& A = *self.parents[0];
      if (!A.track) return;
      auto& da = grad_buf(A);
      for (std::size_t i = 0; i < self.val.size(); ++i) da[i] += self.grad[i] / A.val[i];
    };
  });
}

Tensor clip_by_value(const Tensor& a, double lo, double hi) {
  if (!(lo <= hi)) throw UsageError("clip_by_value: lo > hi");
  return unary_op(a, [lo, hi](double x) { return std::min(std::max(x, lo), hi); }, [lo, hi] {
    return [lo, hi](Node& self) {
      Node& A = *self.parents[0];
      if (!A.track) return;
      auto& da = grad_buf(A);
      for (std::size_t i = 0; i < self.val.size(); ++i) {
        const double x = A.val[i];
        if (x >= lo && x <= hi) da[i] += self.grad[i];
      }
    };
  });
}

Tensor min_pairwise(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "min_pairwise");
  const auto n = a.size();
  std::vector<double> out(n);
  const auto av = a.values();
  const auto bv = b.values();
  for (int64_t i = 0; i < n; ++i) out[i] = av[i] <= bv[i] ? av[i] : bv[i];
  return make_result(a.shape(), std::move(out), {a.handle(), b.handle()}, [](Node& self) {
    Node& A = *self.parents[0];
    Node& B = *self.parents[1];
    for (std::size_t i = 0; i < self.val.size(); ++i) {
      const bool take_a = A.val[i] <= B.val[i];
      if (take_a) {
        if (A.track) grad_buf(A)[i] += self.grad[i];
      } else {
        if (B.track) grad_buf(B)[i] += self.grad[i];
      }
    }
  });
}

// ---- reductions ---------------------------------------------------------------

Tensor sum(const Tensor& a) {
  const double s = ops().sum(a.values().data(), a.size());
  return make_result({1}, {s}, {a.handle()}, [](Node& self) {
    Node& A = *self.parents[0];
    if (!A.track) return;
    auto& da = grad_buf(A);
    const double g = self.grad[0];
    for (auto& d : da) d += g;
  });
}

Tensor mean(const Tensor& a) {
  const auto n = a.size();
  if (n == 0) throw UsageError("mean of empty tensor");
  const double s = ops().sum(a.values().data(), n) / static_cast<double>(n);
  return make_result({1}, {s}, {a.handle()}, [n](Node& self) {
    Node& A = *self.parents[0];
    if (!A.track) return;
    auto& da = grad_buf(A);
    const double g = self.grad[0] / static_cast<double>(n);
    for (auto& d : da) d += g;
  });
}

Tensor mean_spatial(const Tensor& a) {
  const auto& s = a.shape();
  if (s.size() != 3 && s.size() != 4) {
    throw DimensionError("mean_spatial expects rank 3 or 4, got " + shape_str(s));
  }
  const int64_t hw = static_cast<int64_t>(s[s.size() - 2]) * s[s.size() - 1];
  const int64_t maps = a.size() / hw;
  Shape out_shape(s.begin(), s.end() - 2);
  std::vector<double> out(maps);
  const auto av = a.values();
  for (int64_t m = 0; m < maps; ++m) {
    out[m] = ops().sum(av.data() + m * hw, hw) / static_cast<double>(hw);
  }
  return make_result(std::move(out_shape), std::move(out), {a.handle()}, [hw, maps](Node& self) {
    Node& A = *self.parents[0];
    if (!A.track) return;
    auto& da = grad_buf(A);
    for (int64_t m = 0; m < maps; ++m) {
      const double g = self.grad[m] / static_cast<double>(hw);
      for (int64_t i = 0; i < hw; ++i) da[m * hw + i] += g;
    }
  });
}

// ---- shape ops ----------------------------------------------------------------

Tensor reshape(const Tensor& a, Shape shape) {
  if (shape_size(shape) != a.size()) {
    throw DimensionError("reshape: " + shape_str(a.shape()) + " -> " + shape_str(shape) +
                         " changes element count");
  }
  std::vector<double> out(a.values().begin(), a.values().end());
  return make_result(std::move(shape), std::move(out), {a.handle()}, [](Node& self) {
    Node& A = *self.parents[0];
    if (!A.track) return;
    ops().axpy(1.0, self.grad.data(), grad_buf(A).data(), self.val.size());
  });
}

Tensor expand_scalar(const Tensor& a, Shape shape) {
  if (a.size() != 1) throw DimensionError("expand_scalar expects a size-1 tensor");
  const auto n = shape_size(shape);
  std::vector<double> out(n, a.values()[0]);
  return make_result(std::move(shape), std::move(out), {a.handle()}, [](Node& self) {
    Node& A = *self.parents[0];
    if (!A.track) return;
    grad_buf(A)[0] += ops().sum(self.grad.data(), self.val.size());
  });
}

Tensor add_rowvec(const Tensor& x, const Tensor& b) {
  if (x.shape().size() != 2 || b.shape().size() != 1 || x.shape()[1] != b.shape()[0]) {
    throw DimensionError("add_rowvec: " + shape_str(x.shape()) + " + " + shape_str(b.shape()));
  }
  const int64_t rows = x.shape()[0], cols = x.shape()[1];
  std::vector<double> out(rows * cols);
  const auto xv = x.values();
  const auto bv = b.values();
  for (int64_t r = 0; r < rows; ++r) {
    ops().add(xv.data() + r * cols, bv.data(), out.data() + r * cols, cols);
  }
  return make_result(x.shape(), std::move(out), {x.handle(), b.handle()},
                     [rows, cols](Node& self) {
    Node& X = *self.parents[0];
    Node& B = *self.parents[1];
    if (X.track) ops().axpy(1.0, self.grad.data(), grad_buf(X).data(), self.val.size());
    if (B.track) {
      auto& db = grad_buf(B);
      for (int64_t r = 0; r < rows; ++r) {
        ops().axpy(1.0, self.grad.data() + r * cols, db.data(), cols);
      }
    }
  });
}

// ---- linear algebra -------------------------------------------------------------

Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.shape().size() != 2 || b.shape().size() != 2 || a.shape()[1] != b.shape()[0]) {
    throw DimensionError("matmul: incompatible shapes " + shape_str(a.shape()) + " * " +
                         shape_str(b.shape()));
  }
  const int64_t m = a.shape()[0], k = a.shape()[1], n = b.shape()[1];
  std::vector<double> out(m * n);
  ops().matmul_nn(a.values().data(), b.values().data(), out.data(), m, k, n);
  return make_result({static_cast<int>(m), static_cast<int>(n)}, std::move(out),
                     {a.handle(), b.handle()}, [m, k, n](Node& self) {
    Node& A = *self.parents[0];
    Node& B = *self.parents[1];
    const double* g = self.grad.data();
    if (A.track) {
      // dA += g * B^T  (g is m x n, B is k x n)
      std::vector<double> tmp(m * k);
      ops().matmul_nt(g, B.val.data(), tmp.data(), m, n, k);
      ops().axpy(1.0, tmp.data(), grad_buf(A).data(), m * k);
    }
    if (B.track) {
      // dB += A^T * g  (A is m x k, g is m x n)
      ops().matmul_tn_acc(A.val.data(), g, grad_buf(B).data(), k, m, n);
    }
  });
}

Tensor conv2d_zero_pad(const Tensor& input, const Tensor& kernels) {
  const auto& is = input.shape();
  const auto& ks = kernels.shape();
  if (ks.size() != 4 || ks[2] != 3 || ks[3] != 3) {
    throw DimensionError("conv2d_zero_pad: kernels must be K x C x 3 x 3, got " + shape_str(ks));
  }
  const bool batched = is.size() == 4;
  if (!batched && is.size() != 3) {
    throw DimensionError("conv2d_zero_pad: input must be C x H x W or B x C x H x W, got " +
                         shape_str(is));
  }
  const int64_t B = batched ? is[0] : 1;
  const int64_t C = is[batched ? 1 : 0];
  const int64_t H = is[batched ? 2 : 1];
  const int64_t W = is[batched ? 3 : 2];
  const int64_t K = ks[0];
  if (ks[1] != C) {
    throw DimensionError("conv2d_zero_pad: input has " + std::to_string(C) +
                         " channels but kernels expect " + std::to_string(ks[1]));
  }

  Shape out_shape = batched
      ? Shape{static_cast<int>(B), static_cast<int>(K), static_cast<int>(H), static_cast<int>(W)}
      : Shape{static_cast<int>(K), static_cast<int>(H), static_cast<int>(W)};
  std::vector<double> out(B * K * H * W);
  for (int64_t s = 0; s < B; ++s) {
    ops().conv3x3(input.values().data() + s * C * H * W, kernels.values().data(),
                  out.data() + s * K * H * W, C, K, H, W);
  }
  return make_result(std::move(out_shape), std::move(out), {input.handle(), kernels.handle()},
                     [B, C, H, W, K](Node& self) {
    Node& I = *self.parents[0];
    Node& Kn = *self.parents[1];
    for (int64_t s = 0; s < B; ++s) {
      const double* g = self.grad.data() + s * K * H * W;
      if (I.track) {
        ops().conv3x3_grad_input(g, Kn.val.data(), grad_buf(I).data() + s * C * H * W,
                                 C, K, H, W);
      }
      if (Kn.track) {
        ops().conv3x3_grad_kernels(g, I.val.data() + s * C * H * W, grad_buf(Kn).data(),
                                   C, K, H, W);
      }
    }
  });
}

namespace {

void reverse_width_raw(const double* in, double* out, int64_t B, int64_t C, int64_t H,
                       int64_t W, const std::vector<double>& sign_mask) {
  for (int64_t s = 0; s < B; ++s) {
    for (int64_t c = 0; c < C; ++c) {
      const double sign = sign_mask[c];
      const double* imap = in + (s * C + c) * H * W;
      double* omap = out + (s * C + c) * H * W;
      for (int64_t y = 0; y < H; ++y) {
        for (int64_t x = 0; x < W; ++x) {
          omap[y * W + x] = sign * imap[y * W + (W - 1 - x)];
        }
      }
    }
  }
}

}  // namespace

Tensor reverse_width(const Tensor& input, const std::vector<double>& sign_mask) {
  const auto& is = input.shape();
  const bool batched = is.size() == 4;
  if (!batched && is.size() != 3) {
    throw DimensionError("reverse_width: input must be rank 3 or 4, got " + shape_str(is));
  }
  const int64_t B = batched ? is[0] : 1;
  const int64_t C = is[batched ? 1 : 0];
  const int64_t H = is[batched ? 2 : 1];
  const int64_t W = is[batched ? 3 : 2];
  if (static_cast<int64_t>(sign_mask.size()) != C) {
    throw DimensionError("reverse_width: sign mask length " + std::to_string(sign_mask.size()) +
                         " does not match " + std::to_string(C) + " channels");
  }
  for (double s : sign_mask) {
    if (s != 1.0 && s != -1.0) throw UsageError("reverse_width: sign mask entries must be +1/-1");
  }

  std::vector<double> out(input.size());
  reverse_width_raw(input.values().data(), out.data(), B, C, H, W, sign_mask);
  return make_result(is, std::move(out), {input.handle()},
                     [B, C, H, W, sign_mask](Node& self) {
    Node& I = *self.parents[0];
    if (!I.track) return;
    // the adjoint is the same reversal and signs
    std::vector<double> tmp(self.val.size());
    reverse_width_raw(self.grad.data(), tmp.data(), B, C, H, W, sign_mask);
    ops().axpy(1.0, tmp.data(), grad_buf(I).data(), tmp.size());
  });
}

// ---- gaussian log density --------------------------------------------------------

Tensor gaussian_logpdf(const Tensor& x, const Tensor& mean, const Tensor& log_std) {
  require_same_shape(x, mean, "gaussian_logpdf");
  require_same_shape(x, log_std, "gaussian_logpdf");
  const auto n = x.size();
  std::vector<double> out(n);
  const auto xv = x.values();
  const auto mv = mean.values();
  const auto lv = log_std.values();
  for (int64_t i = 0; i < n; ++i) {
    out[i] = gaussian_logpdf_scalar(xv[i], mv[i], lv[i]);
  }
  return make_result(x.shape(), std::move(out),
                     {x.handle(), mean.handle(), log_std.handle()}, [](Node& self) {
    Node& X = *self.parents[0];
    Node& M = *self.parents[1];
    Node& L = *self.parents[2];
    for (std::size_t i = 0; i < self.val.size(); ++i) {
      const double g = self.grad[i];
      const double inv_std = std::exp(-L.val[i]);
      const double z = (X.val[i] - M.val[i]) * inv_std;
      if (X.track) grad_buf(X)[i] += g * (-z * inv_std);
      if (M.track) grad_buf(M)[i] += g * (z * inv_std);
      if (L.track) grad_buf(L)[i] += g * (z * z - 1.0);
    }
  });
}

// ---- backward sweep ----------------------------------------------------------------

void backward(const Tensor& root) {
  if (root.size() != 1) {
    throw UsageError("backward: root must be scalar-shaped, got " + shape_str(root.shape()));
  }
  if (!root.tracked()) {
    throw UsageError("backward: root is not part of a gradient graph");
  }

  // Iterative post-order DFS: children are emitted after all their parents,
  // so reversing gives a valid sweep order with each node visited once.
  std::vector<Node*> order;
  std::unordered_set<Node*> seen;
  struct Frame {
    Node* node;
    std::size_t next_parent;
  };
  std::vector<Frame> stack;
  stack.push_back({&root.node(), 0});
  seen.insert(&root.node());
  while (!stack.empty()) {
    Frame& f = stack.back();
    if (f.next_parent < f.node->parents.size()) {
      Node* p = f.node->parents[f.next_parent++].get();
      if (p->track && !seen.count(p)) {
        seen.insert(p);
        stack.push_back({p, 0});
      }
    } else {
      order.push_back(f.node);
      stack.pop_back();
    }
  }

  // Interior gradients restart from zero each sweep; leaf gradients persist
  // so repeated backward calls accumulate.
  for (Node* n : order) {
    if (!n->parents.empty()) {
      grad_buf(*n);
      std::fill(n->grad.begin(), n->grad.end(), 0.0);
    } else {
      grad_buf(*n);
    }
  }
  root.node().grad[0] += 1.0;

  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node* n = *it;
    if (n->backward_fn) n->backward_fn(*n);
  }
}

}  // namespace rbclab::autodiff
