#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace rbclab::autodiff {

using Shape = std::vector<int>;

int64_t shape_size(const Shape& s);
std::string shape_str(const Shape& s);

/// Dense double-precision array with reverse-mode automatic differentiation.
///
/// A Tensor is a shared handle to a graph node holding values, an optional
/// gradient buffer, and (for op results) the operand handles plus the local
/// adjoint rule. The recorded DAG is the computation graph: operands always
/// precede their results, and backward() visits each reachable node exactly
/// once. Graphs and their tensors are confined to one thread; independent
/// graphs may run concurrently.
class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor full(Shape shape, double value, bool requires_grad = false);
  static Tensor from(Shape shape, std::vector<double> values, bool requires_grad = false);
  static Tensor scalar(double value, bool requires_grad = false);

  bool valid() const { return n_ != nullptr; }
  const Shape& shape() const;
  int64_t size() const;
  std::span<double> values();
  std::span<const double> values() const;
  double value_at(int64_t i) const { return values()[i]; }
  double scalar_value() const;

  bool requires_grad() const;
  bool tracked() const;

  /// Gradient buffer; allocated zero-filled on first access.
  std::span<double> grad();
  std::span<const double> grad() const;
  void zero_grad();

  /// Identity of the underlying node (aliasing checks in tests).
  const void* node_id() const { return n_.get(); }

  struct Node;
  explicit Tensor(std::shared_ptr<Node> n) : n_(std::move(n)) {}
  Node& node() const { return *n_; }
  const std::shared_ptr<Node>& handle() const { return n_; }

 private:
  std::shared_ptr<Node> n_;
};

struct Tensor::Node {
  Shape shape;
  std::vector<double> val;
  std::vector<double> grad;
  bool requires_grad = false;  // leaf created with gradient demand
  bool track = false;          // participates in some gradient graph
  std::vector<std::shared_ptr<Node>> parents;
  std::function<void(Node&)> backward_fn;
};

// ---- operations -----------------------------------------------------------

/// C = A[m x k] * B[k x n]; adjoints accumulate into both operands.
Tensor matmul(const Tensor& a, const Tensor& b);

/// 3x3 cross-correlation with one-cell zero padding, stride 1.
/// input C x H x W (or batched B x C x H x W), kernels K x C x 3 x 3.
Tensor conv2d_zero_pad(const Tensor& input, const Tensor& kernels);

/// Reverse the width (last) axis per channel and multiply channel c by
/// sign_mask[c]. Input rank 3 (C x H x W) or 4 (B x C x H x W). An involution;
/// the adjoint is the same reversal and signs.
Tensor reverse_width(const Tensor& input, const std::vector<double>& sign_mask);

// Elementwise suite. Shapes must be identical, except that one operand of
// add/sub/mul may be scalar-shaped (size 1); no other broadcasting exists.
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double s);
Tensor tanh_(const Tensor& a);
Tensor softplus(const Tensor& a);
Tensor exp_(const Tensor& a);
Tensor log_(const Tensor& a);
Tensor sum(const Tensor& a);
Tensor mean(const Tensor& a);

/// Elementwise min. The adjoint routes to the smaller operand; on ties the
/// first operand receives it.
Tensor min_pairwise(const Tensor& a, const Tensor& b);

/// Clamp to [lo, hi]. The adjoint passes through on the closed band and is
/// zero outside it.
Tensor clip_by_value(const Tensor& a, double lo, double hi);

/// Elementwise log density of a diagonal Gaussian with std = exp(log_std).
/// All three shapes identical; differentiable in every operand.
Tensor gaussian_logpdf(const Tensor& x, const Tensor& mean, const Tensor& log_std);

/// out[r] = x[r] + b for every row of x[B x n]; adjoint of b sums over rows.
Tensor add_rowvec(const Tensor& x, const Tensor& b);

/// Copy values into a new shape of identical size.
Tensor reshape(const Tensor& a, Shape shape);

/// Replicate a size-1 tensor into the given shape; adjoint sums back.
Tensor expand_scalar(const Tensor& a, Shape shape);

/// Mean over the trailing H x W axes: K x H x W -> K, or B x K x H x W -> B x K.
Tensor mean_spatial(const Tensor& a);

/// Reverse-mode sweep from a scalar-shaped, graph-tracked root. All tracked
/// leaves receive accumulated adjoints. Interior gradients are reset per
/// call; repeated calls without zero_grad() accumulate into leaves.
void backward(const Tensor& root);

}  // namespace rbclab::autodiff
