#pragma once

#include <vector>

namespace rbclab::dns {

/// Chebyshev-Gauss-Lobatto collocation machinery on the wall-normal
/// interval [0, 1], ordered bottom wall first.

/// n nodes: y_i = (1 - cos(pi i/(n-1))) / 2, y_0 = 0, y_{n-1} = 1.
std::vector<double> cgl_nodes(int n);

/// First-derivative collocation matrix (row-major n x n) for the nodes
/// above, built from barycentric weights with the negative-sum diagonal.
std::vector<double> cgl_diff_matrix(int n);

/// Clenshaw-Curtis quadrature weights integrating over [0, 1].
std::vector<double> cgl_quad_weights(int n);

/// Barycentric interpolation row: weights l_i(y) so that
/// f(y) = sum_i row[i] * f(y_i). Exact when y coincides with a node.
std::vector<double> cgl_interp_row(const std::vector<double>& nodes, double y);

/// Dense LU factorization with partial pivoting; factor once, solve many.
class DenseLU {
 public:
  DenseLU() = default;
  /// a is row-major n x n. Throws NumericalError on a singular matrix.
  static DenseLU factor(const std::vector<double>& a, int n);

  /// Solve in place for a row-major n x ncols right-hand side. A complex
  /// column vector is exactly the ncols = 2 case.
  void solve(double* b, int ncols) const;

  int dim() const { return n_; }

 private:
  int n_ = 0;
  std::vector<double> lu_;
  std::vector<int> piv_;
};

}  // namespace rbclab::dns
