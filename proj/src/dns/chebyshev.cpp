#include "rbclab/dns/chebyshev.hpp"

#include <cmath>
#include <cstdlib>

#include "rbclab/errors.hpp"

namespace rbclab::dns {

std::vector<double> cgl_nodes(int n) {
  std::vector<double> y(n);
  for (int i = 0; i < n; ++i) {
    y[i] = 0.5 * (1.0 - std::cos(M_PI * i / (n - 1)));
  }
  y[0] = 0.0;
  y[n - 1] = 1.0;
  return y;
}

namespace {

// Barycentric weights for CGL nodes: (-1)^i with halved endpoints.
std::vector<double> bary_weights(int n) {
  std::vector<double> w(n);
  for (int i = 0; i < n; ++i) w[i] = (i % 2 == 0) ? 1.0 : -1.0;
  w[0] *= 0.5;
  w[n - 1] *= 0.5;
  return w;
}

}  // namespace

std::vector<double> cgl_diff_matrix(int n) {
  const auto y = cgl_nodes(n);
  const auto w = bary_weights(n);
  std::vector<double> d(static_cast<std::size_t>(n) * n, 0.0);
  for (int i = 0; i < n; ++i) {
    double diag = 0.0;
    for (int j = 0; j < n; ++j) {
      if (j == i) continue;
      const double v = (w[j] / w[i]) / (y[i] - y[j]);
      d[static_cast<std::size_t>(i) * n + j] = v;
      diag -= v;
    }
    d[static_cast<std::size_t>(i) * n + i] = diag;
  }
  return d;
}

std::vector<double> cgl_quad_weights(int n) {
  // Clenshaw-Curtis on [-1,1] (Trefethen's clencurt), then scaled by 1/2
  // for the unit interval. Node ordering is symmetric so no flip is needed.
  const int N = n - 1;
  std::vector<double> w(n, 0.0);
  if (N == 0) {
    w[0] = 1.0;
    return w;
  }
  std::vector<double> theta(n);
  for (int i = 0; i < n; ++i) theta[i] = M_PI * i / N;
  std::vector<double> v(n - 2 > 0 ? n - 2 : 0, 1.0);
  if (N % 2 == 0) {
    w[0] = w[n - 1] = 1.0 / (N * N - 1.0);
    for (int k = 1; k <= N / 2 - 1; ++k) {
      for (int i = 1; i < N; ++i)
        v[i - 1] -= 2.0 * std::cos(2.0 * k * theta[i]) / (4.0 * k * k - 1.0);
    }
    for (int i = 1; i < N; ++i) v[i - 1] -= std::cos(N * theta[i]) / (N * N - 1.0);
  } else {
    w[0] = w[n - 1] = 1.0 / (N * N);
    for (int k = 1; k <= (N - 1) / 2; ++k) {
      for (int i = 1; i < N; ++i)
        v[i - 1] -= 2.0 * std::cos(2.0 * k * theta[i]) / (4.0 * k * k - 1.0);
    }
  }
  for (int i = 1; i < N; ++i) w[i] = 2.0 * v[i - 1] / N;
  for (auto& x : w) x *= 0.5;
  return w;
}

std::vector<double> cgl_interp_row(const std::vector<double>& nodes, double y) {
  const int n = static_cast<int>(nodes.size());
  const auto w = bary_weights(n);
  std::vector<double> row(n, 0.0);
  for (int i = 0; i < n; ++i) {
    if (y == nodes[i]) {
      row[i] = 1.0;
      return row;
    }
  }
  double denom = 0.0;
  for (int i = 0; i < n; ++i) {
    row[i] = w[i] / (y - nodes[i]);
    denom += row[i];
  }
  for (auto& x : row) x /= denom;
  return row;
}

DenseLU DenseLU::factor(const std::vector<double>& a, int n) {
  DenseLU f;
  f.n_ = n;
  f.lu_ = a;
  f.piv_.resize(n);
  auto& lu = f.lu_;
  for (int k = 0; k < n; ++k) {
    int p = k;
    double best = std::abs(lu[static_cast<std::size_t>(k) * n + k]);
    for (int i = k + 1; i < n; ++i) {
      const double cand = std::abs(lu[static_cast<std::size_t>(i) * n + k]);
      if (cand > best) {
        best = cand;
        p = i;
      }
    }
    if (best == 0.0) throw NumericalError("DenseLU: singular matrix at pivot " + std::to_string(k));
    f.piv_[k] = p;
    if (p != k) {
      for (int j = 0; j < n; ++j) {
        std::swap(lu[static_cast<std::size_t>(k) * n + j], lu[static_cast<std::size_t>(p) * n + j]);
      }
    }
    const double inv = 1.0 / lu[static_cast<std::size_t>(k) * n + k];
    for (int i = k + 1; i < n; ++i) {
      const double m = lu[static_cast<std::size_t>(i) * n + k] * inv;
      lu[static_cast<std::size_t>(i) * n + k] = m;
      if (m != 0.0) {
        for (int j = k + 1; j < n; ++j) {
          lu[static_cast<std::size_t>(i) * n + j] -= m * lu[static_cast<std::size_t>(k) * n + j];
        }
      }
    }
  }
  return f;
}

void DenseLU::solve(double* b, int ncols) const {
  const int n = n_;
  // apply row permutation
  for (int k = 0; k < n; ++k) {
    const int p = piv_[k];
    if (p != k) {
      for (int c = 0; c < ncols; ++c) std::swap(b[k * ncols + c], b[p * ncols + c]);
    }
  }
  // forward substitution (unit lower)
  for (int i = 1; i < n; ++i) {
    for (int j = 0; j < i; ++j) {
      const double m = lu_[static_cast<std::size_t>(i) * n + j];
      if (m != 0.0) {
        for (int c = 0; c < ncols; ++c) b[i * ncols + c] -= m * b[j * ncols + c];
      }
    }
  }
  // back substitution
  for (int i = n - 1; i >= 0; --i) {
    for (int j = i + 1; j < n; ++j) {
      const double m = lu_[static_cast<std::size_t>(i) * n + j];
      if (m != 0.0) {
        for (int c = 0; c < ncols; ++c) b[i * ncols + c] -= m * b[j * ncols + c];
      }
    }
    const double inv = 1.0 / lu_[static_cast<std::size_t>(i) * n + i];
    for (int c = 0; c < ncols; ++c) b[i * ncols + c] *= inv;
  }
}

}  // namespace rbclab::dns
