#include "nillab/linalg.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <stdexcept>

namespace nillab {

int rref(RatMat& m) {
  if (m.empty()) return 0;
  const int rows = static_cast<int>(m.size());
  const int cols = static_cast<int>(m[0].size());
  int rank = 0;
  for (int c = 0; c < cols && rank < rows; ++c) {
    int pivot = -1;
    for (int r = rank; r < rows; ++r) {
      if (m[r][c] != 0) { pivot = r; break; }
    }
    if (pivot < 0) continue;
    std::swap(m[rank], m[pivot]);
    const Rat inv = m[rank][c];
    for (int j = c; j < cols; ++j) m[rank][j] /= inv;
    for (int r = 0; r < rows; ++r) {
      if (r == rank || m[r][c] == 0) continue;
      const Rat f = m[r][c];
      for (int j = c; j < cols; ++j) m[r][j] -= f * m[rank][j];
    }
    ++rank;
  }
  m.resize(rank);
  return rank;
}

RatMat row_space_basis(RatMat m) {
  rref(m);
  return m;
}

bool in_span(const RatMat& basis, const RatVec& v) {
  RatMat m = basis;
  const int rank = rref(m);
  m.push_back(v);
  return rref(m) == rank;
}

RatMat kernel(const RatMat& m) {
  if (m.empty()) return {};
  const int cols = static_cast<int>(m[0].size());
  RatMat r = m;
  rref(r);
  std::vector<int> pivot_col;
  std::vector<bool> is_pivot(cols, false);
  for (const auto& row : r) {
    for (int c = 0; c < cols; ++c) {
      if (row[c] != 0) { pivot_col.push_back(c); is_pivot[c] = true; break; }
    }
  }
  RatMat ker;
  for (int c = 0; c < cols; ++c) {
    if (is_pivot[c]) continue;
    RatVec x(cols, Rat(0));
    x[c] = 1;
    for (size_t i = 0; i < pivot_col.size(); ++i) x[pivot_col[i]] = -r[i][c];
    ker.push_back(std::move(x));
  }
  return ker;
}

RatVec solve(RatMat a, RatVec b) {
  const int n = static_cast<int>(a.size());
  for (int i = 0; i < n; ++i) a[i].push_back(b[i]);
  if (rref(a) != n) throw std::runtime_error("solve: singular matrix");
  RatVec x(n);
  for (int i = 0; i < n; ++i) x[i] = a[i][n];
  return x;
}

namespace {

// Column Hermite reduction: applies unimodular column operations to m while
// mirroring them on u (initialized to identity). After the sweep the columns
// of u matching zero columns of m span the integer kernel.
IntMat identity_int(int n) {
  IntMat u(n, IntVec(n, Int(0)));
  for (int i = 0; i < n; ++i) u[i][i] = 1;
  return u;
}

}  // namespace

IntMat integer_kernel(const IntMat& m) {
  if (m.empty()) return {};
  const int rows = static_cast<int>(m.size());
  const int cols = static_cast<int>(m[0].size());
  IntMat a = m;
  IntMat u = identity_int(cols);
  int row = 0, lead = 0;
  auto col_swap = [&](int i, int j) {
    for (int r = 0; r < rows; ++r) std::swap(a[r][i], a[r][j]);
    for (int r = 0; r < cols; ++r) std::swap(u[r][i], u[r][j]);
  };
  auto col_axpy = [&](int dst, int src, const Int& q) {  // col dst -= q * col src
    for (int r = 0; r < rows; ++r) a[r][dst] -= q * a[r][src];
    for (int r = 0; r < cols; ++r) u[r][dst] -= q * u[r][src];
  };
  while (row < rows && lead < cols) {
    // Euclidean sweep on columns lead..cols-1 at this row.
    for (;;) {
      int p = -1;
      for (int c = lead; c < cols; ++c) {
        if (a[row][c] != 0 && (p < 0 || abs(a[row][c]) < abs(a[row][p]))) p = c;
      }
      if (p < 0) break;
      col_swap(lead, p);
      bool cleared = true;
      for (int c = lead + 1; c < cols; ++c) {
        if (a[row][c] == 0) continue;
        const Int q = a[row][c] / a[row][lead];
        col_axpy(c, lead, q);
        if (a[row][c] != 0) cleared = false;
      }
      if (cleared) { ++lead; break; }
    }
    ++row;
  }
  // Kernel basis: columns of u whose a-column is entirely zero.
  IntMat ker;
  for (int c = 0; c < cols; ++c) {
    bool zero = true;
    for (int r = 0; r < rows; ++r) {
      if (a[r][c] != 0) { zero = false; break; }
    }
    if (!zero) continue;
    IntVec v(cols);
    for (int r = 0; r < cols; ++r) v[r] = u[r][c];
    ker.push_back(std::move(v));
  }
  return ker;
}

IntVec primitive_integer(const RatVec& v) {
  Int l = 1;
  for (const auto& x : v) l = lcm(l, denominator(x));
  IntVec w(v.size());
  Int g = 0;
  for (size_t i = 0; i < v.size(); ++i) {
    w[i] = numerator(v[i]) * (l / denominator(v[i]));
    g = gcd(g, w[i]);
  }
  if (g > 1) {
    for (auto& x : w) x /= g;
  }
  return w;
}

std::vector<std::vector<double>> lll_reduce(std::vector<std::vector<double>> b) {
  const int n = static_cast<int>(b.size());
  if (n == 0) return b;
  const int dim = static_cast<int>(b[0].size());
  auto dot = [&](const std::vector<double>& x, const std::vector<double>& y) {
    double s = 0;
    for (int i = 0; i < dim; ++i) s += x[i] * y[i];
    return s;
  };
  std::vector<std::vector<double>> bstar(n, std::vector<double>(dim));
  std::vector<std::vector<double>> mu(n, std::vector<double>(n, 0.0));
  std::vector<double> nrm(n);
  auto gram = [&]() {
    for (int i = 0; i < n; ++i) {
      bstar[i] = b[i];
      for (int j = 0; j < i; ++j) {
        mu[i][j] = nrm[j] > 0 ? dot(b[i], bstar[j]) / nrm[j] : 0.0;
        for (int k = 0; k < dim; ++k) bstar[i][k] -= mu[i][j] * bstar[j][k];
      }
      nrm[i] = dot(bstar[i], bstar[i]);
    }
  };
  gram();
  int k = 1;
  int guard = 0;
  while (k < n && guard++ < 100000) {
    for (int j = k - 1; j >= 0; --j) {
      const double q = std::round(mu[k][j]);
      if (q != 0.0) {
        for (int c = 0; c < dim; ++c) b[k][c] -= q * b[j][c];
      }
    }
    gram();
    if (nrm[k] >= (0.75 - mu[k][k - 1] * mu[k][k - 1]) * nrm[k - 1]) {
      ++k;
    } else {
      std::swap(b[k], b[k - 1]);
      gram();
      k = std::max(k - 1, 1);
    }
  }
  return b;
}

}  // namespace nillab
