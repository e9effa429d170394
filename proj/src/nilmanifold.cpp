#include "nillab/nilmanifold.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

namespace nillab {

double nil_distance(const NilPoint& a, const NilPoint& b) {
  double d = 0;
  for (int i = 0; i < a.dim(); ++i) {
    double w = std::abs(a.x[i] - b.x[i]);
    w = std::min(w, 1.0 - w);
    d = std::max(d, w);
  }
  return d;
}

RatVec first_to_second_q(const LieAlgebra& alg, RatVec v) {
  const int m = alg.dim();
  RatVec out(m);
  RatVec step(m, Rat(0));
  for (int i = 0; i < m; ++i) {
    out[i] = v[i];
    if (i + 1 == m) break;
    step[i] = -v[i];
    v = bch_q(alg, step, v);
    step[i] = 0;
  }
  return out;
}

RatVec second_to_first_q(const LieAlgebra& alg, const RatVec& x) {
  const int m = alg.dim();
  RatVec v(m, Rat(0));
  RatVec step(m, Rat(0));
  for (int i = 0; i < m; ++i) {
    step[i] = x[i];
    v = bch_q(alg, v, step);
    step[i] = 0;
  }
  return v;
}

Lattice::Lattice(const LieAlgebra& alg) : alg_(&alg) {
  // Integrality spot check, exact over the rationals: products and
  // commutators of generator words must again have integer second-kind
  // coordinates. Commutators matter: fractional structure constants can pass
  // the product check alone.
  const int m = alg.dim();
  auto check_integer = [&](const RatVec& first_kind, const char* what) {
    for (const auto& coord : first_to_second_q(alg, first_kind)) {
      if (denominator(coord) != 1)
        throw std::runtime_error(std::string("structure constants do not close the "
                                             "integer lattice: non-integer ") +
                                 what);
    }
  };
  for (int i = 0; i < m; ++i) {
    for (int j = 0; j < m; ++j) {
      RatVec a(m, Rat(0)), b(m, Rat(0)), b2(m, Rat(0));
      a[i] = 1;
      b[j] = 1;
      b2[j] = 2;
      RatVec va = second_to_first_q(alg, a);
      RatVec vb = second_to_first_q(alg, b);
      RatVec na = va, nb = vb;
      for (auto& x : na) x = -x;
      for (auto& x : nb) x = -x;
      check_integer(bch_q(alg, va, vb), "generator product");
      check_integer(bch_q(alg, va, second_to_first_q(alg, b2)), "generator product");
      check_integer(bch_q(alg, bch_q(alg, bch_q(alg, va, vb), na), nb),
                    "generator commutator");
    }
  }
}

NilPoint reduce(const Lattice& lat, const std::vector<double>& first_kind) {
  // Integer shift at coordinate i commutes past the reduced prefix with
  // corrections in coordinates > i only, so reducing first to last converges.
  // The shift does change later coordinates; re-peel after each one.
  const LieAlgebra& alg = lat.algebra();
  const int m = alg.dim();
  std::vector<double> v = first_kind;
  std::vector<double> shift(m, 0.0);
  NilPoint p;
  p.x.resize(m);
  std::vector<double> s = first_to_second(alg, v);
  for (int i = 0; i < m; ++i) {
    double f = s[i] - std::floor(s[i]);
    if (f >= 1.0 - kReduceTol) f = 0.0;  // wraparound at 1
    p.x[i] = f;
    const double k = s[i] - f;
    if (i + 1 == m || k == 0.0) continue;
    shift[i] = -k;
    v = bch_t(alg, shift, v);
    shift[i] = 0.0;
    s = first_to_second(alg, v);
  }
  return p;
}

NilPoint reduce_second_kind(const Lattice& lat, const std::vector<double>& x) {
  return reduce(lat, second_to_first(lat.algebra(), x));
}

std::vector<NilPoint> haar_sample(const Lattice& lat, int n, std::uint64_t seed) {
  // Chunked streams: stream index depends only on the sample index, so the
  // output is identical however the chunks are assigned to workers.
  constexpr int kChunk = 4096;
  const int m = lat.algebra().dim();
  std::vector<NilPoint> out(n);
  for (int base = 0; base < n; base += kChunk) {
    CounterRng rng(seed, static_cast<std::uint64_t>(base / kChunk));
    const int hi = std::min(n, base + kChunk);
    for (int i = base; i < hi; ++i) {
      out[i].x.resize(m);
      for (int c = 0; c < m; ++c) out[i].x[c] = rng.uniform();
    }
  }
  return out;
}

std::vector<double> toral_project(const LieAlgebra& alg, const NilPoint& p) {
  const int n = alg.abelian_dim();
  std::vector<double> t(n);
  for (int i = 0; i < n; ++i) t[i] = p.x[i] - std::floor(p.x[i]);
  return t;
}

CentralSubspace::CentralSubspace(const LieAlgebra& alg, const RatMat& basis) {
  const int m = alg.dim();
  if (basis.empty()) throw std::runtime_error("central subspace: empty basis");
  // Centrality, exactly.
  for (const auto& v : basis) {
    RatVec ea(m, Rat(0));
    for (int a = 0; a < m; ++a) {
      ea[a] = 1;
      for (const auto& x : bracket_q(alg, ea, v)) {
        if (x != 0) throw std::runtime_error("central subspace: basis vector is not central");
      }
      ea[a] = 0;
    }
  }
  // Lambda = z /\ Z^m: integer kernel of the relations defining z. z is the
  // kernel of C where the rows of C span the orthogonal complement (over Q) of
  // the row space of `basis`; equivalently solve for all x with x in span and
  // x integer. Parametrize span by coefficients: x = B^T c; integer points are
  // found from the kernel construction on the complement matrix.
  RatMat b = basis;
  RatMat complement = kernel(row_space_basis(b));  // rows: covectors vanishing on... (see below)
  // kernel() returns vectors x with (rref basis) x = 0, i.e. the orthogonal
  // complement of the row space. Use these as relation rows C: z = ker C.
  IntMat c_int;
  for (const auto& row : complement) c_int.push_back(primitive_integer(row));
  IntMat lambda;
  if (c_int.empty()) {
    // z is the whole space
    for (int i = 0; i < m; ++i) {
      IntVec e(m, Int(0));
      e[i] = 1;
      lambda.push_back(e);
    }
  } else {
    lambda = integer_kernel(c_int);
  }
  if (static_cast<int>(lambda.size()) != static_cast<int>(row_space_basis(basis).size()))
    throw std::runtime_error("central subspace: basis is not rational w.r.t. the lattice");
  lattice_basis_ = std::move(lambda);
  for (const auto& v : lattice_basis_) {
    std::vector<double> f(m);
    for (int i = 0; i < m; ++i) f[i] = static_cast<double>(v[i]);
    fbasis_.push_back(std::move(f));
  }
  // Detect coordinate alignment (each Lambda vector = +- a standard basis vector).
  coord_idx_.clear();
  for (const auto& v : lattice_basis_) {
    int idx = -1;
    bool aligned = true;
    for (int i = 0; i < m; ++i) {
      if (v[i] == 0) continue;
      if (idx >= 0 || (v[i] != 1 && v[i] != -1)) { aligned = false; break; }
      idx = i;
    }
    if (!aligned || idx < 0) { coord_idx_.clear(); return; }
    coord_idx_.push_back(idx);
  }
}

std::vector<double> CentralSubspace::fiber_coords(const std::vector<double>& v) const {
  // Least-squares via normal equations on the (independent) Lambda basis.
  const int d = fiber_dim();
  const int m = ambient_dim();
  std::vector<std::vector<double>> g(d, std::vector<double>(d, 0.0));
  std::vector<double> rhs(d, 0.0);
  for (int a = 0; a < d; ++a) {
    for (int b = 0; b < d; ++b) {
      for (int i = 0; i < m; ++i) g[a][b] += fbasis_[a][i] * fbasis_[b][i];
    }
    for (int i = 0; i < m; ++i) rhs[a] += fbasis_[a][i] * v[i];
  }
  // Gaussian elimination, d is tiny.
  for (int col = 0; col < d; ++col) {
    int piv = col;
    for (int r = col + 1; r < d; ++r) {
      if (std::abs(g[r][col]) > std::abs(g[piv][col])) piv = r;
    }
    std::swap(g[col], g[piv]);
    std::swap(rhs[col], rhs[piv]);
    for (int r = 0; r < d; ++r) {
      if (r == col) continue;
      const double f = g[r][col] / g[col][col];
      for (int cc = col; cc < d; ++cc) g[r][cc] -= f * g[col][cc];
      rhs[r] -= f * rhs[col];
    }
  }
  std::vector<double> t(d);
  for (int i = 0; i < d; ++i) t[i] = rhs[i] / g[i][i];
  return t;
}

NilPoint fiber_act(const Lattice& lat, const NilPoint& x,
                   const CentralSubspace& z, const std::vector<double>& t) {
  if (static_cast<int>(t.size()) != z.fiber_dim())
    throw std::runtime_error("fiber_act: fiber vector dimension mismatch");
  const LieAlgebra& alg = lat.algebra();
  std::vector<double> w(alg.dim(), 0.0);
  for (int j = 0; j < z.fiber_dim(); ++j) {
    for (int i = 0; i < alg.dim(); ++i) w[i] += t[j] * z.lattice_basis_f()[j][i];
  }
  auto v = second_to_first(alg, x.x);
  return reduce(lat, bch_t(alg, v, w));
}

}  // namespace nillab
