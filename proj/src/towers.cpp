#include "nillab/towers.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

#include "nillab/rng.hpp"

namespace nillab {

namespace {

int rank_of(RatMat m) { return rref(m); }

RatVec rat_row(const IntVec& v) {
  RatVec r(v.size());
  for (size_t i = 0; i < v.size(); ++i) r[i] = Rat(v[i]);
  return r;
}

}  // namespace

CentralSubspace rational_envelope(const Lattice& lat, const AlgebraVector& Z,
                                  long denom_bound, double tol) {
  const LieAlgebra& alg = lat.algebra();
  const int m = alg.dim();
  const int d = alg.series_dim(alg.step() - 1);  // dim g_k
  if (!in_trailing_span(alg, Z.f(), d, tol))
    throw std::runtime_error("rational_envelope: vector is not in the top series term");

  // Work in g_k coordinates. Rows of emb are the current candidate subspace
  // basis (integer vectors); w are the coordinates of Z in that basis. Each
  // detected integer relation cuts the subspace by one dimension.
  IntMat emb;
  std::vector<double> w(d);
  for (int i = 0; i < d; ++i) {
    IntVec e(d, Int(0));
    e[i] = 1;
    emb.push_back(e);
    w[i] = Z.f()[m - d + i];
  }
  for (;;) {
    auto rel = integer_relation(w, tol, denom_bound);
    if (rel.empty()) break;
    const int e = static_cast<int>(emb.size());
    if (e == 1) throw std::runtime_error("rational_envelope: vector is numerically zero");
    IntVec relv(e);
    for (int i = 0; i < e; ++i) relv[i] = rel[i];
    IntMat ker = integer_kernel({relv});  // (e-1) x e
    IntMat next(ker.size(), IntVec(d, Int(0)));
    for (size_t r = 0; r < ker.size(); ++r) {
      for (int c = 0; c < e; ++c) {
        for (int j = 0; j < d; ++j) next[r][j] += ker[r][c] * emb[c][j];
      }
    }
    emb = std::move(next);
    // Coordinates of Z in the shrunken basis: least squares (Z lies in the
    // subspace up to tol by construction).
    const int ne = static_cast<int>(emb.size());
    std::vector<std::vector<double>> g(ne, std::vector<double>(ne, 0.0));
    std::vector<double> rhs(ne, 0.0);
    for (int a = 0; a < ne; ++a) {
      for (int b = 0; b < ne; ++b) {
        for (int j = 0; j < d; ++j)
          g[a][b] += static_cast<double>(emb[a][j]) * static_cast<double>(emb[b][j]);
      }
      for (int j = 0; j < d; ++j)
        rhs[a] += static_cast<double>(emb[a][j]) * Z.f()[m - d + j];
    }
    for (int col = 0; col < ne; ++col) {
      int piv = col;
      for (int r = col + 1; r < ne; ++r)
        if (std::abs(g[r][col]) > std::abs(g[piv][col])) piv = r;
      std::swap(g[col], g[piv]);
      std::swap(rhs[col], rhs[piv]);
      for (int r = 0; r < ne; ++r) {
        if (r == col) continue;
        const double f = g[r][col] / g[col][col];
        for (int cc = col; cc < ne; ++cc) g[r][cc] -= f * g[col][cc];
        rhs[r] -= f * rhs[col];
      }
    }
    w.resize(ne);
    for (int i = 0; i < ne; ++i) w[i] = rhs[i] / g[i][i];
  }

  RatMat basis;
  for (const auto& row : emb) {
    RatVec v(m, Rat(0));
    for (int j = 0; j < d; ++j) v[m - d + j] = Rat(row[j]);
    basis.push_back(std::move(v));
  }
  return CentralSubspace(alg, basis);
}

HeisenbergTriple find_heisenberg_triple(const LieAlgebra& alg, const AlgebraVector& X,
                                        std::uint64_t seed, long denom_bound, double tol) {
  if (alg.step() < 2) throw std::runtime_error("heisenberg triple: algebra is abelian");
  if (!is_completely_irrational(alg, X, tol, denom_bound))
    throw std::runtime_error("heisenberg triple: frequency vector is not completely irrational");

  Lattice lat(alg);
  const int m = alg.dim();
  const int dk1 = alg.series_dim(alg.step() - 2);  // dim g_{k-1}
  const int dk = alg.series_dim(alg.step() - 1);   // dim g_k
  int achieved = -1;
  for (int attempt = 0; attempt < 32; ++attempt) {
    CounterRng rng(seed, attempt);
    std::vector<double> y(m, 0.0);
    for (int i = m - dk1; i < m; ++i) y[i] = 1.0 + rng.uniform();
    auto Y = AlgebraVector::floating(y);
    auto Z = AlgebraVector::floating(bracket_t(alg, X.f(), y));
    try {
      auto env = rational_envelope(lat, Z, denom_bound, tol);
      achieved = env.fiber_dim();
      if (achieved == dk) return {X, Y, Z};
    } catch (const std::runtime_error&) {
      achieved = 0;  // Z numerically zero
    }
  }
  throw std::runtime_error(
      "heisenberg triple: retry budget exhausted, envelope dimension " +
      std::to_string(achieved) + " of " + std::to_string(dk));
}

QuotientResult central_quotient(const std::shared_ptr<const LieAlgebra>& alg_ptr,
                                const CentralSubspace& envelope, const AlgebraVector& X) {
  const LieAlgebra& alg = *alg_ptr;
  if (alg.step() < 2) throw std::runtime_error("central quotient: algebra is abelian");
  const int m = alg.dim();
  const int d = envelope.fiber_dim();
  const int q = m - d;

  RatMat zb;
  for (const auto& row : envelope.lattice_basis()) zb.push_back(rat_row(row));

  // Lexicographically first subset of the old basis completing the envelope.
  std::vector<int> keep;
  RatMat acc = zb;
  int rank = rank_of(acc);
  for (int i = 0; i < m && static_cast<int>(keep.size()) < q; ++i) {
    RatVec e(m, Rat(0));
    e[i] = 1;
    acc.push_back(e);
    const int r = rank_of(acc);
    if (r > rank) {
      keep.push_back(i);
      rank = r;
    } else {
      acc.pop_back();
    }
  }
  if (static_cast<int>(keep.size()) != q)
    throw std::runtime_error("central quotient: basis completion failed");

  // Projection = first q rows of the inverse transpose of the completed basis
  // matrix (rows: kept vectors then envelope basis).
  RatMat bt(m, RatVec(m));  // columns are basis vectors
  for (int c = 0; c < q; ++c) bt[keep[c]][c] = 1;
  for (int c = 0; c < d; ++c) {
    for (int r = 0; r < m; ++r) bt[r][q + c] = zb[c][r];
  }
  RatMat proj(q, RatVec(m));
  for (int j = 0; j < m; ++j) {
    RatVec e(m, Rat(0));
    e[j] = 1;
    RatVec a = solve(bt, e);
    for (int r = 0; r < q; ++r) proj[r][j] = a[r];
  }

  // Quotient structure constants: brackets of kept vectors, projected. Well
  // defined because the envelope is central.
  std::vector<StructureEntry> entries;
  for (int i = 0; i < q; ++i) {
    for (int j = i + 1; j < q; ++j) {
      RatVec ei(m, Rat(0)), ej(m, Rat(0));
      ei[keep[i]] = 1;
      ej[keep[j]] = 1;
      RatVec br = bracket_q(alg, ei, ej);
      for (int s = 0; s < q; ++s) {
        Rat c(0);
        for (int t = 0; t < m; ++t) c += proj[s][t] * br[t];
        if (c != 0) entries.push_back({i, j, s, c});
      }
    }
  }
  auto qalg = std::make_shared<const LieAlgebra>(q, entries);
  auto qlat = std::make_shared<const Lattice>(*qalg);

  std::vector<double> px(q, 0.0);
  for (int r = 0; r < q; ++r) {
    for (int t = 0; t < m; ++t) px[r] += to_double(proj[r][t]) * X.f()[t];
  }
  return {qalg, qlat, AlgebraVector::floating(px), proj};
}

HeisenbergTower build_maximal_tower(const LieAlgebra& alg, const AlgebraVector& X,
                                    std::uint64_t seed, long denom_bound, double tol) {
  if (alg.step() < 2) throw std::runtime_error("tower: algebra is abelian");
  HeisenbergTower tower;
  auto cur = std::make_shared<const LieAlgebra>(alg);
  auto lat = std::make_shared<const Lattice>(*cur);
  AlgebraVector x = X;
  int level = 0;
  while (cur->step() >= 2) {
    if (!is_completely_irrational(*cur, x, tol, denom_bound))
      throw std::runtime_error("tower: projected frequency vector at level " +
                               std::to_string(level) + " is not completely irrational");
    auto triple = find_heisenberg_triple(*cur, x, seed + 1000003u * level, denom_bound, tol);
    auto env = rational_envelope(*lat, triple.Z, denom_bound, tol);
    auto quot = central_quotient(cur, env, x);
    tower.levels.push_back({cur, lat, triple, env, quot.projection});
    cur = quot.algebra;
    lat = quot.lattice;
    x = quot.X;
    ++level;
  }
  tower.base = cur;
  tower.base_lattice = lat;
  tower.base_X = x;
  return tower;
}

}  // namespace nillab
