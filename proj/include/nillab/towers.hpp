#pragma once

#include <cstdint>
#include <memory>
#include <vector>

#include "nillab/nilmanifold.hpp"

namespace nillab {

// X, Y span a Heisenberg pair over the central Z = [X, Y].
struct HeisenbergTriple {
  AlgebraVector X, Y, Z;
};

// Smallest rational subspace of the top central series term containing Z, up
// to the integer-relation search bound: common kernel of all detected integer
// covectors vanishing on Z.
CentralSubspace rational_envelope(const Lattice& lat, const AlgebraVector& Z,
                                  long denom_bound = 10000, double tol = 1e-10);

// Seeded search for Y in g_{k-1} (coordinates uniform in [1,2]) making the
// envelope of Z = [X, Y] all of g_k. Retries with fresh randomness up to 32
// times; the failure set of the draw has measure zero.
HeisenbergTriple find_heisenberg_triple(const LieAlgebra& alg, const AlgebraVector& X,
                                        std::uint64_t seed, long denom_bound = 10000,
                                        double tol = 1e-10);

// One storey of the tower: the manifold data at this level together with the
// triple, its envelope and the projection onto the next level (rows give the
// quotient coordinates of the old basis vectors).
struct TowerLevel {
  std::shared_ptr<const LieAlgebra> algebra;
  std::shared_ptr<const Lattice> lattice;
  HeisenbergTriple triple;
  CentralSubspace envelope;
  RatMat projection;
};

struct QuotientResult {
  std::shared_ptr<const LieAlgebra> algebra;
  std::shared_ptr<const Lattice> lattice;
  AlgebraVector X;
  RatMat projection;
};

// Quotient by the envelope. The old Malcev basis is completed through the
// envelope by its lexicographically first independent subset, so the map is
// deterministic and exact over the rationals.
QuotientResult central_quotient(const std::shared_ptr<const LieAlgebra>& alg,
                                const CentralSubspace& envelope, const AlgebraVector& X);

struct HeisenbergTower {
  std::vector<TowerLevel> levels;
  std::shared_ptr<const LieAlgebra> base;  // abelian
  std::shared_ptr<const Lattice> base_lattice;
  AlgebraVector base_X;

  int height() const { return static_cast<int>(levels.size()); }
};

// Iterates triple / envelope / quotient until the algebra is abelian. With
// the generic draw each envelope is the full g_k, so the height is step - 1.
HeisenbergTower build_maximal_tower(const LieAlgebra& alg, const AlgebraVector& X,
                                    std::uint64_t seed, long denom_bound = 10000,
                                    double tol = 1e-10);

}  // namespace nillab
