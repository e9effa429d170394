#pragma once

#include <vector>

#include "nillab/dual.hpp"
#include "nillab/lie_algebra.hpp"
#include "nillab/rng.hpp"

namespace nillab {

// Point of M = Gamma\G: reduced Malcev coordinates of the second kind of the
// canonical coset representative, each entry in [0, 1).
struct NilPoint {
  std::vector<double> x;

  int dim() const { return static_cast<int>(x.size()); }
};

// Sup distance on M with per-coordinate wraparound.
double nil_distance(const NilPoint& a, const NilPoint& b);

// Coordinate wraparound tolerance at 1.0: values within it of 1 wrap to 0.
inline constexpr double kReduceTol = 1e-9;

// --- Coordinates of the second kind (templated on double / Dual) ------------

// exp(v) = exp(x_1 E_1) ... exp(x_m E_m): sequential peeling, valid because
// the Malcev basis makes each trailing block a subalgebra.
template <class S>
std::vector<S> first_to_second_t(const LieAlgebra& alg, std::vector<S> v) {
  const int m = alg.dim();
  std::vector<S> out(m);
  std::vector<S> step(m, S(0.0));
  for (int i = 0; i < m; ++i) {
    out[i] = v[i];
    if (i + 1 == m) break;
    step[i] = -v[i];
    v = bch_t(alg, step, v);
    step[i] = S(0.0);
  }
  return out;
}

template <class S>
std::vector<S> second_to_first_t(const LieAlgebra& alg, const std::vector<S>& x) {
  const int m = alg.dim();
  std::vector<S> v(m, S(0.0));
  std::vector<S> step(m, S(0.0));
  for (int i = 0; i < m; ++i) {
    step[i] = x[i];
    v = bch_t(alg, v, step);
    step[i] = S(0.0);
  }
  return v;
}

inline std::vector<double> first_to_second(const LieAlgebra& alg,
                                           const std::vector<double>& v) {
  return first_to_second_t(alg, v);
}
inline std::vector<double> second_to_first(const LieAlgebra& alg,
                                           const std::vector<double>& x) {
  return second_to_first_t(alg, x);
}

RatVec first_to_second_q(const LieAlgebra& alg, RatVec v);
RatVec second_to_first_q(const LieAlgebra& alg, const RatVec& x);

// The lattice generated by the integer second-kind words of the Malcev basis.
// Construction spot-checks (exactly, over the rationals) that products of
// generator words again have integer second-kind coordinates.
class Lattice {
 public:
  explicit Lattice(const LieAlgebra& alg);

  const LieAlgebra& algebra() const { return *alg_; }

 private:
  const LieAlgebra* alg_;
};

// Canonical representative of the coset Gamma exp(v): second-kind coordinates
// reduced into [0,1) by integer lattice words, first coordinate to last.
NilPoint reduce(const Lattice& lat, const std::vector<double>& first_kind);

// reduce applied to an already-second-kind coordinate vector.
NilPoint reduce_second_kind(const Lattice& lat, const std::vector<double>& second_kind);

// n independent Haar samples (uniform second-kind coordinates); deterministic
// for a fixed seed and independent of worker partitioning.
std::vector<NilPoint> haar_sample(const Lattice& lat, int n, std::uint64_t seed);

// First n = dim(g/[g,g]) coordinates, mod 1.
std::vector<double> toral_project(const LieAlgebra& alg, const NilPoint& p);

// Central rational subspace z of g_k with its intersection lattice
// Lambda = log(Gamma) /\ z. Fiber coordinates are taken in the Lambda basis,
// so the fiber torus is R^d / Z^d and the dual lattice is the standard dual.
class CentralSubspace {
 public:
  // Builds z from a rational row basis; validates centrality and computes a
  // Z-basis of the intersection lattice.
  CentralSubspace(const LieAlgebra& alg, const RatMat& basis);

  int ambient_dim() const { return static_cast<int>(lattice_basis_[0].size()); }
  int fiber_dim() const { return static_cast<int>(lattice_basis_.size()); }

  // Rows: Lambda basis vectors in algebra coordinates.
  const std::vector<std::vector<double>>& lattice_basis_f() const { return fbasis_; }
  const IntMat& lattice_basis() const { return lattice_basis_; }

  // Nonempty iff every Lambda basis vector is a standard basis direction;
  // entry j is that coordinate index. All shipped algebras satisfy this.
  const std::vector<int>& coord_aligned() const { return coord_idx_; }

  // Coordinates of a central float vector in the Lambda basis.
  std::vector<double> fiber_coords(const std::vector<double>& v) const;

 private:
  IntMat lattice_basis_;
  std::vector<std::vector<double>> fbasis_;
  std::vector<int> coord_idx_;
};

// x . exp(sum t_i lambda_i), reduced. t is in the Lambda basis of z.
NilPoint fiber_act(const Lattice& lat, const NilPoint& x,
                   const CentralSubspace& z, const std::vector<double>& t);

}  // namespace nillab
