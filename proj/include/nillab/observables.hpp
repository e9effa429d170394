#pragma once

#include <array>
#include <complex>
#include <functional>
#include <memory>
#include <string>
#include <utility>
#include <vector>

#include "nillab/nilmanifold.hpp"

namespace nillab {

using Cplx = std::complex<double>;
using CDual = std::array<Dual, 2>;  // re, im

// Smooth complex function on M, stored as an evaluator on raw second-kind
// coordinates (any reals, not only the fundamental domain) plus the same
// evaluator lifted to dual numbers. Directional derivatives along
// right-invariant fields are computed by pushing a dual perturbation through
// the group law, never by finite differences.
struct Observable {
  std::shared_ptr<const LieAlgebra> alg;
  std::function<Cplx(const std::vector<double>&)> val;
  std::function<CDual(const std::vector<Dual>&)> vald;
  std::string tag;

  Cplx eval(const NilPoint& p) const { return val(p.x); }

  // d/ds f(x exp(sW)) at s = 0, W in first-kind coordinates.
  Cplx dderiv(const std::vector<double>& W, const NilPoint& p) const;
};

inline std::array<double, 2> obs_eval(const Observable& f, const std::vector<double>& x) {
  const Cplx c = f.val(x);
  return {c.real(), c.imag()};
}
inline CDual obs_eval(const Observable& f, const std::vector<Dual>& x) { return f.vald(x); }

// Wraps a functor templated on the scalar type (double / Dual), returning
// {re, im} as std::array<S, 2>.
template <class F>
Observable make_observable(std::shared_ptr<const LieAlgebra> alg, F f, std::string tag) {
  Observable o;
  o.alg = std::move(alg);
  o.tag = std::move(tag);
  o.val = [f](const std::vector<double>& x) {
    const auto r = f(x);
    return Cplx(r[0], r[1]);
  };
  o.vald = [f](const std::vector<Dual>& x) { return f(x); };
  return o;
}

Observable constant_obs(std::shared_ptr<const LieAlgebra> alg, Cplx c);
Observable operator+(const Observable& a, const Observable& b);
Observable operator-(const Observable& a, const Observable& b);
Observable operator*(const Observable& a, const Observable& b);
Observable operator*(double s, const Observable& a);
Observable operator*(Cplx s, const Observable& a);
Observable operator+(Cplx c, const Observable& a);
Observable real_part(const Observable& a);

// x -> exp(2 pi i <m, toral_project(x)>).
Observable torus_character(std::shared_ptr<const LieAlgebra> alg, std::vector<long> m);

// Canonical member of H_v: Gaussian window on second-kind coordinates,
// periodized over the noncentral lattice words, with the central sum and
// fiber projection folded into a closed form. The character law
// f(x exp(t lambda)) = exp(2 pi i <v,t>) f(x) holds exactly for any
// truncation; left lattice invariance holds up to the Gaussian tail.
// Requires a coordinate-aligned central subspace.
Observable fiber_character_obs(std::shared_ptr<const LieAlgebra> alg, const CentralSubspace& z,
                               const std::vector<long>& v, double width = 0.5,
                               int truncation = 4);

// Fiber Fourier coefficient at v by the trapezoid rule over the fiber torus,
// exact for fiber polynomials of degree < grid / 2.
Observable project_fiber(const Observable& f, const CentralSubspace& z,
                         const std::vector<long>& v, int grid);

// One nonzero fiber mode: v in the Lambda basis dual (integer), coefficient
// function satisfying the H_v law.
struct FiberTerm {
  std::vector<long> v;
  Observable f;
};

// Finite fiber-Fourier sum. The zero mode is either a plain H_0 observable or,
// for tower polynomials, a polynomial on the quotient level composed with the
// tower projection.
struct FiberPolynomial {
  std::shared_ptr<const LieAlgebra> alg;
  std::shared_ptr<const CentralSubspace> z;  // null at the abelian base
  std::vector<FiberTerm> terms;
  Observable zero_obs;                              // used when zero_next is null
  std::shared_ptr<const FiberPolynomial> zero_next;  // tower recursion
  RatMat projection;                                 // to zero_next's algebra

  // d(v) with <v, Z^d> = d(v) Z, the gcd of the mode vector.
  static long mode_degree(const std::vector<long>& v);
  long degree() const;

  // Single evaluator for the whole sum on this level.
  Observable flatten() const;
};

struct AlphaParts {
  FiberPolynomial zero;  // fiber average, Phi^z invariant
  FiberPolynomial perp;  // zero-mean fiber part
  double min_value;      // sampled minimum of the input, the positivity margin
};

// Splits alpha into its fiber average and the zero-mean remainder; validates
// strict positivity on 1e5 Haar samples.
AlphaParts decompose_alpha(const FiberPolynomial& alpha, const Lattice& lat);

// Trigonometric polynomial on the toral factor.
struct TorusMode {
  std::vector<long> m;
  Cplx c;
};

Observable torus_poly_obs(std::shared_ptr<const LieAlgebra> alg,
                          const std::vector<TorusMode>& modes);

// One central character mode with its window parameters kept visible, so
// downstream consumers can rebuild or transform the term analytically.
struct FiberModeSpec {
  std::vector<long> v;
  Cplx coeff{0.0, 0.0};
  double width = 0.5;
  int truncation = 4;
};

// Structured finite harmonic sum: constant + toral characters + central fiber
// character modes. Consumers that recognize this description can integrate it
// along orbits in closed form; opaque observables cannot.
struct HarmonicSpec {
  Cplx constant{0.0, 0.0};
  std::vector<TorusMode> toral;
  std::vector<FiberModeSpec> fiber;

  bool fiber_free() const { return fiber.empty(); }
};

// Plain evaluator for the sum. z may be null when spec.fiber is empty.
Observable harmonic_obs(std::shared_ptr<const LieAlgebra> alg, const CentralSubspace* z,
                        const HarmonicSpec& spec);

// FiberPolynomial with zero part constant + toral and one term per fiber mode.
FiberPolynomial harmonic_time_change(std::shared_ptr<const LieAlgebra> alg,
                                     std::shared_ptr<const CentralSubspace> z,
                                     const HarmonicSpec& spec);

// Quotient-level observable composed with a projection (rows: quotient
// coordinates of the total basis, acting on first-kind coordinates).
Observable lift_observable(std::shared_ptr<const LieAlgebra> total,
                           std::shared_ptr<const LieAlgebra> base, const RatMat& projection,
                           const Observable& f);

// Solves the linear-flow cohomological equation omega . grad u = p - mean(p):
// u_m = p_m / (2 pi i <m, omega>). Throws on a resonant nonzero mode.
std::vector<TorusMode> torus_transfer(const std::vector<TorusMode>& p,
                                      const std::vector<double>& omega);

}  // namespace nillab
