#pragma once

#include <vector>

#include "nillab/rational.hpp"

namespace nillab {

using RatVec = std::vector<Rat>;
using RatMat = std::vector<RatVec>;  // row major
using IntVec = std::vector<Int>;
using IntMat = std::vector<IntVec>;

// In-place reduced row echelon form. Returns the rank.
int rref(RatMat& m);

// Basis of the row space: the nonzero rows of the rref.
RatMat row_space_basis(RatMat m);

// True iff v lies in the span of the rows of `basis` (basis need not be reduced).
bool in_span(const RatMat& basis, const RatVec& v);

// Basis of the right kernel {x : m x = 0}.
RatMat kernel(const RatMat& m);

// Solves A x = b for square invertible A. Throws std::runtime_error if singular.
RatVec solve(RatMat a, RatVec b);

// Z-basis of {x in Z^n : m x = 0}. The kernel lattice is saturated, so the
// basis spans all integer solutions. Computed by a column Hermite reduction.
IntMat integer_kernel(const IntMat& m);

// Scales a rational vector by the lcm of denominators / gcd of numerators to a
// primitive integer vector (zero vector maps to zero).
IntVec primitive_integer(const RatVec& v);

// Lenstra-Lenstra-Lovasz reduction (delta = 3/4) of the lattice spanned by the
// rows of `basis`, using double-precision Gram-Schmidt. Rows must be
// independent. Returns the reduced basis.
std::vector<std::vector<double>> lll_reduce(std::vector<std::vector<double>> basis);

}  // namespace nillab
