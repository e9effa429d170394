#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "nillab/linalg.hpp"
#include "nillab/rational.hpp"

namespace nillab {

// Sparse structure-constant entry, i < j, meaning [E_i, E_j] = sum_s c E_s.
// Indices are 0-based here; the on-disk spec format is 1-based.
struct StructureEntry {
  int i, j, s;
  Rat c;
};

// Nilpotent Lie algebra given by exact rational structure constants in a
// fixed ordered basis. The basis is required to be a Malcev basis adapted to
// the descending central series: each series term is the span of a trailing
// block of basis vectors, and dropping the first l vectors spans a
// subalgebra. Antisymmetry, the Jacobi identity, nilpotency and the adapted
// property are validated at construction; violations throw.
class LieAlgebra {
 public:
  LieAlgebra(int dim, const std::vector<StructureEntry>& entries,
             int declared_step = -1);

  int dim() const { return dim_; }
  int step() const { return step_; }

  // Abelianization dimension n = dim g / [g, g].
  int abelian_dim() const {
    return dim_ - (series_dims_.size() > 1 ? series_dims_[1] : 0);
  }

  const Rat& c(int i, int j, int s) const { return c_[(i * dim_ + j) * dim_ + s]; }

  // Descending central series g_1 = g, ..., g_step (nonzero). Each term is the
  // span of the trailing series_dim(j) basis vectors.
  int series_len() const { return static_cast<int>(series_dims_.size()); }
  int series_dim(int j) const { return series_dims_[j]; }  // j is 0-based: g_{j+1}
  RatMat series_basis(int j) const;  // row basis of g_{j+1}

  struct FTerm {
    int i, j, s;
    double c;
  };
  const std::vector<FTerm>& fterms() const { return fterms_; }

  struct BchWord {
    std::vector<std::uint8_t> letters;  // 0 = first argument, 1 = second
    Rat coeff;
    double fcoeff;
  };
  // Dynkin-series words of length <= step, merged and with zero terms dropped.
  const std::vector<BchWord>& bch_words() const { return bch_words_; }

  // Largest supported truncation depth of the BCH series.
  static constexpr int kMaxStep = 6;

 private:
  int dim_;
  int step_ = 0;
  std::vector<Rat> c_;                 // dense dim^3 tensor
  std::vector<int> series_dims_;      // dims of g_1 .. g_step
  std::vector<FTerm> fterms_;          // i < j entries only
  std::vector<BchWord> bch_words_;
};

// Element of the algebra in the fixed basis. Dual regime: exact rational
// coordinates for algebraic construction, doubles for dynamics. Mixing
// regimes in binary operations coerces to float (a warning is logged once).
class AlgebraVector {
 public:
  AlgebraVector() = default;
  static AlgebraVector rational(RatVec q);
  static AlgebraVector floating(std::vector<double> f);
  static AlgebraVector basis(int dim, int index, const Rat& scale = Rat(1));
  static AlgebraVector zero_rational(int dim) { return rational(RatVec(dim, Rat(0))); }

  bool exact() const { return exact_; }
  int dim() const { return static_cast<int>(f_.size()); }
  const RatVec& q() const;
  const std::vector<double>& f() const { return f_; }
  double norm_inf() const;

  AlgebraVector scaled(double s) const;  // float result
  friend AlgebraVector operator+(const AlgebraVector& a, const AlgebraVector& b);
  friend AlgebraVector operator-(const AlgebraVector& a, const AlgebraVector& b);

 private:
  bool exact_ = false;
  RatVec q_;
  std::vector<double> f_;
};

// --- Float/dual coordinate pipelines (hot path) -----------------------------

template <class S>
std::vector<S> bracket_t(const LieAlgebra& alg, const std::vector<S>& a,
                         const std::vector<S>& b) {
  std::vector<S> out(alg.dim(), S(0.0));
  for (const auto& t : alg.fterms()) {
    out[t.s] += S(t.c) * (a[t.i] * b[t.j] - a[t.j] * b[t.i]);
  }
  return out;
}

template <class S>
std::vector<S> bch_t(const LieAlgebra& alg, const std::vector<S>& a,
                     const std::vector<S>& b) {
  std::vector<S> out(alg.dim(), S(0.0));
  std::vector<S> r;
  for (const auto& w : alg.bch_words()) {
    const size_t m = w.letters.size();
    r = w.letters[m - 1] ? b : a;
    for (size_t i = m - 1; i-- > 0;) {
      r = bracket_t(alg, w.letters[i] ? b : a, r);
    }
    for (int k = 0; k < alg.dim(); ++k) out[k] += S(w.fcoeff) * r[k];
  }
  return out;
}

// --- Exact and tagged operations --------------------------------------------

RatVec bracket_q(const LieAlgebra& alg, const RatVec& a, const RatVec& b);
RatVec bch_q(const LieAlgebra& alg, const RatVec& a, const RatVec& b);

AlgebraVector bracket(const LieAlgebra& alg, const AlgebraVector& a,
                      const AlgebraVector& b);
AlgebraVector bch(const LieAlgebra& alg, const AlgebraVector& a,
                  const AlgebraVector& b);

// Membership of a float vector in a trailing-coordinate subspace: all leading
// coordinates below tol.
bool in_trailing_span(const LieAlgebra& alg, const std::vector<double>& v,
                      int trailing_dim, double tol = 1e-9);

// Certified-up-to-(tol, bound) complete irrationality of the Abelianized
// frequency vector: true iff no nonzero integer vector m with |m_i| <= bound
// has |<m, X^Ab>| < tol. Exhaustive in dimensions 1-2, LLL-backed above.
bool is_completely_irrational(const LieAlgebra& alg, const AlgebraVector& X,
                              double tol = 1e-10, long denom_bound = 10000);

// Searches for a nonzero integer vector m, |m_i| <= bound, with
// |<m, x>| < tol. Returns empty if none found.
std::vector<long> integer_relation(const std::vector<double>& x, double tol,
                                   long bound);

}  // namespace nillab
