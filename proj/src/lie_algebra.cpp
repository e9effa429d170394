#include "nillab/lie_algebra.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <iostream>
#include <map>

namespace nillab {

namespace {

Rat factorial(int n) {
  Rat r(1);
  for (int i = 2; i <= n; ++i) r *= i;
  return r;
}

using Word = std::vector<std::uint8_t>;

// Dynkin's explicit form of the BCH series:
//   log(e^a e^b) = sum over block sequences (p_1,q_1)..(p_n,q_n), p_i+q_i>=1,
//   of (-1)^(n-1)/n * 1/(sum_i (p_i+q_i)) * 1/(prod_i p_i! q_i!)
//   times the right-nested bracket of the word a^p1 b^q1 ... a^pn b^qn.
// Truncated to total degree <= max_deg; merged by word; words whose nested
// bracket vanishes identically (trailing repeated letter) are dropped.
void enumerate_blocks(int max_deg, int n, int deg, Word& word, Rat coeff,
                      std::map<Word, Rat>& acc) {
  if (n > 0) {
    // close current sequence of n blocks
    Rat total = coeff * ((n - 1) % 2 == 0 ? Rat(1) : Rat(-1)) / Rat(n) / Rat(deg);
    if (word.size() < 2 || word[word.size() - 1] != word[word.size() - 2]) {
      acc[word] += total;
    }
  }
  for (int p = 0; p <= max_deg - deg; ++p) {
    for (int q = (p == 0 ? 1 : 0); p + q <= max_deg - deg; ++q) {
      if (p + q == 0) continue;
      Word w2 = word;
      w2.insert(w2.end(), p, 0);
      w2.insert(w2.end(), q, 1);
      enumerate_blocks(max_deg, n + 1, deg + p + q, w2,
                       coeff / (factorial(p) * factorial(q)), acc);
    }
  }
}

std::map<Word, Rat> dynkin_words(int max_deg) {
  std::map<Word, Rat> acc;
  Word empty;
  enumerate_blocks(max_deg, 0, 0, empty, Rat(1), acc);
  for (auto it = acc.begin(); it != acc.end();) {
    it = (it->second == 0) ? acc.erase(it) : std::next(it);
  }
  return acc;
}

}  // namespace

LieAlgebra::LieAlgebra(int dim, const std::vector<StructureEntry>& entries,
                       int declared_step)
    : dim_(dim), c_(static_cast<size_t>(dim) * dim * dim, Rat(0)) {
  if (dim < 1) throw std::runtime_error("algebra dimension must be positive");
  for (const auto& e : entries) {
    if (e.i < 0 || e.j < 0 || e.s < 0 || e.i >= dim || e.j >= dim || e.s >= dim)
      throw std::runtime_error("structure entry index out of range");
    if (e.i >= e.j)
      throw std::runtime_error(
          "structure entries must have i < j (antisymmetry is implied)");
    c_[(e.i * dim_ + e.j) * dim_ + e.s] += e.c;
  }
  for (int i = 0; i < dim; ++i) {
    for (int j = i + 1; j < dim; ++j) {
      for (int s = 0; s < dim; ++s) {
        c_[(j * dim_ + i) * dim_ + s] = -c(i, j, s);
      }
    }
  }

  // Adapted-basis requirement: [E_i, E_j] has components only in coordinates
  // s >= min(i, j), so dropping any leading block spans a subalgebra.
  for (int i = 0; i < dim; ++i) {
    for (int j = i + 1; j < dim; ++j) {
      for (int s = 0; s <= i && s < dim; ++s) {
        if (i != s && c(i, j, s) != 0)
          throw std::runtime_error(
              "basis is not adapted: [E_i,E_j] leaves span(E_min..)");
      }
    }
  }

  // Jacobi identity, exactly over the rationals.
  for (int i = 0; i < dim; ++i) {
    for (int j = i + 1; j < dim; ++j) {
      for (int k = j + 1; k < dim; ++k) {
        for (int s = 0; s < dim; ++s) {
          Rat acc(0);
          for (int m = 0; m < dim; ++m) {
            acc += c(j, k, m) * c(i, m, s);
            acc += c(k, i, m) * c(j, m, s);
            acc += c(i, j, m) * c(k, m, s);
          }
          if (acc != 0) throw std::runtime_error("Jacobi identity violated");
        }
      }
    }
  }

  for (int i = 0; i < dim; ++i) {
    for (int j = i + 1; j < dim; ++j) {
      for (int s = 0; s < dim; ++s) {
        if (c(i, j, s) != 0)
          fterms_.push_back({i, j, s, to_double(c(i, j, s))});
      }
    }
  }

  // Descending central series by exact bracket spans, g_{j+1} = [g_j, g].
  series_dims_.push_back(dim);
  RatMat cur;  // basis of current g_j
  for (int i = 0; i < dim; ++i) {
    RatVec e(dim, Rat(0));
    e[i] = 1;
    cur.push_back(e);
  }
  while (true) {
    RatMat next;
    for (const auto& v : cur) {
      for (int a = 0; a < dim; ++a) {
        RatVec ea(dim, Rat(0));
        ea[a] = 1;
        next.push_back(bracket_q(*this, ea, v));
      }
    }
    const int r = rref(next);
    if (r == 0) break;
    if (static_cast<int>(series_dims_.size()) > dim)
      throw std::runtime_error("algebra is not nilpotent");
    series_dims_.push_back(r);
    // Validate the trailing-coordinate (row-reduced Malcev) form.
    for (int row = 0; row < r; ++row) {
      for (int col = 0; col < dim - r; ++col) {
        if (next[row][col] != 0)
          throw std::runtime_error(
              "central series term is not a trailing-coordinate span; "
              "basis is not a Malcev basis through the series");
      }
    }
    cur = next;
  }
  step_ = static_cast<int>(series_dims_.size());
  if (declared_step >= 0 && declared_step != step_)
    throw std::runtime_error("declared step " + std::to_string(declared_step) +
                             " does not match computed step " +
                             std::to_string(step_));
  if (step_ > kMaxStep)
    throw std::runtime_error("step exceeds supported BCH truncation depth");

  // g_k must be central.
  const int zk = series_dims_.back();
  if (step_ > 1) {
    for (int i = dim - zk; i < dim; ++i) {
      for (int j = 0; j < dim; ++j) {
        if (i == j) continue;
        const int a = std::min(i, j), b = std::max(i, j);
        for (int s = 0; s < dim; ++s) {
          if (c(a, b, s) != 0)
            throw std::runtime_error("last series term is not central");
        }
      }
    }
  }

  for (auto& [word, coeff] : dynkin_words(step_)) {
    bch_words_.push_back({word, coeff, to_double(coeff)});
  }
}

RatMat LieAlgebra::series_basis(int j) const {
  const int d = series_dims_[j];
  RatMat b;
  for (int i = dim_ - d; i < dim_; ++i) {
    RatVec e(dim_, Rat(0));
    e[i] = 1;
    b.push_back(e);
  }
  return b;
}

AlgebraVector AlgebraVector::rational(RatVec q) {
  AlgebraVector v;
  v.exact_ = true;
  v.f_.resize(q.size());
  for (size_t i = 0; i < q.size(); ++i) v.f_[i] = to_double(q[i]);
  v.q_ = std::move(q);
  return v;
}

AlgebraVector AlgebraVector::floating(std::vector<double> f) {
  AlgebraVector v;
  v.exact_ = false;
  v.f_ = std::move(f);
  return v;
}

AlgebraVector AlgebraVector::basis(int dim, int index, const Rat& scale) {
  RatVec q(dim, Rat(0));
  q[index] = scale;
  return rational(std::move(q));
}

const RatVec& AlgebraVector::q() const {
  if (!exact_) throw std::runtime_error("vector is not in the exact regime");
  return q_;
}

double AlgebraVector::norm_inf() const {
  double m = 0;
  for (double x : f_) m = std::max(m, std::abs(x));
  return m;
}

AlgebraVector AlgebraVector::scaled(double s) const {
  std::vector<double> f = f_;
  for (auto& x : f) x *= s;
  return floating(std::move(f));
}

namespace {

std::atomic<bool> g_warned_mixed{false};

void warn_mixed_regime() {
  if (!g_warned_mixed.exchange(true)) {
    std::cerr << "[nillab] warning: mixing exact and float algebra vectors; "
                 "coercing to float\n";
  }
}

bool both_exact(const AlgebraVector& a, const AlgebraVector& b) {
  if (a.exact() && b.exact()) return true;
  if (a.exact() != b.exact()) warn_mixed_regime();
  return false;
}

}  // namespace

AlgebraVector operator+(const AlgebraVector& a, const AlgebraVector& b) {
  if (both_exact(a, b)) {
    RatVec q = a.q();
    for (size_t i = 0; i < q.size(); ++i) q[i] += b.q()[i];
    return AlgebraVector::rational(std::move(q));
  }
  std::vector<double> f = a.f();
  for (size_t i = 0; i < f.size(); ++i) f[i] += b.f()[i];
  return AlgebraVector::floating(std::move(f));
}

AlgebraVector operator-(const AlgebraVector& a, const AlgebraVector& b) {
  if (both_exact(a, b)) {
    RatVec q = a.q();
    for (size_t i = 0; i < q.size(); ++i) q[i] -= b.q()[i];
    return AlgebraVector::rational(std::move(q));
  }
  std::vector<double> f = a.f();
  for (size_t i = 0; i < f.size(); ++i) f[i] -= b.f()[i];
  return AlgebraVector::floating(std::move(f));
}

RatVec bracket_q(const LieAlgebra& alg, const RatVec& a, const RatVec& b) {
  RatVec out(alg.dim(), Rat(0));
  for (const auto& t : alg.fterms()) {
    const Rat v = a[t.i] * b[t.j] - a[t.j] * b[t.i];
    if (v != 0) out[t.s] += alg.c(t.i, t.j, t.s) * v;
  }
  return out;
}

RatVec bch_q(const LieAlgebra& alg, const RatVec& a, const RatVec& b) {
  RatVec out(alg.dim(), Rat(0));
  for (const auto& w : alg.bch_words()) {
    const size_t m = w.letters.size();
    RatVec r = w.letters[m - 1] ? b : a;
    for (size_t i = m - 1; i-- > 0;) {
      r = bracket_q(alg, w.letters[i] ? b : a, r);
    }
    for (int k = 0; k < alg.dim(); ++k) {
      if (r[k] != 0) out[k] += w.coeff * r[k];
    }
  }
  return out;
}

AlgebraVector bracket(const LieAlgebra& alg, const AlgebraVector& a,
                      const AlgebraVector& b) {
  if (a.dim() != alg.dim() || b.dim() != alg.dim())
    throw std::runtime_error("bracket: dimension mismatch");
  if (both_exact(a, b)) return AlgebraVector::rational(bracket_q(alg, a.q(), b.q()));
  return AlgebraVector::floating(bracket_t(alg, a.f(), b.f()));
}

AlgebraVector bch(const LieAlgebra& alg, const AlgebraVector& a,
                  const AlgebraVector& b) {
  if (a.dim() != alg.dim() || b.dim() != alg.dim())
    throw std::runtime_error("bch: dimension mismatch");
  if (both_exact(a, b)) return AlgebraVector::rational(bch_q(alg, a.q(), b.q()));
  return AlgebraVector::floating(bch_t(alg, a.f(), b.f()));
}

bool in_trailing_span(const LieAlgebra& alg, const std::vector<double>& v,
                      int trailing_dim, double tol) {
  for (int i = 0; i < alg.dim() - trailing_dim; ++i) {
    if (std::abs(v[i]) > tol) return false;
  }
  return true;
}

std::vector<long> integer_relation(const std::vector<double>& x, double tol,
                                   long bound) {
  const int n = static_cast<int>(x.size());
  if (n == 0) return {};
  // A coordinate small enough is itself a relation via a unit vector.
  for (int i = 0; i < n; ++i) {
    if (std::abs(x[i]) < tol) {
      std::vector<long> m(n, 0);
      m[i] = 1;
      return m;
    }
  }
  if (n == 1) return {};
  if (n == 2) {
    for (long m0 = -bound; m0 <= bound; ++m0) {
      const double t = -m0 * x[0] / x[1];
      for (long m1 : {static_cast<long>(std::floor(t)),
                      static_cast<long>(std::ceil(t))}) {
        if (m0 == 0 && m1 == 0) continue;
        if (std::llabs(m1) > bound) continue;
        if (std::abs(m0 * x[0] + m1 * x[1]) < tol) return {m0, m1};
      }
    }
    return {};
  }
  // Higher dimensions: LLL on the classical integer-relation lattice, then a
  // small exhaustive sweep for blatant low-height relations.
  const double scale = 1.0 / tol;
  std::vector<std::vector<double>> basis(n, std::vector<double>(n + 1, 0.0));
  for (int i = 0; i < n; ++i) {
    basis[i][i] = 1.0;
    basis[i][n] = scale * x[i];
  }
  auto reduced = lll_reduce(std::move(basis));
  for (const auto& row : reduced) {
    std::vector<long> m(n);
    bool ok = false, in_bound = true;
    double ip = 0;
    for (int i = 0; i < n; ++i) {
      m[i] = static_cast<long>(std::llround(row[i]));
      if (m[i] != 0) ok = true;
      if (std::llabs(m[i]) > bound) in_bound = false;
      ip += m[i] * x[i];
    }
    if (ok && in_bound && std::abs(ip) < tol) return m;
  }
  const long small = std::min<long>(bound, 25);
  std::vector<long> m(n, -small);
  while (true) {
    double ip = 0;
    bool nonzero = false;
    for (int i = 0; i < n; ++i) {
      ip += m[i] * x[i];
      if (m[i] != 0) nonzero = true;
    }
    if (nonzero && std::abs(ip) < tol) return m;
    int k = 0;
    while (k < n && ++m[k] > small) m[k++] = -small;
    if (k == n) break;
  }
  return {};
}

bool is_completely_irrational(const LieAlgebra& alg, const AlgebraVector& X,
                              double tol, long denom_bound) {
  const int n = alg.abelian_dim();
  std::vector<double> ab(X.f().begin(), X.f().begin() + n);
  return integer_relation(ab, tol, denom_bound).empty();
}

}  // namespace nillab
