#include "nillab/observables.hpp"

#include <cmath>
#include <limits>
#include <numeric>
#include <stdexcept>
#include <string>

#include "nillab/rng.hpp"

namespace nillab {

namespace {

constexpr double kTwoPi = 6.283185307179586476925286766559;

}  // namespace

Cplx Observable::dderiv(const std::vector<double>& W, const NilPoint& p) const {
  const LieAlgebra& a = *alg;
  const std::vector<double> v = second_to_first(a, p.x);
  const int m = a.dim();
  std::vector<Dual> vd(m), wd(m);
  for (int i = 0; i < m; ++i) {
    vd[i] = Dual(v[i]);
    wd[i] = Dual(0.0, W[i]);  // s W at s = 0, d/ds = W
  }
  const auto moved = bch_t(a, vd, wd);
  const auto x2 = first_to_second_t(a, moved);
  const CDual r = vald(x2);
  return {r[0].d, r[1].d};
}

Observable constant_obs(std::shared_ptr<const LieAlgebra> alg, Cplx c) {
  const double re = c.real(), im = c.imag();
  return make_observable(
      std::move(alg),
      [re, im](const auto& x) {
        using S = typename std::decay_t<decltype(x)>::value_type;
        (void)x;
        return std::array<S, 2>{S(re), S(im)};
      },
      "const");
}

Observable operator+(const Observable& a, const Observable& b) {
  Observable o;
  o.alg = a.alg;
  o.tag = "(" + a.tag + "+" + b.tag + ")";
  o.val = [a, b](const std::vector<double>& x) { return a.val(x) + b.val(x); };
  o.vald = [a, b](const std::vector<Dual>& x) {
    const CDual u = a.vald(x), v = b.vald(x);
    return CDual{u[0] + v[0], u[1] + v[1]};
  };
  return o;
}

Observable operator-(const Observable& a, const Observable& b) {
  Observable o;
  o.alg = a.alg;
  o.tag = "(" + a.tag + "-" + b.tag + ")";
  o.val = [a, b](const std::vector<double>& x) { return a.val(x) - b.val(x); };
  o.vald = [a, b](const std::vector<Dual>& x) {
    const CDual u = a.vald(x), v = b.vald(x);
    return CDual{u[0] - v[0], u[1] - v[1]};
  };
  return o;
}

Observable operator*(const Observable& a, const Observable& b) {
  Observable o;
  o.alg = a.alg;
  o.tag = "(" + a.tag + "*" + b.tag + ")";
  o.val = [a, b](const std::vector<double>& x) { return a.val(x) * b.val(x); };
  o.vald = [a, b](const std::vector<Dual>& x) {
    const CDual u = a.vald(x), v = b.vald(x);
    return CDual{u[0] * v[0] - u[1] * v[1], u[0] * v[1] + u[1] * v[0]};
  };
  return o;
}

Observable operator*(double s, const Observable& a) {
  Observable o;
  o.alg = a.alg;
  o.tag = "scaled(" + a.tag + ")";
  o.val = [s, a](const std::vector<double>& x) { return s * a.val(x); };
  o.vald = [s, a](const std::vector<Dual>& x) {
    const CDual u = a.vald(x);
    return CDual{Dual(s) * u[0], Dual(s) * u[1]};
  };
  return o;
}

Observable operator*(Cplx s, const Observable& a) {
  const double sr = s.real(), si = s.imag();
  Observable o;
  o.alg = a.alg;
  o.tag = "scaled(" + a.tag + ")";
  o.val = [sr, si, a](const std::vector<double>& x) { return Cplx(sr, si) * a.val(x); };
  o.vald = [sr, si, a](const std::vector<Dual>& x) {
    const CDual u = a.vald(x);
    return CDual{Dual(sr) * u[0] - Dual(si) * u[1], Dual(sr) * u[1] + Dual(si) * u[0]};
  };
  return o;
}

Observable operator+(Cplx c, const Observable& a) { return constant_obs(a.alg, c) + a; }

Observable real_part(const Observable& a) {
  Observable o;
  o.alg = a.alg;
  o.tag = "re(" + a.tag + ")";
  o.val = [a](const std::vector<double>& x) { return Cplx(a.val(x).real(), 0.0); };
  o.vald = [a](const std::vector<Dual>& x) {
    return CDual{a.vald(x)[0], Dual(0.0)};
  };
  return o;
}

Observable torus_character(std::shared_ptr<const LieAlgebra> alg, std::vector<long> m) {
  const int n = alg->abelian_dim();
  if (static_cast<int>(m.size()) != n)
    throw std::runtime_error("torus character: mode length != abelianized dimension");
  return make_observable(
      std::move(alg),
      [m, n](const auto& x) {
        using S = typename std::decay_t<decltype(x)>::value_type;
        S phase(0.0);
        for (int i = 0; i < n; ++i) phase += S(static_cast<double>(m[i])) * x[i];
        phase *= S(kTwoPi);
        return std::array<S, 2>{cos(phase), sin(phase)};
      },
      "character");
}

Observable fiber_character_obs(std::shared_ptr<const LieAlgebra> alg, const CentralSubspace& z,
                               const std::vector<long>& v, double width, int truncation) {
  const LieAlgebra& a = *alg;
  const int m = a.dim();
  const auto& c_idx = z.coord_aligned();
  if (c_idx.empty())
    throw std::runtime_error("fiber character: central subspace is not coordinate aligned");
  const int d = z.fiber_dim();
  if (static_cast<int>(v.size()) != d)
    throw std::runtime_error("fiber character: dual vector dimension mismatch");
  bool nonzero = false;
  for (long vi : v) nonzero = nonzero || vi != 0;
  if (!nonzero) throw std::runtime_error("fiber character: dual vector must be nonzero");

  std::vector<int> nc_idx;
  for (int i = 0; i < m; ++i) {
    bool central = false;
    for (int c : c_idx) central = central || c == i;
    if (!central) nc_idx.push_back(i);
  }

  // Noncentral lattice coset representatives, as first-kind vectors.
  std::vector<std::vector<double>> gammas;
  {
    const int nn = static_cast<int>(nc_idx.size());
    std::vector<int> k(nn, -truncation);
    for (;;) {
      RatVec word(m, Rat(0));
      for (int i = 0; i < nn; ++i) word[nc_idx[i]] = k[i];
      RatVec fk = second_to_first_q(a, word);
      std::vector<double> g(m);
      for (int i = 0; i < m; ++i) g[i] = to_double(fk[i]);
      gammas.push_back(std::move(g));
      int pos = nn - 1;
      while (pos >= 0 && k[pos] == truncation) k[pos--] = -truncation;
      if (pos < 0) break;
      ++k[pos];
    }
  }

  // Central Gaussian integral in closed form.
  double kappa = 1.0;
  for (int j = 0; j < d; ++j) {
    kappa *= width * std::sqrt(kTwoPi) *
             std::exp(-2.0 * M_PI * M_PI * static_cast<double>(v[j]) *
                      static_cast<double>(v[j]) * width * width);
  }

  std::vector<double> vd(d);
  for (int j = 0; j < d; ++j) vd[j] = static_cast<double>(v[j]);
  const double inv2w2 = -0.5 / (width * width);

  auto f = [alg, gammas, nc_idx, c_idx, vd, kappa, inv2w2, m, d](const auto& x) {
    using S = typename std::decay_t<decltype(x)>::value_type;
    const LieAlgebra& la = *alg;
    std::vector<S> g1 = second_to_first_t(la, std::vector<S>(x.begin(), x.end()));
    std::vector<S> gam(m);
    S re(0.0), im(0.0);
    for (const auto& gfk : gammas) {
      for (int i = 0; i < m; ++i) gam[i] = S(gfk[i]);
      const auto s = first_to_second_t(la, bch_t(la, gam, g1));
      S q(0.0), ph(0.0);
      for (int j : nc_idx) q += s[j] * s[j];
      for (int j = 0; j < d; ++j) ph += S(vd[j]) * s[c_idx[j]];
      const S amp = exp(q * S(inv2w2));
      ph *= S(kTwoPi);
      re += amp * cos(ph);
      im += amp * sin(ph);
    }
    return std::array<S, 2>{S(kappa) * re, S(kappa) * im};
  };
  Observable o = make_observable(alg, f, "periodized");

  // Separable fast path for the dim-3 Heisenberg shape. The noncentral coset
  // action is (n1,n2): (x,y,z) -> (x+n1, y+n2, z - q n2 x) with q = c(0,1,2),
  // so the lattice sum factorizes into two 1-d theta sums. Verified against
  // the generic evaluator at construction; mismatch falls back.
  if (m == 3 && d == 1 && c_idx[0] == 2) {
    const double q = to_double(a.c(0, 1, 2));
    const double v0 = vd[0];
    const int T = truncation;
    auto fast = [v0, kappa, inv2w2, q, T](const auto& x) {
      using S = typename std::decay_t<decltype(x)>::value_type;
      S asum(0.0);
      for (int n1 = -T; n1 <= T; ++n1) {
        const S u = x[0] + S(static_cast<double>(n1));
        asum += exp(u * u * S(inv2w2));
      }
      S bre(0.0), bim(0.0);
      for (int n2 = -T; n2 <= T; ++n2) {
        const S u = x[1] + S(static_cast<double>(n2));
        const S amp = exp(u * u * S(inv2w2));
        const S ph = S(-kTwoPi * v0 * q * n2) * x[0];
        bre += amp * cos(ph);
        bim += amp * sin(ph);
      }
      const S phase = S(kTwoPi * v0) * x[2];
      const S cp = cos(phase), sp = sin(phase);
      const S fre = asum * bre, fim = asum * bim;
      return std::array<S, 2>{S(kappa) * (fre * cp - fim * sp),
                              S(kappa) * (fre * sp + fim * cp)};
    };
    Observable of = make_observable(alg, fast, "periodized");
    CounterRng rng(0xfa57);
    bool match = true;
    for (int trial = 0; trial < 16 && match; ++trial) {
      std::vector<double> p(m);
      for (auto& c : p) c = 3.0 * (rng.uniform() - 0.5);
      match = std::abs(of.val(p) - o.val(p)) < 1e-12;
    }
    if (match) o = std::move(of);
  }

  // Degenerate-window guard: the function must be visibly nonzero.
  double sup = 0.0;
  CounterRng rng(0xf1be5);
  std::vector<double> p(m);
  for (int trial = 0; trial < 256; ++trial) {
    for (auto& c : p) c = rng.uniform();
    sup = std::max(sup, std::abs(o.val(p)));
  }
  if (sup < 1e-6)
    throw std::runtime_error("fiber character: degenerate window, sup norm below 1e-6");
  return o;
}

Observable project_fiber(const Observable& f, const CentralSubspace& z,
                         const std::vector<long>& v, int grid) {
  const auto& c_idx = z.coord_aligned();
  if (c_idx.empty())
    throw std::runtime_error("project_fiber: central subspace is not coordinate aligned");
  const int d = z.fiber_dim();
  if (static_cast<int>(v.size()) != d)
    throw std::runtime_error("project_fiber: dual vector dimension mismatch");
  if (grid < 2) throw std::runtime_error("project_fiber: grid too small");

  std::vector<double> vd(d);
  for (int j = 0; j < d; ++j) vd[j] = static_cast<double>(v[j]);

  auto g = [f, c_idx, vd, grid, d](const auto& x) {
    using S = typename std::decay_t<decltype(x)>::value_type;
    std::vector<S> shifted(x.begin(), x.end());
    std::vector<int> k(d, 0);
    S re(0.0), im(0.0);
    for (;;) {
      double phase = 0.0;
      for (int j = 0; j < d; ++j) {
        shifted[c_idx[j]] = x[c_idx[j]] + S(static_cast<double>(k[j]) / grid);
        phase -= kTwoPi * vd[j] * k[j] / grid;
      }
      const auto r = obs_eval(f, shifted);
      const double cp = std::cos(phase), sp = std::sin(phase);
      re += r[0] * S(cp) - r[1] * S(sp);
      im += r[0] * S(sp) + r[1] * S(cp);
      int pos = d - 1;
      while (pos >= 0 && k[pos] == grid - 1) k[pos--] = 0;
      if (pos < 0) break;
      ++k[pos];
    }
    double cells = 1.0;
    for (int j = 0; j < d; ++j) cells *= grid;
    return std::array<S, 2>{re * S(1.0 / cells), im * S(1.0 / cells)};
  };
  Observable o = make_observable(f.alg, g, "projected(" + f.tag + ")");
  return o;
}

long FiberPolynomial::mode_degree(const std::vector<long>& v) {
  long g = 0;
  for (long x : v) g = std::gcd(g, std::abs(x));
  return g;
}

long FiberPolynomial::degree() const {
  long deg = zero_next ? zero_next->degree() : 0;
  for (const auto& t : terms) deg = std::max(deg, mode_degree(t.v));
  return deg;
}

Observable lift_observable(std::shared_ptr<const LieAlgebra> total,
                           std::shared_ptr<const LieAlgebra> base, const RatMat& projection,
                           const Observable& f) {
  // Composition with a projection, linear on first-kind coordinates.
  const int m = total->dim();
  const int q = static_cast<int>(projection.size());
  if (q != base->dim()) throw std::runtime_error("lift_observable: projection row count");
  std::vector<std::vector<double>> p(q, std::vector<double>(m));
  for (int r = 0; r < q; ++r) {
    if (static_cast<int>(projection[r].size()) != m)
      throw std::runtime_error("lift_observable: projection column count");
    for (int t = 0; t < m; ++t) p[r][t] = to_double(projection[r][t]);
  }
  auto g = [total, base, f, p, m, q](const auto& x) {
    using S = typename std::decay_t<decltype(x)>::value_type;
    const auto v1 = second_to_first_t(*total, std::vector<S>(x.begin(), x.end()));
    std::vector<S> pv(q, S(0.0));
    for (int r = 0; r < q; ++r) {
      for (int t = 0; t < m; ++t) pv[r] += S(p[r][t]) * v1[t];
    }
    return obs_eval(f, first_to_second_t(*base, pv));
  };
  return make_observable(total, g, "lifted(" + f.tag + ")");
}

Observable FiberPolynomial::flatten() const {
  Observable total =
      zero_next ? lift_observable(alg, zero_next->alg, projection, zero_next->flatten())
                : zero_obs;
  for (const auto& t : terms) total = total + t.f;
  return total;
}

AlphaParts decompose_alpha(const FiberPolynomial& alpha, const Lattice& lat) {
  Observable flat = alpha.flatten();
  const auto samples = haar_sample(lat, 100000, 0x5eedu);
  double mn = std::numeric_limits<double>::infinity();
  for (const auto& p : samples) mn = std::min(mn, flat.val(p.x).real());
  if (!(mn > 0.0))
    throw std::runtime_error("decompose_alpha: sampled minimum " + std::to_string(mn) +
                             " is not positive");
  AlphaParts out{alpha, alpha, mn};
  out.zero.terms.clear();
  out.perp.zero_next.reset();
  out.perp.zero_obs = constant_obs(alpha.alg, 0.0);
  return out;
}

Observable torus_poly_obs(std::shared_ptr<const LieAlgebra> alg,
                          const std::vector<TorusMode>& modes) {
  const int n = alg->abelian_dim();
  for (const auto& mode : modes) {
    if (static_cast<int>(mode.m.size()) != n)
      throw std::runtime_error("torus polynomial: mode length mismatch");
  }
  return make_observable(
      std::move(alg),
      [modes, n](const auto& x) {
        using S = typename std::decay_t<decltype(x)>::value_type;
        S re(0.0), im(0.0);
        for (const auto& mode : modes) {
          S phase(0.0);
          for (int i = 0; i < n; ++i) phase += S(static_cast<double>(mode.m[i])) * x[i];
          phase *= S(kTwoPi);
          const S cp = cos(phase), sp = sin(phase);
          re += S(mode.c.real()) * cp - S(mode.c.imag()) * sp;
          im += S(mode.c.real()) * sp + S(mode.c.imag()) * cp;
        }
        return std::array<S, 2>{re, im};
      },
      "torus_poly");
}

Observable harmonic_obs(std::shared_ptr<const LieAlgebra> alg, const CentralSubspace* z,
                        const HarmonicSpec& spec) {
  Observable o = constant_obs(alg, spec.constant);
  if (!spec.toral.empty()) o = o + torus_poly_obs(alg, spec.toral);
  if (!spec.fiber.empty() && z == nullptr)
    throw std::runtime_error("harmonic_obs: fiber modes need a central subspace");
  for (const auto& fm : spec.fiber)
    o = o + fm.coeff * fiber_character_obs(alg, *z, fm.v, fm.width, fm.truncation);
  return o;
}

FiberPolynomial harmonic_time_change(std::shared_ptr<const LieAlgebra> alg,
                                     std::shared_ptr<const CentralSubspace> z,
                                     const HarmonicSpec& spec) {
  if (!spec.fiber.empty() && !z)
    throw std::runtime_error("harmonic_time_change: fiber modes need a central subspace");
  FiberPolynomial p;
  p.alg = alg;
  p.z = z;
  p.zero_obs = constant_obs(alg, spec.constant);
  if (!spec.toral.empty()) p.zero_obs = p.zero_obs + torus_poly_obs(alg, spec.toral);
  for (const auto& fm : spec.fiber)
    p.terms.push_back(
        {fm.v, fm.coeff * fiber_character_obs(alg, *z, fm.v, fm.width, fm.truncation)});
  return p;
}

std::vector<TorusMode> torus_transfer(const std::vector<TorusMode>& p,
                                      const std::vector<double>& omega) {
  std::vector<TorusMode> u;
  for (const auto& mode : p) {
    bool zero = true;
    for (long mi : mode.m) zero = zero && mi == 0;
    if (zero) continue;  // mean stays behind
    double dot = 0.0;
    for (size_t i = 0; i < mode.m.size(); ++i) dot += mode.m[i] * omega[i];
    if (std::abs(dot) <= 1e-12) {
      std::string s = "torus transfer: resonant mode (";
      for (size_t i = 0; i < mode.m.size(); ++i)
        s += (i ? "," : "") + std::to_string(mode.m[i]);
      throw std::runtime_error(s + ")");
    }
    u.push_back({mode.m, mode.c / Cplx(0.0, kTwoPi * dot)});
  }
  return u;
}

}  // namespace nillab
