#include "nillab/dynamics.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <stdexcept>

namespace nillab {

namespace {

// Gauss-Kronrod 7-15 abscissae/weights on [-1, 1]. The 7-point Gauss rule
// lives on the odd-index nodes plus the center.
constexpr double kXgk[8] = {0.9914553711208126, 0.9491079123427585, 0.8648644233597691,
                            0.7415311855993944, 0.5860872354676911, 0.4058451513773972,
                            0.2077849550078985, 0.0};
constexpr double kWgk[8] = {0.0229353220105292, 0.0630920926299785, 0.1047900103222502,
                            0.1406532597155259, 0.1690047266392679, 0.1903505780647854,
                            0.2044329400752989, 0.2094821410847278};
constexpr double kWg[4] = {0.1294849661688697, 0.2797053914892767, 0.3818300505051189,
                           0.4179591836734694};

using VecFn = std::function<void(double, double*)>;

// Vector-valued adaptive quadrature over [a, b] (signed). The per-component
// acceptance uses an absolute budget proportional to panel length plus a
// relative term with a length-scale magnitude floor, so near-cancelling
// oscillatory panels are not refined forever.
std::vector<double> adapt_gk(int k, const VecFn& f, double a, double b,
                             const OrbitQuadrature& q) {
  std::vector<double> total(k, 0.0);
  if (a == b) return total;
  double sign = 1.0;
  if (b < a) {
    std::swap(a, b);
    sign = -1.0;
  }
  const double len = b - a;
  int npan = static_cast<int>(std::ceil(len / q.max_step - 1e-12));
  if (npan < 1) npan = 1;

  struct Seg {
    double a, b;
    int depth;
  };
  std::vector<Seg> stack;
  stack.reserve(static_cast<size_t>(npan) + 32);
  for (int i = npan; i-- > 0;) {
    stack.push_back({a + len * i / npan, a + len * (i + 1) / npan, 0});
  }

  std::vector<double> kres(k), gres(k), fv(k);
  while (!stack.empty()) {
    const Seg s = stack.back();
    stack.pop_back();
    const double c = 0.5 * (s.a + s.b), h = 0.5 * (s.b - s.a);
    std::fill(kres.begin(), kres.end(), 0.0);
    std::fill(gres.begin(), gres.end(), 0.0);
    for (int j = 0; j < 8; ++j) {
      for (int side = (j == 7 ? 1 : 0); side < 2; ++side) {
        const double r = c + (side ? 1.0 : -1.0) * h * kXgk[j];
        f(r, fv.data());
        for (int i = 0; i < k; ++i) kres[i] += kWgk[j] * fv[i];
        if (j % 2 == 1 || j == 7) {
          for (int i = 0; i < k; ++i) gres[i] += kWg[j / 2] * fv[i];
        }
      }
    }
    const double plen = s.b - s.a;
    bool ok = true;
    for (int i = 0; i < k && ok; ++i) {
      const double err = std::abs(kres[i] - gres[i]) * h;
      const double tol = q.atol * plen / len + q.rtol * (std::abs(kres[i]) * h + plen);
      ok = err <= tol;
    }
    if (ok || s.depth >= 25) {
      if (!ok) throw std::runtime_error("orbit quadrature: tolerance unreachable");
      for (int i = 0; i < k; ++i) total[i] += kres[i] * h;
    } else {
      stack.push_back({c, s.b, s.depth + 1});
      stack.push_back({s.a, c, s.depth + 1});
    }
  }
  for (auto& x : total) x *= sign;
  return total;
}

// Orbit of phi^X through x with cached base points at multiples of h in both
// directions. Evaluations step from the nearest lower base, so the group-law
// coordinates stay O(h)-sized however long the orbit segment is.
struct OrbitWalker {
  const Lattice* lat;
  const LieAlgebra* alg;
  std::vector<double> Xf;
  double h;
  std::vector<NilPoint> pos, neg;  // pos[i] at i h, neg[i] at -i h

  OrbitWalker(const Lattice& l, const NilPoint& x, const std::vector<double>& X,
              double step)
      : lat(&l), alg(&l.algebra()), Xf(X), h(step) {
    pos.push_back(x);
    neg.push_back(x);
  }

  NilPoint step_from(const NilPoint& base, double dt) const {
    const std::vector<double> v = second_to_first(*alg, base.x);
    std::vector<double> tx(Xf.size());
    for (size_t i = 0; i < Xf.size(); ++i) tx[i] = dt * Xf[i];
    return reduce(*lat, bch_t(*alg, v, tx));
  }

  NilPoint at(double r) {
    const double q = std::floor(r / h);
    const long i = static_cast<long>(q);
    const double local = r - q * h;
    if (i >= 0) {
      while (static_cast<long>(pos.size()) <= i) pos.push_back(step_from(pos.back(), h));
      return step_from(pos[i], local);
    }
    while (static_cast<long>(neg.size()) <= -i) neg.push_back(step_from(neg.back(), -h));
    return step_from(neg[-i], local);
  }
};

// Antiderivative I(s) = int_0^s alpha(phi^X_r x) dr on the walker's chunk
// grid, with a safeguarded-Newton inverse. Strict positivity of alpha makes
// I strictly increasing, so the crossing chunk brackets the root.
struct OrbitClock {
  OrbitWalker* w;
  const FlowConfig* cfg;
  std::vector<double> cum_pos{0.0}, cum_neg{0.0};

  double alpha_at(double r) const { return cfg->alpha_obs.val(w->at(r).x).real(); }

  double seg_int(double a, double b) const {
    return adapt_gk(
        1, [this](double r, double* out) { out[0] = alpha_at(r); }, a, b, cfg->quad)[0];
  }

  double solve_in_chunk(double a, double b, double Ia, double Ib, double t) const {
    double lo = std::min(a, b), hi = std::max(a, b);
    double s = a + (b - a) * ((t - Ia) / (Ib - Ia));
    for (int iter = 0; iter < 80; ++iter) {
      const double g = Ia + seg_int(a, s) - t;
      if (std::abs(g) <= cfg->quad.atol) return s;
      (g > 0 ? hi : lo) = s;
      double sn = s - g / alpha_at(s);
      if (!(sn > lo && sn < hi)) sn = 0.5 * (lo + hi);
      if (sn == s) return s;
      s = sn;
    }
    throw std::runtime_error("tilde_tau: root refinement did not converge");
  }

  double inverse(double t) {
    if (t == 0.0) return 0.0;
    const double h = cfg->quad.max_step;
    constexpr size_t kMaxChunks = 8'000'000;
    if (t > 0.0) {
      while (cum_pos.back() < t) {
        if (cum_pos.size() > kMaxChunks)
          throw std::runtime_error("tilde_tau: orbit horizon exceeded");
        const double i = static_cast<double>(cum_pos.size() - 1);
        cum_pos.push_back(cum_pos.back() + seg_int(i * h, (i + 1.0) * h));
      }
      const auto it = std::lower_bound(cum_pos.begin(), cum_pos.end(), t);
      const size_t i = static_cast<size_t>(it - cum_pos.begin());
      return solve_in_chunk((i - 1.0) * h, i * h, cum_pos[i - 1], cum_pos[i], t);
    }
    while (cum_neg.back() > t) {
      if (cum_neg.size() > kMaxChunks)
        throw std::runtime_error("tilde_tau: orbit horizon exceeded");
      const double i = static_cast<double>(cum_neg.size() - 1);
      cum_neg.push_back(cum_neg.back() - seg_int(-(i + 1.0) * h, -i * h));
    }
    const auto it =
        std::lower_bound(cum_neg.begin(), cum_neg.end(), t, std::greater<double>());
    const size_t i = static_cast<size_t>(it - cum_neg.begin());
    return solve_in_chunk(-(i - 1.0) * h, -static_cast<double>(i) * h, cum_neg[i - 1],
                          cum_neg[i], t);
  }
};

const HeisenbergTriple& require_triple(const FlowConfig& cfg) {
  if (!cfg.triple)
    throw std::runtime_error("flow config carries no Heisenberg triple");
  return *cfg.triple;
}

}  // namespace

FiberPolynomial constant_time_change(std::shared_ptr<const LieAlgebra> alg, double c) {
  FiberPolynomial p;
  p.alg = alg;
  p.zero_obs = constant_obs(std::move(alg), Cplx(c, 0.0));
  return p;
}

FlowConfig make_flow_config(std::shared_ptr<const Lattice> lattice, AlgebraVector X,
                            FiberPolynomial alpha,
                            std::optional<HeisenbergTriple> triple,
                            OrbitQuadrature quad) {
  if (!lattice) throw std::runtime_error("flow config: null lattice");
  const LieAlgebra& alg = lattice->algebra();
  if (X.dim() != alg.dim()) throw std::runtime_error("flow config: generator dimension");
  if (!is_completely_irrational(alg, X))
    throw std::runtime_error("flow config: X is not completely irrational");
  if (!(quad.rtol > 0.0) || !(quad.atol > 0.0) || !(quad.max_step > 0.0))
    throw std::runtime_error("flow config: quadrature tolerances must be positive");

  FlowConfig cfg;
  cfg.lattice = std::move(lattice);
  cfg.X = std::move(X);
  cfg.alpha = std::move(alpha);
  cfg.triple = std::move(triple);
  cfg.quad = std::move(quad);
  cfg.alpha_obs = cfg.alpha.flatten();

  if (cfg.alpha.terms.empty() && !cfg.alpha.zero_next) {
    CounterRng rng(0xc0457u);
    std::vector<double> p(alg.dim());
    for (auto& c : p) c = rng.uniform();
    const Cplx c0 = cfg.alpha_obs.val(p);
    bool constant = c0.imag() == 0.0;
    for (int trial = 0; trial < 8 && constant; ++trial) {
      for (auto& c : p) c = rng.uniform();
      constant = cfg.alpha_obs.val(p) == c0;
    }
    if (constant) cfg.const_alpha = c0.real();
  }

  if (cfg.const_alpha != 0.0) {
    cfg.alpha_min = cfg.const_alpha;
  } else {
    double mn = std::numeric_limits<double>::infinity();
    for (const auto& p : haar_sample(*cfg.lattice, 20000, 0xa1fau)) {
      mn = std::min(mn, cfg.alpha_obs.val(p.x).real());
    }
    cfg.alpha_min = mn;
  }
  if (!(cfg.alpha_min > 0.0))
    throw std::runtime_error("flow config: alpha sampled minimum is not positive");
  return cfg;
}

NilPoint nilflow_step(const Lattice& lat, const NilPoint& x, const AlgebraVector& X,
                      double t) {
  const LieAlgebra& alg = lat.algebra();
  const std::vector<double> v = second_to_first(alg, x.x);
  std::vector<double> tx(alg.dim());
  for (int i = 0; i < alg.dim(); ++i) tx[i] = t * X.f()[i];
  return reduce(lat, bch_t(alg, v, tx));
}

double tilde_tau(const NilPoint& x, const FlowConfig& cfg, double t) {
  if (cfg.const_alpha != 0.0) return t / cfg.const_alpha;
  OrbitWalker w(*cfg.lattice, x, cfg.X.f(), cfg.quad.max_step);
  OrbitClock clock{&w, &cfg};
  return clock.inverse(t);
}

NilPoint timechange_step(const NilPoint& x, const FlowConfig& cfg, double t) {
  return nilflow_step(*cfg.lattice, x, cfg.X, tilde_tau(x, cfg, t));
}

Cplx birkhoff_integral(const Observable& f, const NilPoint& x, const FlowConfig& cfg,
                       double T) {
  OrbitWalker w(*cfg.lattice, x, cfg.X.f(), cfg.quad.max_step);
  double s;
  if (cfg.const_alpha != 0.0) {
    s = T / cfg.const_alpha;
  } else {
    OrbitClock clock{&w, &cfg};
    s = clock.inverse(T);
  }
  const auto res = adapt_gk(
      2,
      [&](double r, double* out) {
        const NilPoint p = w.at(r);
        const Cplx fv = f.val(p.x);
        const double av =
            cfg.const_alpha != 0.0 ? cfg.const_alpha : cfg.alpha_obs.val(p.x).real();
        out[0] = fv.real() * av;
        out[1] = fv.imag() * av;
      },
      0.0, s, cfg.quad);
  return {res[0], res[1]};
}

Cplx ShearRecord::Dv_sum() const {
  Cplx s(0.0, 0.0);
  for (const auto& [v, d] : Dv) s += d;
  return s;
}

ShearRecord shear_record(const NilPoint& x, const FlowConfig& cfg, double t) {
  const HeisenbergTriple& tr = require_triple(cfg);
  OrbitWalker w(*cfg.lattice, x, cfg.X.f(), cfg.quad.max_step);
  OrbitClock clock{&w, &cfg};
  const double s = cfg.const_alpha != 0.0 ? t / cfg.const_alpha : clock.inverse(t);

  ShearRecord rec;
  rec.B = s;

  const auto& Yf = tr.Y.f();
  const auto& Zf = tr.Z.f();
  const int nv = static_cast<int>(cfg.alpha.terms.size());

  const auto ints = adapt_gk(
      1 + 2 * nv,
      [&](double r, double* out) {
        const NilPoint p = w.at(r);
        out[0] = cfg.alpha_obs.dderiv(Yf, p).real();
        for (int j = 0; j < nv; ++j) {
          const Cplx z = cfg.alpha.terms[j].f.dderiv(Zf, p);
          out[1 + 2 * j] = z.real();
          out[2 + 2 * j] = z.imag();
        }
      },
      0.0, s, cfg.quad);
  rec.A = -ints[0];
  for (int j = 0; j < nv; ++j) {
    rec.Dv.emplace_back(cfg.alpha.terms[j].v, -Cplx(ints[1 + 2 * j], ints[2 + 2 * j]));
  }

  // Direct phi^V parametrization, independent of the Dv change of variables.
  rec.D = -adapt_gk(
      1,
      [&](double tau, double* out) {
        const double u =
            cfg.const_alpha != 0.0 ? tau / cfg.const_alpha : clock.inverse(tau);
        const NilPoint p = w.at(u);
        out[0] = cfg.alpha_obs.dderiv(Zf, p).real() / cfg.alpha_obs.val(p.x).real();
      },
      0.0, t, cfg.quad)[0];
  return rec;
}

PushforwardCoeffs pushforward_coeffs(const NilPoint& x, const FlowConfig& cfg,
                                     FrameField W, double t) {
  const HeisenbergTriple& tr = require_triple(cfg);
  OrbitWalker w(*cfg.lattice, x, cfg.X.f(), cfg.quad.max_step);
  OrbitClock clock{&w, &cfg};
  const double s = cfg.const_alpha != 0.0 ? t / cfg.const_alpha : clock.inverse(t);
  const auto& Zf = tr.Z.f();

  if (W == FrameField::Z) {
    const auto r = adapt_gk(
        1,
        [&](double u, double* out) {
          out[0] = cfg.alpha_obs.dderiv(Zf, w.at(u)).real();
        },
        0.0, s, cfg.quad);
    return {-r[0], 0.0, 1.0};
  }

  const auto& Yf = tr.Y.f();
  const auto r = adapt_gk(
      2,
      [&](double u, double* out) {
        const NilPoint p = w.at(u);
        out[0] = cfg.alpha_obs.dderiv(Yf, p).real();
        out[1] = cfg.alpha_obs.dderiv(Zf, p).real() * u;
      },
      0.0, s, cfg.quad);
  return {-(r[0] - r[1]), 1.0, -s};
}

std::vector<double> right_field_coords(const LieAlgebra& alg, const NilPoint& p,
                                       const std::vector<double>& W) {
  const int m = alg.dim();
  const std::vector<double> v = second_to_first(alg, p.x);
  std::vector<Dual> vd(m), wd(m);
  for (int i = 0; i < m; ++i) {
    vd[i] = Dual(v[i]);
    wd[i] = Dual(0.0, W[i]);
  }
  const auto x2 = first_to_second_t(alg, bch_t(alg, vd, wd));
  std::vector<double> out(m);
  for (int i = 0; i < m; ++i) out[i] = x2[i].d;
  return out;
}

}  // namespace nillab
