#include "nillab/diagnostics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <stdexcept>

#include "nillab/hash.hpp"
#include "nillab/rng.hpp"

namespace nillab {

namespace {

constexpr double kTwoPi = 6.283185307179586476925286766559;

// --- Monte Carlo accumulators ------------------------------------------------

struct Stat {
  double sum = 0.0, sq = 0.0;
  long n = 0;
  void add(double v) {
    sum += v;
    sq += v * v;
    ++n;
  }
  double mean() const { return n ? sum / n : 0.0; }
  double se() const {
    if (n < 2) return 0.0;
    const double m = mean();
    const double var = std::max(0.0, (sq - n * m * m) / (n - 1));
    return std::sqrt(var / n);
  }
};

struct CStat {
  Stat re, im;
  void add(Cplx v) {
    re.add(v.real());
    im.add(v.imag());
  }
  Cplx mean() const { return {re.mean(), im.mean()}; }
  double se() const { return std::hypot(re.se(), im.se()); }
};

std::uint64_t est_hash(const char* name, const EstimatorConfig& est,
                       std::initializer_list<double> extra) {
  std::string s = name;
  char buf[48];
  auto add = [&](double v) {
    std::snprintf(buf, sizeof buf, "|%.17g", v);
    s += buf;
  };
  std::snprintf(buf, sizeof buf, "|n=%d|seed=%llu", est.samples,
                static_cast<unsigned long long>(est.seed));
  s += buf;
  s += "|t";
  for (double v : est.t_grid) add(v);
  s += "|eta";
  for (double v : est.eta_grid) add(v);
  s += "|delta";
  for (double v : est.delta_grid) add(v);
  s += "|p";
  for (double v : extra) add(v);
  return fnv1a(s);
}

std::vector<double> or_default(const std::vector<double>& grid, std::vector<double> fb) {
  return grid.empty() ? std::move(fb) : grid;
}

// --- Faddeeva function and the complex error function ------------------------

// Rational approximation on the upper half plane (Weideman, SIAM J. Numer.
// Anal. 31). Coefficients are generated once by a direct cosine transform.
Cplx faddeeva_upper(Cplx z) {
  constexpr int N = 40;
  static const double L = std::sqrt(N / std::sqrt(2.0));
  static const std::vector<double> coef = [] {
    const int M = 2 * N, M2 = 2 * M;
    std::vector<double> f(M2, 0.0);
    for (int idx = 1; idx < M2; ++idx) {
      const int k = idx - M;  // k = -M+1 .. M-1
      const double t = L * std::tan(k * M_PI / (2.0 * M));
      f[idx] = std::exp(-t * t) * (L * L + t * t);
    }
    std::vector<double> fsh(M2);
    for (int n = 0; n < M2; ++n) fsh[n] = f[(n + M) % M2];
    std::vector<double> a(N);
    for (int j = 1; j <= N; ++j) {
      double s = 0.0;
      for (int n = 0; n < M2; ++n) s += fsh[n] * std::cos(kTwoPi * j * n / M2);
      a[j - 1] = s / M2;
    }
    std::reverse(a.begin(), a.end());  // highest degree first
    return a;
  }();
  const Cplx iz(-z.imag(), z.real());
  const Cplx d = L - iz;
  const Cplx Zt = (L + iz) / d;
  Cplx p(0.0, 0.0);
  for (double c : coef) p = p * Zt + c;
  return 2.0 * p / (d * d) + (1.0 / std::sqrt(M_PI)) / d;
}

}  // namespace

Cplx cerf(Cplx z) {
  // erfc(z) = exp(-z^2) w(iz); reduce to Re z >= 0 by oddness.
  if (z.real() >= 0.0)
    return 1.0 - std::exp(-z * z) * faddeeva_upper(Cplx(-z.imag(), z.real()));
  const Cplx m = -z;
  return std::exp(-m * m) * faddeeva_upper(Cplx(-m.imag(), m.real())) - 1.0;
}

namespace {

// --- Closed-form orbit integrals of one fiber character ----------------------

// Along r -> x exp(rX) on the dim-3 Heisenberg shape, f_v is
//   kappa sum_{n1,n2} exp(-((x0+o1 r+n1)^2 + (y0+o2 r+n2)^2)/(2w^2))
//                     exp(2 pi i v (z(r) - q n2 (x0+o1 r)))
// with z(r) the exact (unreduced) quadratic central coordinate. Every term is
// exp(-(A r^2 + B r + C)) with Re A > 0, integrated by the erf primitive. The
// scaled form below keeps all intermediates O(1): |e^G| <= |sqrt(A)| sup|int|
// and |e^{-P(r)}| <= 1.
struct ModeOrbit {
  double x0, y0, o1, o2;  // noncentral coordinates and velocities
  double a2, a1, a0;      // central coordinate z(r) = a2 r^2 + a1 r + a0
  double q, w, kappa;
  double v;
  Cplx A, sqrtA, pref;  // pref = kappa sqrt(pi/A)/2

  ModeOrbit(const LieAlgebra& alg, const NilPoint& x, const std::vector<double>& Xf,
            long mode, double width) {
    x0 = x.x[0];
    y0 = x.x[1];
    o1 = Xf[0];
    o2 = Xf[1];
    v = static_cast<double>(mode);
    w = width;
    q = to_double(alg.c(0, 1, 2));
    const auto v0 = second_to_first(alg, x.x);
    auto zat = [&](double r) {
      std::vector<double> rx(3);
      for (int i = 0; i < 3; ++i) rx[i] = r * Xf[i];
      return first_to_second(alg, bch_t(alg, v0, rx))[2];
    };
    a0 = x.x[2];
    const double zp = zat(1.0), zm = zat(-1.0);
    a2 = 0.5 * (zp + zm) - a0;
    a1 = 0.5 * (zp - zm);
    kappa = width * std::sqrt(kTwoPi) * std::exp(-2.0 * M_PI * M_PI * v * v * width * width);
    const double rho2 = o1 * o1 + o2 * o2;
    A = Cplx(rho2 / (2.0 * w * w), -kTwoPi * v * a2);
    sqrtA = std::sqrt(A);
    pref = 0.5 * kappa * std::sqrt(M_PI / A);
  }

  // int_{s0}^{s1} f_v(x exp(rX)) e^{i xfreq r} dr. Exactly additive in the
  // endpoints, so callers may accumulate increments in any order.
  Cplx integral(double s0, double s1, double xfreq) const {
    if (s0 == s1) return {0.0, 0.0};
    double sign = 1.0;
    if (s1 < s0) {
      std::swap(s0, s1);
      sign = -1.0;
    }
    const double rho2 = o1 * o1 + o2 * o2;
    const double cut = 8.0 * w;  // window radius; tail mass below 1e-13
    const bool xaxis = std::abs(o1) >= std::abs(o2);
    const double oa = xaxis ? o1 : o2, ob = xaxis ? o2 : o1;
    const double ca = xaxis ? x0 : y0, cb = xaxis ? y0 : x0;
    const double margin = 2.0 * cut / std::abs(oa);
    const double e1 = -ca - oa * (s0 - margin), e2 = -ca - oa * (s1 + margin);
    const long na_lo = static_cast<long>(std::floor(std::min(e1, e2)));
    const long na_hi = static_cast<long>(std::ceil(std::max(e1, e2)));
    const long spread = static_cast<long>(std::ceil(cut * (1.0 + std::abs(ob / oa)))) + 1;
    const double iw2 = 1.0 / (w * w);

    Cplx acc(0.0, 0.0);
    for (long na = na_lo; na <= na_hi; ++na) {
      const double rc = -(ca + na) / oa;
      const long nb0 = std::lround(-(cb + ob * rc));
      for (long nb = nb0 - spread; nb <= nb0 + spread; ++nb) {
        const double n1 = static_cast<double>(xaxis ? na : nb);
        const double n2 = static_cast<double>(xaxis ? nb : na);
        const double xb = x0 + n1, yb = y0 + n2;
        const double rstar = -(xb * o1 + yb * o2) / rho2;
        const double rcl = std::clamp(rstar, s0, s1);
        const double dx = xb + o1 * rcl, dy = yb + o2 * rcl;
        if (dx * dx + dy * dy > cut * cut) continue;

        const Cplx B((xb * o1 + yb * o2) * iw2, -(kTwoPi * v * (a1 - q * n2 * o1) + xfreq));
        const Cplx C((xb * xb + yb * yb) * 0.5 * iw2, -kTwoPi * v * (a0 - q * n2 * x0));
        const Cplx G = B * B / (4.0 * A) - C;
        const Cplx off = B / (2.0 * sqrtA);
        auto endpoint = [&](double r) -> Cplx {
          const Cplx zz = sqrtA * r + off;
          const double u = zz.real(), t = zz.imag();
          if (u * u - t * t > 34.0) return u > 0.0 ? std::exp(G) : -std::exp(G);
          const Cplx Pr = (A * r + B) * r + C;
          if (u >= 0.0)
            return std::exp(G) - std::exp(-Pr) * faddeeva_upper(Cplx(-t, u));
          return std::exp(-Pr) * faddeeva_upper(Cplx(t, -u)) - std::exp(G);
        };
        acc += endpoint(s1) - endpoint(s0);
      }
    }
    return sign * pref * acc;
  }
};

struct AtomToral {
  Cplx coeff;
  double freq;
};

Cplx toral_int(const AtomToral& a, double s0, double s1) {
  if (std::abs(a.freq) < 1e-12) return a.coeff * (s1 - s0);
  const Cplx i_f(0.0, a.freq);
  return a.coeff * (std::exp(i_f * s1) - std::exp(i_f * s0)) / i_f;
}

struct FresAtom {
  ModeOrbit mo;
  double xfreq;
  Cplx coeff;
  double s_last = 0.0;
  Cplx acc{0.0, 0.0};
  Cplx upto(double s) {
    if (s != s_last) {
      acc += mo.integral(s_last, s, xfreq);
      s_last = s;
    }
    return acc;
  }
};

}  // namespace

// --- OrbitAnalytics -----------------------------------------------------------

struct OrbitAnalytics::Impl {
  const FlowSpec* flow;
  const FlowConfig* cfg;
  NilPoint x;
  bool fast = false;         // analytic clock available
  bool fiber_shape = false;  // Heisenberg-shape fiber machinery available
  double c0 = 1.0;
  std::vector<AtomToral> ator;  // toral part of alpha along the orbit
  std::vector<FresAtom> amodes;
  std::vector<double> fiber_v;  // mode integers, aligned with amodes
  double zeta = 0.0;            // fiber rate of the triple's Z

  struct Handle {
    bool analytic = false;
    Observable fobs;
    Cplx const_coeff{0.0, 0.0};
    std::vector<AtomToral> toral;
    std::vector<FresAtom> fres;
  };
  std::vector<Handle> handles;

  bool has_tau = false;
  double tau_t = 0.0, tau_s = 0.0;

  double tfreq(const std::vector<long>& m) const {
    const auto& Xf = flow->X.f();
    double dot = 0.0;
    for (size_t i = 0; i < m.size(); ++i) dot += static_cast<double>(m[i]) * Xf[i];
    return kTwoPi * dot;
  }
  Cplx tphase(const std::vector<long>& m) const {
    double ph = 0.0;
    for (size_t i = 0; i < m.size(); ++i) ph += static_cast<double>(m[i]) * x.x[i];
    ph *= kTwoPi;
    return {std::cos(ph), std::sin(ph)};
  }

  double clock(double s) {
    Cplx acc(c0 * s, 0.0);
    for (const auto& a : ator) acc += toral_int(a, 0.0, s);
    for (size_t j = 0; j < amodes.size(); ++j) acc += amodes[j].coeff * amodes[j].upto(s);
    return acc.real();
  }

  double alpha_at(double s) const {
    const NilPoint p = nilflow_step(*flow->lattice, x, flow->X, s);
    return cfg->alpha_obs.val(p.x).real();
  }

  double solve_tau(double t) {
    if (t == 0.0) return 0.0;
    if (ator.empty() && amodes.empty()) return t / c0;
    if (has_tau && t == tau_t) return tau_s;
    const double amin = cfg->alpha_min > 0.0 ? cfg->alpha_min : c0;
    double lo = t >= 0.0 ? 0.0 : t / amin;
    double hi = t >= 0.0 ? t / amin : 0.0;
    double s = std::clamp(t / c0, lo, hi);
    bool done = false;
    for (int it = 0; it < 200 && !done; ++it) {
      const double g = clock(s) - t;
      if (std::abs(g) <= 1e-9) {
        done = true;
        break;
      }
      if (g > 0.0) hi = s;
      else lo = s;
      double ns = s - g / alpha_at(s);
      if (!(ns > lo && ns < hi)) ns = 0.5 * (lo + hi);
      if (ns == s) {
        done = true;
        break;
      }
      s = ns;
    }
    if (!done && std::abs(clock(s) - t) > 1e-6)
      throw std::runtime_error("orbit clock: inversion did not converge");
    has_tau = true;
    tau_t = t;
    tau_s = s;
    return s;
  }
};

OrbitAnalytics::OrbitAnalytics(const FlowSpec& flow, const FlowConfig& cfg, const NilPoint& x)
    : impl_(std::make_unique<Impl>()) {
  Impl& im = *impl_;
  im.flow = &flow;
  im.cfg = &cfg;
  im.x = x;
  const LieAlgebra& alg = *flow.algebra;
  im.fiber_shape = alg.dim() == 3 && flow.z && flow.z->coord_aligned().size() == 1 &&
                   flow.z->coord_aligned()[0] == 2;
  bool modes_ok = im.fiber_shape;
  for (const auto& fm : flow.alpha.fiber) modes_ok = modes_ok && fm.v.size() == 1;
  im.fast = flow.alpha.fiber.empty() || modes_ok;
  im.c0 = flow.alpha.constant.real();
  if (im.fast) {
    for (const auto& tm : flow.alpha.toral)
      im.ator.push_back({tm.c * im.tphase(tm.m), im.tfreq(tm.m)});
    for (const auto& fm : flow.alpha.fiber) {
      im.amodes.push_back({ModeOrbit(alg, x, flow.X.f(), fm.v[0], fm.width), 0.0, fm.coeff});
      im.fiber_v.push_back(static_cast<double>(fm.v[0]));
    }
  }
  if (im.fiber_shape && flow.triple)
    im.zeta = flow.z->fiber_coords(flow.triple->Z.f())[0];
}

OrbitAnalytics::~OrbitAnalytics() = default;
OrbitAnalytics::OrbitAnalytics(OrbitAnalytics&&) noexcept = default;

bool OrbitAnalytics::fast() const { return impl_->fast; }

double OrbitAnalytics::tilde_tau(double t) {
  if (!impl_->fast) return nillab::tilde_tau(impl_->x, *impl_->cfg, t);
  return impl_->solve_tau(t);
}

NilPoint OrbitAnalytics::flow_point(double t) {
  if (!impl_->fast) return timechange_step(impl_->x, *impl_->cfg, t);
  return nilflow_step(*impl_->flow->lattice, impl_->x, impl_->flow->X, impl_->solve_tau(t));
}

int OrbitAnalytics::register_birkhoff(const HarmonicSpec& f, const Observable& fobs) {
  Impl& im = *impl_;
  Impl::Handle h;
  h.fobs = fobs;
  bool fmodes_ok = im.fiber_shape;
  for (const auto& fm : f.fiber) fmodes_ok = fmodes_ok && fm.v.size() == 1;
  // Products of two fiber modes leave the analytic family.
  h.analytic = im.fast && !(f.fiber.size() && im.flow->alpha.fiber.size()) &&
               (f.fiber.empty() || fmodes_ok);
  if (h.analytic) {
    const FlowSpec& flow = *im.flow;
    const LieAlgebra& alg = *flow.algebra;
    // constant part of f picks up the full clock: contributes f.constant * T.
    h.const_coeff = f.constant;
    for (const auto& tm : f.toral) {
      const Cplx base = tm.c * im.tphase(tm.m);
      h.toral.push_back({base * flow.alpha.constant, im.tfreq(tm.m)});
      for (const auto& am : flow.alpha.toral) {
        std::vector<long> msum(tm.m);
        for (size_t i = 0; i < msum.size(); ++i) msum[i] += am.m[i];
        h.toral.push_back({tm.c * am.c * im.tphase(msum), im.tfreq(msum)});
      }
      for (const auto& af : flow.alpha.fiber)
        h.fres.push_back({ModeOrbit(alg, im.x, flow.X.f(), af.v[0], af.width),
                          im.tfreq(tm.m), base * af.coeff});
    }
    for (const auto& fm : f.fiber) {
      ModeOrbit mo(alg, im.x, flow.X.f(), fm.v[0], fm.width);
      h.fres.push_back({mo, 0.0, fm.coeff * flow.alpha.constant});
      for (const auto& am : flow.alpha.toral)
        h.fres.push_back({mo, im.tfreq(am.m), fm.coeff * am.c * im.tphase(am.m)});
    }
  }
  im.handles.push_back(std::move(h));
  return static_cast<int>(im.handles.size()) - 1;
}

Cplx OrbitAnalytics::birkhoff(int handle, double T) {
  Impl& im = *impl_;
  Impl::Handle& h = im.handles.at(handle);
  if (!h.analytic) return birkhoff_integral(h.fobs, im.x, *im.cfg, T);
  const double s = im.solve_tau(T);
  Cplx acc = h.const_coeff * T;
  for (const auto& a : h.toral) acc += toral_int(a, 0.0, s);
  for (auto& fr : h.fres) acc += fr.coeff * fr.upto(s);
  return acc;
}

std::vector<Cplx> OrbitAnalytics::shear_components(double t) {
  Impl& im = *impl_;
  const auto& fiber = im.flow->alpha.fiber;
  if (fiber.empty()) return {};
  if (!(im.fast && im.fiber_shape && im.flow->triple)) {
    const ShearRecord rec = shear_record(im.x, *im.cfg, t);
    std::vector<Cplx> out;
    out.reserve(rec.Dv.size());
    for (const auto& dv : rec.Dv) out.push_back(dv.second);
    return out;
  }
  const double s = im.solve_tau(t);
  std::vector<Cplx> out;
  out.reserve(fiber.size());
  for (size_t j = 0; j < fiber.size(); ++j) {
    const Cplx integ = im.amodes[j].coeff * im.amodes[j].upto(s);
    out.push_back(Cplx(0.0, -kTwoPi * im.fiber_v[j] * im.zeta) * integ);
  }
  return out;
}

// --- Estimators ---------------------------------------------------------------

FlowConfig to_flow_config(const FlowSpec& flow) {
  if (!flow.algebra || !flow.lattice)
    throw std::runtime_error("flow spec: algebra and lattice are required");
  FlowConfig cfg =
      make_flow_config(flow.lattice, flow.X,
                       harmonic_time_change(flow.algebra, flow.z, flow.alpha), flow.triple);
  CounterRng rng(0x11a6u);
  std::vector<double> p(flow.algebra->dim());
  for (int trial = 0; trial < 16; ++trial) {
    for (auto& c : p) c = rng.uniform();
    if (std::abs(cfg.alpha_obs.val(p).imag()) > 1e-9)
      throw std::runtime_error("flow spec: time change must be real valued");
  }
  return cfg;
}

CurveReport correlation_curve(const Observable& f, const Observable& g, const FlowSpec& flow,
                              const EstimatorConfig& est) {
  if (est.t_grid.empty()) throw std::runtime_error("correlation_curve: empty time grid");
  const FlowConfig cfg = to_flow_config(flow);
  const auto pts = haar_sample(*flow.lattice, est.samples, est.seed);
  CStat mf, mg;
  std::vector<CStat> corr(est.t_grid.size());
  for (const auto& p : pts) {
    const double a = cfg.alpha_obs.val(p.x).real();
    const Cplx fx = f.val(p.x), gx = g.val(p.x);
    mf.add(fx * a);
    mg.add(gx * a);
    OrbitAnalytics oa(flow, cfg, p);
    const Cplx gc = std::conj(gx) * a;
    for (size_t i = 0; i < est.t_grid.size(); ++i)
      corr[i].add(f.val(oa.flow_point(est.t_grid[i]).x) * gc);
  }
  CurveReport r;
  r.estimator = "correlation_curve";
  r.t = est.t_grid;
  r.config_hash = est_hash("correlation_curve", est, {});
  const Cplx prod = mf.mean() * std::conj(mg.mean());
  for (const auto& c : corr) {
    r.estimate.push_back(std::abs(c.mean() - prod));
    r.std_error.push_back(c.se());
  }
  return r;
}

namespace {
// 10-point Gauss-Legendre on [-1, 1].
constexpr double kGlX[5] = {0.14887433898163121, 0.43339539412924719, 0.67940956829902441,
                            0.86506336668898451, 0.97390652851717172};
constexpr double kGlW[5] = {0.29552422471475287, 0.26926671930999635, 0.21908636251598204,
                            0.14945134915058059, 0.066671344308688138};
}  // namespace

CurveReport shear_integral_distribution(const Observable& f, const AlgebraVector& W,
                                        const FlowSpec& flow, double s, double t,
                                        const EstimatorConfig& est) {
  const FlowConfig cfg = to_flow_config(flow);
  const auto etas = or_default(est.eta_grid, {0.02 * s, 0.05 * s, 0.1 * s, 0.2 * s});
  const auto pts = haar_sample(*flow.lattice, est.samples, est.seed);
  std::vector<Stat> stats(etas.size());
  const double half = 0.5 * s;
  for (const auto& p : pts) {
    Cplx acc(0.0, 0.0);
    for (int j = 0; j < 5; ++j) {
      for (double sgn : {-1.0, 1.0}) {
        const double r = half + sgn * half * kGlX[j];
        const NilPoint inner = nilflow_step(*flow.lattice, p, W, r);
        OrbitAnalytics oa(flow, cfg, inner);
        acc += kGlW[j] * f.val(oa.flow_point(t).x);
      }
    }
    const double mag = std::abs(acc) * half;
    for (size_t i = 0; i < etas.size(); ++i) stats[i].add(mag >= etas[i] ? 1.0 : 0.0);
  }
  CurveReport r;
  r.estimator = "shear_integral_distribution";
  r.t = etas;
  r.config_hash = est_hash("shear_integral_distribution", est, {s, t});
  for (const auto& st : stats) {
    r.estimate.push_back(st.mean());
    r.std_error.push_back(st.se());
  }
  return r;
}

namespace {

void require_fiber_invariant(const FlowSpec& flow, const char* who) {
  if (!flow.alpha.fiber_free())
    throw std::runtime_error(std::string(who) + ": time change must be fiber invariant");
}

}  // namespace

CurveReport sublevel_birkhoff(const HarmonicSpec& f, const FlowSpec& flow, double C,
                              const std::vector<double>& T_grid, const EstimatorConfig& est) {
  require_fiber_invariant(flow, "sublevel_birkhoff");
  if (T_grid.empty()) throw std::runtime_error("sublevel_birkhoff: empty time grid");
  const FlowConfig cfg = to_flow_config(flow);
  const Observable fobs = harmonic_obs(flow.algebra, flow.z.get(), f);
  const auto pts = haar_sample(*flow.lattice, est.samples, est.seed);
  std::vector<Stat> stats(T_grid.size());
  for (const auto& p : pts) {
    OrbitAnalytics oa(flow, cfg, p);
    const int h = oa.register_birkhoff(f, fobs);
    for (size_t i = 0; i < T_grid.size(); ++i)
      stats[i].add(std::abs(oa.birkhoff(h, T_grid[i])) < C ? 1.0 : 0.0);
  }
  CurveReport r;
  r.estimator = "sublevel_birkhoff";
  r.t = T_grid;
  r.config_hash = est_hash("sublevel_birkhoff", est, {C});
  for (const auto& st : stats) {
    r.estimate.push_back(st.mean());
    r.std_error.push_back(st.se());
  }
  return r;
}

double cesaro_sublevel(const HarmonicSpec& f, const FlowSpec& flow, double C, double T,
                       const EstimatorConfig& est) {
  require_fiber_invariant(flow, "cesaro_sublevel");
  const FlowConfig cfg = to_flow_config(flow);
  const Observable fobs = harmonic_obs(flow.algebra, flow.z.get(), f);
  const auto pts = haar_sample(*flow.lattice, est.samples, est.seed);
  const int K = 50;
  Stat st;
  for (const auto& p : pts) {
    OrbitAnalytics oa(flow, cfg, p);
    const int h = oa.register_birkhoff(f, fobs);
    for (int k = 1; k <= K; ++k)
      st.add(std::abs(oa.birkhoff(h, T * k / K)) < C ? 1.0 : 0.0);
  }
  return st.mean();
}

ProgressionResult find_progression(const HarmonicSpec& f, const FlowSpec& flow, double C,
                                   double epsilon, int ell, const EstimatorConfig& est) {
  require_fiber_invariant(flow, "find_progression");
  if (est.t_grid.empty()) throw std::runtime_error("find_progression: empty candidate grid");
  if (ell < 1) throw std::runtime_error("find_progression: ell must be positive");
  const FlowConfig cfg = to_flow_config(flow);
  const Observable fobs = harmonic_obs(flow.algebra, flow.z.get(), f);
  const auto pts = haar_sample(*flow.lattice, est.samples, est.seed);

  struct Slot {
    size_t cand;
    int i;
    double time;
  };
  std::vector<Slot> slots;
  for (size_t c = 0; c < est.t_grid.size(); ++c)
    for (int i = 1; i <= ell; ++i) slots.push_back({c, i, est.t_grid[c] * i});
  std::sort(slots.begin(), slots.end(),
            [](const Slot& a, const Slot& b) { return a.time < b.time; });

  std::vector<std::vector<Stat>> stats(est.t_grid.size(), std::vector<Stat>(ell));
  for (const auto& p : pts) {
    OrbitAnalytics oa(flow, cfg, p);
    const int h = oa.register_birkhoff(f, fobs);
    for (const auto& sl : slots)
      stats[sl.cand][sl.i - 1].add(std::abs(oa.birkhoff(h, sl.time)) < C ? 1.0 : 0.0);
  }

  ProgressionResult out;
  double best = std::numeric_limits<double>::infinity();
  size_t best_c = 0;
  for (size_t c = 0; c < est.t_grid.size(); ++c) {
    double worst = 0.0;
    for (int i = 0; i < ell; ++i)
      worst = std::max(worst, stats[c][i].mean() + 2.0 * stats[c][i].se());
    if (!out.found && worst < epsilon) {
      out.found = true;
      best_c = c;
      best = worst;
      break;
    }
    if (worst < best) {
      best = worst;
      best_c = c;
    }
  }
  out.t0 = est.t_grid[best_c];
  for (int i = 0; i < ell; ++i) {
    out.measures.push_back(stats[best_c][i].mean());
    out.std_errors.push_back(stats[best_c][i].se());
  }
  return out;
}

CurveReport decoupling_measure(const HarmonicSpec& f, const FlowSpec& flow, double C,
                               double t, const std::vector<double>& T_grid,
                               const EstimatorConfig& est) {
  require_fiber_invariant(flow, "decoupling_measure");
  if (T_grid.empty()) throw std::runtime_error("decoupling_measure: empty time grid");
  const FlowConfig cfg = to_flow_config(flow);
  const Observable fobs = harmonic_obs(flow.algebra, flow.z.get(), f);
  const auto pts = haar_sample(*flow.lattice, est.samples, est.seed);
  std::vector<Stat> stats(T_grid.size());
  for (const auto& p : pts) {
    OrbitAnalytics oa(flow, cfg, p);
    const int h = oa.register_birkhoff(f, fobs);
    const Cplx Ft = oa.birkhoff(h, t);
    for (size_t i = 0; i < T_grid.size(); ++i) {
      // F_T(phi_t x) - F_T(x) = F_t(phi_T x) - F_t(x): two length-t integrals.
      const NilPoint y = oa.flow_point(T_grid[i]);
      OrbitAnalytics oy(flow, cfg, y);
      const int hy = oy.register_birkhoff(f, fobs);
      const Cplx diff = oy.birkhoff(hy, t) - Ft;
      stats[i].add(std::abs(diff) < 2.0 * C ? 1.0 : 0.0);
    }
  }
  CurveReport r;
  r.estimator = "decoupling_measure";
  r.t = T_grid;
  r.config_hash = est_hash("decoupling_measure", est, {C, t});
  for (const auto& st : stats) {
    r.estimate.push_back(st.mean());
    r.std_error.push_back(st.se());
  }
  return r;
}

ExponentFit trig_sublevel_exponent(const FlowSpec& flow, const HarmonicSpec& p,
                                   const EstimatorConfig& est) {
  if (std::abs(p.constant) != 0.0 || !p.toral.empty() || p.fiber.empty())
    throw std::runtime_error("trig_sublevel_exponent: expected a pure fiber mode sum");
  const auto deltas = or_default(est.delta_grid, {0.02, 0.05, 0.1, 0.2, 0.4, 0.8});
  std::vector<Observable> terms;
  for (const auto& fm : p.fiber)
    terms.push_back(fm.coeff *
                    fiber_character_obs(flow.algebra, *flow.z, fm.v, fm.width, fm.truncation));
  const auto pts = haar_sample(*flow.lattice, est.samples, est.seed);
  std::vector<Stat> stats(deltas.size());
  for (const auto& q : pts) {
    Cplx total(0.0, 0.0);
    double denom = 0.0;
    for (const auto& term : terms) {
      const Cplx v = term.val(q.x);
      total += v;
      denom += std::abs(v);
    }
    const double mag = std::abs(total);
    for (size_t i = 0; i < deltas.size(); ++i)
      stats[i].add(mag <= deltas[i] * denom ? 1.0 : 0.0);
  }

  ExponentFit out;
  out.curve.estimator = "trig_sublevel_exponent";
  out.curve.t = deltas;
  out.curve.config_hash = est_hash("trig_sublevel_exponent", est, {});
  for (const auto& st : stats) {
    out.curve.estimate.push_back(st.mean());
    out.curve.std_error.push_back(st.se());
  }
  // log-log least squares over the strictly positive measures
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  int np = 0;
  for (size_t i = 0; i < deltas.size(); ++i) {
    if (stats[i].mean() <= 0.0) continue;
    const double lx = std::log(deltas[i]), ly = std::log(stats[i].mean());
    sx += lx;
    sy += ly;
    sxx += lx * lx;
    sxy += lx * ly;
    ++np;
  }
  if (np < 2) return out;
  const double det = np * sxx - sx * sx;
  if (std::abs(det) < 1e-12) return out;
  out.d = (np * sxy - sx * sy) / det;
  out.Delta = std::exp((sy * sxx - sx * sxy) / det);
  out.degenerate = false;
  out.envelope_ok = true;
  for (size_t i = 0; i < deltas.size(); ++i) {
    if (stats[i].mean() <= 0.0) continue;
    if (stats[i].mean() > 1.5 * out.Delta * std::pow(deltas[i], out.d))
      out.envelope_ok = false;
  }
  return out;
}

RatioReport quasi_invariance_ratio(const FlowSpec& flow, double t,
                                   const std::vector<double>& s_grid,
                                   const EstimatorConfig& est) {
  if (!flow.triple) throw std::runtime_error("quasi_invariance_ratio: triple required");
  const FlowConfig cfg = to_flow_config(flow);
  const auto pts = haar_sample(*flow.lattice, est.samples, est.seed);
  RatioReport out;
  for (const auto& p : pts) {
    OrbitAnalytics oa(flow, cfg, p);
    double den = 0.0;
    for (const Cplx& dv : oa.shear_components(t)) den += std::abs(dv);
    if (den < 1e-8) continue;
    ++out.valid;
    for (double s : s_grid) {
      const NilPoint q = nilflow_step(*flow.lattice, p, flow.triple->Z, s);
      OrbitAnalytics oq(flow, cfg, q);
      double num = 0.0;
      for (const Cplx& dv : oq.shear_components(t)) num += std::abs(dv);
      out.worst = std::max(out.worst, num / den);
    }
  }
  out.degenerate = out.valid == 0;
  return out;
}

CompareReport comparison_and_distortion(const FlowSpec& flow, double t,
                                        const EstimatorConfig& est) {
  if (!flow.triple) throw std::runtime_error("comparison_and_distortion: triple required");
  const FlowConfig cfg = to_flow_config(flow);
  const auto deltas = or_default(est.delta_grid, {0.1, 0.2, 0.5, 1.0, 2.0});
  const auto pts = haar_sample(*flow.lattice, est.samples, est.seed);
  std::vector<Stat> stats(deltas.size());
  CompareReport out;
  int valid = 0;
  const double h = 1e-5;
  for (const auto& p : pts) {
    OrbitAnalytics oa(flow, cfg, p);
    Cplx dsum(0.0, 0.0);
    double den = 0.0;
    for (const Cplx& dv : oa.shear_components(t)) {
      dsum += dv;
      den += std::abs(dv);
    }
    if (den < 1e-8) continue;
    ++valid;
    const double D = dsum.real();
    for (size_t i = 0; i < deltas.size(); ++i)
      stats[i].add(std::abs(D) <= deltas[i] * den ? 1.0 : 0.0);
    // central difference of D along the fiber direction
    double dpm[2];
    int k = 0;
    for (double sgn : {1.0, -1.0}) {
      const NilPoint q = nilflow_step(*flow.lattice, p, flow.triple->Z, sgn * h);
      OrbitAnalytics oq(flow, cfg, q);
      Cplx s(0.0, 0.0);
      for (const Cplx& dv : oq.shear_components(t)) s += dv;
      dpm[k++] = s.real();
    }
    const double zd = (dpm[0] - dpm[1]) / (2.0 * h);
    out.worst_distortion = std::max(out.worst_distortion, std::abs(zd) / den);
  }
  out.degenerate = valid == 0;
  out.measure.estimator = "comparison_and_distortion";
  out.measure.t = deltas;
  out.measure.config_hash = est_hash("comparison_and_distortion", est, {t});
  for (const auto& st : stats) {
    out.measure.estimate.push_back(st.mean());
    out.measure.std_error.push_back(st.se());
  }
  return out;
}

double conjugacy_check(const FlowSpec& flow1, const FlowSpec& flow2, const Observable& u,
                       const EstimatorConfig& est) {
  if (est.t_grid.empty()) throw std::runtime_error("conjugacy_check: empty time grid");
  const FlowConfig cfg1 = to_flow_config(flow1);
  const FlowConfig cfg2 = to_flow_config(flow2);
  const auto pts = haar_sample(*flow1.lattice, est.samples, est.seed);
  auto psi = [&](const NilPoint& p) {
    OrbitAnalytics oa(flow1, cfg1, p);
    return oa.flow_point(u.val(p.x).real());
  };
  auto psi_inv = [&](const NilPoint& target) {
    OrbitAnalytics oa(flow1, cfg1, target);
    NilPoint y = target;
    for (int it = 0; it < 100; ++it) {
      NilPoint yn = oa.flow_point(-u.val(y.x).real());
      const double d = nil_distance(yn, y);
      y = std::move(yn);
      if (d < 1e-13) return y;
    }
    throw std::runtime_error("conjugacy_check: inverse iteration did not converge");
  };
  double defect = 0.0;
  for (const auto& p : pts) {
    const NilPoint y0 = psi_inv(p);
    OrbitAnalytics o1(flow1, cfg1, p);
    OrbitAnalytics o2(flow2, cfg2, y0);
    for (double tau : est.t_grid) {
      const NilPoint lhs = o1.flow_point(tau);
      const NilPoint rhs = psi(o2.flow_point(tau));
      defect = std::max(defect, nil_distance(lhs, rhs));
    }
  }
  return defect;
}

CurveReport factor_lift_check(const FlowSpec& total, const FlowSpec& base,
                              const RatMat& projection, const Observable& f_base,
                              const Observable& g_base, const EstimatorConfig& est) {
  require_fiber_invariant(total, "factor_lift_check");
  if (est.t_grid.empty()) throw std::runtime_error("factor_lift_check: empty time grid");
  const FlowConfig cfgT = to_flow_config(total);
  const FlowConfig cfgB = to_flow_config(base);
  const Observable F = lift_observable(total.algebra, base.algebra, projection, f_base);
  const Observable G = lift_observable(total.algebra, base.algebra, projection, g_base);
  const auto ptsT = haar_sample(*total.lattice, est.samples, est.seed);
  const auto ptsB = haar_sample(*base.lattice, est.samples, est.seed ^ 0x9e3779b97f4a7c15ull);

  std::vector<CStat> corrT(est.t_grid.size()), corrB(est.t_grid.size());
  for (const auto& p : ptsT) {
    const double a = cfgT.alpha_obs.val(p.x).real();
    const Cplx gc = std::conj(G.val(p.x)) * a;
    OrbitAnalytics oa(total, cfgT, p);
    for (size_t i = 0; i < est.t_grid.size(); ++i)
      corrT[i].add(F.val(oa.flow_point(est.t_grid[i]).x) * gc);
  }
  for (const auto& p : ptsB) {
    const double a = cfgB.alpha_obs.val(p.x).real();
    const Cplx gc = std::conj(g_base.val(p.x)) * a;
    OrbitAnalytics oa(base, cfgB, p);
    for (size_t i = 0; i < est.t_grid.size(); ++i)
      corrB[i].add(f_base.val(oa.flow_point(est.t_grid[i]).x) * gc);
  }
  CurveReport r;
  r.estimator = "factor_lift_check";
  r.t = est.t_grid;
  r.config_hash = est_hash("factor_lift_check", est, {});
  for (size_t i = 0; i < est.t_grid.size(); ++i) {
    r.estimate.push_back(std::abs(corrT[i].mean() - corrB[i].mean()));
    r.std_error.push_back(std::hypot(corrT[i].se(), corrB[i].se()));
  }
  return r;
}

}  // namespace nillab
