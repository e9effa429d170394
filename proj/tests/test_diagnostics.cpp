#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <array>
#include <cmath>
#include <complex>

#include "nillab/diagnostics.hpp"

using namespace nillab;

namespace {

constexpr double kTwoPi = 6.283185307179586476925286766559;

struct Setup {
  std::shared_ptr<const LieAlgebra> alg;
  std::shared_ptr<const Lattice> lat;
  std::shared_ptr<const CentralSubspace> z;
  AlgebraVector X;
  HeisenbergTriple triple;
};

Setup heis() {
  Setup s;
  s.alg = std::make_shared<const LieAlgebra>(LieAlgebra(3, {{0, 1, 2, Rat(1)}}));
  s.lat = std::make_shared<const Lattice>(*s.alg);
  s.z = std::make_shared<const CentralSubspace>(*s.alg, RatMat{{Rat(0), Rat(0), Rat(1)}});
  s.X = AlgebraVector::floating({1.0, std::sqrt(2.0), 0.0});
  s.triple = find_heisenberg_triple(*s.alg, s.X, 7);
  return s;
}

FlowSpec heis_flow(const Setup& s) {
  FlowSpec fl{s.alg, s.lat, s.z, s.X, {}, s.triple};
  fl.alpha.constant = 1.0;
  return fl;
}

// unit mean: the fiber modes have zero fiber average
FlowSpec shearing_flow(const Setup& s, double c) {
  FlowSpec fl = heis_flow(s);
  fl.alpha.fiber = {{{1}, Cplx(c, 0.0), 0.5, 4}, {{-1}, Cplx(c, 0.0), 0.5, 4}};
  return fl;
}

struct TorusSetup {
  std::shared_ptr<const LieAlgebra> alg;
  std::shared_ptr<const Lattice> lat;
  AlgebraVector omega;
};

TorusSetup torus2() {
  TorusSetup s;
  s.alg = std::make_shared<const LieAlgebra>(LieAlgebra(2, {}));
  s.lat = std::make_shared<const Lattice>(*s.alg);
  s.omega = AlgebraVector::floating({1.0, std::sqrt(2.0)});
  return s;
}

FlowSpec torus_flow(const TorusSetup& s, std::vector<TorusMode> modes) {
  FlowSpec fl{s.alg, s.lat, nullptr, s.omega, {}, std::nullopt};
  fl.alpha.constant = 1.0;
  fl.alpha.toral = std::move(modes);
  return fl;
}

}  // namespace

TEST_CASE("cerf: known values, symmetries, real axis") {
  CHECK(std::abs(cerf({1.0, 0.0}) - Cplx(0.842700792949715, 0.0)) < 1e-13);
  CHECK(std::abs(cerf({2.0, 0.0}) - Cplx(0.995322265018953, 0.0)) < 1e-13);
  CHECK(std::abs(cerf({1.0, 1.0}) - Cplx(1.316151281697947, 0.190453469237835)) < 1e-12);
  // erfi(1) = -i erf(i)
  CHECK(std::abs(cerf({0.0, 1.0}) - Cplx(0.0, 1.650425758797543)) < 1e-12);
  for (double re : {-1.3, 0.2, 2.7}) {
    for (double im : {-2.1, 0.4, 1.8}) {
      const Cplx z(re, im);
      CHECK(std::abs(cerf(-z) + cerf(z)) < 1e-13);
      CHECK(std::abs(cerf(std::conj(z)) - std::conj(cerf(z))) < 1e-13);
    }
  }
  for (double x = -3.0; x <= 3.0; x += 0.25)
    CHECK(cerf({x, 0.0}).real() == doctest::Approx(std::erf(x)).epsilon(1e-13));
  // saturation far out on the real axis
  CHECK(std::abs(cerf({6.5, 0.0}) - Cplx(1.0, 0.0)) < 1e-13);
}

TEST_CASE("analytic orbit engine agrees with quadrature") {
  auto s = heis();
  FlowSpec fl = shearing_flow(s, 0.5);
  FlowConfig cfg = to_flow_config(fl);
  HarmonicSpec fs;
  fs.fiber = {{{1}, Cplx(1.0, 0.0), 0.5, 4}};
  Observable fobs = harmonic_obs(s.alg, s.z.get(), fs);
  const auto pts = haar_sample(*s.lat, 12, 31);
  for (const auto& p : pts) {
    OrbitAnalytics oa(fl, cfg, p);
    CHECK(oa.fast());
    for (double t : {0.8, 7.3, 20.0}) {
      CHECK(std::abs(oa.tilde_tau(t) - tilde_tau(p, cfg, t)) < 1e-7);
      CHECK(nil_distance(oa.flow_point(t), timechange_step(p, cfg, t)) < 1e-7);
    }
    const int h = oa.register_birkhoff(fs, fobs);
    // out-of-order queries hit the same incremental caches
    for (double T : {20.0, 0.8, 7.3, 20.0})
      CHECK(std::abs(oa.birkhoff(h, T) - birkhoff_integral(fobs, p, cfg, T)) < 1e-7);
    const ShearRecord rec = shear_record(p, cfg, 10.0);
    const auto comps = oa.shear_components(10.0);
    REQUIRE(comps.size() == rec.Dv.size());
    for (size_t j = 0; j < comps.size(); ++j)
      CHECK(std::abs(comps[j] - rec.Dv[j].second) < 1e-7);
  }
}

TEST_CASE("correlation: unit-speed flow never mixes a toral character") {
  auto s = heis();
  FlowSpec fl = heis_flow(s);
  Observable f = torus_character(s.alg, {1, 0});
  EstimatorConfig est;
  est.samples = 2000;
  est.seed = 3;
  est.t_grid = {1.0, 10.0, 100.0};
  auto r = correlation_curve(f, f, fl, est);
  for (size_t i = 0; i < r.t.size(); ++i) {
    // f(phi_t x) conj f(x) = exp(2 pi i t): constant, so no decay and no
    // spread; the subtracted product of empirical means adds O(1/n)
    CHECK(r.estimate[i] == doctest::Approx(1.0).epsilon(0.01));
    CHECK(r.std_error[i] < 1e-9);
  }
}

TEST_CASE("correlation: shearing time change mixes fiber observables") {
  auto s = heis();
  FlowSpec fl = shearing_flow(s, 0.1);
  Observable f = fiber_character_obs(s.alg, *s.z, {1}, 0.3, 5);
  // g = f o phi^X_5: still in H_1 (the center commutes with the flow), mean
  // zero, and strongly correlated with f o phi^V_5
  auto lat = s.lat;
  auto X = s.X;
  Observable g;
  g.alg = s.alg;
  g.tag = "shifted";
  g.val = [f, lat, X](const std::vector<double>& x) {
    NilPoint p;
    p.x = x;
    return f.val(nilflow_step(*lat, p, X, 5.0).x);
  };
  g.vald = [](const std::vector<Dual>&) -> CDual { return {}; };
  EstimatorConfig est;
  est.samples = 10000;
  est.seed = 9;
  est.t_grid = {5.0, 200.0};
  auto r = correlation_curve(f, g, fl, est);
  const double lo5 = r.estimate[0] - 2.0 * r.std_error[0];
  const double hi200 = r.estimate[1] + 2.0 * r.std_error[1];
  CHECK(r.estimate[0] > 10.0 * r.std_error[0]);  // resolved at t = 5
  CHECK(3.0 * hi200 < lo5);                      // decayed by at least 3x at t = 200
}

TEST_CASE("shear distribution: zero observable and short-time bound") {
  auto s = heis();
  FlowSpec fl = shearing_flow(s, 0.5);
  EstimatorConfig est;
  est.samples = 200;
  est.seed = 4;
  est.eta_grid = {0.05, 0.2};
  Observable zero = constant_obs(s.alg, Cplx(0.0, 0.0));
  auto r0 = shear_integral_distribution(zero, s.triple.Z, fl, 1.0, 10.0, est);
  for (double m : r0.estimate) CHECK(m == 0.0);
  // |f| <= 1, so the window integral over [0, s] never exceeds s
  Observable bounded = torus_character(s.alg, {1, 0});
  EstimatorConfig eb = est;
  eb.eta_grid = {1.5};
  auto rb = shear_integral_distribution(bounded, s.triple.Z, fl, 1.0, 0.0, eb);
  CHECK(rb.estimate[0] == 0.0);
}

TEST_CASE("shear distribution: central translates decorrelate a coboundary") {
  auto s = heis();
  FlowSpec fl = shearing_flow(s, 6.0);
  FlowConfig cfg = to_flow_config(fl);
  // f = V g / (2 pi <m, omega>) for g a toral character: a mean-zero
  // coboundary of the time-changed generator
  Observable gch = torus_character(s.alg, {1, 0});
  Observable aobs = cfg.alpha_obs;
  auto fval = [gch, aobs](const auto& x) {
    using S = typename std::decay_t<decltype(x)>::value_type;
    const auto gv = obs_eval(gch, x);
    const auto av = obs_eval(aobs, x);
    const S c = S(1.0) / av[0];
    return std::array<S, 2>{-c * gv[1], c * gv[0]};
  };
  Observable f = make_observable(s.alg, fval, "coboundary");
  EstimatorConfig est;
  est.samples = 1200;
  est.seed = 4;
  est.eta_grid = {0.1};
  auto r5 = shear_integral_distribution(f, s.triple.Z, fl, 1.0, 5.0, est);
  auto r200 = shear_integral_distribution(f, s.triple.Z, fl, 1.0, 200.0, est);
  CHECK(r200.estimate[0] + 2.0 * r200.std_error[0] <
        r5.estimate[0] - 2.0 * r5.std_error[0]);
}

TEST_CASE("sublevel measure: degenerate inputs and validation") {
  auto s = heis();
  FlowSpec fl = heis_flow(s);
  HarmonicSpec f10;
  f10.fiber = {{{1}, Cplx(10.0, 0.0), 0.5, 4}};
  EstimatorConfig est;
  est.samples = 500;
  est.seed = 3;
  // f = 0 has F_T = 0, inside every positive level
  HarmonicSpec zero;
  auto rz = sublevel_birkhoff(zero, fl, 1.0, {10.0}, est);
  CHECK(rz.estimate[0] == 1.0);
  // C = 0 admits nothing
  auto rc = sublevel_birkhoff(f10, fl, 0.0, {10.0}, est);
  CHECK(rc.estimate[0] == 0.0);
  FlowSpec bad = shearing_flow(s, 0.5);
  CHECK_THROWS_WITH(sublevel_birkhoff(f10, bad, 1.0, {10.0}, est),
                    "sublevel_birkhoff: time change must be fiber invariant");
}

TEST_CASE("sublevel measure: shrinks along the flow") {
  auto s = heis();
  FlowSpec fl = heis_flow(s);
  HarmonicSpec f10;
  f10.fiber = {{{1}, Cplx(10.0, 0.0), 0.5, 4}};
  EstimatorConfig est;
  est.samples = 4000;
  est.seed = 3;
  auto r = sublevel_birkhoff(f10, fl, 1.0, {10.0, 1000.0}, est);
  CHECK(r.estimate[1] + 2.0 * r.std_error[1] < r.estimate[0] - 2.0 * r.std_error[0]);
}

TEST_CASE("cesaro sublevel average decreases with the horizon") {
  auto s = heis();
  FlowSpec fl = heis_flow(s);
  HarmonicSpec f10;
  f10.fiber = {{{1}, Cplx(10.0, 0.0), 0.5, 4}};
  EstimatorConfig est;
  est.samples = 1000;
  est.seed = 3;
  const double c100 = cesaro_sublevel(f10, fl, 1.0, 100.0, est);
  const double c1000 = cesaro_sublevel(f10, fl, 1.0, 1000.0, est);
  CHECK(c1000 < c100);
}

TEST_CASE("progression scan") {
  auto s = heis();
  FlowSpec fl = heis_flow(s);
  EstimatorConfig est;
  est.samples = 2000;
  est.seed = 6;
  est.t_grid = {0.5, 1.0, 2.0, 4.0, 8.0};
  HarmonicSpec f10;
  f10.fiber = {{{1}, Cplx(10.0, 0.0), 0.5, 4}};
  auto found = find_progression(f10, fl, 0.05, 0.2, 3, est);
  CHECK(found.found);
  REQUIRE(found.measures.size() == 3);
  for (size_t i = 0; i < 3; ++i)
    CHECK(found.measures[i] + 2.0 * found.std_errors[i] < 0.2);
  // f = 0 keeps every sublevel measure at 1, so no epsilon < 1 works
  HarmonicSpec zero;
  auto missed = find_progression(zero, fl, 1.0, 0.5, 3, est);
  CHECK(!missed.found);
}

TEST_CASE("decoupling measure") {
  auto s = heis();
  FlowSpec fl = heis_flow(s);
  HarmonicSpec f10;
  f10.fiber = {{{1}, Cplx(10.0, 0.0), 0.5, 4}};
  EstimatorConfig est;
  est.samples = 2000;
  est.seed = 3;
  // t = 0: F_T o phi_0 - F_T vanishes identically
  auto r0 = decoupling_measure(f10, fl, 0.1, 0.0, {1000.0}, est);
  CHECK(r0.estimate[0] == 1.0);
  auto r = decoupling_measure(f10, fl, 0.1, 5.0, {1000.0}, est);
  CHECK(r.estimate[0] < 0.5);
}

TEST_CASE("trig sublevel: single mode is all-or-nothing") {
  auto s = heis();
  FlowSpec fl = heis_flow(s);
  HarmonicSpec p;
  p.fiber = {{{1}, Cplx(2.0, 0.0), 0.5, 4}};
  EstimatorConfig est;
  est.samples = 2000;
  est.seed = 8;
  est.delta_grid = {0.2, 0.5, 1.0};
  auto fit = trig_sublevel_exponent(fl, p, est);
  CHECK(fit.curve.estimate[0] == 0.0);
  CHECK(fit.curve.estimate[1] == 0.0);
  CHECK(fit.curve.estimate[2] == 1.0);
  // a single positive measure cannot support a power-law fit
  CHECK(fit.degenerate);
  HarmonicSpec toral;
  toral.toral = {{{1, 0}, Cplx(1.0, 0.0)}};
  CHECK_THROWS_WITH(trig_sublevel_exponent(fl, toral, est),
                    "trig_sublevel_exponent: expected a pure fiber mode sum");
}

TEST_CASE("trig sublevel: two modes match the fiber-circle oracle") {
  auto s = heis();
  FlowSpec fl = heis_flow(s);
  HarmonicSpec p;
  p.fiber = {{{1}, Cplx(1.0, 0.0), 0.5, 4}, {{-1}, Cplx(0.7, 0.3), 0.5, 4}};
  EstimatorConfig est;
  est.samples = 20000;
  est.seed = 8;
  auto fit = trig_sublevel_exponent(fl, p, est);
  CHECK(!fit.degenerate);
  CHECK(fit.d > 0.5);
  CHECK(fit.d < 1.5);
  CHECK(fit.envelope_ok);

  // oracle: on the fiber circle through x the sum is
  // t1 exp(2 pi i r) + t2 exp(-2 pi i r), integrated brute-force in r
  Observable f1 = fiber_character_obs(s.alg, *s.z, {1}, 0.5, 4);
  Observable f2 = fiber_character_obs(s.alg, *s.z, {-1}, 0.5, 4);
  const Cplx c1(1.0, 0.0), c2(0.7, 0.3);
  const auto base = haar_sample(*s.lat, 100, 81);
  const int grid = 10000;
  for (size_t i = 0; i < fit.curve.t.size(); ++i) {
    const double delta = fit.curve.t[i];
    double sum = 0.0, sumsq = 0.0;
    for (const auto& q : base) {
      const Cplx t1 = c1 * f1.val(q.x);
      const Cplx t2 = c2 * f2.val(q.x);
      const double den = std::abs(t1) + std::abs(t2);
      int in = 0;
      for (int k = 0; k < grid; ++k) {
        const double ph = kTwoPi * k / grid;
        if (std::abs(t1 * std::polar(1.0, ph) + t2 * std::polar(1.0, -ph)) <= delta * den)
          ++in;
      }
      const double m = static_cast<double>(in) / grid;
      sum += m;
      sumsq += m * m;
    }
    const double mean = sum / base.size();
    const double var = std::max(0.0, sumsq / base.size() - mean * mean);
    const double se = std::sqrt(var / base.size());
    CHECK(std::abs(fit.curve.estimate[i] - mean) <
          3.0 * (fit.curve.std_error[i] + se) + 0.01);
  }
}

TEST_CASE("quasi-invariance of the shear sum along the center") {
  auto s = heis();
  FlowSpec fl = shearing_flow(s, 0.5);
  EstimatorConfig est;
  est.samples = 150;
  est.seed = 12;
  auto base = quasi_invariance_ratio(fl, 100.0, {0.0}, est);
  CHECK(!base.degenerate);
  CHECK(base.worst == doctest::Approx(1.0).epsilon(1e-9));
  auto r1 = quasi_invariance_ratio(fl, 100.0, {0.1, 0.3, 0.7}, est);
  EstimatorConfig est2 = est;
  est2.samples = 300;
  auto r2 = quasi_invariance_ratio(fl, 100.0, {0.1, 0.3, 0.7}, est2);
  CHECK(!r1.degenerate);
  CHECK(!r2.degenerate);
  CHECK(r1.worst >= 1.0);
  // the worst ratio is a stable population quantity, not a runaway tail
  CHECK(r2.worst < 2.0 * r1.worst);
  CHECK(r1.worst < 2.0 * r2.worst);
  // no fiber modes, no shear components
  FlowSpec inv = heis_flow(s);
  auto deg = quasi_invariance_ratio(inv, 100.0, {0.1}, est);
  CHECK(deg.degenerate);
}

TEST_CASE("comparison of the shear sum with its total variation") {
  auto s = heis();
  FlowSpec fl = shearing_flow(s, 0.5);
  EstimatorConfig est;
  est.samples = 400;
  est.seed = 14;
  est.delta_grid = {0.01, 0.5, 1.0, 2.0};
  auto r = comparison_and_distortion(fl, 200.0, est);
  CHECK(!r.degenerate);
  // |Re sum Dv| <= sum |Dv| by the triangle inequality
  CHECK(r.measure.estimate[2] == 1.0);
  CHECK(r.measure.estimate[3] == 1.0);
  CHECK(r.measure.estimate[0] + 2.0 * r.measure.std_error[0] <
        r.measure.estimate[1] - 2.0 * r.measure.std_error[1]);
  CHECK(std::isfinite(r.worst_distortion));
  CHECK(r.worst_distortion > 0.0);
  FlowSpec inv = heis_flow(s);
  auto deg = comparison_and_distortion(inv, 200.0, est);
  CHECK(deg.degenerate);
}

TEST_CASE("conjugacy certificate on the torus") {
  auto s = torus2();
  // alpha = 1 + 0.2 cos(2 pi x1)
  FlowSpec tc = torus_flow(s, {{{1, 0}, Cplx(0.1, 0.0)}, {{-1, 0}, Cplx(0.1, 0.0)}});
  FlowSpec lin = torus_flow(s, {});
  EstimatorConfig est;
  est.samples = 30;
  est.seed = 2;
  est.t_grid = {0.7, 7.3, 23.9, 49.5};
  Observable u0 = constant_obs(s.alg, Cplx(0.0, 0.0));
  CHECK(conjugacy_check(tc, tc, u0, est) < 1e-10);
  CHECK(conjugacy_check(tc, lin, u0, est) > 1e-2);
  // transfer function of 1 - alpha straightens the time change
  std::vector<TorusMode> pm = {{{1, 0}, Cplx(-0.1, 0.0)}, {{-1, 0}, Cplx(-0.1, 0.0)}};
  Observable u = torus_poly_obs(s.alg, torus_transfer(pm, {1.0, std::sqrt(2.0)}));
  CHECK(conjugacy_check(tc, lin, u, est) < 1e-5);
  Observable bad = 1.2 * u;
  CHECK(conjugacy_check(tc, lin, bad, est) > 1e-2);
}

TEST_CASE("factor correlations survive the lift") {
  auto s = heis();
  auto b = torus2();
  std::vector<TorusMode> modes = {{{0, 1}, Cplx(0.1, 0.0)}, {{0, -1}, Cplx(0.1, 0.0)}};
  FlowSpec total = heis_flow(s);
  total.alpha.toral = modes;
  FlowSpec base = torus_flow(b, modes);
  RatMat proj{{Rat(1), Rat(0), Rat(0)}, {Rat(0), Rat(1), Rat(0)}};
  Observable fb = torus_character(b.alg, {1, 0});
  Observable gb = torus_character(b.alg, {1, -1});
  EstimatorConfig est;
  est.samples = 10000;
  est.seed = 13;
  est.t_grid = {0.0, 1.3, 5.7, 20.1};
  auto r = factor_lift_check(total, base, proj, fb, gb, est);
  for (size_t i = 0; i < r.t.size(); ++i) CHECK(r.estimate[i] < 3.0 * r.std_error[i]);
}

TEST_CASE("estimators are deterministic in the config") {
  auto s = heis();
  FlowSpec fl = heis_flow(s);
  HarmonicSpec f10;
  f10.fiber = {{{1}, Cplx(10.0, 0.0), 0.5, 4}};
  EstimatorConfig est;
  est.samples = 500;
  est.seed = 3;
  auto a = sublevel_birkhoff(f10, fl, 1.0, {10.0, 100.0}, est);
  auto b = sublevel_birkhoff(f10, fl, 1.0, {10.0, 100.0}, est);
  CHECK(a.estimate == b.estimate);
  CHECK(a.std_error == b.std_error);
  CHECK(a.config_hash == b.config_hash);
  EstimatorConfig other = est;
  other.seed = 4;
  auto c = sublevel_birkhoff(f10, fl, 1.0, {10.0, 100.0}, other);
  CHECK(a.config_hash != c.config_hash);
}

TEST_CASE("standard errors scale like 1/sqrt(n)") {
  auto s = heis();
  FlowSpec fl = shearing_flow(s, 0.1);
  Observable f = fiber_character_obs(s.alg, *s.z, {1}, 0.3, 5);
  EstimatorConfig e1;
  e1.samples = 10000;
  e1.seed = 9;
  e1.t_grid = {5.0};
  EstimatorConfig e2 = e1;
  e2.samples = 20000;
  auto r1 = correlation_curve(f, f, fl, e1);
  auto r2 = correlation_curve(f, f, fl, e2);
  const double ratio = r1.std_error[0] / r2.std_error[0];
  CHECK(ratio > std::sqrt(2.0) * 0.9);
  CHECK(ratio < std::sqrt(2.0) * 1.1);
}

TEST_CASE("the weighted measure is invariant under the time-changed flow") {
  auto s = heis();
  FlowSpec fl = shearing_flow(s, 0.5);
  FlowConfig cfg = to_flow_config(fl);
  CounterRng rng(71);
  for (int trial = 0; trial < 10; ++trial) {
    HarmonicSpec h;
    h.toral.push_back({{static_cast<long>(rng.uniform() * 4) - 2,
                        static_cast<long>(rng.uniform() * 4) - 2},
                       Cplx(rng.uniform() - 0.5, rng.uniform() - 0.5)});
    const long v = rng.uniform() < 0.5 ? -1 : 1;
    const double width = 0.3 + 0.2 * rng.uniform();
    h.fiber.push_back({{v}, Cplx(rng.uniform() - 0.5, rng.uniform() - 0.5), width, 4});
    Observable hobs = harmonic_obs(s.alg, s.z.get(), h);
    const double t = 50.0 * rng.uniform();
    const auto pts = haar_sample(*s.lat, 2000, 900 + trial);
    Cplx s0(0.0, 0.0), st(0.0, 0.0);
    double sq0 = 0.0, sqt = 0.0;
    for (const auto& p : pts) {
      const double a = cfg.alpha_obs.val(p.x).real();
      OrbitAnalytics oa(fl, cfg, p);
      const Cplx w0 = hobs.val(p.x) * a;
      const Cplx wt = hobs.val(oa.flow_point(t).x) * a;
      s0 += w0;
      st += wt;
      sq0 += std::norm(w0);
      sqt += std::norm(wt);
    }
    const double n = static_cast<double>(pts.size());
    const Cplx m0 = s0 / n, mt = st / n;
    const double se0 = std::sqrt(std::max(0.0, sq0 / n - std::norm(m0)) / n);
    const double set = std::sqrt(std::max(0.0, sqt / n - std::norm(mt)) / n);
    CHECK(std::abs(mt - m0) < 3.0 * (se0 + set) + 1e-12);
  }
}
