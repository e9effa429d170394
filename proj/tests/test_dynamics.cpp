#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <array>
#include <cmath>
#include <complex>

#include "nillab/dynamics.hpp"

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
  s.z = std::make_shared<const CentralSubspace>(
      *s.alg, RatMat{{Rat(0), Rat(0), Rat(1)}});
  s.X = AlgebraVector::floating({1.0, std::sqrt(2.0), 0.0});
  s.triple = find_heisenberg_triple(*s.alg, s.X, 7);
  return s;
}

// mean 1 over Haar: the fiber modes have zero fiber average
FiberPolynomial unit_mean_alpha(const Setup& s) {
  FiberPolynomial a;
  a.alg = s.alg;
  a.z = s.z;
  a.zero_obs = constant_obs(s.alg, Cplx(1.0, 0.0));
  a.terms.push_back({{1}, 0.5 * fiber_character_obs(s.alg, *s.z, {1})});
  a.terms.push_back({{-1}, 0.5 * fiber_character_obs(s.alg, *s.z, {-1})});
  return a;
}

// depends only on the first toral coordinate, hence invariant under the fiber
FiberPolynomial fiber_invariant_alpha(const Setup& s) {
  FiberPolynomial a;
  a.alg = s.alg;
  a.z = s.z;
  a.zero_obs = Cplx(2.0, 0.0) + 0.25 * real_part(torus_character(s.alg, {1, 0}));
  return a;
}

double wrap_diff(double a, double b) {
  const double d = a - b;
  return d - std::round(d);
}

std::array<double, 3> solve3(std::array<std::array<double, 3>, 3> M,
                             std::array<double, 3> r) {
  for (int c = 0; c < 3; ++c) {
    int p = c;
    for (int i = c + 1; i < 3; ++i)
      if (std::abs(M[i][c]) > std::abs(M[p][c])) p = i;
    std::swap(M[c], M[p]);
    std::swap(r[c], r[p]);
    for (int i = c + 1; i < 3; ++i) {
      const double f = M[i][c] / M[c][c];
      for (int j = c; j < 3; ++j) M[i][j] -= f * M[c][j];
      r[i] -= f * r[c];
    }
  }
  std::array<double, 3> x{};
  for (int i = 2; i >= 0; --i) {
    double acc = r[i];
    for (int j = i + 1; j < 3; ++j) acc -= M[i][j] * x[j];
    x[i] = acc / M[i][i];
  }
  return x;
}

}  // namespace

TEST_CASE("nilflow: identity, inverse, toral factor") {
  auto s = heis();
  const auto pts = haar_sample(*s.lat, 200, 11);
  CounterRng rng(12);
  for (const auto& p : pts) {
    CHECK(nil_distance(nilflow_step(*s.lat, p, s.X, 0.0), p) < 1e-12);
    const double t = 100.0 * (rng.uniform() - 0.5);
    const auto fwd = nilflow_step(*s.lat, p, s.X, t);
    CHECK(nil_distance(nilflow_step(*s.lat, fwd, s.X, -t), p) < 1e-9);
  }
  // frequency vector shows up on the toral factor
  const NilPoint id{{0.0, 0.0, 0.0}};
  const auto tor = toral_project(*s.alg, nilflow_step(*s.lat, id, s.X, 1.0));
  CHECK(tor[0] == doctest::Approx(0.0).epsilon(1e-12));
  CHECK(tor[1] == doctest::Approx(std::sqrt(2.0) - 1.0).epsilon(1e-12));
}

TEST_CASE("nilflow: one-parameter group law") {
  auto s = heis();
  const auto pts = haar_sample(*s.lat, 1000, 21);
  CounterRng rng(22);
  for (const auto& p : pts) {
    const double t = 200.0 * (rng.uniform() - 0.5);
    const double u = 200.0 * (rng.uniform() - 0.5);
    const auto a = nilflow_step(*s.lat, nilflow_step(*s.lat, p, s.X, t), s.X, u);
    const auto b = nilflow_step(*s.lat, p, s.X, t + u);
    CHECK(nil_distance(a, b) < 1e-9);
  }
}

TEST_CASE("tilde_tau: constant time changes") {
  auto s = heis();
  auto cfg1 = make_flow_config(s.lat, s.X, constant_time_change(s.alg, 1.0));
  auto cfg2 = make_flow_config(s.lat, s.X, constant_time_change(s.alg, 2.0));
  CHECK(cfg1.const_alpha == 1.0);
  CHECK(cfg2.const_alpha == 2.0);
  const NilPoint x{{0.3, 0.8, 0.1}};
  for (double t : {0.0, 1.0, 17.5, -4.25}) {
    CHECK(tilde_tau(x, cfg1, t) == doctest::Approx(t).epsilon(1e-12));
    CHECK(tilde_tau(x, cfg2, t) == doctest::Approx(t / 2.0).epsilon(1e-12));
  }
}

TEST_CASE("tilde_tau: defining residual, derivative, monotonicity") {
  auto s = heis();
  auto cfg = make_flow_config(s.lat, s.X, unit_mean_alpha(s), s.triple);
  CHECK(cfg.const_alpha == 0.0);
  CHECK(cfg.alpha_min > 0.5);

  const auto pts = haar_sample(*s.lat, 3, 31);
  for (const auto& x : pts) {
    for (double t : {3.7, 12.0, -5.0}) {
      const double u = tilde_tau(x, cfg, t);
      // residual against an independent composite-Simpson quadrature
      const int n = 8000;
      double acc = 0.0;
      for (int i = 0; i <= n; ++i) {
        const double r = u * i / n;
        const double w = (i == 0 || i == n) ? 1.0 : (i % 2 ? 4.0 : 2.0);
        acc += w * cfg.alpha_obs.val(nilflow_step(*s.lat, x, s.X, r).x).real();
      }
      acc *= u / (3.0 * n);
      CHECK(std::abs(t - acc) < 1e-6);

      // d tilde_tau / dt = 1 / alpha at the arrival point
      const double eps = 1e-4;
      const double fd = (tilde_tau(x, cfg, t + eps) - tilde_tau(x, cfg, t - eps)) /
                        (2.0 * eps);
      const double arrival =
          cfg.alpha_obs.val(nilflow_step(*s.lat, x, s.X, u).x).real();
      CHECK(std::abs(fd - 1.0 / arrival) < 1e-5);
    }
    double prev = tilde_tau(x, cfg, -2.0);
    for (double t = -1.5; t <= 6.0; t += 0.5) {
      const double cur = tilde_tau(x, cfg, t);
      CHECK(cur > prev);
      prev = cur;
    }
  }
}

TEST_CASE("timechange: constant alpha reduces to the nilflow") {
  auto s = heis();
  auto cfg = make_flow_config(s.lat, s.X, constant_time_change(s.alg, 1.0));
  const auto pts = haar_sample(*s.lat, 50, 41);
  CounterRng rng(42);
  for (const auto& p : pts) {
    const double t = 40.0 * (rng.uniform() - 0.5);
    CHECK(nil_distance(timechange_step(p, cfg, t), nilflow_step(*s.lat, p, s.X, t)) <
          1e-10);
  }
}

TEST_CASE("timechange: flow law") {
  auto s = heis();
  auto cfg = make_flow_config(s.lat, s.X, unit_mean_alpha(s), s.triple);
  const auto pts = haar_sample(*s.lat, 100, 51);
  CounterRng rng(52);
  int i = 0;
  for (const auto& p : pts) {
    // a few long compositions, the bulk short
    const double cap = (i++ < 5) ? 100.0 : 30.0;
    const double t = cap * rng.uniform();
    const double u = cap * rng.uniform();
    const auto a = timechange_step(timechange_step(p, cfg, t), cfg, u);
    const auto b = timechange_step(p, cfg, t + u);
    CHECK(nil_distance(a, b) < 1e-8);
  }
}

TEST_CASE("timechange commutes with the fiber action for invariant alpha") {
  auto s = heis();
  auto cfg = make_flow_config(s.lat, s.X, fiber_invariant_alpha(s), s.triple);
  const auto pts = haar_sample(*s.lat, 50, 61);
  CounterRng rng(62);
  for (const auto& p : pts) {
    const double t = 20.0 * rng.uniform();
    const std::vector<double> u = {rng.uniform()};
    const auto a = timechange_step(fiber_act(*s.lat, p, *s.z, u), cfg, t);
    const auto b = fiber_act(*s.lat, timechange_step(p, cfg, t), *s.z, u);
    CHECK(nil_distance(a, b) < 1e-8);
  }
}

TEST_CASE("birkhoff: constants integrate to c T for any time change") {
  auto s = heis();
  auto cfg = make_flow_config(s.lat, s.X, unit_mean_alpha(s), s.triple);
  const Observable f = constant_obs(s.alg, Cplx(0.75, -0.25));
  const NilPoint x{{0.2, 0.6, 0.9}};
  const double T = 37.5;
  const Cplx got = birkhoff_integral(f, x, cfg, T);
  CHECK(std::abs(got - Cplx(0.75 * T, -0.25 * T)) < 1e-8);
}

TEST_CASE("birkhoff: eigenfunction closed form for the unchanged flow") {
  auto s = heis();
  auto cfg = make_flow_config(s.lat, s.X, constant_time_change(s.alg, 1.0));
  const Observable f = torus_character(s.alg, {1, 1});
  const double theta = kTwoPi * (1.0 + std::sqrt(2.0));
  const auto pts = haar_sample(*s.lat, 4, 71);
  for (const auto& x : pts) {
    for (double T : {10.0, 100.0}) {
      const Cplx expect =
          f.eval(x) * (std::exp(Cplx(0.0, theta * T)) - 1.0) / Cplx(0.0, theta);
      CHECK(std::abs(birkhoff_integral(f, x, cfg, T) - expect) < 1e-7);
    }
  }
}

TEST_CASE("birkhoff: cocycle relation over the time-changed flow") {
  auto s = heis();
  auto cfg = make_flow_config(s.lat, s.X, unit_mean_alpha(s), s.triple);
  const Observable f = torus_character(s.alg, {1, 0});
  const auto pts = haar_sample(*s.lat, 20, 81);
  CounterRng rng(82);
  for (const auto& x : pts) {
    const double t = 50.0 * rng.uniform();
    const double T = 50.0 * rng.uniform();
    const Cplx lhs = birkhoff_integral(f, x, cfg, t) +
                     birkhoff_integral(f, timechange_step(x, cfg, t), cfg, T);
    const Cplx rhs = birkhoff_integral(f, x, cfg, t + T);
    CHECK(std::abs(lhs - rhs) < 1e-7);
  }
}

TEST_CASE("shear: trivial time changes") {
  auto s = heis();
  auto cfg1 = make_flow_config(s.lat, s.X, constant_time_change(s.alg, 1.0), s.triple);
  const NilPoint x{{0.4, 0.15, 0.7}};
  const auto r1 = shear_record(x, cfg1, 12.5);
  CHECK(std::abs(r1.A) < 1e-10);
  CHECK(r1.B == doctest::Approx(12.5).epsilon(1e-12));
  CHECK(std::abs(r1.D) < 1e-10);
  CHECK(r1.Dv.empty());

  auto cfgz = make_flow_config(s.lat, s.X, fiber_invariant_alpha(s), s.triple);
  const auto rz = shear_record(x, cfgz, 12.5);
  CHECK(std::abs(rz.D) < 1e-8);
  CHECK(rz.Dv.empty());
}

TEST_CASE("shear: direct D agrees with the sum of fiber components") {
  auto s = heis();
  auto cfg = make_flow_config(s.lat, s.X, unit_mean_alpha(s), s.triple);
  const auto pts = haar_sample(*s.lat, 2, 91);
  for (const auto& x : pts) {
    for (double t : {10.0, 100.0}) {
      const auto rec = shear_record(x, cfg, t);
      REQUIRE(rec.Dv.size() == 2);
      const Cplx sum = rec.Dv_sum();
      CHECK(std::abs(sum.imag()) < 1e-8);  // conjugate modes
      CHECK(std::abs(rec.D - sum.real()) < 1e-6);
      CHECK(rec.B == doctest::Approx(tilde_tau(x, cfg, t)).epsilon(1e-10));
    }
  }
}

TEST_CASE("pushforward: constant and invariant specializations") {
  auto s = heis();
  const NilPoint x{{0.25, 0.5, 0.85}};
  auto cfg1 = make_flow_config(s.lat, s.X, constant_time_change(s.alg, 1.0), s.triple);
  const auto py = pushforward_coeffs(x, cfg1, FrameField::Y, 7.0);
  CHECK(std::abs(py.a) < 1e-10);
  CHECK(py.b == 1.0);
  CHECK(py.c == doctest::Approx(-7.0).epsilon(1e-12));

  auto cfgz = make_flow_config(s.lat, s.X, fiber_invariant_alpha(s), s.triple);
  const auto pz = pushforward_coeffs(x, cfgz, FrameField::Z, 7.0);
  CHECK(std::abs(pz.a) < 1e-8);
  CHECK(pz.b == 0.0);
  CHECK(pz.c == 1.0);
}

TEST_CASE("pushforward: finite-difference Jacobian oracle") {
  auto s = heis();
  auto cfg = make_flow_config(s.lat, s.X, unit_mean_alpha(s), s.triple);
  const auto pts = haar_sample(*s.lat, 2, 101);
  const double eps = 1e-5;
  for (const auto& x : pts) {
    for (double t : {5.0, 20.0}) {
      for (FrameField field : {FrameField::Y, FrameField::Z}) {
        const auto& Wv = field == FrameField::Y ? s.triple.Y : s.triple.Z;
        const auto plus =
            timechange_step(nilflow_step(*s.lat, x, Wv, eps), cfg, t);
        const auto minus =
            timechange_step(nilflow_step(*s.lat, x, Wv, -eps), cfg, t);
        std::array<double, 3> delta{};
        for (int i = 0; i < 3; ++i)
          delta[i] = wrap_diff(plus.x[i], minus.x[i]) / (2.0 * eps);

        const auto p = timechange_step(x, cfg, t);
        const double ap = cfg.alpha_obs.val(p.x).real();
        const auto Vc = right_field_coords(*s.alg, p, s.X.f());
        const auto Yc = right_field_coords(*s.alg, p, s.triple.Y.f());
        const auto Zc = right_field_coords(*s.alg, p, s.triple.Z.f());
        std::array<std::array<double, 3>, 3> M{};
        for (int i = 0; i < 3; ++i) {
          M[i][0] = Vc[i] / ap;
          M[i][1] = Yc[i];
          M[i][2] = Zc[i];
        }
        const auto beta = solve3(M, delta);
        const auto got = pushforward_coeffs(x, cfg, field, t);
        CHECK(std::abs(beta[0] - got.a) < 1e-4 * (1.0 + std::abs(got.a)));
        CHECK(std::abs(beta[1] - got.b) < 1e-4 * (1.0 + std::abs(got.b)));
        CHECK(std::abs(beta[2] - got.c) < 1e-4 * (1.0 + std::abs(got.c)));
      }
    }
  }
}

TEST_CASE("pushforward: derivative system along trajectories") {
  auto s = heis();
  auto cfg = make_flow_config(s.lat, s.X, unit_mean_alpha(s), s.triple);
  const NilPoint x{{0.12, 0.77, 0.33}};
  const double eps = 1e-3;
  for (double t : {3.0, 7.0}) {
    const auto p = timechange_step(x, cfg, t);
    const double ap = cfg.alpha_obs.val(p.x).real();
    const double ya = cfg.alpha_obs.dderiv(s.triple.Y.f(), p).real() / ap;
    const double za = cfg.alpha_obs.dderiv(s.triple.Z.f(), p).real() / ap;

    const auto ym = pushforward_coeffs(x, cfg, FrameField::Y, t - eps);
    const auto yp = pushforward_coeffs(x, cfg, FrameField::Y, t + eps);
    const auto y0 = pushforward_coeffs(x, cfg, FrameField::Y, t);
    CHECK(std::abs((yp.a - ym.a) / (2.0 * eps) - (-y0.b * ya - y0.c * za)) < 1e-4);
    CHECK(std::abs((yp.b - ym.b) / (2.0 * eps)) < 1e-10);
    CHECK(std::abs((yp.c - ym.c) / (2.0 * eps) - (-y0.b / ap)) < 1e-4);

    const auto zm = pushforward_coeffs(x, cfg, FrameField::Z, t - eps);
    const auto zp = pushforward_coeffs(x, cfg, FrameField::Z, t + eps);
    const auto z0 = pushforward_coeffs(x, cfg, FrameField::Z, t);
    CHECK(std::abs((zp.a - zm.a) / (2.0 * eps) - (-z0.c * za)) < 1e-4);
  }
}

TEST_CASE("shear: B_T / T tends to one for a unit-mean time change") {
  auto s = heis();
  auto cfg = make_flow_config(s.lat, s.X, unit_mean_alpha(s), s.triple);
  const double T = 1e4;
  for (const auto& x : haar_sample(*s.lat, 20, 111)) {
    CHECK(std::abs(tilde_tau(x, cfg, T) / T - 1.0) < 0.05);
  }
}

TEST_CASE("birkhoff: averages of a mean-zero observable decay") {
  auto s = heis();
  auto cfg = make_flow_config(s.lat, s.X, constant_time_change(s.alg, 1.0));
  const Observable f = torus_character(s.alg, {1, 1});
  for (const auto& x : haar_sample(*s.lat, 20, 121)) {
    double prev = -1.0;
    double first = 0.0, last = 0.0;
    for (double T : {1e2, 1e3, 1e4}) {
      const double a = std::abs(birkhoff_integral(f, x, cfg, T)) / T;
      if (prev < 0.0) {
        first = a;
      } else {
        CHECK(a <= 2.0 * prev);  // monotone up to a factor-2 slack
      }
      prev = a;
      last = a;
    }
    CHECK(last < first);
  }
}
