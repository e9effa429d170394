#pragma once

#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "nillab/observables.hpp"
#include "nillab/towers.hpp"

namespace nillab {

// Adaptive Gauss-Kronrod panel quadrature along orbits. Panels never exceed
// max_step, so the group-law polynomials stay tame inside a panel; panel
// subdivision is deterministic (LIFO bisection).
struct OrbitQuadrature {
  double rtol = 1e-8;
  double atol = 1e-10;
  double max_step = 0.25;
  std::string method = "gk7k15";
};

// Time-changed flow V = (1/alpha) X on a fixed lattice. Built by
// make_flow_config, which validates complete irrationality of X and strict
// positivity of alpha on a Haar sample. The triple is required only by
// shear_record and pushforward_coeffs.
struct FlowConfig {
  std::shared_ptr<const Lattice> lattice;
  AlgebraVector X;
  FiberPolynomial alpha;
  std::optional<HeisenbergTriple> triple;
  OrbitQuadrature quad;

  // derived at construction
  Observable alpha_obs;      // flattened evaluator
  double const_alpha = 0.0;  // nonzero iff alpha is structurally constant
  double alpha_min = 0.0;    // sampled minimum, the positivity margin
};

FlowConfig make_flow_config(std::shared_ptr<const Lattice> lattice, AlgebraVector X,
                            FiberPolynomial alpha,
                            std::optional<HeisenbergTriple> triple = std::nullopt,
                            OrbitQuadrature quad = {});

// alpha identically c, as a degenerate fiber polynomial.
FiberPolynomial constant_time_change(std::shared_ptr<const LieAlgebra> alg, double c);

// x exp(tX), reduced: one group-law evaluation, no numerical integration.
NilPoint nilflow_step(const Lattice& lat, const NilPoint& x, const AlgebraVector& X,
                      double t);

// Unique root s of int_0^s alpha(phi^X_r x) dr = t. Panel walk accumulates the
// antiderivative until the crossing chunk, then safeguarded Newton (bisection
// fallback) refines inside it to residual atol. Signed t is supported.
double tilde_tau(const NilPoint& x, const FlowConfig& cfg, double t);

// phi^V_t(x) = phi^X_{tilde_tau(x,t)}(x).
NilPoint timechange_step(const NilPoint& x, const FlowConfig& cfg, double t);

// int_0^T f(phi^V_tau x) dtau, evaluated as int_0^{tilde_tau(x,T)} of
// (f alpha)(phi^X_r x) dr with every quadrature node reduced to M.
Cplx birkhoff_integral(const Observable& f, const NilPoint& x, const FlowConfig& cfg,
                       double T);

// Shearing functionals at (x, t):
//   A = -int_0^t (Y alpha / alpha)(phi^V_tau x) dtau
//   B =  int_0^t (1 / alpha)(phi^V_tau x) dtau = tilde_tau(x, t)
//   D = -int_0^t (Z alpha / alpha)(phi^V_tau x) dtau
//   Dv[v] = -int_0^{tilde_tau} (Z alpha_v)(phi^X_r x) dr, one entry per fiber
//   mode of alpha. D is integrated in the phi^V parametrization and the Dv in
//   the phi^X one, so D = sum Dv is a cross-check of two quadratures.
struct ShearRecord {
  double A = 0.0;
  double B = 0.0;
  double D = 0.0;
  std::vector<std::pair<std::vector<long>, Cplx>> Dv;

  Cplx Dv_sum() const;
};

ShearRecord shear_record(const NilPoint& x, const FlowConfig& cfg, double t);

enum class FrameField { Y, Z };

// Coefficients of (phi^V_t)_* W at phi^V_t(x) in the moving frame (V, Y, Z).
struct PushforwardCoeffs {
  double a = 0.0;
  double b = 0.0;
  double c = 0.0;
};

PushforwardCoeffs pushforward_coeffs(const NilPoint& x, const FlowConfig& cfg,
                                     FrameField W, double t);

// Chart coordinates of the right-invariant field generated by W: the
// derivative of the second-kind coordinates of p exp(sW) at s = 0.
std::vector<double> right_field_coords(const LieAlgebra& alg, const NilPoint& p,
                                       const std::vector<double>& W);

}  // namespace nillab
