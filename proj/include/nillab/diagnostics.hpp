#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "nillab/dynamics.hpp"

namespace nillab {

// Shared Monte Carlo knobs. Estimators read only the fields they document;
// grids left empty fall back to per-estimator defaults.
struct EstimatorConfig {
  int samples = 10000;
  std::uint64_t seed = 1;
  std::vector<double> t_grid;
  std::vector<double> eta_grid;
  std::vector<double> delta_grid;
};

// One estimated curve: estimate[i] at abscissa t[i] with its Monte Carlo
// standard error (sample standard deviation over sqrt(n)).
struct CurveReport {
  std::string estimator;
  std::vector<double> t;
  std::vector<double> estimate;
  std::vector<double> std_error;
  std::uint64_t config_hash = 0;
};

// Flow described structurally (constant + toral + fiber character modes), so
// estimators can use closed-form orbit integrals instead of per-sample
// quadrature. z may be null when alpha has no fiber modes.
struct FlowSpec {
  std::shared_ptr<const LieAlgebra> algebra;
  std::shared_ptr<const Lattice> lattice;
  std::shared_ptr<const CentralSubspace> z;
  AlgebraVector X;
  HarmonicSpec alpha;
  std::optional<HeisenbergTriple> triple;
};

// Generic quadrature engine for the same flow; validates the spec.
FlowConfig to_flow_config(const FlowSpec& flow);

// Error function of a complex argument (rational Faddeeva approximation,
// accurate to ~1e-13). Backs the closed-form orbit integrals.
Cplx cerf(Cplx z);

// Per-orbit analytic evaluations through a fixed starting point. Along the
// orbit a fiber character is a sum of Gaussian-windowed quadratic phases over
// the noncentral lattice translates, each with an explicit erf primitive, so
// long-time integrals cost O(time), not O(oscillation count). Unsupported
// shapes fall back to the generic quadrature engine.
class OrbitAnalytics {
 public:
  OrbitAnalytics(const FlowSpec& flow, const FlowConfig& cfg, const NilPoint& x);
  ~OrbitAnalytics();
  OrbitAnalytics(OrbitAnalytics&&) noexcept;

  bool fast() const;

  double tilde_tau(double t);
  NilPoint flow_point(double t);

  // int_0^T f(phi^V_tau x) dtau. Register once, then query along an
  // ascending (or any) sequence of times; per-mode prefix caches make each
  // additional query cost proportional to the time increment.
  int register_birkhoff(const HarmonicSpec& f, const Observable& fobs);
  Cplx birkhoff(int handle, double T);

  // Per-fiber-mode shearing integrals of the time change, ordered like
  // alpha.fiber. Matches ShearRecord::Dv from the quadrature engine.
  std::vector<Cplx> shear_components(double t);

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

// |<f o phi^V_t, g alpha> - <f alpha><conj g alpha>| per t: the raw sliding
// correlation minus the product of means (the mixing defect).
CurveReport correlation_curve(const Observable& f, const Observable& g, const FlowSpec& flow,
                              const EstimatorConfig& est);

// mu{ x : |int_0^s f(phi^V_t phi^W_r x) dr| >= eta } per eta in eta_grid,
// with a fixed-order quadrature in r.
CurveReport shear_integral_distribution(const Observable& f, const AlgebraVector& W,
                                        const FlowSpec& flow, double s, double t,
                                        const EstimatorConfig& est);

// mu{ x : |F_T(x)| < C } per T, F_T the Birkhoff integral of f under phi^V.
// Requires a fiber-invariant time change.
CurveReport sublevel_birkhoff(const HarmonicSpec& f, const FlowSpec& flow, double C,
                              const std::vector<double>& T_grid, const EstimatorConfig& est);

// Time average of the sublevel measure over a uniform t grid on [0, T].
double cesaro_sublevel(const HarmonicSpec& f, const FlowSpec& flow, double C, double T,
                       const EstimatorConfig& est);

// Scans candidate t0 in est.t_grid for mu{|F_{i t0}| < C} + 2 se < epsilon at
// every i = 1..ell. On failure reports the best candidate.
struct ProgressionResult {
  bool found = false;
  double t0 = 0.0;
  std::vector<double> measures;   // at the reported t0, i = 1..ell
  std::vector<double> std_errors;
};
ProgressionResult find_progression(const HarmonicSpec& f, const FlowSpec& flow, double C,
                                   double epsilon, int ell, const EstimatorConfig& est);

// mu{ x : |F_T(phi^V_t x) - F_T(x)| < 2C } per T. Evaluated through the
// cocycle identity F_T o phi_t - F_T = F_t o phi_T - F_t, so only two
// integrals of length t are needed per sample.
CurveReport decoupling_measure(const HarmonicSpec& f, const FlowSpec& flow, double C,
                               double t, const std::vector<double>& T_grid,
                               const EstimatorConfig& est);

// mu{ |p| <= delta sum_v |p_v| } per delta, with a log-log least squares fit
// mu ~ Delta delta^d and an envelope check mu <= 1.5 Delta delta^d.
struct ExponentFit {
  bool degenerate = true;
  double Delta = 0.0;
  double d = 0.0;
  bool envelope_ok = false;
  CurveReport curve;
};
ExponentFit trig_sublevel_exponent(const FlowSpec& flow, const HarmonicSpec& p,
                                   const EstimatorConfig& est);

// max over samples and s in s_grid of sum_v |Dv_t(phi^Z_s x)| / sum_v |Dv_t(x)|,
// denominators below 1e-8 excluded. Degenerate when no sample qualifies.
struct RatioReport {
  bool degenerate = true;
  double worst = 0.0;
  int valid = 0;
};
RatioReport quasi_invariance_ratio(const FlowSpec& flow, double t,
                                   const std::vector<double>& s_grid,
                                   const EstimatorConfig& est);

// mu{ |D_t| <= delta sum_v |Dv_t| } per delta, plus the worst observed
// |Z D_t| / sum_v |Dv_t| with Z D_t by central differences along phi^Z at
// step 1e-5.
struct CompareReport {
  CurveReport measure;
  double worst_distortion = 0.0;
  bool degenerate = true;
};
CompareReport comparison_and_distortion(const FlowSpec& flow, double t,
                                        const EstimatorConfig& est);

// Certifies smooth conjugacy: psi(x) = phi1_{u(x)}(x), psi^{-1} by fixed
// point iteration, returns the max over samples and tau in est.t_grid of
// dist(phi1_tau(x), psi(phi2_tau(psi^{-1}(x)))).
double conjugacy_check(const FlowSpec& flow1, const FlowSpec& flow2, const Observable& u,
                       const EstimatorConfig& est);

// |corr_M(t) - corr_base(t)| per t for base observables pulled back through
// the projection, with the combined standard error. Requires a
// fiber-invariant time change that descends to the base.
CurveReport factor_lift_check(const FlowSpec& total, const FlowSpec& base,
                              const RatMat& projection, const Observable& f_base,
                              const Observable& g_base, const EstimatorConfig& est);

}  // namespace nillab
