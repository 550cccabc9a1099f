#pragma once

// Trajectory-level verification: energy monotonicity, sign preservation,
// the finite-truncation surrogates of the sign/energy exchange lemmas, the
// pointwise solution bound, the class-K functional bound, and — for pairs of
// runs from one initial state — the Gronwall-style coincidence certificate
//
//   psi_n(t) = sum_{i<=n} Z_i(t)^2 / 2^i,   Z = X(1) - X(2),
//   psi_N(t) <= G(t),
//   G(t) = int_0^t exp(int_s^t 2 a(r) dr) * K * (|X_N(1)(s)|^2 + |X_N(2)(s)|^2) ds,
//
// evaluated on the shared sample grid with trapezoidal quadrature and the
// exponential weight accumulated incrementally. The constant K must satisfy
// |k_n/2^n * Y_n Z_n Z_{n+1}| <= K * (|X_n(1)|^2 + |X_n(2)|^2); from
// k_n/2^n <= scale, |Y_n Z_n| = |X_n(1)^2 - X_n(2)^2| and
// |Z_{n+1}| <= 2*sqrt(E(0)) for energy-bounded runs, K = 2*scale*sqrt(E(0))
// suffices and is the default (overridable).

#include "dyadic/integrate.hpp"
#include "dyadic/model.hpp"

#include <vector>

namespace dyadic {

struct MonotonicityReport {
  bool weak_ok = true;    ///< E(t) <= E(0) + tol at every sample
  bool strong_ok = true;  ///< E never rises by more than tol between samples
  Real tol = 0.0;         ///< 1e-7 * E(0)
  Real weak_witness_t = 0.0;    ///< first offending time (when !weak_ok)
  Real strong_witness_s = 0.0;  ///< first offending pair (when !strong_ok)
  Real strong_witness_t = 0.0;
};

[[nodiscard]] MonotonicityReport check_energy_monotonicity(
    const Trajectory& traj);

struct SignViolation {
  Index shell = 0;       ///< 1-based
  Real nonneg_from = 0;  ///< first sample time with X_j >= 0
  Real t = 0.0;          ///< violating sample time
  Real value = 0.0;
};

struct SignReport {
  /// Dip tolerance: 10*abs_tol for adaptive runs, exactly 0 for the
  /// positivity stepper (which guarantees the sign exactly).
  Real epsilon = 0.0;
  /// Per shell, the first sample time with X_j >= 0 (NaN if never).
  std::vector<Real> first_nonneg_time;
  std::vector<SignViolation> violations;

  [[nodiscard]] bool ok() const noexcept { return violations.empty(); }
};

[[nodiscard]] SignReport check_sign_preservation(const Trajectory& traj);

struct HPlusReport {
  /// Whenever energy drops by more than tol between samples, every shell
  /// above the last one below -eps is itself >= -eps at the later time
  /// (finite-truncation surrogate of "decrease happens only with a clean
  /// nonnegative tail").
  bool decrease_tail_ok = true;
  /// From the first sample where shells n0..N are all >= -eps onward, the
  /// energy never rises by more than tol (surrogate of "a nonnegative tail
  /// forbids energy growth").
  bool no_growth_after_nonneg_ok = true;
  Index n0 = 1;
  Real tol = 0.0;
  Real eps = 0.0;
  Real decrease_witness_t = 0.0;
  Real growth_witness_t = 0.0;
};

[[nodiscard]] HPlusReport check_h_plus_energy_lemmas(const Trajectory& traj,
                                                     Index n0 = 1);

struct PairCertificateOptions {
  /// Envelope constant; NaN selects 2 * scale * sqrt(E(0)).
  Real k_constant = std::numeric_limits<Real>::quiet_NaN();
  /// Envelope violations up to slack*(1+G(t)) count as respected.
  Real slack = 1e-8;
};

struct PairCertificate {
  std::vector<Real> times;
  std::vector<Vector> z;    ///< X(1) - X(2) per sample
  std::vector<Vector> y;    ///< X(1) + X(2) per sample
  std::vector<Vector> psi;  ///< psi_1..psi_N per sample
  std::vector<Real> a;      ///< max of the two runs' a-values
  std::vector<Real> envelope;  ///< G(t)
  Real k_constant = 0.0;
  Real slack = 0.0;
  Real max_psi = 0.0;        ///< max over time of psi_N
  Real max_violation = 0.0;  ///< max over time of psi_N - G
  bool envelope_ok = true;   ///< psi_N <= G + slack*(1+G) everywhere

  [[nodiscard]] Index dimension() const {
    return psi.empty() ? 0 : psi.front().size();
  }
};

/// Coincidence certificate for two runs on identical sample grids (exact
/// time equality required) with identical dimensions and schemes.
[[nodiscard]] PairCertificate pair_certificate(
    const Trajectory& a, const Trajectory& b, const CoefficientScheme& scheme,
    const PairCertificateOptions& opts = {});

/// True iff |X_n(t)| <= sqrt(E(0)) + tol everywhere; tol < 0 selects
/// 1e-7 * sqrt(E(0)).
[[nodiscard]] bool simple_bound_check(const Trajectory& traj, Real tol = -1.0);

enum class CheckOutcome { pass, fail, inapplicable };

struct ClassKBoundReport {
  CheckOutcome outcome = CheckOutcome::inapplicable;
  Real bound = 0.0;    ///< k_{n0} * sqrt(E(0))
  Real a_max = 0.0;    ///< largest a-value seen
  Real witness_t = 0.0;
};

/// Checks a(t) <= k_{n0}*sqrt(E(0)) + tol at every sample, provided every
/// shell above n0 stays nonnegative (within the run's sign tolerance) along
/// the whole trajectory; otherwise the result is inapplicable, which is
/// distinct from fail.
[[nodiscard]] ClassKBoundReport class_k_bound_check(const Trajectory& traj,
                                                    Index n0,
                                                    Real tol = 1e-9);

/// Full per-sample table plus the aggregated check flags.
struct DiagnosticsReport {
  std::vector<Real> times;
  std::vector<Real> energy;
  std::vector<Vector> partial_energies;
  std::vector<Real> h1_sq;
  std::vector<Real> a_value;
  std::vector<Vector> flux_residuals;  ///< residual per truncation level n
  std::vector<Real> min_component;
  /// Per shell, start of the closed nonnegative run reaching the horizon
  /// (NaN if the shell is negative at the final sample).
  std::vector<Real> nonneg_forever_from;

  MonotonicityReport monotonicity;
  SignReport sign;
  HPlusReport h_plus;
  bool simple_bound_ok = true;

  [[nodiscard]] bool weak_energy_ok() const { return monotonicity.weak_ok; }
  [[nodiscard]] bool strong_energy_ok() const {
    return monotonicity.strong_ok;
  }
};

[[nodiscard]] DiagnosticsReport run_diagnostics(const Trajectory& traj);

}  // namespace dyadic
