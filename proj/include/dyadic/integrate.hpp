#pragma once

// Time integration for truncated shell states.
//
// Two steppers share one adaptive driver:
//  * adaptive_rk    — Dormand–Prince 5(4), FSAL, PI step-size control.
//  * positivity_voc — one-step exponential update built on the
//                     variation-of-constants structure of the model. Each
//                     shell is advanced as
//                         X_j+ = e^{a_j dt} X_j + dt e^{a_j dt/2} k_{j-1} X_{j-1}^2
//                     with a_j = -k_j X_{j+1} frozen over the step. Both
//                     terms are nonnegative whenever X_j >= 0, so shells
//                     that start nonnegative stay nonnegative exactly, with
//                     no tolerance. Error control is by step doubling.
//
// The explicit RK path additionally caps dt by
//     stiffness_cap_factor / rate_bound(X),
// where rate_bound is the infinity-norm bound on the Jacobian of the
// right-hand side (max over shells of 2 k_{n-1}|X_{n-1}| + k_n(|X_n|+|X_{n+1}|)).
// This is the fastest local rate actually present in the state. A cap built
// from the global worst case k_N * max|X_n| instead would freeze deep
// truncations (N >= 40) at dt ~ 1e-13 from t = 0 even while every occupied
// shell is slow; the row-sum bound serves the same explicit-stability
// purpose and leaves empty high shells unpenalized.

#include "dyadic/model.hpp"

#include <cstdint>
#include <limits>
#include <stdexcept>
#include <vector>

namespace dyadic {

enum class StepperKind { adaptive_rk, positivity_voc };

struct IntegratorConfig {
  Real abs_tol = 1e-10;
  Real rel_tol = 1e-8;
  Real dt_init = 1e-4;
  Real dt_min = 1e-9;  ///< controller demanding less than this is a failure
  Real dt_max = 0.5;
  Real stiffness_cap_factor = 0.5;
  StepperKind scheme_choice = StepperKind::adaptive_rk;
  Real positivity_floor = 0.0;
  /// > 0 switches to constant steps of exactly this size with error control
  /// and the stability cap disabled (diagnostic mode for order studies).
  Real fixed_dt = 0.0;
};

/// Throws ConfigError unless tolerances are positive and
/// dt_min <= dt_init <= dt_max.
void validate(const IntegratorConfig& config);

enum class EventKind : std::uint8_t {
  undershoot,     ///< protected shell dipped into [-10*abs_tol, 0)
  floor_applied,  ///< last-resort clamp of a protected shell to the floor
  dt_min_failure, ///< controller required dt below dt_min
};

struct Event {
  EventKind kind;
  Real t = 0.0;
  Index shell = -1;  ///< 1-based shell index; -1 when not shell-specific
  Real value = 0.0;  ///< offending value (or required dt for failures)
};

struct StepStats {
  std::int64_t accepted = 0;
  std::int64_t rejected = 0;         ///< error-test rejections
  std::int64_t sign_rejections = 0;  ///< positivity-guard rejections
  std::int64_t undershoot_count = 0;
  std::int64_t rhs_evaluations = 0;
  Real dt_smallest = std::numeric_limits<Real>::infinity();
  Real dt_largest = 0.0;
};

/// Time-ordered samples of one run plus everything needed to interpret them.
/// Sample times are strictly increasing and all states share one dimension.
struct Trajectory {
  Trajectory(CoefficientScheme scheme_, IntegratorConfig config_)
      : scheme(std::move(scheme_)), config(config_) {}

  std::vector<ShellState> states;
  StepStats step_stats;
  CoefficientScheme scheme;
  IntegratorConfig config;
  std::vector<Event> events;

  [[nodiscard]] Index dimension() const {
    return states.empty() ? 0 : states.front().dimension();
  }
};

/// Stiffness failure from the single-step operations.
class StepFailure : public std::runtime_error {
 public:
  StepFailure(const std::string& what, Real time)
      : std::runtime_error(what), time_(time) {}
  [[nodiscard]] Real time() const noexcept { return time_; }

 private:
  Real time_;
};

/// Infinity-norm bound on the Jacobian of the right-hand side at x:
/// max_n 2 k_{n-1}|X_{n-1}| + k_n(|X_n| + |X_{n+1}|), boundary entries zero.
[[nodiscard]] Real stiffness_rate_bound(const Real* x, const Real* k,
                                        Index n) noexcept;
[[nodiscard]] Real stiffness_rate_bound(const ShellState& state,
                                        const CoefficientScheme& scheme);

struct AdaptiveStepResult {
  ShellState state;
  Real dt_used = 0.0;
  Real error_estimate = 0.0;  ///< 2-norm of the embedded error of the step
};

struct PositivityStepResult {
  ShellState state;
  Real dt_used = 0.0;
};

/// One accepted Dormand–Prince 5(4) step starting from config.dt_init.
/// The accepted step satisfies error_estimate <= abs_tol + rel_tol*|X|_2.
/// Throws StepFailure if acceptance would require dt < dt_min.
[[nodiscard]] AdaptiveStepResult step_adaptive(const ShellState& state,
                                               const CoefficientScheme& scheme,
                                               const IntegratorConfig& config);

/// One accepted positivity-preserving exponential step (see header comment).
/// Nonnegative shells remain exactly nonnegative. Throws StepFailure if
/// acceptance would require dt < dt_min.
[[nodiscard]] PositivityStepResult step_positivity(
    const ShellState& state, const CoefficientScheme& scheme,
    const IntegratorConfig& config);

enum class IntegrationStatus { ok, stiffness_failure };

struct IntegrationResult {
  Trajectory trajectory;
  IntegrationStatus status = IntegrationStatus::ok;
  /// Time at which the step size collapsed; NaN when status == ok.
  Real failure_time = std::numeric_limits<Real>::quiet_NaN();

  [[nodiscard]] bool ok() const noexcept {
    return status == IntegrationStatus::ok;
  }
};

/// Integrates from initial.t to t_end, sampling every `sample_every` time
/// units (dense output inside accepted steps: cubic Hermite for adaptive_rk;
/// for positivity_voc the scheme's own sub-step formula, which keeps sampled
/// states exactly nonnegative where a Hermite cubic could undershoot).
/// sample_every == 0 records every accepted step endpoint. The initial state
/// is always the first sample and the final integrated state the last.
/// Deterministic: identical inputs produce bit-identical trajectories. On
/// step-size collapse the partial trajectory up to the failure is returned
/// with status stiffness_failure.
[[nodiscard]] IntegrationResult integrate(const ShellState& initial,
                                          const CoefficientScheme& scheme,
                                          const IntegratorConfig& config,
                                          Real t_end, Real sample_every);

}  // namespace dyadic
