#pragma once

// Canned, reproducible scenarios: coincidence-of-solutions demonstration,
// truncation self-convergence, H1 growth as a blow-up indicator, finitely
// negative initial data with the class-K functional bound, and the full
// per-trajectory check suite. Every experiment is a pure function of its
// spec (the seed fully determines randomized initial data), so reruns are
// byte-identical.

#include "dyadic/diagnostics.hpp"
#include "dyadic/integrate.hpp"
#include "dyadic/model.hpp"

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace dyadic {

enum class ExperimentKind {
  uniqueness_pair,
  truncation_convergence,
  h1_growth,
  finite_negative_class_k,
  invariant_suite,
};

[[nodiscard]] std::string to_string(ExperimentKind kind);
[[nodiscard]] std::optional<ExperimentKind> experiment_kind_from_string(
    const std::string& name);

/// Named initial-data families. `negate_first` wraps any base family by
/// flipping the sign of shells 1..m.
struct InitialCondition {
  enum class Family { unit_shell, geometric, random_positive };

  Family family = Family::unit_shell;
  Index unit_index = 1;   ///< unit_shell: j of e_j
  Real ratio = 0.5;       ///< geometric: X_n = ratio^n on the support
  Index n_support = 8;    ///< geometric / random_positive support size
  Index negate_first = 0; ///< signed(m, base): shells 1..m negated
};

/// Materializes the family at dimension n. random_positive draws shells
/// uniformly from (0, 1] with the given seed and rescales to unit energy.
[[nodiscard]] Vector build_initial(const InitialCondition& ic, Index n,
                                   std::uint64_t seed);

struct ExperimentSpec {
  ExperimentKind name = ExperimentKind::invariant_suite;
  Index n_shells = 16;
  Real base = 2.0;
  Real scale = 1.0;
  InitialCondition ic;
  Real t_end = 2.0;
  IntegratorConfig config_a;
  std::optional<IntegratorConfig> config_b;  ///< second leg of pair runs
  std::uint64_t seed = 0;
  Real sample_every = 0.01;

  // Pass thresholds (defaults documented per scenario).
  Real psi_pass_rel = 1e-9;     ///< max psi_N <= psi_pass_rel * E(0)
  Real envelope_slack = 1e-8;   ///< psi_N <= G + slack*(1+G)
  Real growth_min = 10.0;       ///< H1 growth factor target
  Index convergence_shell = 4;  ///< fixed n of the E_n comparison
  Index doublings = 2;          ///< truncation refinements tested

  [[nodiscard]] CoefficientScheme make_scheme(Index n) const {
    return {base, scale, n};
  }
};

struct Witness {
  std::string what;
  Real t = 0.0;
  Index shell = -1;
  Real value = 0.0;
};

struct ExperimentResult {
  ExperimentKind name = ExperimentKind::invariant_suite;
  bool pass = false;
  bool degenerate = false;  ///< e.g. zero initial data for a growth ratio
  IntegrationStatus status = IntegrationStatus::ok;
  Real failure_time = std::numeric_limits<Real>::quiet_NaN();

  // Metric values; NaN when not produced by the scenario.
  Real max_psi = std::numeric_limits<Real>::quiet_NaN();
  Real max_violation = std::numeric_limits<Real>::quiet_NaN();
  Real energy_drift = std::numeric_limits<Real>::quiet_NaN();
  Real growth_factor = std::numeric_limits<Real>::quiet_NaN();
  Real growth_time = std::numeric_limits<Real>::quiet_NaN();
  Real h1_ceiling = std::numeric_limits<Real>::quiet_NaN();
  Real a_max = std::numeric_limits<Real>::quiet_NaN();
  std::vector<Real> convergence_gaps;  ///< one sup-difference per doubling
  std::vector<Real> leg_horizons;      ///< per leg, last time reached
  std::vector<bool> leg_completed;

  std::vector<Witness> witnesses;
  std::vector<std::string> data_files;  ///< filled by the io layer
};

/// Same initial state integrated under config_a and config_b; passes iff
/// max psi_N <= psi_pass_rel * E(0) and the Gronwall envelope is respected.
[[nodiscard]] ExperimentResult run_uniqueness_pair(const ExperimentSpec& spec);

/// Runs n_shells, 2*n_shells, ... (doublings + 1 sizes) from the zero-padded
/// initial state; reports sup_t |E_n gaps| between consecutive sizes over
/// their common completed horizon; passes iff the gaps strictly decrease.
/// Legs that hit the explicit-stepping stiffness wall contribute their
/// partial horizon and are reported as incomplete rather than discarded.
[[nodiscard]] ExperimentResult run_truncation_convergence(
    const ExperimentSpec& spec);

/// Tracks h1_sq growth from positive finite-support initial data; stops at
/// the first sample reaching growth_min (the cascade makes later times
/// exponentially stiffer, so running past the target is pure cost); passes
/// iff the factor is reached within t_end. Also records the truncation
/// ceiling k_N^2 * E(0) that bounds any finite run.
[[nodiscard]] ExperimentResult run_h1_growth(const ExperimentSpec& spec);

/// Two-size comparison for the growth scenario: integrates n_shells and
/// n_shells_b to the later of the two growth-target crossing times and
/// compares the factors there (refinement must not lose growth).
[[nodiscard]] ExperimentResult run_h1_growth_comparison(
    const ExperimentSpec& spec, Index n_shells_b);

/// Initial data with exactly m negative shells: checks sign persistence,
/// the class-K functional bound with n0 = m (or a ~ 0 when m = 0), and
/// energy monotonicity once every shell is nonnegative.
[[nodiscard]] ExperimentResult run_finite_negative_class_k(
    const ExperimentSpec& spec);

/// One trajectory, every diagnostics check, aggregated pass/fail.
[[nodiscard]] ExperimentResult run_invariant_suite(const ExperimentSpec& spec);

/// Dispatch on spec.name.
[[nodiscard]] ExperimentResult run_experiment(const ExperimentSpec& spec);

/// The canonical twenty-spec initial-data sweep used by the acceptance
/// checks: unit shells, geometric profiles, seeded random positive data,
/// and signed variants, all as invariant_suite runs.
[[nodiscard]] std::vector<ExperimentSpec> canonical_ic_suite();

}  // namespace dyadic
