#include "dyadic/experiments.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <utility>

namespace dyadic {

namespace {

// Relative slack when comparing growth factors across truncation sizes: the
// two systems evolve identically until the cascade front nears the smaller
// boundary, so the factors differ only by controller noise, far below this.
constexpr Real kGrowthComparisonSlack = 1e-4;

/// Leading run of samples with exactly equal timestamps. Cadence sampling
/// computes sample times as t0 + index * cadence in both runs, so grids
/// match bit for bit until one run stops early.
[[nodiscard]] std::size_t common_prefix(const Trajectory& a,
                                        const Trajectory& b) {
  const std::size_t m = std::min(a.states.size(), b.states.size());
  std::size_t i = 0;
  while (i < m && a.states[i].t == b.states[i].t) {
    ++i;
  }
  return i;
}

[[nodiscard]] Trajectory truncated(const Trajectory& traj, std::size_t count) {
  Trajectory out(traj.scheme, traj.config);
  out.states.assign(traj.states.begin(),
                    traj.states.begin() + static_cast<std::ptrdiff_t>(count));
  out.step_stats = traj.step_stats;
  out.events = traj.events;
  return out;
}

[[nodiscard]] Real max_relative_drift(const Trajectory& traj, Real e0) {
  const Real denom = e0 > 0.0 ? e0 : 1.0;
  Real worst = 0.0;
  for (const auto& state : traj.states) {
    worst = std::max(worst, std::abs(energy(state) - e0) / denom);
  }
  return worst;
}

void note_failure(ExperimentResult& r, const IntegrationResult& leg) {
  if (leg.ok()) {
    return;
  }
  r.status = IntegrationStatus::stiffness_failure;
  if (std::isnan(r.failure_time) || leg.failure_time < r.failure_time) {
    r.failure_time = leg.failure_time;
  }
}

}  // namespace

std::string to_string(ExperimentKind kind) {
  switch (kind) {
    case ExperimentKind::uniqueness_pair:
      return "uniqueness_pair";
    case ExperimentKind::truncation_convergence:
      return "truncation_convergence";
    case ExperimentKind::h1_growth:
      return "h1_growth";
    case ExperimentKind::finite_negative_class_k:
      return "finite_negative_class_k";
    case ExperimentKind::invariant_suite:
      return "invariant_suite";
  }
  return "unknown";
}

std::optional<ExperimentKind> experiment_kind_from_string(
    const std::string& name) {
  if (name == "uniqueness_pair") {
    return ExperimentKind::uniqueness_pair;
  }
  if (name == "truncation_convergence") {
    return ExperimentKind::truncation_convergence;
  }
  if (name == "h1_growth") {
    return ExperimentKind::h1_growth;
  }
  if (name == "finite_negative_class_k") {
    return ExperimentKind::finite_negative_class_k;
  }
  if (name == "invariant_suite") {
    return ExperimentKind::invariant_suite;
  }
  return std::nullopt;
}

Vector build_initial(const InitialCondition& ic, Index n, std::uint64_t seed) {
  if (n < 1) {
    throw ConfigError("initial data needs at least one shell");
  }
  if (ic.n_support < 0) {
    throw ConfigError("initial-data support size must be nonnegative");
  }
  if (ic.negate_first < 0 || ic.negate_first > n) {
    throw ConfigError("negated prefix exceeds the shell count");
  }

  Vector x = Vector::Zero(n);
  switch (ic.family) {
    case InitialCondition::Family::unit_shell:
      if (ic.unit_index < 1 || ic.unit_index > n) {
        throw ConfigError("unit-shell index out of range");
      }
      x[ic.unit_index - 1] = 1.0;
      break;
    case InitialCondition::Family::geometric: {
      if (!(ic.ratio > 0.0) || ic.ratio > 1.0) {
        throw ConfigError("geometric ratio must lie in (0, 1]");
      }
      const Index s = std::min(ic.n_support, n);
      Real v = 1.0;
      for (Index i = 0; i < s; ++i) {
        v *= ic.ratio;
        x[i] = v;
      }
      break;
    }
    case InitialCondition::Family::random_positive: {
      const Index s = std::min(ic.n_support, n);
      std::mt19937_64 gen(seed);
      for (Index i = 0; i < s; ++i) {
        // 53-bit mantissa draw mapped to (0, 1]; stable across platforms,
        // unlike std::uniform_real_distribution.
        x[i] = static_cast<Real>((gen() >> 11) + 1) * 0x1.0p-53;
      }
      if (s > 0) {
        x /= std::sqrt(compensated_sum(x.square()));
      }
      break;
    }
  }
  for (Index i = 0; i < ic.negate_first; ++i) {
    x[i] = -x[i];
  }
  return x;
}

ExperimentResult run_uniqueness_pair(const ExperimentSpec& spec) {
  ExperimentResult r;
  r.name = ExperimentKind::uniqueness_pair;
  const CoefficientScheme scheme = spec.make_scheme(spec.n_shells);
  const ShellState x0 =
      make_state(0.0, build_initial(spec.ic, spec.n_shells, spec.seed));
  const Real e0 = energy(x0);

  const IntegratorConfig config_b = spec.config_b.value_or(spec.config_a);
  const IntegrationResult leg_a =
      integrate(x0, scheme, spec.config_a, spec.t_end, spec.sample_every);
  const IntegrationResult leg_b =
      integrate(x0, scheme, config_b, spec.t_end, spec.sample_every);

  r.leg_horizons = {leg_a.trajectory.states.back().t,
                    leg_b.trajectory.states.back().t};
  r.leg_completed = {leg_a.ok(), leg_b.ok()};
  note_failure(r, leg_a);
  note_failure(r, leg_b);
  r.energy_drift = std::max(max_relative_drift(leg_a.trajectory, e0),
                            max_relative_drift(leg_b.trajectory, e0));

  const std::size_t m = common_prefix(leg_a.trajectory, leg_b.trajectory);
  if (m < 2) {
    r.pass = false;
    r.witnesses.push_back(
        Witness{"runs share no usable sample interval", 0.0, -1,
                static_cast<Real>(m)});
    return r;
  }

  PairCertificateOptions opts;
  opts.slack = spec.envelope_slack;
  const PairCertificate cert =
      pair_certificate(truncated(leg_a.trajectory, m),
                       truncated(leg_b.trajectory, m), scheme, opts);
  r.max_psi = cert.max_psi;
  r.max_violation = cert.max_violation;

  const bool psi_ok = cert.max_psi <= spec.psi_pass_rel * e0;
  if (!psi_ok) {
    r.witnesses.push_back(Witness{"max psi_N above the pass threshold",
                                  cert.times.back(), -1, cert.max_psi});
  }
  if (!cert.envelope_ok) {
    r.witnesses.push_back(Witness{"psi_N exceeds the Gronwall envelope", 0.0,
                                  -1, cert.max_violation});
  }
  r.pass = psi_ok && cert.envelope_ok && r.status == IntegrationStatus::ok;
  return r;
}

ExperimentResult run_truncation_convergence(const ExperimentSpec& spec) {
  ExperimentResult r;
  r.name = ExperimentKind::truncation_convergence;
  if (spec.doublings < 1) {
    throw ConfigError("truncation study needs at least one doubling");
  }
  if (spec.convergence_shell < 1 || spec.convergence_shell > spec.n_shells) {
    throw ConfigError("comparison shell exceeds the smallest truncation");
  }

  std::vector<Index> sizes;
  sizes.reserve(static_cast<std::size_t>(spec.doublings) + 1);
  Index size = spec.n_shells;
  for (Index d = 0; d <= spec.doublings; ++d) {
    sizes.push_back(size);
    size *= 2;
  }

  std::vector<IntegrationResult> legs;
  legs.reserve(sizes.size());
  Real drift = 0.0;
  for (const Index s : sizes) {
    const CoefficientScheme scheme = spec.make_scheme(s);
    const ShellState x0 = make_state(0.0, build_initial(spec.ic, s, spec.seed));
    legs.push_back(
        integrate(x0, scheme, spec.config_a, spec.t_end, spec.sample_every));
    const IntegrationResult& leg = legs.back();
    r.leg_horizons.push_back(leg.trajectory.states.back().t);
    r.leg_completed.push_back(leg.ok());
    note_failure(r, leg);
    drift = std::max(drift,
                     max_relative_drift(leg.trajectory,
                                        energy(leg.trajectory.states.front())));
  }
  r.energy_drift = drift;

  // One sup-gap per consecutive pair, over that pair's common sampled
  // horizon; a run stopped by stiffness contributes its partial horizon.
  bool comparable = true;
  for (std::size_t p = 0; p + 1 < legs.size(); ++p) {
    const Trajectory& small = legs[p].trajectory;
    const Trajectory& large = legs[p + 1].trajectory;
    const std::size_t m = common_prefix(small, large);
    if (m < 2) {
      comparable = false;
      r.convergence_gaps.push_back(std::numeric_limits<Real>::quiet_NaN());
      r.witnesses.push_back(Witness{"pair shares no usable sample interval",
                                    0.0, static_cast<Index>(p),
                                    static_cast<Real>(m)});
      continue;
    }
    Real gap = 0.0;
    Real gap_t = small.states.front().t;
    Real shell_gap = 0.0;
    Real shell_gap_t = gap_t;
    Index shell_gap_n = 1;
    for (std::size_t i = 0; i < m; ++i) {
      const Vector pa =
          compute_norms(small.states[i], small.scheme).partial_energies;
      const Vector pb =
          compute_norms(large.states[i], large.scheme).partial_energies;
      const Real g = std::abs(pa[spec.convergence_shell - 1] -
                              pb[spec.convergence_shell - 1]);
      if (g > gap) {
        gap = g;
        gap_t = small.states[i].t;
      }
      for (Index j = 0; j < small.dimension(); ++j) {
        const Real gj = std::abs(pa[j] - pb[j]);
        if (gj > shell_gap) {
          shell_gap = gj;
          shell_gap_t = small.states[i].t;
          shell_gap_n = j + 1;
        }
      }
    }
    r.convergence_gaps.push_back(gap);
    r.witnesses.push_back(Witness{"largest per-shell energy gap of pair",
                                  shell_gap_t, shell_gap_n, shell_gap});
    r.witnesses.push_back(Witness{"fixed-shell energy gap of pair", gap_t,
                                  spec.convergence_shell, gap});
  }

  bool all_zero = comparable;
  bool decreasing = comparable;
  for (std::size_t p = 0; p < r.convergence_gaps.size(); ++p) {
    if (r.convergence_gaps[p] != 0.0) {
      all_zero = false;
    }
    if (p + 1 < r.convergence_gaps.size() &&
        !(r.convergence_gaps[p + 1] < r.convergence_gaps[p])) {
      decreasing = false;
    }
  }
  if (all_zero) {
    r.degenerate = true;  // e.g. zero initial data: every truncation agrees
    r.pass = true;
  } else {
    r.pass = decreasing;
  }
  return r;
}

ExperimentResult run_h1_growth(const ExperimentSpec& spec) {
  ExperimentResult r;
  r.name = ExperimentKind::h1_growth;
  const CoefficientScheme scheme = spec.make_scheme(spec.n_shells);
  const ShellState x0 =
      make_state(0.0, build_initial(spec.ic, spec.n_shells, spec.seed));
  const Real e0 = energy(x0);
  const Real h1_0 = h1_norm_sq(x0, scheme);
  const Real k_top = scheme.k(spec.n_shells);
  r.h1_ceiling = k_top * k_top * e0;

  if (h1_0 == 0.0) {
    r.degenerate = true;  // zero data: the growth ratio is 0/0
    r.pass = true;
    return r;
  }
  if (!(spec.growth_min > 1.0)) {
    throw ConfigError("growth target must exceed 1");
  }

  // March in short windows so the run stops near the first crossing instead
  // of paying for the (exponentially stiffer) cascade beyond it.
  Real window = spec.sample_every > 0.0 ? 10.0 * spec.sample_every
                                        : spec.t_end / 100.0;
  window = std::min(window, spec.t_end);
  ShellState cur = x0;
  Real max_factor = 1.0;
  Real max_factor_t = cur.t;
  Real drift = 0.0;
  Real horizon = cur.t;
  bool crossed = false;

  while (cur.t < spec.t_end) {
    const Real t_next = std::min(cur.t + window, spec.t_end);
    const IntegrationResult res =
        integrate(cur, scheme, spec.config_a, t_next, spec.sample_every);
    for (const auto& state : res.trajectory.states) {
      horizon = state.t;
      drift = std::max(drift, std::abs(energy(state) - e0) /
                                  (e0 > 0.0 ? e0 : 1.0));
      const Real factor = h1_norm_sq(state, scheme) / h1_0;
      if (factor > max_factor) {
        max_factor = factor;
        max_factor_t = state.t;
      }
      if (factor >= spec.growth_min) {
        crossed = true;
        r.growth_factor = factor;
        r.growth_time = state.t;
        break;
      }
    }
    if (crossed) {
      break;  // a failure past the crossing is irrelevant: the answer exists
    }
    if (!res.ok()) {
      note_failure(r, res);
      break;
    }
    cur = res.trajectory.states.back();
  }

  r.energy_drift = drift;
  r.leg_horizons = {crossed ? r.growth_time : horizon};
  r.leg_completed = {crossed || r.status == IntegrationStatus::ok};
  r.pass = crossed;
  if (!crossed) {
    r.growth_factor = max_factor;
    r.growth_time = max_factor_t;
    r.witnesses.push_back(Witness{"growth target not reached on the horizon",
                                  max_factor_t, -1, max_factor});
  }
  return r;
}

ExperimentResult run_h1_growth_comparison(const ExperimentSpec& spec,
                                          Index n_shells_b) {
  ExperimentResult r;
  r.name = ExperimentKind::h1_growth;
  ExperimentSpec spec_b = spec;
  spec_b.n_shells = n_shells_b;

  const ExperimentResult leg_a = run_h1_growth(spec);
  const ExperimentResult leg_b = run_h1_growth(spec_b);
  r.leg_horizons = {leg_a.growth_time, leg_b.growth_time};
  r.leg_completed = {leg_a.pass, leg_b.pass};
  r.h1_ceiling = std::max(leg_a.h1_ceiling, leg_b.h1_ceiling);
  if (!leg_a.pass || !leg_b.pass) {
    r.pass = false;
    for (const ExperimentResult* leg : {&leg_a, &leg_b}) {
      if (!leg->pass) {
        r.status = leg->status;
        r.failure_time = leg->failure_time;
        r.witnesses.push_back(Witness{"growth leg missed its target",
                                      leg->growth_time, -1,
                                      leg->growth_factor});
      }
    }
    return r;
  }

  // Compare the factors at the later of the two crossing times; both runs
  // are re-integrated exactly to that instant.
  const Real t_star = std::max(leg_a.growth_time, leg_b.growth_time);
  r.growth_time = t_star;
  Real factors[2] = {0.0, 0.0};
  const Index sizes[2] = {spec.n_shells, n_shells_b};
  for (int i = 0; i < 2; ++i) {
    const CoefficientScheme scheme = spec.make_scheme(sizes[i]);
    const ShellState x0 =
        make_state(0.0, build_initial(spec.ic, sizes[i], spec.seed));
    const IntegrationResult res =
        integrate(x0, scheme, spec.config_a, t_star, spec.sample_every);
    if (!res.ok()) {
      note_failure(r, res);
      r.pass = false;
      return r;
    }
    factors[i] =
        h1_norm_sq(res.trajectory.states.back(), scheme) / h1_norm_sq(x0, scheme);
  }
  r.growth_factor = factors[0];
  r.witnesses.push_back(
      Witness{"factor of the larger truncation", t_star, -1, factors[1]});
  r.pass = factors[1] >= factors[0] * (1.0 - kGrowthComparisonSlack);
  if (!r.pass) {
    r.witnesses.push_back(
        Witness{"refinement lost growth", t_star, -1, factors[1] - factors[0]});
  }
  return r;
}

ExperimentResult run_finite_negative_class_k(const ExperimentSpec& spec) {
  ExperimentResult r;
  r.name = ExperimentKind::finite_negative_class_k;
  const CoefficientScheme scheme = spec.make_scheme(spec.n_shells);
  const ShellState x0 =
      make_state(0.0, build_initial(spec.ic, spec.n_shells, spec.seed));
  const Real e0 = energy(x0);

  const IntegrationResult res =
      integrate(x0, scheme, spec.config_a, spec.t_end, spec.sample_every);
  const Trajectory& traj = res.trajectory;
  r.leg_horizons = {traj.states.back().t};
  r.leg_completed = {res.ok()};
  note_failure(r, res);
  r.energy_drift = max_relative_drift(traj, e0);

  const Index n0 = std::max<Index>(spec.ic.negate_first, 1);
  const SignReport sign = check_sign_preservation(traj);
  const ClassKBoundReport bound = class_k_bound_check(traj, n0);
  const HPlusReport h_plus = check_h_plus_energy_lemmas(traj);
  r.a_max = bound.a_max;
  r.max_violation = bound.a_max - bound.bound;

  if (!sign.ok()) {
    const SignViolation& v = sign.violations.front();
    r.witnesses.push_back(
        Witness{"shell left the nonnegative cone", v.t, v.shell, v.value});
  }
  if (bound.outcome == CheckOutcome::fail) {
    r.witnesses.push_back(Witness{"a(t) exceeds its class-K ceiling",
                                  bound.witness_t, n0, bound.a_max});
  } else if (bound.outcome == CheckOutcome::inapplicable) {
    r.witnesses.push_back(
        Witness{"a shell above the negated prefix went negative",
                bound.witness_t, n0, 0.0});
  }
  if (!h_plus.no_growth_after_nonneg_ok) {
    r.witnesses.push_back(Witness{"energy rose after the data turned nonnegative",
                                  h_plus.growth_witness_t, -1, 0.0});
  }

  r.pass = res.ok() && sign.ok() && bound.outcome == CheckOutcome::pass &&
           h_plus.no_growth_after_nonneg_ok;
  return r;
}

ExperimentResult run_invariant_suite(const ExperimentSpec& spec) {
  ExperimentResult r;
  r.name = ExperimentKind::invariant_suite;
  const CoefficientScheme scheme = spec.make_scheme(spec.n_shells);
  const ShellState x0 =
      make_state(0.0, build_initial(spec.ic, spec.n_shells, spec.seed));
  const Real e0 = energy(x0);

  const IntegrationResult res =
      integrate(x0, scheme, spec.config_a, spec.t_end, spec.sample_every);
  const Trajectory& traj = res.trajectory;
  r.leg_horizons = {traj.states.back().t};
  r.leg_completed = {res.ok()};
  note_failure(r, res);

  const DiagnosticsReport d = run_diagnostics(traj);
  r.energy_drift = max_relative_drift(traj, e0);
  r.a_max = *std::max_element(d.a_value.begin(), d.a_value.end());

  // Telescoping-identity residuals stay at the rounding level of their own
  // largest term, bounded by 2 k_N E^(3/2).
  const Real flux_tol =
      1e-12 * (1.0 + 2.0 * scheme.k(spec.n_shells) * e0 * std::sqrt(e0));
  Real flux_max = 0.0;
  Real flux_max_t = traj.states.front().t;
  Index flux_max_level = 1;
  for (std::size_t i = 0; i < d.flux_residuals.size(); ++i) {
    for (Index level = 0; level < d.flux_residuals[i].size(); ++level) {
      const Real v = std::abs(d.flux_residuals[i][level]);
      if (v > flux_max) {
        flux_max = v;
        flux_max_t = d.times[i];
        flux_max_level = level + 1;
      }
    }
  }
  const bool flux_ok = flux_max <= flux_tol;

  if (!d.weak_energy_ok()) {
    r.witnesses.push_back(Witness{"energy exceeded its initial value",
                                  d.monotonicity.weak_witness_t, -1, 0.0});
  }
  if (!d.strong_energy_ok()) {
    r.witnesses.push_back(Witness{"energy rose between samples",
                                  d.monotonicity.strong_witness_t, -1, 0.0});
  }
  if (!d.sign.ok()) {
    const SignViolation& v = d.sign.violations.front();
    r.witnesses.push_back(
        Witness{"shell left the nonnegative cone", v.t, v.shell, v.value});
  }
  if (!d.h_plus.decrease_tail_ok) {
    r.witnesses.push_back(Witness{"energy dropped without a clean tail",
                                  d.h_plus.decrease_witness_t, -1, 0.0});
  }
  if (!d.h_plus.no_growth_after_nonneg_ok) {
    r.witnesses.push_back(Witness{"energy rose after the data turned nonnegative",
                                  d.h_plus.growth_witness_t, -1, 0.0});
  }
  if (!d.simple_bound_ok) {
    r.witnesses.push_back(
        Witness{"a shell exceeded sqrt(E(0))", 0.0, -1, 0.0});
  }
  if (!flux_ok) {
    r.witnesses.push_back(Witness{"telescoping residual above rounding level",
                                  flux_max_t, flux_max_level, flux_max});
  }

  r.pass = res.ok() && d.weak_energy_ok() && d.strong_energy_ok() &&
           d.sign.ok() && d.h_plus.decrease_tail_ok &&
           d.h_plus.no_growth_after_nonneg_ok && d.simple_bound_ok && flux_ok;
  return r;
}

ExperimentResult run_experiment(const ExperimentSpec& spec) {
  switch (spec.name) {
    case ExperimentKind::uniqueness_pair:
      return run_uniqueness_pair(spec);
    case ExperimentKind::truncation_convergence:
      return run_truncation_convergence(spec);
    case ExperimentKind::h1_growth:
      return run_h1_growth(spec);
    case ExperimentKind::finite_negative_class_k:
      return run_finite_negative_class_k(spec);
    case ExperimentKind::invariant_suite:
      return run_invariant_suite(spec);
  }
  throw ConfigError("unknown experiment kind");
}

std::vector<ExperimentSpec> canonical_ic_suite() {
  std::vector<ExperimentSpec> specs;
  specs.reserve(20);

  auto add = [&specs](Index n, InitialCondition ic, std::uint64_t seed = 0) {
    ExperimentSpec s;
    s.name = ExperimentKind::invariant_suite;
    s.n_shells = n;
    s.ic = ic;
    s.seed = seed;
    specs.push_back(s);
  };

  using F = InitialCondition::Family;

  // Single excited shells, including the top one (a fixed point).
  add(16, {F::unit_shell, 1, 0.5, 8, 0});
  add(16, {F::unit_shell, 2, 0.5, 8, 0});
  add(16, {F::unit_shell, 5, 0.5, 8, 0});
  add(16, {F::unit_shell, 16, 0.5, 8, 0});

  // Geometric profiles of varying steepness and support.
  add(16, {F::geometric, 1, 0.5, 8, 0});
  add(16, {F::geometric, 1, 0.75, 12, 0});
  add(16, {F::geometric, 1, 0.9, 16, 0});
  add(16, {F::geometric, 1, 0.25, 4, 0});

  // Seeded random positive data, unit energy.
  add(16, {F::random_positive, 1, 0.5, 16, 0}, 1);
  add(16, {F::random_positive, 1, 0.5, 8, 0}, 2);
  add(16, {F::random_positive, 1, 0.5, 12, 0}, 3);
  add(16, {F::random_positive, 1, 0.5, 16, 0}, 4);

  // Signed variants: one to three negated leading shells.
  add(16, {F::unit_shell, 1, 0.5, 8, 1});
  add(16, {F::geometric, 1, 0.5, 8, 1});
  add(16, {F::geometric, 1, 0.5, 8, 2});
  add(16, {F::geometric, 1, 0.5, 8, 3});
  add(16, {F::random_positive, 1, 0.5, 16, 2}, 5);
  add(16, {F::random_positive, 1, 0.5, 12, 3}, 6);

  // Smaller truncations to vary the boundary.
  add(12, {F::geometric, 1, 0.6, 10, 0});
  add(12, {F::random_positive, 1, 0.5, 10, 0}, 7);

  return specs;
}

}  // namespace dyadic
