#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "dyadic/diagnostics.hpp"
#include "dyadic/experiments.hpp"
#include "dyadic/integrate.hpp"
#include "dyadic/model.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <string>
#include <vector>

using namespace dyadic;

namespace {

// Tolerance ladder convention used throughout: one knob tau sets
// rel_tol = tau and abs_tol = tau * 1e-2.
IntegratorConfig tol_config(Real tau) {
  IntegratorConfig c;
  c.rel_tol = tau;
  c.abs_tol = tau * 1e-2;
  return c;
}

InitialCondition unit(Index j) {
  InitialCondition ic;
  ic.family = InitialCondition::Family::unit_shell;
  ic.unit_index = j;
  return ic;
}

InitialCondition geometric(Real ratio, Index support, Index negate = 0) {
  InitialCondition ic;
  ic.family = InitialCondition::Family::geometric;
  ic.ratio = ratio;
  ic.n_support = support;
  ic.negate_first = negate;
  return ic;
}

InitialCondition random_positive(Index support, Index negate = 0) {
  InitialCondition ic;
  ic.family = InitialCondition::Family::random_positive;
  ic.n_support = support;
  ic.negate_first = negate;
  return ic;
}

bool has_witness_containing(const ExperimentResult& r,
                            const std::string& needle) {
  return std::any_of(r.witnesses.begin(), r.witnesses.end(),
                     [&](const Witness& w) {
                       return w.what.find(needle) != std::string::npos;
                     });
}

}  // namespace

TEST_CASE("experiment kind names round-trip") {
  const ExperimentKind kinds[] = {
      ExperimentKind::uniqueness_pair, ExperimentKind::truncation_convergence,
      ExperimentKind::h1_growth, ExperimentKind::finite_negative_class_k,
      ExperimentKind::invariant_suite};
  std::set<std::string> names;
  for (const ExperimentKind k : kinds) {
    const std::string name = to_string(k);
    CHECK(!name.empty());
    names.insert(name);
    const auto back = experiment_kind_from_string(name);
    REQUIRE(back.has_value());
    CHECK(*back == k);
  }
  CHECK(names.size() == 5);
  CHECK(!experiment_kind_from_string("no-such-experiment").has_value());
  CHECK(!experiment_kind_from_string("").has_value());
}

TEST_CASE("initial data families materialize as documented") {
  SUBCASE("unit shell") {
    const Vector x = build_initial(unit(3), 6, 0);
    REQUIRE(x.size() == 6);
    CHECK(x[2] == 1.0);
    CHECK(x.abs().sum() == 1.0);
    CHECK_THROWS_AS((void)build_initial(unit(0), 6, 0), ConfigError);
    CHECK_THROWS_AS((void)build_initial(unit(7), 6, 0), ConfigError);
  }

  SUBCASE("geometric profile") {
    const Vector x = build_initial(geometric(0.5, 3), 8, 0);
    CHECK(x[0] == 0.5);
    CHECK(x[1] == 0.25);
    CHECK(x[2] == 0.125);
    for (Index i = 3; i < 8; ++i) {
      CHECK(x[i] == 0.0);
    }
    // ratio 1 is the flat profile; support larger than n clamps.
    const Vector flat = build_initial(geometric(1.0, 99), 4, 0);
    CHECK((flat == 1.0).all());
    CHECK_THROWS_AS((void)build_initial(geometric(0.0, 3), 8, 0), ConfigError);
    CHECK_THROWS_AS((void)build_initial(geometric(1.5, 3), 8, 0), ConfigError);
  }

  SUBCASE("empty support is the zero state") {
    const Vector x = build_initial(geometric(0.5, 0), 8, 0);
    CHECK((x == 0.0).all());
    const Vector r = build_initial(random_positive(0), 8, 7);
    CHECK((r == 0.0).all());
  }

  SUBCASE("random positive data is unit energy and seed-determined") {
    const Vector a = build_initial(random_positive(12), 12, 42);
    const Vector b = build_initial(random_positive(12), 12, 42);
    const Vector c = build_initial(random_positive(12), 12, 43);
    CHECK((a > 0.0).all());
    CHECK((a == b).all());
    CHECK((a != c).any());
    CHECK(std::abs(compensated_sum(a.square()) - 1.0) <= 1e-12);

    const Vector short_support = build_initial(random_positive(5), 12, 42);
    for (Index i = 5; i < 12; ++i) {
      CHECK(short_support[i] == 0.0);
    }
    CHECK(std::abs(compensated_sum(short_support.square()) - 1.0) <= 1e-12);
  }

  SUBCASE("negated prefix flips exactly the first m shells") {
    const Vector base = build_initial(geometric(0.5, 8), 8, 0);
    const Vector flipped = build_initial(geometric(0.5, 8, 3), 8, 0);
    for (Index i = 0; i < 8; ++i) {
      CHECK(flipped[i] == (i < 3 ? -base[i] : base[i]));
    }
    CHECK_THROWS_AS((void)build_initial(geometric(0.5, 8, 9), 8, 0),
                    ConfigError);
  }

  SUBCASE("dimension guard") {
    CHECK_THROWS_AS((void)build_initial(unit(1), 0, 0), ConfigError);
  }
}

TEST_CASE("identical legs produce a zero separation certificate") {
  ExperimentSpec spec;
  spec.name = ExperimentKind::uniqueness_pair;
  spec.n_shells = 8;
  spec.t_end = 0.5;
  spec.ic = unit(1);

  const ExperimentResult r = run_uniqueness_pair(spec);
  CHECK(r.pass);
  CHECK(r.max_psi == 0.0);
  CHECK(r.max_violation == 0.0);  // attained at t = 0 where the envelope is 0
  CHECK(r.status == IntegrationStatus::ok);
  CHECK(std::isnan(r.failure_time));
  REQUIRE(r.leg_horizons.size() == 2);
  CHECK(r.leg_horizons[0] == 0.5);
  CHECK(r.leg_horizons[1] == 0.5);
  CHECK(r.leg_completed == std::vector<bool>{true, true});
  CHECK(r.witnesses.empty());
  CHECK(r.energy_drift >= 0.0);
}

TEST_CASE("separation shrinks as the tolerance pair tightens") {
  ExperimentSpec spec;
  spec.name = ExperimentKind::uniqueness_pair;
  spec.n_shells = 12;
  spec.t_end = 1.0;
  spec.ic = unit(1);

  const Real taus[] = {1e-6, 1e-8, 1e-10};
  std::vector<Real> max_psi;
  for (const Real tau : taus) {
    spec.config_a = tol_config(tau);
    spec.config_b = tol_config(tau * 1e-2);
    const ExperimentResult r = run_uniqueness_pair(spec);
    CHECK(r.pass);
    max_psi.push_back(r.max_psi);
  }
  REQUIRE(max_psi.size() == 3);
  CHECK(max_psi[0] > max_psi[1]);
  CHECK(max_psi[1] > max_psi[2]);
  CHECK(max_psi[0] <= 1e-11);  // observed ~3e-13 on the reference build
  CHECK(max_psi[2] <= 1e-17);  // observed ~1e-19
}

TEST_CASE("signed initial data certifies the same way") {
  ExperimentSpec spec;
  spec.name = ExperimentKind::uniqueness_pair;
  spec.n_shells = 12;
  spec.t_end = 1.0;
  spec.ic = geometric(0.5, 8, 1);
  spec.config_a = tol_config(1e-8);
  spec.config_b = tol_config(1e-12);

  const ExperimentResult r = run_uniqueness_pair(spec);
  CHECK(r.pass);
  CHECK(r.max_psi <= 1e-12);
  CHECK(r.witnesses.empty());
}

TEST_CASE("truncation gaps shrink under refinement") {
  ExperimentSpec spec;
  spec.name = ExperimentKind::truncation_convergence;
  spec.n_shells = 5;
  spec.t_end = 0.7;
  spec.convergence_shell = 4;
  spec.doublings = 2;
  spec.ic = unit(1);

  const ExperimentResult r = run_truncation_convergence(spec);
  CHECK(r.pass);
  CHECK(!r.degenerate);
  CHECK(r.status == IntegrationStatus::ok);
  REQUIRE(r.convergence_gaps.size() == 2);
  CHECK(r.convergence_gaps[0] > r.convergence_gaps[1]);
  CHECK(r.convergence_gaps[1] > 0.0);
  // 5 -> 10 resolves visibly, 10 -> 20 is already near rounding level.
  CHECK(r.convergence_gaps[0] > 1e-5);
  CHECK(r.convergence_gaps[1] < 1e-6);
  REQUIRE(r.leg_horizons.size() == 3);
  for (const Real h : r.leg_horizons) {
    CHECK(h == 0.7);
  }
  CHECK(r.leg_completed == std::vector<bool>{true, true, true});
  CHECK(r.witnesses.size() >= 2);  // informational sup-gap locations
}

TEST_CASE("stalled refinement legs report their partial horizon") {
  // With a coarse dt floor the two larger truncations hit the explicit
  // stepping wall before t_end; the comparison still runs on the common
  // prefixes and the stall is reported, not hidden.
  ExperimentSpec spec;
  spec.name = ExperimentKind::truncation_convergence;
  spec.n_shells = 12;
  spec.t_end = 1.0;
  spec.convergence_shell = 4;
  spec.doublings = 2;
  spec.ic = unit(1);
  spec.config_a.dt_min = 1e-7;

  const ExperimentResult r = run_truncation_convergence(spec);
  CHECK(r.pass);
  CHECK(r.status == IntegrationStatus::stiffness_failure);
  REQUIRE(r.leg_horizons.size() == 3);
  CHECK(r.leg_horizons[0] == 1.0);
  CHECK(r.leg_horizons[1] < 1.0);
  CHECK(r.leg_horizons[1] > 0.5);
  CHECK(r.leg_horizons[2] < r.leg_horizons[1]);
  CHECK(r.leg_horizons[2] > 0.5);
  CHECK(r.leg_completed == std::vector<bool>{true, false, false});
  CHECK(r.failure_time == r.leg_horizons[2]);
  REQUIRE(r.convergence_gaps.size() == 2);
  CHECK(r.convergence_gaps[0] > r.convergence_gaps[1]);
  CHECK(r.convergence_gaps[1] < 1e-6);
}

TEST_CASE("zero refinement data is degenerate but not a failure") {
  ExperimentSpec spec;
  spec.name = ExperimentKind::truncation_convergence;
  spec.n_shells = 6;
  spec.t_end = 0.3;
  spec.ic = geometric(0.5, 0);

  const ExperimentResult r = run_truncation_convergence(spec);
  CHECK(r.pass);
  CHECK(r.degenerate);
  REQUIRE(r.convergence_gaps.size() == 2);
  CHECK(r.convergence_gaps[0] == 0.0);
  CHECK(r.convergence_gaps[1] == 0.0);
}

TEST_CASE("short horizons keep truncation differences at rounding level") {
  // Data supported on the first four shells barely reaches the boundary of
  // the smallest truncation by t = 0.25, so all sizes agree to ~1e-9 and the
  // gap ordering is pure noise. The magnitude is the meaningful statement.
  ExperimentSpec spec;
  spec.name = ExperimentKind::truncation_convergence;
  spec.n_shells = 8;
  spec.t_end = 0.25;
  spec.convergence_shell = 4;
  spec.doublings = 2;
  spec.ic = geometric(0.5, 4);

  const ExperimentResult r = run_truncation_convergence(spec);
  REQUIRE(r.convergence_gaps.size() == 2);
  CHECK(r.convergence_gaps[0] < 1e-8);
  CHECK(r.convergence_gaps[1] < 1e-8);
}

TEST_CASE("refinement spec guards") {
  ExperimentSpec spec;
  spec.name = ExperimentKind::truncation_convergence;
  spec.n_shells = 6;
  spec.ic = unit(1);

  spec.doublings = 0;
  CHECK_THROWS_AS((void)run_truncation_convergence(spec), ConfigError);
  spec.doublings = 1;
  spec.convergence_shell = 0;
  CHECK_THROWS_AS((void)run_truncation_convergence(spec), ConfigError);
  spec.convergence_shell = 7;
  CHECK_THROWS_AS((void)run_truncation_convergence(spec), ConfigError);
}

TEST_CASE("sobolev growth reaches its target factor") {
  ExperimentSpec spec;
  spec.name = ExperimentKind::h1_growth;
  spec.n_shells = 20;
  spec.t_end = 2.0;
  spec.ic = unit(1);

  const ExperimentResult r = run_h1_growth(spec);
  CHECK(r.pass);
  CHECK(!r.degenerate);
  CHECK(r.status == IntegrationStatus::ok);
  CHECK(r.growth_factor >= 10.0);
  CHECK(r.growth_factor < 20.0);   // observed ~10.8 at the crossing sample
  CHECK(r.growth_time > 0.3);      // observed ~0.6
  CHECK(r.growth_time < 1.0);
  CHECK(r.h1_ceiling == std::exp2(40));  // (2^20)^2 times unit energy
}

TEST_CASE("zero growth data is degenerate") {
  ExperimentSpec spec;
  spec.name = ExperimentKind::h1_growth;
  spec.n_shells = 8;
  spec.t_end = 0.5;
  spec.ic = geometric(0.5, 0);

  const ExperimentResult r = run_h1_growth(spec);
  CHECK(r.pass);
  CHECK(r.degenerate);
}

TEST_CASE("growth target below unity is rejected") {
  ExperimentSpec spec;
  spec.name = ExperimentKind::h1_growth;
  spec.n_shells = 8;
  spec.ic = unit(1);
  spec.growth_min = 1.0;
  CHECK_THROWS_AS((void)run_h1_growth(spec), ConfigError);
  spec.growth_min = 0.5;
  CHECK_THROWS_AS((void)run_h1_growth(spec), ConfigError);
}

TEST_CASE("unreachable growth target fails honestly") {
  ExperimentSpec spec;
  spec.name = ExperimentKind::h1_growth;
  spec.n_shells = 12;
  spec.t_end = 0.05;
  spec.ic = unit(1);
  spec.growth_min = 1e9;

  const ExperimentResult r = run_h1_growth(spec);
  CHECK(!r.pass);
  CHECK(!r.degenerate);
  CHECK(r.status == IntegrationStatus::ok);
  CHECK(r.growth_factor >= 1.0);
  CHECK(r.growth_factor < 1e9);
  // On failure the reported time is where the largest factor was seen.
  CHECK(r.growth_time >= 0.0);
  CHECK(r.growth_time <= spec.t_end);
  REQUIRE(!r.witnesses.empty());
  CHECK(r.witnesses.front().value == r.growth_factor);
  CHECK(r.witnesses.front().t == r.growth_time);
}

TEST_CASE("refining the truncation does not lose growth") {
  ExperimentSpec spec;
  spec.name = ExperimentKind::h1_growth;
  spec.n_shells = 14;
  spec.t_end = 2.0;
  spec.ic = unit(1);

  const ExperimentResult r = run_h1_growth_comparison(spec, 20);
  CHECK(r.pass);
  CHECK(r.growth_factor >= 10.0 * (1.0 - 1e-4));
  CHECK(has_witness_containing(r, "larger truncation"));
}

TEST_CASE("negative prefixes keep the class-K bound") {
  ExperimentSpec spec;
  spec.name = ExperimentKind::finite_negative_class_k;
  spec.n_shells = 12;
  spec.t_end = 1.0;

  for (const Index m : {1, 2, 3}) {
    CAPTURE(m);
    spec.ic = geometric(0.5, 8, m);
    const ExperimentResult r = run_finite_negative_class_k(spec);
    CHECK(r.pass);
    CHECK(r.witnesses.empty());
    CHECK(r.a_max >= 0.0);
    CHECK(r.max_violation < 0.0);  // a_max stays strictly below the bound
    if (m == 3) {
      // The negated shells start at -1/2, -1/4, -1/8 with k = 2, 4, 8, so
      // the functional starts at exactly 1/2 and only decays from there.
      CHECK(r.a_max == 0.5);
    }
  }

  SUBCASE("all-positive data keeps the functional at noise level") {
    spec.ic = geometric(0.5, 8, 0);
    const ExperimentResult r = run_finite_negative_class_k(spec);
    CHECK(r.pass);
    CHECK(r.a_max <= 1e-5);  // driven only by logged solver undershoots
  }
}

TEST_CASE("invariant suite passes on seeded random data") {
  ExperimentSpec spec;
  spec.name = ExperimentKind::invariant_suite;
  spec.n_shells = 12;
  spec.t_end = 2.0;
  spec.ic = random_positive(12);
  spec.seed = 3;

  const ExperimentResult r = run_invariant_suite(spec);
  CHECK(r.pass);
  CHECK(r.witnesses.empty());
  CHECK(r.status == IntegrationStatus::ok);
  CHECK(r.energy_drift <= 1e-7);
  CHECK(r.a_max >= 0.0);
}

TEST_CASE("loose tolerances are caught by the invariant suite") {
  ExperimentSpec spec;
  spec.name = ExperimentKind::invariant_suite;
  spec.n_shells = 12;
  spec.t_end = 2.0;
  spec.ic = unit(1);
  spec.config_a.rel_tol = 1e-2;
  spec.config_a.abs_tol = 1e-2;

  const ExperimentResult r = run_invariant_suite(spec);
  CHECK(!r.pass);
  CHECK(r.energy_drift > 1e-7);
  CHECK(has_witness_containing(r, "energy rose"));
}

TEST_CASE("invariant suite on resting data is clean") {
  ExperimentSpec spec;
  spec.name = ExperimentKind::invariant_suite;
  spec.n_shells = 8;
  spec.t_end = 0.5;
  spec.ic = geometric(0.5, 0);

  const ExperimentResult zero = run_invariant_suite(spec);
  CHECK(zero.pass);
  CHECK(zero.energy_drift == 0.0);

  // Data on the last shell is a fixed point of the truncation: its only
  // outflow partner is beyond the boundary.
  spec.n_shells = 16;
  spec.t_end = 2.0;
  spec.ic = unit(16);
  const ExperimentResult top = run_invariant_suite(spec);
  CHECK(top.pass);
  CHECK(top.energy_drift <= 1e-14);
}

TEST_CASE("experiment reruns are byte-identical") {
  ExperimentSpec pair;
  pair.name = ExperimentKind::uniqueness_pair;
  pair.n_shells = 12;
  pair.t_end = 1.0;
  pair.ic = random_positive(12, 2);
  pair.seed = 5;
  pair.config_a = tol_config(1e-8);
  pair.config_b = tol_config(1e-12);

  const ExperimentResult a = run_experiment(pair);
  const ExperimentResult b = run_experiment(pair);
  CHECK(a.pass == b.pass);
  CHECK(a.max_psi == b.max_psi);
  CHECK(a.max_violation == b.max_violation);
  CHECK(a.energy_drift == b.energy_drift);
  CHECK(a.leg_horizons == b.leg_horizons);

  ExperimentSpec suite;
  suite.name = ExperimentKind::invariant_suite;
  suite.n_shells = 12;
  suite.t_end = 1.0;
  suite.ic = random_positive(12);
  suite.seed = 4;

  const ExperimentResult c = run_experiment(suite);
  const ExperimentResult d = run_experiment(suite);
  CHECK(c.pass == d.pass);
  CHECK(c.energy_drift == d.energy_drift);
  CHECK(c.a_max == d.a_max);
}

TEST_CASE("dispatch runs the scenario named in the spec") {
  ExperimentSpec spec;
  spec.n_shells = 6;
  spec.t_end = 0.2;
  spec.ic = unit(1);
  spec.doublings = 1;
  spec.growth_min = 2.0;

  const ExperimentKind kinds[] = {
      ExperimentKind::uniqueness_pair, ExperimentKind::truncation_convergence,
      ExperimentKind::h1_growth, ExperimentKind::finite_negative_class_k,
      ExperimentKind::invariant_suite};
  for (const ExperimentKind k : kinds) {
    spec.name = k;
    const ExperimentResult r = run_experiment(spec);
    CHECK(r.name == k);
  }
}

TEST_CASE("canonical data sweep covers the documented families and passes") {
  const std::vector<ExperimentSpec> specs = canonical_ic_suite();
  REQUIRE(specs.size() == 20);

  int unit_count = 0;
  int geometric_count = 0;
  int random_count = 0;
  int signed_count = 0;
  for (const ExperimentSpec& s : specs) {
    CHECK(s.name == ExperimentKind::invariant_suite);
    CHECK((s.n_shells == 12 || s.n_shells == 16));
    switch (s.ic.family) {
      case InitialCondition::Family::unit_shell: ++unit_count; break;
      case InitialCondition::Family::geometric: ++geometric_count; break;
      case InitialCondition::Family::random_positive: ++random_count; break;
    }
    if (s.ic.negate_first > 0) {
      ++signed_count;
    }
  }
  CHECK(unit_count >= 4);
  CHECK(geometric_count >= 4);
  CHECK(random_count >= 4);
  CHECK(signed_count >= 4);

  // The sweep is a fixed artifact: rebuilding it changes nothing.
  const std::vector<ExperimentSpec> again = canonical_ic_suite();
  REQUIRE(again.size() == specs.size());
  for (std::size_t i = 0; i < specs.size(); ++i) {
    CHECK(again[i].n_shells == specs[i].n_shells);
    CHECK(again[i].seed == specs[i].seed);
    CHECK(again[i].ic.negate_first == specs[i].ic.negate_first);
  }

  for (std::size_t i = 0; i < specs.size(); ++i) {
    CAPTURE(i);
    const ExperimentResult r = run_experiment(specs[i]);
    CHECK(r.pass);
    CHECK(r.witnesses.empty());
  }
}

TEST_CASE("tightening tolerances never converts a pass into a failure") {
  ExperimentSpec spec;
  spec.name = ExperimentKind::invariant_suite;
  spec.n_shells = 12;
  spec.t_end = 2.0;
  spec.ic = unit(1);

  std::vector<Real> drifts;
  std::vector<bool> passes;
  for (const Real tau : {1e-4, 1e-6, 1e-8}) {
    spec.config_a = tol_config(tau);
    const ExperimentResult r = run_invariant_suite(spec);
    drifts.push_back(r.energy_drift);
    passes.push_back(r.pass);
  }
  CHECK(drifts[0] > drifts[1]);
  CHECK(drifts[1] > drifts[2]);
  CHECK(passes[2]);  // the default-tolerance rung holds every invariant
  for (std::size_t i = 0; i + 1 < passes.size(); ++i) {
    CHECK(!(passes[i] && !passes[i + 1]));
  }
}
