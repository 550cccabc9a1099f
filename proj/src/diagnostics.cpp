#include "dyadic/diagnostics.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace dyadic {

namespace {

void require_nonempty(const Trajectory& traj) {
  if (traj.states.empty()) {
    throw std::invalid_argument("diagnostics require a nonempty trajectory");
  }
}

/// Dip tolerance of a run: the positivity stepper guarantees signs exactly.
[[nodiscard]] Real sign_epsilon(const Trajectory& traj) {
  return traj.config.scheme_choice == StepperKind::positivity_voc
             ? 0.0
             : 10.0 * traj.config.abs_tol;
}

}  // namespace

MonotonicityReport check_energy_monotonicity(const Trajectory& traj) {
  require_nonempty(traj);
  MonotonicityReport report;
  const Real e0 = energy(traj.states.front());
  report.tol = 1e-7 * e0;

  Real prev = e0;
  Real prev_t = traj.states.front().t;
  for (const auto& state : traj.states) {
    const Real e = energy(state);
    if (report.weak_ok && e > e0 + report.tol) {
      report.weak_ok = false;
      report.weak_witness_t = state.t;
    }
    if (report.strong_ok && e > prev + report.tol) {
      report.strong_ok = false;
      report.strong_witness_s = prev_t;
      report.strong_witness_t = state.t;
    }
    prev = e;
    prev_t = state.t;
  }
  return report;
}

SignReport check_sign_preservation(const Trajectory& traj) {
  require_nonempty(traj);
  const Index n = traj.dimension();
  SignReport report;
  report.epsilon = sign_epsilon(traj);
  report.first_nonneg_time.assign(
      n, std::numeric_limits<Real>::quiet_NaN());

  std::vector<bool> armed(n, false);
  std::vector<Real> armed_at(n, 0.0);
  for (const auto& state : traj.states) {
    for (Index j = 0; j < n; ++j) {
      const Real v = state.x[j];
      if (!armed[j]) {
        if (v >= 0.0) {
          armed[j] = true;
          armed_at[j] = state.t;
          if (std::isnan(report.first_nonneg_time[j])) {
            report.first_nonneg_time[j] = state.t;
          }
        }
      } else if (v < -report.epsilon) {
        report.violations.push_back(
            SignViolation{j + 1, armed_at[j], state.t, v});
        armed[j] = false;  // re-arm at the next nonnegative sample
      }
    }
  }
  return report;
}

HPlusReport check_h_plus_energy_lemmas(const Trajectory& traj, Index n0) {
  require_nonempty(traj);
  const Index n = traj.dimension();
  if (n0 < 1 || n0 > n) {
    throw std::invalid_argument("h-plus check shell index out of range");
  }
  HPlusReport report;
  report.n0 = n0;
  report.eps = sign_epsilon(traj);
  report.tol = 1e-7 * energy(traj.states.front());

  // Decrease side: a genuine energy drop must leave a clean tail — above
  // the last shell below -eps, nothing sits below -eps.
  Real prev_e = energy(traj.states.front());
  for (std::size_t i = 1; i < traj.states.size(); ++i) {
    const auto& state = traj.states[i];
    const Real e = energy(state);
    if (e < prev_e - report.tol) {
      Index last_neg = 0;  // 1-based; 0 = none
      for (Index j = n; j >= 1; --j) {
        if (state.x[j - 1] < -report.eps) {
          last_neg = j;
          break;
        }
      }
      for (Index j = last_neg; j < n; ++j) {
        if (state.x[j] < -report.eps && report.decrease_tail_ok) {
          report.decrease_tail_ok = false;
          report.decrease_witness_t = state.t;
        }
      }
    }
    prev_e = e;
  }

  // Growth side: E(t) may not exceed E(s) + tol for any earlier sample s
  // whose shells n0..N are all nonnegative. Checked with the running
  // minimum of E over qualifying reference samples.
  Real min_ref = std::numeric_limits<Real>::infinity();
  bool have_ref = false;
  for (const auto& state : traj.states) {
    const Real e = energy(state);
    if (have_ref && e > min_ref + report.tol &&
        report.no_growth_after_nonneg_ok) {
      report.no_growth_after_nonneg_ok = false;
      report.growth_witness_t = state.t;
    }
    bool tail_nonneg = true;
    for (Index j = n0 - 1; j < n; ++j) {
      if (state.x[j] < -report.eps) {
        tail_nonneg = false;
        break;
      }
    }
    if (tail_nonneg) {
      have_ref = true;
      min_ref = std::min(min_ref, e);
    }
  }
  return report;
}

PairCertificate pair_certificate(const Trajectory& a, const Trajectory& b,
                                 const CoefficientScheme& scheme,
                                 const PairCertificateOptions& opts) {
  require_nonempty(a);
  require_nonempty(b);
  if (a.dimension() != b.dimension()) {
    throw std::invalid_argument("pair certificate needs equal dimensions");
  }
  if (!(a.scheme == scheme) || !(b.scheme == scheme)) {
    throw std::invalid_argument("pair certificate needs one shared scheme");
  }
  if (a.states.size() != b.states.size()) {
    throw std::invalid_argument("pair certificate needs equal sample grids");
  }
  for (std::size_t i = 0; i < a.states.size(); ++i) {
    if (a.states[i].t != b.states[i].t) {
      throw std::invalid_argument("pair certificate needs equal sample grids");
    }
  }

  const Index n = a.dimension();
  const std::size_t m = a.states.size();
  PairCertificate cert;
  cert.slack = opts.slack;

  const Real e0 = std::max(energy(a.states.front()), energy(b.states.front()));
  cert.k_constant = std::isnan(opts.k_constant)
                        ? 2.0 * scheme.scale() * std::sqrt(e0)
                        : opts.k_constant;

  cert.times.resize(m);
  cert.z.resize(m);
  cert.y.resize(m);
  cert.psi.resize(m);
  cert.a.resize(m);
  cert.envelope.resize(m);

  Vector psi_row(n);
  for (std::size_t i = 0; i < m; ++i) {
    const auto& sa = a.states[i];
    const auto& sb = b.states[i];
    cert.times[i] = sa.t;
    cert.z[i] = sa.x - sb.x;
    cert.y[i] = sa.x + sb.x;

    CompensatedSum acc;
    Real w = 1.0;
    for (Index j = 0; j < n; ++j) {
      w *= 0.5;  // 2^{-(j+1)}
      acc.add(cert.z[i][j] * cert.z[i][j] * w);
      psi_row[j] = acc.value();
    }
    cert.psi[i] = psi_row;

    cert.a[i] = std::max(class_k_a(sa, scheme), class_k_a(sb, scheme));
  }

  // G via incremental trapezoid with the exponential weight folded in:
  // G(t_{i+1}) = e^{dA} G(t_i) + h/2 (e^{dA} S_i + S_{i+1}),
  // dA = h (a_i + a_{i+1}) — the trapezoid of 2a over the subinterval.
  auto source = [&](std::size_t i) {
    const Real xa = a.states[i].x[n - 1];
    const Real xb = b.states[i].x[n - 1];
    return cert.k_constant * (xa * xa + xb * xb);
  };
  cert.envelope[0] = 0.0;
  for (std::size_t i = 0; i + 1 < m; ++i) {
    const Real h = cert.times[i + 1] - cert.times[i];
    const Real da = h * (cert.a[i] + cert.a[i + 1]);
    const Real grow = std::exp(da);
    cert.envelope[i + 1] =
        grow * cert.envelope[i] +
        0.5 * h * (grow * source(i) + source(i + 1));
  }

  cert.max_psi = 0.0;
  cert.max_violation = -std::numeric_limits<Real>::infinity();
  for (std::size_t i = 0; i < m; ++i) {
    const Real psi_n = cert.psi[i][n - 1];
    cert.max_psi = std::max(cert.max_psi, psi_n);
    cert.max_violation =
        std::max(cert.max_violation, psi_n - cert.envelope[i]);
    if (psi_n > cert.envelope[i] + opts.slack * (1.0 + cert.envelope[i])) {
      cert.envelope_ok = false;
    }
  }
  return cert;
}

bool simple_bound_check(const Trajectory& traj, Real tol) {
  require_nonempty(traj);
  const Real bound = std::sqrt(energy(traj.states.front()));
  if (tol < 0.0) {
    tol = 1e-7 * bound;
  }
  for (const auto& state : traj.states) {
    if (state.x.abs().maxCoeff() > bound + tol) {
      return false;
    }
  }
  return true;
}

ClassKBoundReport class_k_bound_check(const Trajectory& traj, Index n0,
                                      Real tol) {
  require_nonempty(traj);
  const Index n = traj.dimension();
  if (n0 < 1 || n0 > n) {
    throw std::invalid_argument("class-K bound shell index out of range");
  }
  ClassKBoundReport report;
  const Real eps = sign_epsilon(traj);

  // Precondition first: every shell above n0 nonnegative along the whole
  // trajectory. Failing this leaves the bound inapplicable, not false.
  for (const auto& state : traj.states) {
    for (Index j = n0; j < n; ++j) {
      if (state.x[j] < -eps) {
        report.outcome = CheckOutcome::inapplicable;
        report.witness_t = state.t;
        return report;
      }
    }
  }

  report.bound = traj.scheme.k(n0) * std::sqrt(energy(traj.states.front()));
  report.outcome = CheckOutcome::pass;
  for (const auto& state : traj.states) {
    const Real av = class_k_a(state, traj.scheme);
    if (av > report.a_max) {
      report.a_max = av;
      report.witness_t = state.t;
    }
    if (av > report.bound + tol) {
      report.outcome = CheckOutcome::fail;
    }
  }
  return report;
}

DiagnosticsReport run_diagnostics(const Trajectory& traj) {
  require_nonempty(traj);
  const Index n = traj.dimension();
  const std::size_t m = traj.states.size();

  DiagnosticsReport report;
  report.times.resize(m);
  report.energy.resize(m);
  report.partial_energies.resize(m);
  report.h1_sq.resize(m);
  report.a_value.resize(m);
  report.flux_residuals.resize(m);
  report.min_component.resize(m);

  Vector residuals(n);
  for (std::size_t i = 0; i < m; ++i) {
    const auto& state = traj.states[i];
    const NormReport norms = compute_norms(state, traj.scheme);
    report.times[i] = state.t;
    report.energy[i] = norms.energy;
    report.partial_energies[i] = norms.partial_energies;
    report.h1_sq[i] = norms.h1_sq;
    report.a_value[i] = norms.a_value;
    for (Index level = 1; level <= n; ++level) {
      residuals[level - 1] = flux_identity_residual(state, traj.scheme, level);
    }
    report.flux_residuals[i] = residuals;
    report.min_component[i] = state.x.minCoeff();
  }

  // Start of the closed nonnegative run that reaches the final sample.
  report.nonneg_forever_from.assign(
      n, std::numeric_limits<Real>::quiet_NaN());
  for (Index j = 0; j < n; ++j) {
    Real from = std::numeric_limits<Real>::quiet_NaN();
    for (std::size_t i = 0; i < m; ++i) {
      const Real v = traj.states[i].x[j];
      if (v >= 0.0) {
        if (std::isnan(from)) {
          from = traj.states[i].t;
        }
      } else {
        from = std::numeric_limits<Real>::quiet_NaN();
      }
    }
    report.nonneg_forever_from[j] = from;
  }

  report.monotonicity = check_energy_monotonicity(traj);
  report.sign = check_sign_preservation(traj);
  report.h_plus = check_h_plus_energy_lemmas(traj);
  report.simple_bound_ok = simple_bound_check(traj);
  return report;
}

}  // namespace dyadic
