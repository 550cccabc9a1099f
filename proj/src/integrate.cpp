#include "dyadic/integrate.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace dyadic {

namespace {

// Dormand–Prince 5(4) tableau. b is the 5th-order weight row (also the last
// stage row, giving the first-same-as-last property); e = b - b_hat is the
// embedded error weight row.
constexpr Real c2 = 1.0 / 5.0, c3 = 3.0 / 10.0, c4 = 4.0 / 5.0,
               c5 = 8.0 / 9.0;
constexpr Real a21 = 1.0 / 5.0;
constexpr Real a31 = 3.0 / 40.0, a32 = 9.0 / 40.0;
constexpr Real a41 = 44.0 / 45.0, a42 = -56.0 / 15.0, a43 = 32.0 / 9.0;
constexpr Real a51 = 19372.0 / 6561.0, a52 = -25360.0 / 2187.0,
               a53 = 64448.0 / 6561.0, a54 = -212.0 / 729.0;
constexpr Real a61 = 9017.0 / 3168.0, a62 = -355.0 / 33.0,
               a63 = 46732.0 / 5247.0, a64 = 49.0 / 176.0,
               a65 = -5103.0 / 18656.0;
constexpr Real b1 = 35.0 / 384.0, b3 = 500.0 / 1113.0, b4 = 125.0 / 192.0,
               b5 = -2187.0 / 6784.0, b6 = 11.0 / 84.0;
constexpr Real e1 = 71.0 / 57600.0, e3 = -71.0 / 16695.0, e4 = 71.0 / 1920.0,
               e5 = -17253.0 / 339200.0, e6 = 22.0 / 525.0, e7 = -1.0 / 40.0;

// PI controller constants (safety 0.9, clamps [0.2, 5.0]); the exponents are
// 0.7/(p+1) and 0.4/(p+1) for a method of order p's error estimate.
constexpr Real kSafety = 0.9;
constexpr Real kShrinkClamp = 0.2;
constexpr Real kGrowClamp = 5.0;

constexpr std::size_t kMaxStoredEvents = 10000;

[[nodiscard]] Real clamp_factor(Real f) {
  return std::min(kGrowClamp, std::max(kShrinkClamp, f));
}

struct ErrorNorms {
  Real normalized = 0.0;  ///< accept iff <= 1
  Real two_norm = 0.0;    ///< plain 2-norm of the error vector
};

// Dual error test: componentwise RMS against abs_tol + rel_tol*max(|x|,|x_new|)
// and a plain 2-norm test against abs_tol + rel_tol*|x|_2. Acceptance under
// the second makes `two_norm <= abs_tol + rel_tol*|x|_2` literally true for
// every accepted step.
[[nodiscard]] ErrorNorms error_norms(const Vector& err, const Vector& x,
                                     const Vector& x_new, Real abs_tol,
                                     Real rel_tol) {
  const Index n = err.size();
  Real rms = 0.0;
  Real e2 = 0.0;
  Real x2 = 0.0;
  for (Index i = 0; i < n; ++i) {
    const Real scale =
        abs_tol + rel_tol * std::max(std::abs(x[i]), std::abs(x_new[i]));
    const Real q = err[i] / scale;
    rms += q * q;
    e2 += err[i] * err[i];
    x2 += x[i] * x[i];
  }
  rms = std::sqrt(rms / static_cast<Real>(n));
  e2 = std::sqrt(e2);
  x2 = std::sqrt(x2);
  ErrorNorms out;
  out.two_norm = e2;
  out.normalized = std::max(rms, e2 / (abs_tol + rel_tol * x2));
  return out;
}

// Workspace for the embedded pair; all vectors preallocated once per run.
struct Dp5Workspace {
  explicit Dp5Workspace(Index n)
      : k1(n), k2(n), k3(n), k4(n), k5(n), k6(n), k7(n), tmp(n), y_new(n),
        err(n) {}
  Vector k1, k2, k3, k4, k5, k6, k7, tmp, y_new, err;
};

// One trial step x -> y_new over dt. k1 must hold rhs(x) on entry; on exit
// k7 = rhs(y_new) (reusable as the next step's k1). 5 fresh evaluations.
void dp5_attempt(const Vector& x, const Real* k, Real dt, Dp5Workspace& w) {
  const Index n = x.size();
  const Real* x0 = x.data();

  auto eval = [&](const Vector& y, Vector& dy) {
    rhs_into(y.data(), k, n, dy.data());
  };

  Real* t = w.tmp.data();
  const Real *K1 = w.k1.data(), *K2 = w.k2.data(), *K3 = w.k3.data(),
             *K4 = w.k4.data(), *K5 = w.k5.data(), *K6 = w.k6.data();

  for (Index i = 0; i < n; ++i) t[i] = x0[i] + dt * (a21 * K1[i]);
  eval(w.tmp, w.k2);
  for (Index i = 0; i < n; ++i)
    t[i] = x0[i] + dt * (a31 * K1[i] + a32 * K2[i]);
  eval(w.tmp, w.k3);
  for (Index i = 0; i < n; ++i)
    t[i] = x0[i] + dt * (a41 * K1[i] + a42 * K2[i] + a43 * K3[i]);
  eval(w.tmp, w.k4);
  for (Index i = 0; i < n; ++i)
    t[i] = x0[i] + dt * (a51 * K1[i] + a52 * K2[i] + a53 * K3[i] + a54 * K4[i]);
  eval(w.tmp, w.k5);
  for (Index i = 0; i < n; ++i)
    t[i] = x0[i] + dt * (a61 * K1[i] + a62 * K2[i] + a63 * K3[i] +
                         a64 * K4[i] + a65 * K5[i]);
  eval(w.tmp, w.k6);

  Real* yn = w.y_new.data();
  for (Index i = 0; i < n; ++i)
    yn[i] = x0[i] + dt * (b1 * K1[i] + b3 * K3[i] + b4 * K4[i] + b5 * K5[i] +
                          b6 * K6[i]);
  eval(w.y_new, w.k7);

  const Real* K7 = w.k7.data();
  Real* er = w.err.data();
  for (Index i = 0; i < n; ++i)
    er[i] = dt * (e1 * K1[i] + e3 * K3[i] + e4 * K4[i] + e5 * K5[i] +
                  e6 * K6[i] + e7 * K7[i]);
}

// Positivity-preserving exponential update over dt, every shell advanced by
// the frozen-coefficient variation-of-constants formula.
void voc_apply(const Vector& x, const Real* k, Real dt, Vector& out) {
  const Index n = x.size();
  const Real* x0 = x.data();
  Real* y = out.data();
  Real xm = 0.0;  // X_{j-1}
  for (Index j = 0; j < n; ++j) {
    const Real xp = (j + 1 < n) ? x0[j + 1] : 0.0;
    const Real a = -k[j + 1] * xp;  // a_j = -k_j X_{j+1}, frozen
    const Real inflow = k[j] * (xm * xm);
    y[j] = std::exp(a * dt) * x0[j] + dt * std::exp(a * dt * 0.5) * inflow;
    xm = x0[j];
  }
}

struct VocWorkspace {
  explicit VocWorkspace(Index n) : y_full(n), y_half(n), y_new(n), err(n) {}
  Vector y_full, y_half, y_new, err;
};

// Step doubling: the accepted state is the two-half-step composition (each
// substep keeps exact nonnegativity, so the composition does too); the
// defect against the single full step serves as the error estimate.
void voc_attempt(const Vector& x, const Real* k, Real dt, VocWorkspace& w) {
  voc_apply(x, k, dt, w.y_full);
  voc_apply(x, k, 0.5 * dt, w.y_half);
  voc_apply(w.y_half, k, 0.5 * dt, w.y_new);
  w.err = w.y_new - w.y_full;
}

struct ControllerState {
  Real err_prev = 1.0;
};

// Step-size factor after an accepted step with normalized error `err`.
[[nodiscard]] Real accept_factor(Real err, ControllerState& ctl, Real order) {
  const Real alpha = 0.7 / (order + 1.0);
  const Real beta = 0.4 / (order + 1.0);
  const Real e = std::max(err, 1e-10);  // err == 0 hits the growth clamp
  const Real f =
      kSafety * std::pow(e, -alpha) * std::pow(ctl.err_prev, beta);
  ctl.err_prev = e;
  return clamp_factor(f);
}

[[nodiscard]] Real reject_factor(Real err, Real order) {
  const Real f = kSafety * std::pow(err, -1.0 / (order + 1.0));
  return std::min(1.0, std::max(kShrinkClamp, f));
}

// Cubic Hermite evaluation at relative position theta in [0, 1].
void hermite_eval(const Vector& y0, const Vector& f0, const Vector& y1,
                  const Vector& f1, Real h, Real theta, Vector& out) {
  const Real u = 1.0 - theta;
  const Real h00 = (1.0 + 2.0 * theta) * u * u;
  const Real h10 = theta * u * u;
  const Real h01 = theta * theta * (3.0 - 2.0 * theta);
  const Real h11 = theta * theta * (theta - 1.0);
  const Index n = y0.size();
  out.resize(n);
  for (Index i = 0; i < n; ++i) {
    out[i] = h00 * y0[i] + h * h10 * f0[i] + h01 * y1[i] + h * h11 * f1[i];
  }
}

void record_event(Trajectory& traj, Event ev) {
  if (traj.events.size() < kMaxStoredEvents) {
    traj.events.push_back(ev);
  }
}

void note_dt(StepStats& stats, Real dt) {
  stats.dt_smallest = std::min(stats.dt_smallest, dt);
  stats.dt_largest = std::max(stats.dt_largest, dt);
}

}  // namespace

void validate(const IntegratorConfig& config) {
  if (!(config.abs_tol > 0.0) || !(config.rel_tol > 0.0)) {
    throw ConfigError("integrator tolerances must be positive");
  }
  if (!(config.dt_min > 0.0) || !(config.dt_init > 0.0) ||
      !(config.dt_max > 0.0)) {
    throw ConfigError("integrator step sizes must be positive");
  }
  if (!(config.dt_min <= config.dt_init && config.dt_init <= config.dt_max)) {
    throw ConfigError("integrator requires dt_min <= dt_init <= dt_max");
  }
  if (!(config.stiffness_cap_factor > 0.0)) {
    throw ConfigError("stiffness_cap_factor must be positive");
  }
  if (config.positivity_floor < 0.0) {
    throw ConfigError("positivity_floor must be nonnegative");
  }
  if (config.fixed_dt < 0.0) {
    throw ConfigError("fixed_dt must be zero (adaptive) or positive");
  }
}

Real stiffness_rate_bound(const Real* x, const Real* k, Index n) noexcept {
  Real rate = 0.0;
  Real xm = 0.0;  // |X_{j-1}|
  for (Index j = 0; j < n; ++j) {
    const Real xj = std::abs(x[j]);
    const Real xp = (j + 1 < n) ? std::abs(x[j + 1]) : 0.0;
    rate = std::max(rate, 2.0 * k[j] * xm + k[j + 1] * (xj + xp));
    xm = xj;
  }
  return rate;
}

Real stiffness_rate_bound(const ShellState& state,
                          const CoefficientScheme& scheme) {
  detail::require_compatible(state, scheme);
  return stiffness_rate_bound(state.x.data(), scheme.values().data(),
                              state.dimension());
}

namespace {

// Shared adaptive driver. Advances `traj` from `initial` to t_end, appending
// samples. Returns ok or records the failure and returns stiffness_failure.
IntegrationStatus drive(const ShellState& initial,
                        const CoefficientScheme& scheme,
                        const IntegratorConfig& config, Real t_end,
                        Real sample_every, Trajectory& traj,
                        Real& failure_time) {
  const Index n = initial.dimension();
  const Real* k = scheme.values().data();
  const bool voc = config.scheme_choice == StepperKind::positivity_voc;
  const bool fixed = config.fixed_dt > 0.0;
  const Real order = voc ? 1.0 : 4.0;  // order of the error ESTIMATE
  const Real sign_tol = 10.0 * config.abs_tol;

  Dp5Workspace rk(voc ? 1 : n);
  VocWorkspace vw(voc ? n : 1);
  Vector x = initial.x;
  Vector sample(n);
  Real t = initial.t;
  const Real t0 = initial.t;

  traj.states.push_back(ShellState{t, x});
  std::int64_t sample_idx = 1;
  auto next_sample_time = [&]() {
    return t0 + static_cast<Real>(sample_idx) * sample_every;
  };

  if (!voc) {
    rhs_into(x.data(), k, n, rk.k1.data());
    ++traj.step_stats.rhs_evaluations;
  }

  ControllerState ctl;
  Real dt_ctrl = fixed ? config.fixed_dt
                       : std::min(config.dt_init, config.dt_max);

  // Closes the partial trajectory at the current position and records why.
  auto fail = [&](Real required_dt) {
    failure_time = t;
    if (traj.states.empty() || traj.states.back().t < t) {
      traj.states.push_back(ShellState{t, x});
    }
    traj.events.push_back({EventKind::dt_min_failure, t, -1, required_dt});
    return IntegrationStatus::stiffness_failure;
  };

  while (t < t_end) {
    // Step-size demand: controller, stability cap, remaining interval. Only
    // the first two can signal stiffness failure; the t_end clip is benign.
    Real dt_demand = dt_ctrl;
    if (!fixed) {
      const Real rate = stiffness_rate_bound(x.data(), k, n);
      if (rate > 0.0) {
        dt_demand = std::min(dt_demand, config.stiffness_cap_factor / rate);
      }
      if (dt_demand < config.dt_min) {
        return fail(dt_demand);
      }
    }
    const bool clipped = t + dt_demand >= t_end;
    const Real dt = clipped ? t_end - t : dt_demand;
    if (dt <= 0.0) {
      break;  // already at t_end up to roundoff
    }

    // One trial step.
    const Vector* y_new = nullptr;
    const Vector* err = nullptr;
    if (voc) {
      voc_attempt(x, k, dt, vw);
      y_new = &vw.y_new;
      err = &vw.err;
    } else {
      dp5_attempt(x, k, dt, rk);
      traj.step_stats.rhs_evaluations += 6;
      y_new = &rk.y_new;
      err = &rk.err;
    }
    const ErrorNorms norms =
        error_norms(*err, x, *y_new, config.abs_tol, config.rel_tol);
    const Real t_new = clipped ? t_end : t + dt;

    if (!fixed && norms.normalized > 1.0) {
      ++traj.step_stats.rejected;
      dt_ctrl = dt * reject_factor(norms.normalized, order);
      if (dt_ctrl < config.dt_min) {
        return fail(dt_ctrl);
      }
      continue;
    }

    // Positivity guard for the RK path: shells that start nonnegative must
    // not land below -10*abs_tol. Such a step is redone at half size; only
    // when halving would cross dt_min is the shell clamped to the floor
    // (and that clamp logged — silent clamping would corrupt the energy
    // book-keeping downstream).
    bool floored = false;
    if (!voc) {
      Index worst = -1;
      for (Index i = 0; i < n; ++i) {
        if (x[i] >= 0.0 && rk.y_new[i] < -sign_tol) {
          worst = i;
          break;
        }
      }
      if (worst >= 0) {
        const Real halved = 0.5 * dt;
        if (!fixed && halved >= config.dt_min) {
          ++traj.step_stats.sign_rejections;
          dt_ctrl = halved;
          continue;
        }
        for (Index i = 0; i < n; ++i) {
          if (x[i] >= 0.0 && rk.y_new[i] < -sign_tol) {
            record_event(traj, {EventKind::floor_applied, t_new, i + 1,
                                rk.y_new[i]});
            rk.y_new[i] = config.positivity_floor;
            floored = true;
          }
        }
        if (floored) {
          rhs_into(rk.y_new.data(), k, n, rk.k7.data());
          ++traj.step_stats.rhs_evaluations;
        }
      }
      for (Index i = 0; i < n; ++i) {
        if (x[i] >= 0.0 && rk.y_new[i] < 0.0 && rk.y_new[i] >= -sign_tol) {
          ++traj.step_stats.undershoot_count;
          record_event(traj,
                       {EventKind::undershoot, t_new, i + 1, rk.y_new[i]});
        }
      }
    }

    if (!y_new->isFinite().all()) {
      return fail(dt);
    }

    // Accepted: emit the samples this step straddles, then advance.
    if (sample_every > 0.0) {
      while (next_sample_time() <= t_new && next_sample_time() < t_end) {
        const Real ts = next_sample_time();
        if (ts > t) {  // never re-emit the left endpoint
          if (ts == t_new) {
            traj.states.push_back(ShellState{ts, *y_new});
          } else if (voc) {
            voc_apply(x, k, ts - t, sample);
            traj.states.push_back(ShellState{ts, sample});
          } else {
            hermite_eval(x, rk.k1, rk.y_new, rk.k7, dt, (ts - t) / dt,
                         sample);
            traj.states.push_back(ShellState{ts, sample});
          }
        }
        ++sample_idx;
      }
    } else if (t_new < t_end) {
      traj.states.push_back(ShellState{t_new, *y_new});
    }

    ++traj.step_stats.accepted;
    note_dt(traj.step_stats, dt);
    t = t_new;
    x = *y_new;
    if (!voc) {
      std::swap(rk.k1, rk.k7);  // first-same-as-last
    }
    if (!fixed) {
      dt_ctrl = std::min(dt * accept_factor(norms.normalized, ctl, order),
                         config.dt_max);
    }
  }

  traj.states.push_back(ShellState{t_end, x});
  return IntegrationStatus::ok;
}

}  // namespace

AdaptiveStepResult step_adaptive(const ShellState& state,
                                 const CoefficientScheme& scheme,
                                 const IntegratorConfig& config) {
  validate(config);
  detail::require_compatible(state, scheme);
  const Index n = state.dimension();
  const Real* k = scheme.values().data();
  const Real sign_tol = 10.0 * config.abs_tol;

  Dp5Workspace w(n);
  rhs_into(state.x.data(), k, n, w.k1.data());

  Real dt = std::min(config.dt_init, config.dt_max);
  const Real rate = stiffness_rate_bound(state.x.data(), k, n);
  if (rate > 0.0) {
    dt = std::min(dt, config.stiffness_cap_factor / rate);
  }

  while (true) {
    if (dt < config.dt_min) {
      throw StepFailure("step size collapsed below dt_min", state.t);
    }
    dp5_attempt(state.x, k, dt, w);
    const ErrorNorms norms =
        error_norms(w.err, state.x, w.y_new, config.abs_tol, config.rel_tol);
    if (norms.normalized > 1.0) {
      dt *= reject_factor(norms.normalized, 4.0);
      continue;
    }
    bool sign_ok = true;
    for (Index i = 0; i < n; ++i) {
      if (state.x[i] >= 0.0 && w.y_new[i] < -sign_tol) {
        sign_ok = false;
        break;
      }
    }
    if (!sign_ok) {
      dt *= 0.5;
      continue;
    }
    return AdaptiveStepResult{ShellState{state.t + dt, w.y_new}, dt,
                              norms.two_norm};
  }
}

PositivityStepResult step_positivity(const ShellState& state,
                                     const CoefficientScheme& scheme,
                                     const IntegratorConfig& config) {
  validate(config);
  detail::require_compatible(state, scheme);
  const Index n = state.dimension();
  const Real* k = scheme.values().data();

  VocWorkspace w(n);
  Real dt = std::min(config.dt_init, config.dt_max);
  while (true) {
    if (dt < config.dt_min) {
      throw StepFailure("step size collapsed below dt_min", state.t);
    }
    voc_attempt(state.x, k, dt, w);
    const ErrorNorms norms =
        error_norms(w.err, state.x, w.y_new, config.abs_tol, config.rel_tol);
    if (norms.normalized > 1.0) {
      dt *= reject_factor(norms.normalized, 1.0);
      continue;
    }
    return PositivityStepResult{ShellState{state.t + dt, w.y_new}, dt};
  }
}

IntegrationResult integrate(const ShellState& initial,
                            const CoefficientScheme& scheme,
                            const IntegratorConfig& config, Real t_end,
                            Real sample_every) {
  validate(config);
  detail::require_compatible(initial, scheme);
  if (t_end < initial.t) {
    throw ConfigError("integration target time precedes the initial state");
  }
  if (sample_every < 0.0) {
    throw ConfigError("sample_every must be zero (every step) or positive");
  }

  IntegrationResult result{Trajectory(scheme, config), IntegrationStatus::ok,
                           std::numeric_limits<Real>::quiet_NaN()};
  if (t_end == initial.t) {
    result.trajectory.states.push_back(initial);
    return result;
  }
  result.status = drive(initial, scheme, config, t_end, sample_every,
                        result.trajectory, result.failure_time);
  return result;
}

}  // namespace dyadic
