#pragma once

// Independent reference implementations used only by the tests. These are
// written against the defining formulas, term by term, with no code shared
// with the library (and in extended precision where the contract asks for a
// tighter answer than double accumulation can certify).

#include "dyadic/model.hpp"

#include <cmath>
#include <cstdint>
#include <random>
#include <vector>

namespace oracle {

using dyadic::Index;
using dyadic::Real;
using dyadic::Vector;

/// dX_n/dt = k_{n-1} X_{n-1}^2 - k_n X_n X_{n+1}, evaluated one shell at a
/// time with explicit boundary handling. Must agree with the library kernel
/// to the last bit because both sides perform the same two products and one
/// subtraction per component.
inline Vector rhs_reference(const Vector& x, const Vector& k) {
  const Index n = x.size();
  Vector dx(n);
  for (Index i = 0; i < n; ++i) {
    const Real xm = (i >= 1) ? x[i - 1] : 0.0;
    const Real xp = (i + 1 < n) ? x[i + 1] : 0.0;
    dx[i] = k[i] * (xm * xm) - k[i + 1] * (x[i] * xp);
  }
  return dx;
}

/// Extended-precision sum of squares.
inline long double energy_reference(const Vector& x) {
  long double s = 0.0L;
  for (Index i = 0; i < x.size(); ++i) {
    const long double v = static_cast<long double>(x[i]);
    s += v * v;
  }
  return s;
}

/// Extended-precision sum of (k_n X_n)^2.
inline long double h1_sq_reference(const Vector& x, const Vector& k) {
  long double s = 0.0L;
  for (Index i = 0; i < x.size(); ++i) {
    const long double v =
        static_cast<long double>(k[i + 1]) * static_cast<long double>(x[i]);
    s += v * v;
  }
  return s;
}

/// max(0, max_n -k_n X_{n+1}) evaluated naively.
inline Real class_k_a_reference(const Vector& x, const Vector& k) {
  Real a = 0.0;
  const Index n = x.size();
  for (Index i = 1; i <= n; ++i) {
    const Real xp = (i < n) ? x[i] : 0.0;  // X_{i+1}
    a = std::max(a, -k[i] * xp);
  }
  return a;
}

/// Extended-precision flux identity residual for truncation level n.
inline long double flux_residual_reference(const Vector& x, const Vector& k,
                                           Index n) {
  const Vector dx = rhs_reference(x, k);
  long double s = 0.0L;
  for (Index j = 0; j < n; ++j) {
    s += 2.0L * static_cast<long double>(x[j]) *
         static_cast<long double>(dx[j]);
  }
  const long double xn = static_cast<long double>(x[n - 1]);
  const long double xp =
      (n < x.size()) ? static_cast<long double>(x[n]) : 0.0L;
  const long double boundary =
      -2.0L * static_cast<long double>(k[n]) * xn * xn * xp;
  return s - boundary;
}

/// Deterministic state generator for property tests: entries uniform in
/// [lo, hi), optionally sign-flipped with probability half.
inline Vector random_state(std::uint64_t seed, Index n, Real lo, Real hi,
                           bool signed_entries) {
  std::mt19937_64 gen(seed);
  auto unit = [&gen]() {
    return static_cast<Real>(gen() >> 11) * 0x1.0p-53;
  };
  Vector x(n);
  for (Index i = 0; i < n; ++i) {
    Real v = lo + (hi - lo) * unit();
    if (signed_entries && (gen() & 1u)) {
      v = -v;
    }
    x[i] = v;
  }
  return x;
}

/// Classical fixed-step RK4, written directly from the Butcher tableau with
/// no shared code. Used as the order-two^4 convergence reference and as a
/// slow ground truth on smooth stretches.
inline Vector rk4_integrate(Vector x, const Vector& k, Real t_end,
                            Index steps) {
  const Index n = x.size();
  const Real h = t_end / static_cast<Real>(steps);
  Vector k1(n), k2(n), k3(n), k4(n), tmp(n);
  for (Index s = 0; s < steps; ++s) {
    k1 = rhs_reference(x, k);
    tmp = x + 0.5 * h * k1;
    k2 = rhs_reference(tmp, k);
    tmp = x + 0.5 * h * k2;
    k3 = rhs_reference(tmp, k);
    tmp = x + h * k3;
    k4 = rhs_reference(tmp, k);
    x += (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
  }
  return x;
}

/// Weighted discrepancy rows psi_n = sum_{i<=n} z_i^2 / 2^i, accumulated in
/// extended precision straight from the definition.
inline std::vector<Real> psi_rows_reference(const Vector& z) {
  std::vector<Real> rows(static_cast<std::size_t>(z.size()));
  long double acc = 0.0L;
  long double w = 1.0L;
  for (Index i = 0; i < z.size(); ++i) {
    w *= 0.5L;
    const long double zi = static_cast<long double>(z[i]);
    acc += zi * zi * w;
    rows[static_cast<std::size_t>(i)] = static_cast<Real>(acc);
  }
  return rows;
}

/// Direct (quadratic-cost) evaluation of the damped trapezoid envelope
///   G(t_i) = sum_{j<i} h_j/2 * (e^{A_i - A_j} S_j + e^{A_i - A_{j+1}} S_{j+1}),
/// where A is the cumulative trapezoid of 2a. Algebraically identical to the
/// incremental recurrence the library uses, evaluated in a different order
/// and in extended precision.
inline std::vector<Real> envelope_reference(const std::vector<Real>& times,
                                            const std::vector<Real>& a,
                                            const std::vector<Real>& source) {
  const std::size_t m = times.size();
  std::vector<long double> big_a(m, 0.0L);
  for (std::size_t i = 0; i + 1 < m; ++i) {
    const long double h = static_cast<long double>(times[i + 1]) - times[i];
    big_a[i + 1] = big_a[i] + h * (static_cast<long double>(a[i]) + a[i + 1]);
  }
  std::vector<Real> g(m, 0.0);
  for (std::size_t i = 1; i < m; ++i) {
    long double acc = 0.0L;
    for (std::size_t j = 0; j < i; ++j) {
      const long double h = static_cast<long double>(times[j + 1]) - times[j];
      acc += 0.5L * h *
             (std::exp(big_a[i] - big_a[j]) * source[j] +
              std::exp(big_a[i] - big_a[j + 1]) * source[j + 1]);
    }
    g[i] = static_cast<Real>(acc);
  }
  return g;
}

}  // namespace oracle
