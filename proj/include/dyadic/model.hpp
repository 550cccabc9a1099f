#pragma once

// Inviscid dyadic shell model: coefficient schemes, truncated states, and the
// pointwise functionals (energies, H1 norm, the class-K function a, flux
// residuals) that the integrators and diagnostics are built on.
//
// Shell n carries one scalar coefficient X_n at wavenumber k_n = scale*base^n.
// A truncation of size N uses the Galerkin boundary convention
// X_0 = X_{N+1} = 0, which makes the truncated energy E_N an exact invariant
// of the flow.

#include <Eigen/Dense>

#include <cmath>
#include <stdexcept>
#include <string>
#include <utility>

namespace dyadic {

using Real = double;
using Vector = Eigen::ArrayXd;
using Index = Eigen::Index;

/// Inadmissible scheme or a scheme/state dimension mismatch.
class ConfigError : public std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

/// Neumaier-compensated accumulator. Energy and norm sums span ~30 orders of
/// magnitude at N = 48; naive summation would drown the flux-residual checks.
class CompensatedSum {
 public:
  void add(Real v) noexcept {
    const Real t = sum_ + v;
    if (std::abs(sum_) >= std::abs(v)) {
      comp_ += (sum_ - t) + v;
    } else {
      comp_ += (v - t) + sum_;
    }
    sum_ = t;
  }
  [[nodiscard]] Real value() const noexcept { return sum_ + comp_; }

 private:
  Real sum_ = 0.0;
  Real comp_ = 0.0;
};

/// Compensated sum of any dense Eigen expression, in index order.
template <typename Derived>
[[nodiscard]] Real compensated_sum(const Eigen::DenseBase<Derived>& v) {
  CompensatedSum acc;
  for (Index i = 0; i < v.size(); ++i) {
    acc.add(v.derived().coeff(i));
  }
  return acc.value();
}

/// Wavenumber sequence k_n = scale * base^n for n >= 1, with k_0 = 0.
/// `scale` doubles as the constant C of the admissibility constraint
/// 0 <= k_n <= C * 2^n; construction rejects schemes that violate it
/// (any base > 2).
class CoefficientScheme {
 public:
  CoefficientScheme(Real base, Real scale, Index n_max);

  /// The canonical choice k_n = 2^n (base 2, scale 1).
  static CoefficientScheme dyadic_default(Index n_max) {
    return {2.0, 1.0, n_max};
  }

  [[nodiscard]] Real base() const noexcept { return base_; }
  [[nodiscard]] Real scale() const noexcept { return scale_; }
  [[nodiscard]] Index n_max() const noexcept { return n_max_; }

  /// k_n for 0 <= n <= n_max (k_0 = 0).
  [[nodiscard]] Real k(Index n) const {
    if (n < 0 || n > n_max_) {
      throw std::invalid_argument("coefficient index out of range: n=" +
                                  std::to_string(n));
    }
    return k_[n];
  }

  /// All coefficients k_0..k_n_max as one array (size n_max + 1).
  [[nodiscard]] const Vector& values() const noexcept { return k_; }

  [[nodiscard]] bool operator==(const CoefficientScheme& o) const noexcept {
    return base_ == o.base_ && scale_ == o.scale_ && n_max_ == o.n_max_;
  }

 private:
  Real base_;
  Real scale_;
  Index n_max_;
  Vector k_;
};

/// Truncated state: X_1..X_N at time t. Indices 0 and N+1 are implicit zeros
/// everywhere they are read.
struct ShellState {
  Real t = 0.0;
  Vector x;

  [[nodiscard]] Index dimension() const noexcept { return x.size(); }
};

/// Validating constructor: N >= 1, finite entries, t >= 0.
[[nodiscard]] ShellState make_state(Real t, Vector x);

/// Pointwise norms/functionals of one state.
struct NormReport {
  Real energy = 0.0;        ///< E = sum X_j^2
  Vector partial_energies;  ///< E_n = sum_{j<=n} X_j^2, n = 1..N
  Real h1_sq = 0.0;         ///< sum (k_n X_n)^2
  Real a_value = 0.0;       ///< max_n (-k_n X_{n+1}), finite-range surrogate
};

// ---------------------------------------------------------------------------
// Right-hand side of the model, dX_n/dt = k_{n-1} X_{n-1}^2 - k_n X_n X_{n+1}.
// ---------------------------------------------------------------------------

/// Raw kernel used by the integrators. `x` has n entries (X_1..X_n), `k` has
/// n+1 entries (k_0..k_n). The arithmetic order is fixed:
/// k_{n-1}*(X_{n-1}*X_{n-1}) - k_n*(X_n*X_{n+1}), one subtraction, so results
/// are reproducible bit for bit.
inline void rhs_into(const Real* x, const Real* k, Index n, Real* dx) noexcept {
  Real xm = 0.0;  // X_{n-1}, starts at the X_0 = 0 boundary
  for (Index i = 0; i + 1 < n; ++i) {
    dx[i] = k[i] * (xm * xm) - k[i + 1] * (x[i] * x[i + 1]);
    xm = x[i];
  }
  dx[n - 1] = k[n - 1] * (xm * xm);  // X_{N+1} = 0
}

inline void rhs_into(const Vector& x, const CoefficientScheme& scheme,
                     Vector& dx) {
  dx.resize(x.size());
  rhs_into(x.data(), scheme.values().data(), x.size(), dx.data());
}

/// Checked wrapper: requires state dimension <= scheme.n_max().
[[nodiscard]] Vector rhs(const ShellState& state,
                         const CoefficientScheme& scheme);

// ---------------------------------------------------------------------------
// Norms and functionals
// ---------------------------------------------------------------------------

/// E = sum_j X_j^2 (compensated).
[[nodiscard]] inline Real energy(const ShellState& state) {
  return compensated_sum(state.x.square());
}

/// E_n = sum_{j<=n} X_j^2, 1 <= n <= N.
[[nodiscard]] Real partial_energy(const ShellState& state, Index n);

/// sum_n (k_n X_n)^2 (compensated).
[[nodiscard]] Real h1_norm_sq(const ShellState& state,
                              const CoefficientScheme& scheme);

/// a = max_{1<=n<=N} (-k_n X_{n+1}) with X_{N+1} = 0; always >= 0 because the
/// boundary term vanishes. A finite-range under-approximation of the
/// infinite-system supremum.
[[nodiscard]] inline Real class_k_a(const Real* x, const Real* k,
                                    Index n) noexcept {
  Real a = 0.0;  // n = N boundary term
  for (Index i = 1; i < n; ++i) {
    a = std::max(a, -k[i] * x[i]);
  }
  return a;
}

[[nodiscard]] Real class_k_a(const ShellState& state,
                             const CoefficientScheme& scheme);

/// Floating-point residual of the telescoping identity
///   sum_{j<=n} 2 X_j f_j(X) = -2 k_n X_n^2 X_{n+1},
/// which is exact in real arithmetic for every 1 <= n <= N.
[[nodiscard]] Real flux_identity_residual(const ShellState& state,
                                          const CoefficientScheme& scheme,
                                          Index n);

/// All pointwise norms in one pass.
[[nodiscard]] NormReport compute_norms(const ShellState& state,
                                       const CoefficientScheme& scheme);

namespace detail {
/// Throws ConfigError unless the state dimension fits the scheme.
void require_compatible(const ShellState& state,
                        const CoefficientScheme& scheme);
}  // namespace detail

}  // namespace dyadic
