#include "dyadic/model.hpp"

#include <cmath>
#include <limits>

namespace dyadic {

CoefficientScheme::CoefficientScheme(Real base, Real scale, Index n_max)
    : base_(base), scale_(scale), n_max_(n_max) {
  if (!(base > 0.0) || !std::isfinite(base)) {
    throw ConfigError("coefficient base must be finite and positive");
  }
  if (!(scale > 0.0) || !std::isfinite(scale)) {
    throw ConfigError("coefficient scale must be finite and positive");
  }
  if (n_max < 1) {
    throw ConfigError("coefficient scheme needs n_max >= 1");
  }
  k_.resize(n_max + 1);
  k_[0] = 0.0;
  // Iterative products keep base = 2 exact: k_n is then scale * 2^n with no
  // rounding, so the admissibility check below cannot reject it spuriously.
  Real v = scale;
  for (Index n = 1; n <= n_max; ++n) {
    v = (n == 1) ? scale * base : v * base;
    k_[n] = v;
    const Real cap = scale * std::exp2(static_cast<Real>(n));
    if (!(v <= cap) || !std::isfinite(v)) {
      throw ConfigError("coefficients must satisfy 0 <= k_n <= scale*2^n; "
                        "violated at n=" + std::to_string(n));
    }
  }
}

ShellState make_state(Real t, Vector x) {
  if (x.size() < 1) {
    throw ConfigError("state needs at least one shell");
  }
  if (!(t >= 0.0) || !std::isfinite(t)) {
    throw ConfigError("state time must be finite and nonnegative");
  }
  if (!x.isFinite().all()) {
    throw ConfigError("state coefficients must be finite");
  }
  return ShellState{t, std::move(x)};
}

namespace detail {
void require_compatible(const ShellState& state,
                        const CoefficientScheme& scheme) {
  if (state.dimension() < 1) {
    throw ConfigError("state needs at least one shell");
  }
  if (state.dimension() > scheme.n_max()) {
    throw ConfigError("state has " + std::to_string(state.dimension()) +
                      " shells but the scheme only provides coefficients up "
                      "to n=" + std::to_string(scheme.n_max()));
  }
}
}  // namespace detail

Vector rhs(const ShellState& state, const CoefficientScheme& scheme) {
  detail::require_compatible(state, scheme);
  Vector dx(state.dimension());
  rhs_into(state.x.data(), scheme.values().data(), state.dimension(),
           dx.data());
  return dx;
}

Real partial_energy(const ShellState& state, Index n) {
  if (n < 1 || n > state.dimension()) {
    throw std::invalid_argument("partial energy index out of range: n=" +
                                std::to_string(n));
  }
  return compensated_sum(state.x.head(n).square());
}

Real h1_norm_sq(const ShellState& state, const CoefficientScheme& scheme) {
  detail::require_compatible(state, scheme);
  CompensatedSum acc;
  const Real* k = scheme.values().data();
  for (Index i = 0; i < state.dimension(); ++i) {
    const Real kx = k[i + 1] * state.x[i];
    acc.add(kx * kx);
  }
  return acc.value();
}

Real class_k_a(const ShellState& state, const CoefficientScheme& scheme) {
  detail::require_compatible(state, scheme);
  return class_k_a(state.x.data(), scheme.values().data(), state.dimension());
}

Real flux_identity_residual(const ShellState& state,
                            const CoefficientScheme& scheme, Index n) {
  detail::require_compatible(state, scheme);
  if (n < 1 || n > state.dimension()) {
    throw std::invalid_argument("flux residual index out of range: n=" +
                                std::to_string(n));
  }
  const Index dim = state.dimension();
  Vector dx(dim);
  rhs_into(state.x.data(), scheme.values().data(), dim, dx.data());

  CompensatedSum acc;
  for (Index j = 0; j < n; ++j) {
    acc.add(2.0 * state.x[j] * dx[j]);
  }
  const Real xn = state.x[n - 1];
  const Real xnp1 = (n < dim) ? state.x[n] : 0.0;
  const Real boundary_flux = -2.0 * scheme.k(n) * (xn * xn) * xnp1;
  return acc.value() - boundary_flux;
}

NormReport compute_norms(const ShellState& state,
                         const CoefficientScheme& scheme) {
  detail::require_compatible(state, scheme);
  NormReport report;
  const Index dim = state.dimension();
  report.partial_energies.resize(dim);

  CompensatedSum e;
  for (Index i = 0; i < dim; ++i) {
    e.add(state.x[i] * state.x[i]);
    report.partial_energies[i] = e.value();
  }
  report.energy = e.value();
  report.h1_sq = h1_norm_sq(state, scheme);
  report.a_value =
      class_k_a(state.x.data(), scheme.values().data(), dim);
  return report;
}

}  // namespace dyadic
