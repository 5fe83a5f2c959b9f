#pragma once

#include <algorithm>
#include <cmath>
#include <complex>
#include <random>
#include <set>
#include <vector>

#include "modeshape/magnus.hpp"
#include "modeshape/modes.hpp"
#include "modeshape/pulses.hpp"
#include "modeshape/quadrature.hpp"

namespace modeshape::testing {

struct Instance {
  ModeSpec spec;
  Pulse pulse;
};

/// Three-mode chain near 3 MHz with optional detunings, tau log-uniform in
/// [10, 2000] us and five random grid coefficients inside the mode band.
/// With `near_degenerate`, mode 1 is moved to within |x| in [1e-8, 1e-3] of
/// one of the pulse's grid frequencies (x = offset * tau).
inline Instance random_instance(std::mt19937_64& rng, bool near_degenerate) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  const double f0 = units::mhz_to_radps(2.5 + u(rng));
  const double g1 = units::khz_to_radps(20.0 + 100.0 * u(rng));
  const double g2 = units::khz_to_radps(20.0 + 100.0 * u(rng));
  ModeSpec spec = synthesize_chain({g1, g2}, f0);
  for (auto& d : spec.delta) d = units::hz_to_radps(400.0 * u(rng) - 200.0);

  const double tau = 10e-6 * std::pow(200.0, u(rng));
  const double lo = (spec.omega.front() - units::khz_to_radps(30.0)) * tau / units::kTwoPi;
  double hi = (spec.omega.back() + units::khz_to_radps(30.0)) * tau / units::kTwoPi;
  hi = std::max(hi, lo + 8.0);  // short pulses: grid spacing exceeds the band
  std::set<long> picks;
  while (picks.size() < 5) picks.insert(static_cast<long>(std::floor(lo + (hi - lo) * u(rng))));
  const std::vector<long> idx(picks.begin(), picks.end());
  std::normal_distribution<double> nd(0.0, 1.0);
  std::vector<cplx> coeffs;
  for (std::size_t i = 0; i < idx.size(); ++i) coeffs.emplace_back(nd(rng) / tau, nd(rng) / tau);
  Pulse pulse(tau, idx, coeffs);

  if (near_degenerate) {
    const double x = std::pow(10.0, -8.0 + 5.0 * u(rng)) * (u(rng) < 0.5 ? -1.0 : 1.0);
    const long n = idx[2];
    const double w = units::kTwoPi * static_cast<double>(n) / tau + x / tau - spec.delta[1];
    // keep the chain ordered by pushing the neighbours out if needed
    spec.omega[1] = w;
    if (spec.omega[0] >= w) spec.omega[0] = w - units::khz_to_radps(50.0);
    if (spec.omega[2] <= w) spec.omega[2] = w + units::khz_to_radps(50.0);
  }
  return {spec, pulse};
}

/// Independent oracle for the kappa-th frequency derivative of theta1:
/// i^kappa int_0^tau t^kappa g(t) e^{i (w_p + delta_p) t} dt by adaptive quadrature.
inline cplx quadrature_theta1_derivative(const Pulse& pulse, const ModeSpec& spec, std::size_t p, int kappa) {
  const double w = spec.detuned_omega(p);
  const auto comps = pulse.components();
  double fastest = 0.0;
  for (const auto& c : comps) fastest = std::max(fastest, std::abs(w - c.omega));
  quadrature::Options opt;
  opt.initial_panels = std::max<std::size_t>(8, static_cast<std::size_t>(fastest * pulse.tau() / 3.0) + 1);
  auto f = [&](double t) {
    cplx s{};
    for (const auto& c : comps) s += c.coeff * std::polar(1.0, (w - c.omega) * t);
    return s * std::pow(t, kappa);
  };
  return std::pow(cplx(0.0, 1.0), kappa) * quadrature::integrate(f, 0.0, pulse.tau(), opt).value;
}

inline double rel_dev(cplx a, cplx b) { return std::abs(a - b) / std::abs(b); }

/// Largest relative deviation of the closed forms from the quadrature oracles
/// over theta1, its derivatives up to kappa_max, and every theta2 pair.
inline double max_oracle_deviation(const Instance& inst, int kappa_max) {
  double worst = 0.0;
  const auto& s = inst.spec;
  for (std::size_t p = 0; p < s.n_modes; ++p) {
    worst = std::max(worst, rel_dev(theta1(inst.pulse, s, p), quadrature_theta1(inst.pulse, s, p)));
    for (int k = 1; k <= kappa_max; ++k)
      worst = std::max(worst, rel_dev(theta1_derivative(inst.pulse, s, p, k),
                                      quadrature_theta1_derivative(inst.pulse, s, p, k)));
    for (std::size_t q = 0; q < s.n_modes; ++q)
      worst = std::max(worst, rel_dev(theta2(inst.pulse, s, p, q), quadrature_theta2(inst.pulse, s, p, q)));
  }
  return worst;
}

}  // namespace modeshape::testing
