#pragma once

#include <cmath>
#include <complex>
#include <cstddef>
#include <ostream>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "modeshape/errors.hpp"
#include "modeshape/modes.hpp"
#include "modeshape/pulses.hpp"
#include "modeshape/quadrature.hpp"

namespace modeshape {

/// Public ceiling on the derivative order accepted by phase_integral.
inline constexpr int kMaxDerivativeOrder = 8;

namespace detail {

inline constexpr cplx kI{0.0, 1.0};

/// J_k(x) = e^{ix} sum_m (-ix)^m k!/(k+m+1)!, well conditioned for |x| < k + 1.
inline cplx unit_moment_series(int k, double x) {
  const cplx step{0.0, -x};
  cplx term = 1.0 / static_cast<double>(k + 1);
  cplx sum = term;
  for (int m = 0; m < 2000; ++m) {
    term *= step / static_cast<double>(k + m + 2);
    sum += term;
    if (std::abs(term) <= 1e-18 * std::abs(sum)) break;
  }
  return std::polar(1.0, x) * sum;
}

/// Fills J_0..J_kmax where J_k(x) = int_0^1 s^k e^{ixs} ds.
///
/// Upward recurrence J_k = (e^{ix} - k J_{k-1}) / (ix) is stable for k <= |x|;
/// downward recurrence J_{k-1} = (e^{ix} - ix J_k) / k is stable for k > |x|.
inline void unit_moments(double x, int kmax, cplx* out) {
  const double ax = std::abs(x);
  const cplx e = std::polar(1.0, x);
  const cplx ix{0.0, x};
  int kup = -1;
  if (ax >= 1.0) {
    kup = static_cast<int>(std::min<double>(kmax, std::floor(ax)));
    out[0] = (e - 1.0) / ix;
    for (int k = 1; k <= kup; ++k) out[k] = (e - static_cast<double>(k) * out[k - 1]) / ix;
  }
  if (kup < kmax) {
    out[kmax] = unit_moment_series(kmax, x);
    for (int k = kmax; k > kup + 1; --k) out[k - 1] = (e - ix * out[k]) / static_cast<double>(k);
  }
}

inline cplx unit_moment(int k, double x) {
  std::vector<cplx> buf(static_cast<std::size_t>(k) + 1);
  unit_moments(x, k, buf.data());
  return buf[static_cast<std::size_t>(k)];
}

/// d^k/dw^k int_0^tau e^{iwt} dt without the public order ceiling.
inline cplx phase_derivative(double omega, int k, double tau) {
  return std::pow(kI, k) * std::pow(tau, k + 1) * unit_moment(k, omega * tau);
}

/// E(w) = int_0^tau e^{iwt} dt.
inline cplx phase_zero(double omega, double tau) {
  cplx j0;
  unit_moments(omega * tau, 0, &j0);
  return tau * j0;
}

/// int_0^tau dt1 e^{i a t1} int_0^{t1} dt2 e^{-i b t2}, given E(a).
///
/// Equals (E(a) - E(a-b)) / (ib); for |b tau| < 1 the divided difference is
/// expanded instead: tau^2 sum_k (i b tau)^k J_{k+1}((a-b) tau) / (k+1)!.
inline cplx triangle_kernel(double a, double b, double tau, cplx e_a) {
  const double u = b * tau;
  if (std::abs(u) >= 1.0) return (e_a - phase_zero(a - b, tau)) / cplx(0.0, b);
  constexpr int kTerms = 24;
  cplx moments[kTerms + 2];
  unit_moments((a - b) * tau, kTerms + 1, moments);
  cplx sum{};
  cplx power = 1.0;
  double fact = 1.0;
  for (int k = 0; k <= kTerms; ++k) {
    fact *= static_cast<double>(k + 1);
    const cplx term = power * moments[k + 1] / fact;
    sum += term;
    if (std::abs(term) <= 1e-18 * std::abs(sum)) break;
    power *= cplx(0.0, u);
  }
  return tau * tau * sum;
}

inline void check_mode(const ModeSpec& spec, std::size_t p) {
  if (p >= spec.n_modes)
    throw ValidationError("mode index " + std::to_string(p) + " out of range");
}

}  // namespace detail

/// d^kappa/dw^kappa of int_0^tau e^{iwt} dt at w = delta_omega, i.e. i^kappa int t^kappa e^{iwt} dt.
inline cplx phase_integral(double delta_omega, int kappa, double tau) {
  if (kappa < 0 || kappa > kMaxDerivativeOrder)
    throw ValidationError("kappa: unsupported derivative order " + std::to_string(kappa) +
                          " (ceiling " + std::to_string(kMaxDerivativeOrder) + ")");
  if (!(tau > 0.0)) throw ValidationError("tau: must be positive");
  return detail::phase_derivative(delta_omega, kappa, tau);
}

/// First-order Magnus integral int_0^tau g(t) e^{i(w_p + delta_p) t} dt.
inline cplx theta1(const Pulse& pulse, const ModeSpec& spec, std::size_t p) {
  detail::check_mode(spec, p);
  const double w = spec.detuned_omega(p);
  cplx sum{};
  for (const auto& c : pulse.components()) sum += c.coeff * detail::phase_zero(w - c.omega, pulse.tau());
  return sum;
}

inline cplx theta1_derivative(const Pulse& pulse, const ModeSpec& spec, std::size_t p, int kappa) {
  detail::check_mode(spec, p);
  const double w = spec.detuned_omega(p);
  cplx sum{};
  for (const auto& c : pulse.components()) sum += c.coeff * phase_integral(w - c.omega, kappa, pulse.tau());
  return sum;
}

/// Second-order Magnus integral, defined as the bare ordered double integral
///   int_0^tau dt1 int_0^t1 dt2 g(t1) g*(t2) e^{i w_p t1} e^{-i w_p' t2}
/// (no 1/2 prefactor; detunings included).
inline cplx theta2(const Pulse& pulse, const ModeSpec& spec, std::size_t p, std::size_t p2) {
  detail::check_mode(spec, p);
  detail::check_mode(spec, p2);
  const double tau = pulse.tau();
  const auto comps = pulse.components();
  const double wp = spec.detuned_omega(p);
  const double wq = spec.detuned_omega(p2);
  cplx sum{};
  for (const auto& c1 : comps) {
    const double a = wp - c1.omega;
    const cplx e_a = detail::phase_zero(a, tau);
    cplx inner{};
    for (const auto& c2 : comps) inner += std::conj(c2.coeff) * detail::triangle_kernel(a, wq - c2.omega, tau, e_a);
    sum += c1.coeff * inner;
  }
  return sum;
}

/// K with theta2 = sum_{n,n'} A_n K_{n n'} conj(A_n') over the grid `indices` (nominal frequencies).
inline Eigen::MatrixXcd theta2_kernel(const std::vector<long>& indices, double tau, const ModeSpec& spec,
                                      std::size_t p, std::size_t p2) {
  detail::check_mode(spec, p);
  detail::check_mode(spec, p2);
  const auto n = static_cast<Eigen::Index>(indices.size());
  Eigen::MatrixXcd k(n, n);
  for (Eigen::Index r = 0; r < n; ++r) {
    const double a = spec.omega[p] - units::kTwoPi * static_cast<double>(indices[static_cast<std::size_t>(r)]) / tau;
    const cplx e_a = detail::phase_zero(a, tau);
    for (Eigen::Index c = 0; c < n; ++c) {
      const double b = spec.omega[p2] - units::kTwoPi * static_cast<double>(indices[static_cast<std::size_t>(c)]) / tau;
      k(r, c) = detail::triangle_kernel(a, b, tau, e_a);
    }
  }
  return k;
}

/// |Theta_p(delta_p = delta) - Theta_p(delta_p = 0)|, other detunings ignored.
///
/// Small |delta tau| uses the Taylor series in delta so that nulled derivative
/// orders cancel exactly instead of through a difference of nearly equal numbers.
inline double detuning_shift(const Pulse& pulse, const ModeSpec& spec, std::size_t p, double delta) {
  detail::check_mode(spec, p);
  if (delta == 0.0) return 0.0;
  const double tau = pulse.tau();
  const double w = spec.omega[p];
  const auto comps = pulse.components();
  if (std::abs(delta * tau) >= 0.5) {
    cplx diff{};
    for (const auto& c : comps)
      diff += c.coeff * (detail::phase_zero(w + delta - c.omega, tau) - detail::phase_zero(w - c.omega, tau));
    return std::abs(diff);
  }
  constexpr int kTerms = 30;
  std::vector<cplx> derivs(kTerms + 1);
  std::vector<cplx> moments(kTerms + 1);
  for (const auto& c : comps) {
    detail::unit_moments((w - c.omega) * tau, kTerms, moments.data());
    cplx ipow = 1.0;
    double tpow = tau;
    for (int k = 0; k <= kTerms; ++k) {
      derivs[static_cast<std::size_t>(k)] += c.coeff * ipow * tpow * moments[static_cast<std::size_t>(k)];
      ipow *= detail::kI;
      tpow *= tau;
    }
  }
  cplx shift{};
  double coef = 1.0;
  for (int k = 1; k <= kTerms; ++k) {
    coef *= delta / static_cast<double>(k);
    shift += coef * derivs[static_cast<std::size_t>(k)];
  }
  return std::abs(shift);
}

// ---- quadrature oracles -----------------------------------------------------

namespace detail {

inline std::size_t oscillation_panels(const std::vector<Component>& comps, double w, double tau) {
  double fastest = 0.0;
  for (const auto& c : comps) fastest = std::max(fastest, std::abs(w - c.omega));
  // one panel per half period, at least 8
  return std::max<std::size_t>(8, static_cast<std::size_t>(std::ceil(fastest * tau / 3.14159)) + 1);
}

/// t * (e^{iz} - 1)/(iz) with z = -b t: the antiderivative int_0^t e^{-ibs} ds.
inline cplx inner_antiderivative(double b, double t) {
  const double z = -b * t;
  if (std::abs(z) < 1e-3) {
    // 1 + iz/2 - z^2/6 - i z^3/24 + z^4/120
    const cplx iz{0.0, z};
    return t * (1.0 + iz / 2.0 + iz * iz / 6.0 + iz * iz * iz / 24.0 + iz * iz * iz * iz / 120.0);
  }
  return (std::polar(1.0, z) - 1.0) / cplx(0.0, -b);
}

}  // namespace detail

/// Adaptive-quadrature evaluation of the first-order integral (independent check).
inline cplx quadrature_theta1(const Pulse& pulse, const ModeSpec& spec, std::size_t p,
                              quadrature::Options opt = {}) {
  detail::check_mode(spec, p);
  const double w = spec.detuned_omega(p);
  const auto comps = pulse.components();
  auto f = [&](double t) {
    cplx s{};
    for (const auto& c : comps) s += c.coeff * std::polar(1.0, (w - c.omega) * t);
    return s;
  };
  opt.initial_panels = std::max(opt.initial_panels, detail::oscillation_panels(comps, w, pulse.tau()));
  return quadrature::integrate(f, 0.0, pulse.tau(), opt).value;
}

/// Second-order integral by an outer adaptive rule over t1 with the inner
/// integral over t2 taken from its antiderivative.
inline cplx quadrature_theta2(const Pulse& pulse, const ModeSpec& spec, std::size_t p, std::size_t p2,
                              quadrature::Options opt = {}) {
  detail::check_mode(spec, p);
  detail::check_mode(spec, p2);
  const double wp = spec.detuned_omega(p);
  const double wq = spec.detuned_omega(p2);
  const auto comps = pulse.components();
  auto f = [&](double t1) {
    cplx outer{};
    cplx inner{};
    for (const auto& c : comps) {
      outer += c.coeff * std::polar(1.0, (wp - c.omega) * t1);
      inner += std::conj(c.coeff) * detail::inner_antiderivative(wq - c.omega, t1);
    }
    return outer * inner;
  };
  opt.initial_panels = std::max({opt.initial_panels, detail::oscillation_panels(comps, wp, pulse.tau()),
                                 detail::oscillation_panels(comps, wq, pulse.tau())});
  return quadrature::integrate(f, 0.0, pulse.tau(), opt).value;
}

// ---- report -----------------------------------------------------------------

/// First- and second-order integrals of one pulse against every mode (pair).
struct MagnusReport {
  std::vector<cplx> theta1;
  Eigen::MatrixXcd theta1_derivs;  // (mode, kappa - 1)
  Eigen::MatrixXcd theta2;         // (p, p')
};

inline MagnusReport magnus_report(const Pulse& pulse, const ModeSpec& spec, int k_report, bool with_theta2 = true) {
  MagnusReport r;
  const auto n = static_cast<Eigen::Index>(spec.n_modes);
  r.theta1_derivs = Eigen::MatrixXcd::Zero(n, std::max(0, k_report));
  r.theta2 = Eigen::MatrixXcd::Zero(n, n);
  for (std::size_t p = 0; p < spec.n_modes; ++p) {
    r.theta1.push_back(theta1(pulse, spec, p));
    for (int k = 1; k <= k_report; ++k)
      r.theta1_derivs(static_cast<Eigen::Index>(p), k - 1) = theta1_derivative(pulse, spec, p, k);
    if (with_theta2)
      for (std::size_t q = 0; q < spec.n_modes; ++q)
        r.theta2(static_cast<Eigen::Index>(p), static_cast<Eigen::Index>(q)) = theta2(pulse, spec, p, q);
  }
  return r;
}

/// Two sections: `p,kappa,re,im` (kappa 0 is theta1 itself) then `p,p2,re,im,abs`.
inline void write_magnus_csv(const MagnusReport& r, std::ostream& out) {
  out << "p,kappa,re,im\n";
  for (std::size_t p = 0; p < r.theta1.size(); ++p) {
    out << p << ",0," << format_double(r.theta1[p].real()) << ',' << format_double(r.theta1[p].imag()) << '\n';
    for (Eigen::Index k = 0; k < r.theta1_derivs.cols(); ++k) {
      const cplx v = r.theta1_derivs(static_cast<Eigen::Index>(p), k);
      out << p << ',' << k + 1 << ',' << format_double(v.real()) << ',' << format_double(v.imag()) << '\n';
    }
  }
  out << "\np,p2,re,im,abs\n";
  for (Eigen::Index p = 0; p < r.theta2.rows(); ++p)
    for (Eigen::Index q = 0; q < r.theta2.cols(); ++q) {
      const cplx v = r.theta2(p, q);
      out << p << ',' << q << ',' << format_double(v.real()) << ',' << format_double(v.imag()) << ','
          << format_double(std::abs(v)) << '\n';
    }
}

}  // namespace modeshape
