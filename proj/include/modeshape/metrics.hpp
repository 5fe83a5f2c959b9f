#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <string>

#include "modeshape/dynamics.hpp"
#include "modeshape/errors.hpp"
#include "modeshape/modes.hpp"
#include "modeshape/pulses.hpp"

namespace modeshape {

inline constexpr double kReferenceFloor = 1e-12;

/// |P - P_ref| / P_ref.
inline double fractional_error(double p, double p_ref) {
  if (!(p_ref > kReferenceFloor))
    throw NumericalError("fractional_error: degenerate reference population " + format_double(p_ref));
  return std::abs(p - p_ref) / p_ref;
}

/// sin^2(B) with B = eta |theta1|; with the diagonal second-order integral
/// supplied, B^2/(B^2+C^2) sin^2(sqrt(B^2+C^2)) where C = eta^2 Im(theta2).
/// `theta2_im` is the imaginary part of the bare ordered double integral as
/// returned by theta2(); only |C| enters.
inline double predict_population(double eta, double theta1_abs, std::optional<double> theta2_im = std::nullopt) {
  const double b = eta * theta1_abs;
  if (!theta2_im) {
    const double s = std::sin(b);
    return s * s;
  }
  const double c = eta * eta * *theta2_im;
  const double r2 = b * b + c * c;
  if (r2 == 0.0) return 0.0;
  const double s = std::sin(std::sqrt(r2));
  return b * b / r2 * s * s;
}

/// ceil((2 alpha delta_eta)^-2).
inline std::uint64_t shots_required(double alpha, double delta_eta) {
  if (!(alpha > 0.0)) throw ValidationError("alpha: must be positive");
  if (!(delta_eta > 0.0)) throw ValidationError("delta_eta: must be positive");
  const double x = 2.0 * alpha * delta_eta;
  const double s = 1.0 / (x * x);
  // guard against 1e4 coming out as 10000.000000000002
  const double r = std::round(s);
  return static_cast<std::uint64_t>(std::abs(s - r) <= 1e-9 * r ? r : std::ceil(s));
}

/// Resonant square probe with |Theta_{p*}| = alpha at the nominal target frequency.
inline Pulse square_probe(const ModeSpec& spec, std::size_t target, double alpha, double tau) {
  if (target >= spec.n_modes) throw ValidationError("target: mode index out of range");
  if (!(alpha > 0.0)) throw ValidationError("alpha: must be positive");
  return square_pulse(alpha / tau, spec.omega[target], 0.0, tau);
}

struct ErrorPoint {
  double tau = 0.0;    // s
  double alpha = 0.0;
  double delta = 0.0;  // rad/s, applied to every mode
  std::string kind;    // "square", "moment-K" or "custom"
  int moment = -1;     // -1 for square
  double P = 0.0;
  double P_model = 0.0;
  double E = 0.0;
  int n_max_used = 0;
  double dt_used = 0.0;
};

/// E(delta) = |P(delta) - P_model(0)| / P_model(0): multi-mode run on the
/// uniformly detuned spec, single-mode reference on the nominal one.
inline ErrorPoint error_at(const Pulse& pulse, const ModeSpec& spec, double delta, const SimConfig& cfg,
                           std::string kind = "custom", int moment = -1,
                           double alpha = std::numeric_limits<double>::quiet_NaN()) {
  const ModeSpec detuned = delta == 0.0 ? spec : with_detuning(spec, delta);
  const Populations pop = populations(pulse, detuned, cfg);
  ErrorPoint e;
  e.tau = pulse.tau();
  e.alpha = alpha;
  e.delta = delta;
  e.kind = std::move(kind);
  e.moment = moment;
  e.P = pop.P;
  e.P_model = pop.P_model;
  e.E = fractional_error(pop.P, pop.P_model);
  e.n_max_used = pop.n_max_used;
  e.dt_used = pop.dt_used;
  return e;
}

}  // namespace modeshape
