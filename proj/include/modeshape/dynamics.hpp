#pragma once

#include <algorithm>
#include <bit>
#include <cmath>
#include <complex>
#include <cstddef>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <unsupported/Eigen/FFT>

#include "modeshape/errors.hpp"
#include "modeshape/modes.hpp"
#include "modeshape/pulses.hpp"

namespace modeshape {

enum class Model { multi_mode, single_mode };

struct SimConfig {
  Model model = Model::multi_mode;
  int n_max = 4;             // highest phonon number kept per mode
  double dt = 0.0;           // s; 0 picks the initial step from the pulse spectrum
  double tolerance = 1e-9;   // relative change of P between successive halvings
  std::size_t target = 0;    // mode kept by the single-mode model
  std::size_t ion = 2;       // row of eta that couples to the probed qubit
  std::size_t max_modes = 4;
  std::size_t max_steps = std::size_t{1} << 21;

  void validate(const ModeSpec& spec) const {
    if (n_max < 1) throw ValidationError("n_max: must be at least 1");
    if (!(tolerance > 0.0 && tolerance <= 1e-4)) throw ValidationError("tolerance: must be in (0, 1e-4]");
    if (!(dt >= 0.0) || !std::isfinite(dt)) throw ValidationError("dt: must be non-negative");
    if (target >= spec.n_modes) throw ValidationError("target: mode index out of range");
    if (ion >= spec.n_ions) throw ValidationError("ion: index out of range");
    if (model == Model::multi_mode && spec.n_modes > max_modes)
      throw ValidationError("modes: multi-mode simulation is limited to " + std::to_string(max_modes) + " modes");
  }
};

/// Basis |a> (x) |n_1 .. n_M> of a truncated qubit-phonon space; index = a*L^M + sum n_m L^m, L = n_max+1.
struct FockLayout {
  std::vector<std::size_t> modes;  // spec mode index of each simulated mode
  int n_max = 1;

  std::size_t levels() const { return static_cast<std::size_t>(n_max) + 1; }
  std::size_t phonon_states() const {
    std::size_t n = 1;
    for (std::size_t m = 0; m < modes.size(); ++m) n *= levels();
    return n;
  }
  std::size_t dim() const { return 2 * phonon_states(); }
  int qubit(std::size_t idx) const { return idx >= phonon_states() ? 1 : 0; }
  int occupation(std::size_t idx, std::size_t m) const {
    std::size_t rest = idx % phonon_states();
    for (std::size_t k = 0; k < m; ++k) rest /= levels();
    return static_cast<int>(rest % levels());
  }
  std::size_t stride(std::size_t m) const {
    std::size_t s = 1;
    for (std::size_t k = 0; k < m; ++k) s *= levels();
    return s;
  }
};

inline FockLayout make_layout(const ModeSpec& spec, const SimConfig& cfg) {
  FockLayout l;
  l.n_max = cfg.n_max;
  if (cfg.model == Model::single_mode) {
    l.modes = {cfg.target};
  } else {
    for (std::size_t p = 0; p < spec.n_modes; ++p) l.modes.push_back(p);
  }
  return l;
}

struct QuantumState {
  FockLayout layout;
  Eigen::VectorXcd amplitudes;
};

/// |0; 0 .. 0>.
inline QuantumState ground_state(const FockLayout& layout) {
  QuantumState s{layout, Eigen::VectorXcd::Zero(static_cast<Eigen::Index>(layout.dim()))};
  s.amplitudes(0) = 1.0;
  return s;
}

inline double bright_population(const QuantumState& s) {
  const auto half = static_cast<Eigen::Index>(s.layout.phonon_states());
  return std::clamp(s.amplitudes.tail(s.amplitudes.size() - half).squaredNorm(), 0.0, 1.0);
}

namespace detail {

/// sigma+ a_m^dagger: |0; n> -> sqrt(n_m + 1) |1; n + e_m>.
struct Coupling {
  std::size_t src;
  std::size_t dst;
  std::size_t mode;  // position in FockLayout::modes
  double amp;
};

inline std::vector<Coupling> couplings(const FockLayout& l) {
  std::vector<Coupling> out;
  const std::size_t half = l.phonon_states();
  for (std::size_t src = 0; src < half; ++src)
    for (std::size_t m = 0; m < l.modes.size(); ++m) {
      const int n = l.occupation(src, m);
      if (n < l.n_max) out.push_back({src, half + src + l.stride(m), m, std::sqrt(static_cast<double>(n + 1))});
    }
  return out;
}

inline std::vector<double> coupling_eta(const ModeSpec& spec, const FockLayout& l, std::size_t ion) {
  std::vector<double> eta;
  for (auto p : l.modes) eta.push_back(spec.eta(static_cast<Eigen::Index>(ion), static_cast<Eigen::Index>(p)));
  return eta;
}

inline void check_eta(const ModeSpec& spec, const FockLayout& l, std::size_t ion) {
  if (!spec.eta_trusted) throw ValidationError("eta: spec carries placeholder Lamb-Dicke values; simulation refused");
  bool any = false;
  for (double e : coupling_eta(spec, l, ion)) any = any || e != 0.0;
  if (!any) throw ValidationError("eta: all couplings of ion " + std::to_string(ion) + " are zero; simulation refused");
}

inline std::size_t next_pow2(double x) {
  const double c = std::max(1.0, std::ceil(x));
  if (c >= 9.0e18) return std::size_t{1} << 62;
  return std::bit_ceil(static_cast<std::size_t>(c));
}

/// g(k tau / m) for k = 0..m. The grid part goes through one length-m FFT when
/// m is a power of two; tones and other lengths are summed directly.
inline std::vector<cplx> sample_pulse(const Pulse& pulse, std::size_t m) {
  std::vector<cplx> g(m + 1);
  const double tau = pulse.tau();
  if (!pulse.indices().empty() && std::has_single_bit(m) && m >= 2) {
    std::vector<cplx> spectrum(m);
    const auto mm = static_cast<long>(m);
    for (std::size_t i = 0; i < pulse.indices().size(); ++i) {
      const long n = ((pulse.indices()[i] % mm) + mm) % mm;
      spectrum[static_cast<std::size_t>(n)] += pulse.coeffs()[i];
    }
    std::vector<cplx> samples;
    Eigen::FFT<double> fft;
    fft.fwd(samples, spectrum);
    for (std::size_t k = 0; k < m; ++k) g[k] = samples[k];
    g[m] = samples[0];
    for (const auto& tone : pulse.tones())
      for (std::size_t k = 0; k <= m; ++k)
        g[k] += tone.coeff * std::polar(1.0, -tone.omega * tau * static_cast<double>(k) / static_cast<double>(m));
  } else {
    for (std::size_t k = 0; k <= m; ++k) g[k] = pulse.evaluate(std::min(tau, tau * static_cast<double>(k) / static_cast<double>(m)));
  }
  return g;
}

/// Largest angular rate in the interaction picture: envelope detunings plus the coupling strength.
inline double fastest_rate(const Pulse& pulse, const ModeSpec& spec, const FockLayout& l, std::size_t ion) {
  double w = 0.0;
  double strength = 0.0;
  for (const auto& c : pulse.components()) strength += std::abs(c.coeff);
  const auto eta = coupling_eta(spec, l, ion);
  for (std::size_t m = 0; m < l.modes.size(); ++m) {
    for (const auto& c : pulse.components()) w = std::max(w, std::abs(spec.detuned_omega(l.modes[m]) - c.omega));
  }
  double eta_max = 0.0;
  for (double e : eta) eta_max = std::max(eta_max, std::abs(e));
  return w + eta_max * strength * std::sqrt(static_cast<double>(l.n_max));
}

}  // namespace detail

/// Dense interaction-picture Hamiltonian on the full truncated space (small spaces only).
inline Eigen::MatrixXcd hamiltonian_at(double t, const Pulse& pulse, const ModeSpec& spec, const SimConfig& cfg) {
  cfg.validate(spec);
  const FockLayout l = make_layout(spec, cfg);
  detail::check_eta(spec, l, cfg.ion);
  if (l.dim() > 4096) throw ValidationError("hamiltonian_at: space too large for a dense matrix");
  const cplx g = pulse.evaluate(t);
  const auto eta = detail::coupling_eta(spec, l, cfg.ion);
  const auto n = static_cast<Eigen::Index>(l.dim());
  Eigen::MatrixXcd h = Eigen::MatrixXcd::Zero(n, n);
  for (const auto& c : detail::couplings(l)) {
    const cplx f = std::polar(1.0, spec.detuned_omega(l.modes[c.mode]) * t) * g;
    const cplx v = cplx(0.0, 1.0) * eta[c.mode] * f * c.amp;
    h(static_cast<Eigen::Index>(c.dst), static_cast<Eigen::Index>(c.src)) += v;
    h(static_cast<Eigen::Index>(c.src), static_cast<Eigen::Index>(c.dst)) += std::conj(v);
  }
  return h;
}

struct EvolveResult {
  QuantumState state;
  double P = 0.0;
  std::size_t steps = 0;
  double dt_used = 0.0;
  int n_max_used = 0;
  double norm_drift = 0.0;     // | ||psi|| - 1 | before the final renormalization
  double halving_change = 0.0; // |P(dt) - P(dt/2)| at acceptance
};

namespace detail {

/// States reachable from the ground state through the coupling graph. The
/// Hamiltonian never leaves this set, so integrating on it is exact.
struct Reduced {
  std::vector<std::size_t> states;  // full-space index of each reduced slot
  std::vector<Coupling> links;      // src/dst rewritten to reduced slots
};

inline Reduced reachable(const FockLayout& l) {
  const auto all = couplings(l);
  std::vector<long> slot(l.dim(), -1);
  Reduced r;
  r.states.push_back(0);
  slot[0] = 0;
  for (std::size_t head = 0; head < r.states.size(); ++head) {
    const std::size_t s = r.states[head];
    for (const auto& c : all) {
      std::size_t other;
      if (c.src == s) other = c.dst;
      else if (c.dst == s) other = c.src;
      else continue;
      if (slot[other] < 0) {
        slot[other] = static_cast<long>(r.states.size());
        r.states.push_back(other);
      }
    }
  }
  for (const auto& c : all)
    if (slot[c.src] >= 0)
      r.links.push_back({static_cast<std::size_t>(slot[c.src]), static_cast<std::size_t>(slot[c.dst]), c.mode, c.amp});
  return r;
}

/// Classical RK4 with `steps` equal steps; returns the reduced amplitudes.
inline std::vector<cplx> rk4_run(const Pulse& pulse, const ModeSpec& spec, const FockLayout& l, const Reduced& red,
                                 const std::vector<double>& eta, std::size_t steps) {
  const std::size_t m = 2 * steps;
  const double tau = pulse.tau();
  const auto g = sample_pulse(pulse, m);
  const std::size_t nm = l.modes.size();
  std::vector<double> w(nm);
  for (std::size_t k = 0; k < nm; ++k) w[k] = spec.detuned_omega(l.modes[k]);

  // f[k*nm + mode] = eta * exp(i w t_k) g(t_k) at the half-step nodes
  auto drive = [&](std::size_t k, std::vector<cplx>& f) {
    const double t = tau * static_cast<double>(k) / static_cast<double>(m);
    for (std::size_t q = 0; q < nm; ++q) f[q] = eta[q] * std::polar(1.0, w[q] * t) * g[k];
  };
  const std::size_t d = red.states.size();
  std::vector<cplx> psi(d), k1(d), k2(d), k3(d), k4(d), tmp(d);
  psi[0] = 1.0;
  std::vector<cplx> fa(nm), fb(nm), fc(nm);
  auto deriv = [&](const std::vector<cplx>& f, const std::vector<cplx>& y, std::vector<cplx>& out) {
    std::fill(out.begin(), out.end(), cplx{});
    for (const auto& c : red.links) {
      const cplx v = f[c.mode] * c.amp;
      out[c.dst] += v * y[c.src];
      out[c.src] -= std::conj(v) * y[c.dst];
    }
  };
  const double h = tau / static_cast<double>(steps);
  drive(0, fa);
  for (std::size_t s = 0; s < steps; ++s) {
    drive(2 * s + 1, fb);
    drive(2 * s + 2, fc);
    deriv(fa, psi, k1);
    for (std::size_t i = 0; i < d; ++i) tmp[i] = psi[i] + 0.5 * h * k1[i];
    deriv(fb, tmp, k2);
    for (std::size_t i = 0; i < d; ++i) tmp[i] = psi[i] + 0.5 * h * k2[i];
    deriv(fb, tmp, k3);
    for (std::size_t i = 0; i < d; ++i) tmp[i] = psi[i] + h * k3[i];
    deriv(fc, tmp, k4);
    for (std::size_t i = 0; i < d; ++i) psi[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
    std::swap(fa, fc);
  }
  return psi;
}

inline QuantumState expand(const FockLayout& l, const Reduced& red, const std::vector<cplx>& psi) {
  QuantumState s{l, Eigen::VectorXcd::Zero(static_cast<Eigen::Index>(l.dim()))};
  for (std::size_t i = 0; i < psi.size(); ++i) s.amplitudes(static_cast<Eigen::Index>(red.states[i])) = psi[i];
  return s;
}

inline double top_level_population(const QuantumState& s) {
  double top = 0.0;
  for (std::size_t i = 0; i < s.layout.dim(); ++i) {
    bool at_top = false;
    for (std::size_t m = 0; m < s.layout.modes.size(); ++m) at_top = at_top || s.layout.occupation(i, m) == s.layout.n_max;
    if (at_top) top += std::norm(s.amplitudes(static_cast<Eigen::Index>(i)));
  }
  return top;
}

}  // namespace detail

/// Fixed-step propagation from the ground state over [0, tau] (no refinement, no renormalization).
inline QuantumState evolve_fixed(const Pulse& pulse, const ModeSpec& spec, const SimConfig& cfg, std::size_t steps) {
  cfg.validate(spec);
  if (steps == 0) throw ValidationError("steps: must be positive");
  const FockLayout l = make_layout(spec, cfg);
  detail::check_eta(spec, l, cfg.ion);
  const auto red = detail::reachable(l);
  return detail::expand(l, red, detail::rk4_run(pulse, spec, l, red, detail::coupling_eta(spec, l, cfg.ion), steps));
}

inline constexpr double kPopulationFloor = 1e-15;

/// RK4 from |0; 0..0> with the step halved until P settles to `tolerance` (relative).
inline EvolveResult evolve(const Pulse& pulse, const ModeSpec& spec, const SimConfig& cfg) {
  cfg.validate(spec);
  const FockLayout l = make_layout(spec, cfg);
  detail::check_eta(spec, l, cfg.ion);
  const auto red = detail::reachable(l);
  const auto eta = detail::coupling_eta(spec, l, cfg.ion);
  const double tau = pulse.tau();

  std::size_t steps;
  if (cfg.dt > 0.0) {
    steps = static_cast<std::size_t>(std::ceil(tau / cfg.dt));
  } else {
    // about 0.1 rad of the fastest interaction-picture phase per step
    const double want = std::max(64.0, tau * detail::fastest_rate(pulse, spec, l, cfg.ion) / 0.1);
    if (!(want <= static_cast<double>(cfg.max_steps)))
      throw ConvergenceError("evolve: pulse needs about " + format_double(want) + " steps, above the step budget",
                             std::numeric_limits<double>::infinity());
    steps = detail::next_pow2(want);
  }
  steps = std::max<std::size_t>(steps, 1);

  auto population = [&](const std::vector<cplx>& psi) {
    double p = 0.0;
    for (std::size_t i = 0; i < psi.size(); ++i)
      if (l.qubit(red.states[i]) == 1) p += std::norm(psi[i]);
    return p;
  };

  auto coarse = detail::rk4_run(pulse, spec, l, red, eta, steps);
  double p_coarse = population(coarse);
  double change = 0.0;
  for (;;) {
    if (2 * steps > cfg.max_steps)
      throw ConvergenceError("evolve: step refinement budget exhausted (relative change " + format_double(change) + ")",
                             change);
    steps *= 2;
    auto fine = detail::rk4_run(pulse, spec, l, red, eta, steps);
    const double p_fine = population(fine);
    double norm2 = 0.0;
    for (const auto& a : fine) norm2 += std::norm(a);
    const double drift = std::abs(std::sqrt(norm2) - 1.0);
    change = std::abs(p_fine - p_coarse) / std::max(p_fine, 1e-300);
    // absolute floor at round-off level so P ~ 0 (e.g. a full Rabi cycle) can settle
    const bool settled = std::abs(p_fine - p_coarse) <= std::max(cfg.tolerance * p_fine, kPopulationFloor);
    if (settled && drift <= 1e-9) {
      const double scale = 1.0 / std::sqrt(norm2);
      for (auto& a : fine) a *= scale;
      EvolveResult r;
      r.state = detail::expand(l, red, fine);
      r.P = bright_population(r.state);
      r.steps = steps;
      r.dt_used = tau / static_cast<double>(steps);
      r.n_max_used = cfg.n_max;
      r.norm_drift = drift;
      r.halving_change = std::abs(p_fine - p_coarse);
      const double top = detail::top_level_population(r.state);
      if (top > 1e-8)
        throw CutoffError("evolve: population " + format_double(top) + " at Fock level n_max=" +
                          std::to_string(cfg.n_max) + "; increase n_max");
      return r;
    }
    coarse = std::move(fine);
    p_coarse = p_fine;
  }
}

struct Populations {
  double P = 0.0;        // multi-mode, spec as given (detuned)
  double P_model = 0.0;  // single-mode, nominal frequencies unless asked otherwise
  int n_max_used = 0;
  double dt_used = 0.0;  // finest step of the two runs
};

/// Retries with a larger cutoff on leakage, up to `n_max + 4`.
inline EvolveResult evolve_with_cutoff(const Pulse& pulse, const ModeSpec& spec, SimConfig cfg) {
  const int ceiling = cfg.n_max + 4;
  for (;;) {
    try {
      return evolve(pulse, spec, cfg);
    } catch (const CutoffError&) {
      if (cfg.n_max >= ceiling) throw;
      ++cfg.n_max;
    }
  }
}

inline Populations populations(const Pulse& pulse, const ModeSpec& spec, const SimConfig& base,
                               bool detuned_reference = false) {
  SimConfig multi = base;
  multi.model = Model::multi_mode;
  SimConfig single = base;
  single.model = Model::single_mode;
  ModeSpec reference = spec;
  if (!detuned_reference) reference.delta.assign(spec.n_modes, 0.0);
  const auto a = evolve_with_cutoff(pulse, spec, multi);
  const auto b = evolve_with_cutoff(pulse, reference, single);
  return {a.P, b.P, std::max(a.n_max_used, b.n_max_used), std::min(a.dt_used, b.dt_used)};
}

}  // namespace modeshape
