#pragma once

#include <cmath>
#include <complex>
#include <cstddef>
#include <cstdio>
#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "modeshape/errors.hpp"
#include "modeshape/modes.hpp"
#include "modeshape/units.hpp"

namespace modeshape {

using cplx = std::complex<double>;

/// A single-frequency component that does not sit on the 2*pi*n/tau grid.
struct Tone {
  double omega = 0.0;  // rad/s
  cplx coeff{};        // rad/s
  friend bool operator==(const Tone&, const Tone&) = default;
};

/// One spectral component in angular-frequency form, grid or not.
struct Component {
  double omega;
  cplx coeff;
};

/// g(t) = sum_n A_n exp(-i 2 pi n t / tau) + sum_k B_k exp(-i w_k t) on [0, tau].
class Pulse {
 public:
  Pulse() = default;
  Pulse(double tau, std::vector<long> indices, std::vector<cplx> coeffs, std::vector<Tone> tones = {})
      : tau_(tau), indices_(std::move(indices)), coeffs_(std::move(coeffs)), tones_(std::move(tones)) {
    if (!(tau_ > 0.0) || !std::isfinite(tau_)) throw ValidationError("tau: must be positive");
    if (indices_.size() != coeffs_.size())
      throw ValidationError("coeffs: length does not match indices");
    for (std::size_t i = 1; i < indices_.size(); ++i)
      if (indices_[i] <= indices_[i - 1])
        throw ValidationError("indices: must be strictly increasing");
    for (const auto& c : coeffs_)
      if (!std::isfinite(c.real()) || !std::isfinite(c.imag()))
        throw ValidationError("coeffs: must be finite");
    for (const auto& t : tones_)
      if (!std::isfinite(t.omega) || !std::isfinite(t.coeff.real()) || !std::isfinite(t.coeff.imag()))
        throw ValidationError("tones: must be finite");
  }

  double tau() const { return tau_; }
  const std::vector<long>& indices() const { return indices_; }
  const std::vector<cplx>& coeffs() const { return coeffs_; }
  const std::vector<Tone>& tones() const { return tones_; }
  bool on_grid() const { return tones_.empty(); }

  double grid_omega(long n) const { return units::kTwoPi * static_cast<double>(n) / tau_; }

  std::vector<Component> components() const {
    std::vector<Component> out;
    out.reserve(indices_.size() + tones_.size());
    for (std::size_t i = 0; i < indices_.size(); ++i) out.push_back({grid_omega(indices_[i]), coeffs_[i]});
    for (const auto& t : tones_) out.push_back({t.omega, t.coeff});
    return out;
  }

  /// Horner evaluation of the grid part times exp(-i w_{n0} t), plus the tones.
  cplx evaluate(double t) const {
    if (!(t >= 0.0 && t <= tau_)) throw std::domain_error("evaluate: t outside [0, tau]");
    cplx sum{};
    if (!indices_.empty()) {
      const double step = -units::kTwoPi * t / tau_;
      const cplx z = std::polar(1.0, step);
      std::size_t i = indices_.size();
      long prev = indices_.back();
      while (i-- > 0) {
        const long gap = prev - indices_[i];
        if (gap == 1)
          sum *= z;
        else if (gap > 1)
          sum *= std::polar(1.0, step * static_cast<double>(gap));
        sum += coeffs_[i];
        prev = indices_[i];
      }
      sum *= std::polar(1.0, step * static_cast<double>(indices_.front()));
    }
    for (const auto& tone : tones_) sum += tone.coeff * std::polar(1.0, -tone.omega * t);
    return sum;
  }

  Pulse scaled(cplx c) const {
    Pulse out = *this;
    for (auto& a : out.coeffs_) a *= c;
    for (auto& t : out.tones_) t.coeff *= c;
    return out;
  }

  friend bool operator==(const Pulse&, const Pulse&) = default;

 private:
  double tau_ = 1.0;
  std::vector<long> indices_;
  std::vector<cplx> coeffs_;
  std::vector<Tone> tones_;
};

/// Root-sum-square of all coefficient moduli.
inline double average_rabi(const Pulse& pulse) {
  double s = 0.0;
  for (const auto& c : pulse.coeffs()) s += std::norm(c);
  for (const auto& t : pulse.tones()) s += std::norm(t.coeff);
  return std::sqrt(s);
}

/// g(t) = amplitude * exp(-i (drive t + phase)). Lands on the grid when
/// drive * tau / 2pi is an integer (to 1e-9), otherwise becomes an off-grid tone.
inline Pulse square_pulse(double amplitude, double drive, double phase, double tau) {
  if (!(drive > 0.0)) throw ValidationError("drive: must be positive");
  if (!(tau > 0.0)) throw ValidationError("tau: must be positive");
  const cplx coeff = std::polar(amplitude, -phase);
  const double cycles = drive * tau / units::kTwoPi;
  const double nearest = std::round(cycles);
  if (std::abs(cycles - nearest) <= 1e-9 * std::max(1.0, cycles))
    return Pulse(tau, {static_cast<long>(nearest)}, {coeff});
  return Pulse(tau, {}, {}, {Tone{drive, coeff}});
}

/// Integer frequency indices n selected for shaping at a given pulse length.
struct BasisGrid {
  double tau = 0.0;
  std::vector<long> indices;
  std::size_t size() const { return indices.size(); }
};

namespace detail {

inline std::size_t window_count(double tau, double lo, double hi) {
  const double nlo = std::ceil(lo * tau / units::kTwoPi);
  const double nhi = std::floor(hi * tau / units::kTwoPi);
  return nhi >= nlo ? static_cast<std::size_t>(nhi - nlo + 1.0) : 0;
}

}  // namespace detail

/// Smallest pulse length (1 ns resolution) from which every longer pulse holds
/// `count` indices. The count is not monotone in tau, so this walks down from the
/// length where an interval of span * tau / 2 pi >= count guarantees it.
inline double min_tau_for_count(const ModeSpec& spec, double window, std::size_t count) {
  const double lo = spec.omega.front() - window;
  const double hi = spec.omega.back() + window;
  const double step = 1e-9;
  double tau = std::ceil(static_cast<double>(count) * units::kTwoPi / (hi - lo) / step) * step;
  while (tau > step && detail::window_count(tau - step, lo, hi) >= count) tau -= step;
  return tau;
}

/// All n with 2 pi n / tau inside [min(omega) - W, max(omega) + W].
/// `min_count` > 0 turns a too-small basis into a SizingError.
inline BasisGrid build_basis(double tau, const ModeSpec& spec, double window, std::size_t min_count = 0) {
  if (!(tau > 0.0)) throw ValidationError("tau: must be positive");
  if (!(window >= 0.0)) throw ValidationError("window: must be non-negative");
  const double lo = spec.omega.front() - window;
  const double hi = spec.omega.back() + window;
  BasisGrid grid{tau, {}};
  const long nlo = static_cast<long>(std::ceil(lo * tau / units::kTwoPi));
  const long nhi = static_cast<long>(std::floor(hi * tau / units::kTwoPi));
  for (long n = std::max(nlo, 1L); n <= nhi; ++n) grid.indices.push_back(n);
  if (grid.size() < min_count) {
    const double need = min_tau_for_count(spec, window, min_count);
    char buf[256];
    std::snprintf(buf, sizeof buf,
                  "basis too small: %zu elements for %zu required; minimum tau %.2f us",
                  grid.size(), min_count, units::s_to_us(need));
    throw SizingError(buf, need);
  }
  return grid;
}

// ---- file formats -----------------------------------------------------------

inline nlohmann::json to_json(const Pulse& p) {
  nlohmann::json doc;
  doc["tau_us"] = units::s_to_us(p.tau());
  doc["indices"] = p.indices();
  auto coeffs = nlohmann::json::array();
  for (const auto& c : p.coeffs()) coeffs.push_back({c.real(), c.imag()});
  doc["coeffs"] = coeffs;
  if (!p.tones().empty()) {
    auto tones = nlohmann::json::array();
    for (const auto& t : p.tones())
      tones.push_back({{"freq_hz", units::radps_to_hz(t.omega)}, {"re", t.coeff.real()}, {"im", t.coeff.imag()}});
    doc["tones"] = tones;
  }
  return doc;
}

inline Pulse pulse_from_json(const nlohmann::json& doc) {
  if (!doc.is_object()) throw ValidationError("pulse: document must be a JSON object");
  const double tau = units::us_to_s(detail::required<double>(doc, "tau_us"));
  auto indices = detail::required<std::vector<long>>(doc, "indices");
  const auto raw = detail::required<std::vector<std::vector<double>>>(doc, "coeffs");
  std::vector<cplx> coeffs;
  for (const auto& c : raw) {
    if (c.size() != 2) throw ValidationError("coeffs: each entry must be [re, im]");
    coeffs.emplace_back(c[0], c[1]);
  }
  std::vector<Tone> tones;
  if (doc.contains("tones")) {
    for (const auto& t : doc.at("tones")) {
      tones.push_back({units::hz_to_radps(detail::required<double>(t, "freq_hz")),
                       {detail::required<double>(t, "re"), detail::required<double>(t, "im")}});
    }
  }
  return Pulse(tau, std::move(indices), std::move(coeffs), std::move(tones));
}

/// Accepts either a bare pulse document or a solution document with a "pulse" member.
inline Pulse load_pulse(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("pulse: cannot open '" + path + "'");
  nlohmann::json doc;
  try {
    in >> doc;
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError("pulse: " + std::string(e.what()));
  }
  if (doc.is_object() && doc.contains("pulse")) return pulse_from_json(doc.at("pulse"));
  return pulse_from_json(doc);
}

inline std::string format_double(double x) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

/// Columns f_n_hz, abs_A, arg_A.
inline void write_spectrum_csv(const Pulse& p, std::ostream& out) {
  out << "f_n_hz,abs_A,arg_A\n";
  for (const auto& c : p.components())
    out << format_double(units::radps_to_hz(c.omega)) << ',' << format_double(std::abs(c.coeff)) << ','
        << format_double(std::arg(c.coeff)) << '\n';
}

/// Columns t_us, re_g, im_g on `samples` + 1 evenly spaced points.
inline void write_timeseries_csv(const Pulse& p, std::ostream& out, std::size_t samples = 2000) {
  out << "t_us,re_g,im_g\n";
  for (std::size_t k = 0; k <= samples; ++k) {
    const double t = p.tau() * static_cast<double>(k) / static_cast<double>(samples);
    const cplx g = p.evaluate(std::min(t, p.tau()));
    out << format_double(units::s_to_us(t)) << ',' << format_double(g.real()) << ','
        << format_double(g.imag()) << '\n';
  }
}

}  // namespace modeshape
