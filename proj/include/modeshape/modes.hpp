#pragma once

#include <cmath>
#include <cstddef>
#include <fstream>
#include <iostream>
#include <limits>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

#include "modeshape/errors.hpp"
#include "modeshape/units.hpp"

namespace modeshape {

/// Motional-mode parameters of an N-ion chain restricted to N' modes.
///
/// `omega` holds the nominal angular mode frequencies; `delta` holds the
/// per-mode detuning that the "true" system carries on top of them. The two
/// are kept apart because the error metric needs the detuned multi-mode
/// population and the nominal single-mode population side by side.
struct ModeSpec {
  std::size_t n_ions = 0;
  std::size_t n_modes = 0;
  std::vector<double> omega;  // rad/s, strictly increasing
  Eigen::MatrixXd eta;        // (ion j, mode p)
  std::vector<double> delta;  // rad/s, one per mode
  /// False for synthesized chains whose eta is a zero placeholder.
  bool eta_trusted = true;

  double detuned_omega(std::size_t p) const { return omega[p] + delta[p]; }

  double min_spacing() const {
    double s = std::numeric_limits<double>::infinity();
    for (std::size_t p = 1; p < omega.size(); ++p) s = std::min(s, omega[p] - omega[p - 1]);
    return s;
  }

  bool has_detuning() const {
    for (double d : delta)
      if (d != 0.0) return true;
    return false;
  }

  /// Throws ValidationError naming the first offending field.
  void validate() const {
    if (n_modes == 0) throw ValidationError("n_modes: must be positive");
    if (omega.size() != n_modes)
      throw ValidationError("frequencies_mhz: length " + std::to_string(omega.size()) +
                            " does not match n_modes " + std::to_string(n_modes));
    if (static_cast<std::size_t>(eta.rows()) != n_ions ||
        static_cast<std::size_t>(eta.cols()) != n_modes)
      throw ValidationError("eta: shape mismatch, expected " + std::to_string(n_ions) + "x" +
                            std::to_string(n_modes) + " got " + std::to_string(eta.rows()) +
                            "x" + std::to_string(eta.cols()));
    if (delta.size() != n_modes)
      throw ValidationError("delta: length does not match n_modes");
    for (std::size_t p = 0; p < n_modes; ++p) {
      if (!std::isfinite(omega[p]) || omega[p] <= 0.0)
        throw ValidationError("frequencies_mhz: all frequencies must be positive");
      if (p > 0 && !(omega[p] > omega[p - 1]))
        throw ValidationError("frequencies_mhz: non-increasing frequencies");
    }
    for (Eigen::Index j = 0; j < eta.rows(); ++j)
      for (Eigen::Index p = 0; p < eta.cols(); ++p)
        if (!(std::abs(eta(j, p)) < 1.0))
          throw ValidationError("eta: |eta| must be < 1 (Lamb-Dicke regime)");
  }

  friend bool operator==(const ModeSpec& a, const ModeSpec& b) {
    return a.n_ions == b.n_ions && a.n_modes == b.n_modes && a.omega == b.omega &&
           a.eta == b.eta && a.delta == b.delta && a.eta_trusted == b.eta_trusted;
  }
};

namespace detail {

template <class T>
T required(const nlohmann::json& doc, const char* field) {
  if (!doc.contains(field)) throw ValidationError(std::string(field) + ": missing field");
  try {
    return doc.at(field).get<T>();
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string(field) + ": " + e.what());
  }
}

}  // namespace detail

/// Parses `{ "frequencies_mhz": [...], "eta": [[...]...], "n_ions": N, "n_modes": N' }`.
/// An optional "delta_hz" list is accepted for round-tripping detuned specs.
inline ModeSpec mode_spec_from_json(const nlohmann::json& doc) {
  if (!doc.is_object()) throw ValidationError("modes: document must be a JSON object");
  ModeSpec s;
  const auto freqs = detail::required<std::vector<double>>(doc, "frequencies_mhz");
  const auto rows = detail::required<std::vector<std::vector<double>>>(doc, "eta");
  s.n_ions = detail::required<std::size_t>(doc, "n_ions");
  s.n_modes = detail::required<std::size_t>(doc, "n_modes");

  s.omega.reserve(freqs.size());
  for (double f : freqs) s.omega.push_back(units::mhz_to_radps(f));

  const std::size_t ncols = rows.empty() ? 0 : rows.front().size();
  for (const auto& r : rows)
    if (r.size() != ncols) throw ValidationError("eta: ragged rows");
  s.eta.resize(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(ncols));
  for (std::size_t j = 0; j < rows.size(); ++j)
    for (std::size_t p = 0; p < ncols; ++p)
      s.eta(static_cast<Eigen::Index>(j), static_cast<Eigen::Index>(p)) = rows[j][p];

  s.delta.assign(s.n_modes, 0.0);
  if (doc.contains("delta_hz")) {
    const auto d = detail::required<std::vector<double>>(doc, "delta_hz");
    if (d.size() != s.n_modes) throw ValidationError("delta_hz: length does not match n_modes");
    for (std::size_t p = 0; p < d.size(); ++p) s.delta[p] = units::hz_to_radps(d[p]);
  }
  if (doc.contains("eta_trusted")) s.eta_trusted = doc.at("eta_trusted").get<bool>();
  s.validate();
  return s;
}

inline nlohmann::json to_json(const ModeSpec& s) {
  nlohmann::json doc;
  std::vector<double> freqs;
  for (double w : s.omega) freqs.push_back(units::radps_to_mhz(w));
  std::vector<std::vector<double>> rows(s.n_ions, std::vector<double>(s.n_modes));
  for (std::size_t j = 0; j < s.n_ions; ++j)
    for (std::size_t p = 0; p < s.n_modes; ++p)
      rows[j][p] = s.eta(static_cast<Eigen::Index>(j), static_cast<Eigen::Index>(p));
  doc["frequencies_mhz"] = freqs;
  doc["eta"] = rows;
  doc["n_ions"] = s.n_ions;
  doc["n_modes"] = s.n_modes;
  if (s.has_detuning()) {
    std::vector<double> d;
    for (double x : s.delta) d.push_back(units::radps_to_hz(x));
    doc["delta_hz"] = d;
  }
  if (!s.eta_trusted) doc["eta_trusted"] = false;
  return doc;
}

inline ModeSpec load_mode_spec(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("modes: cannot open '" + path + "'");
  nlohmann::json doc;
  try {
    in >> doc;
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError("modes: " + std::string(e.what()));
  }
  return mode_spec_from_json(doc);
}

/// Three-ion chain used throughout the benchmarks (ion j rows, mode p columns).
inline ModeSpec table1_spec() {
  nlohmann::json doc = {
      {"frequencies_mhz", {2.9574, 3.0542, 3.1222}},
      {"eta", {{-0.0457, 0.0776, 0.0625}, {0.0909, -2.77e-6, 0.0629}, {-0.0457, -0.0776, 0.0625}}},
      {"n_ions", 3},
      {"n_modes", 3}};
  return mode_spec_from_json(doc);
}

/// Builds a chain from neighbouring-mode gaps. Eta is a zero placeholder and
/// the result is marked untrusted: the shaper accepts it, the simulator refuses it.
inline ModeSpec synthesize_chain(const std::vector<double>& spacings, double anchor) {
  if (!(anchor > 0.0)) throw ValidationError("anchor: must be positive");
  ModeSpec s;
  s.omega.push_back(anchor);
  for (double gap : spacings) {
    if (!(gap > 0.0)) throw ValidationError("spacings: all spacings must be positive");
    s.omega.push_back(s.omega.back() + gap);
  }
  s.n_modes = s.omega.size();
  s.n_ions = s.n_modes;
  s.eta = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(s.n_ions),
                                static_cast<Eigen::Index>(s.n_modes));
  s.delta.assign(s.n_modes, 0.0);
  s.eta_trusted = false;
  s.validate();
  return s;
}

/// Neighbouring-mode gaps in kHz for N = 3..7 equidistant ions.
inline std::vector<double> table2_spacings_khz(std::size_t n_ions) {
  switch (n_ions) {
    case 3: return {96.8, 68.0};
    case 4: return {80.3, 63.1, 43.9};
    case 5: return {62.9, 53.2, 42.8, 29.2};
    case 6: return {53.9, 48.2, 41.6, 34.4, 21.8};
    case 7: return {43.6, 41.5, 38.4, 34.1, 29.2, 15.9};
    default: throw ValidationError("spacing table covers N = 3..7 only");
  }
}

/// Adds per-mode detunings to those already carried by `spec`.
inline ModeSpec with_detuning(const ModeSpec& spec, const std::vector<double>& delta) {
  if (delta.size() != spec.n_modes)
    throw ValidationError("delta: length " + std::to_string(delta.size()) +
                          " does not match n_modes " + std::to_string(spec.n_modes));
  ModeSpec out = spec;
  for (std::size_t p = 0; p < delta.size(); ++p) out.delta[p] += delta[p];
  if (spec.n_modes > 1) {
    const double limit = 0.1 * spec.min_spacing();
    for (double d : out.delta)
      if (std::abs(d) > limit) {
        std::clog << "warning: detuning exceeds 10% of the minimum mode spacing\n";
        break;
      }
  }
  return out;
}

inline ModeSpec with_detuning(const ModeSpec& spec, double uniform) {
  return with_detuning(spec, std::vector<double>(spec.n_modes, uniform));
}

}  // namespace modeshape
