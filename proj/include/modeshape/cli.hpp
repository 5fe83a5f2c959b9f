#pragma once

#include <cstdlib>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "modeshape/bench.hpp"
#include "modeshape/dynamics.hpp"
#include "modeshape/errors.hpp"
#include "modeshape/magnus.hpp"
#include "modeshape/metrics.hpp"
#include "modeshape/modes.hpp"
#include "modeshape/plot.hpp"
#include "modeshape/pulses.hpp"
#include "modeshape/shaper.hpp"
#include "modeshape/units.hpp"

namespace modeshape::cli {

namespace detail {

inline void write_text(const std::string& path, const std::string& body, std::ostream& fallback) {
  if (path.empty() || path == "-") {
    fallback << body;
    return;
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ValidationError("out: cannot write '" + path + "'");
  out << body;
  if (!out) throw ValidationError("out: write failed for '" + path + "'");
}

/// "0,1 2,1" or "0,1;2,1" -> {(0,1), (2,1)}.
inline std::vector<ModePair> parse_pairs(const std::string& s) {
  std::vector<ModePair> out;
  std::string norm = s;
  for (char& c : norm)
    if (c == ';') c = ' ';
  std::istringstream in(norm);
  std::string tok;
  while (in >> tok) {
    const auto comma = tok.find(',');
    if (comma == std::string::npos) throw ValidationError("pairs: expected p,q entries, got '" + tok + "'");
    try {
      out.emplace_back(std::stoul(tok.substr(0, comma)), std::stoul(tok.substr(comma + 1)));
    } catch (const std::logic_error&) {
      throw ValidationError("pairs: expected p,q entries, got '" + tok + "'");
    }
  }
  return out;
}

inline std::string error_line(const char* kind, const std::string& message, const nlohmann::json& extra = {}) {
  nlohmann::json doc = {{"error", kind}, {"message", message}};
  if (extra.is_object())
    for (const auto& [k, v] : extra.items()) doc[k] = v;
  return doc.dump();
}

}  // namespace detail

/// Parses argv and runs one subcommand. Exit codes: 0 success, 1 invalid input,
/// 2 numerical failure; failures print one JSON line on `err`.
inline int dispatch(int argc, const char* const* argv, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
  CLI::App app{"Fourier-basis probe pulse shaping and blue-sideband population benchmarks.\n"
               "Units: frequencies in MHz (mode files), kHz (basis window) and Hz (detuning); durations in µs;\n"
               "alpha and moment K are dimensionless."};
  app.name("modeshape");
  app.require_subcommand(1);
  app.set_help_all_flag("--help-all", "Print help for every subcommand");

  std::string modes_path, out_path, pairs_text;
  std::size_t target = 2;
  double tau_us = 0, alpha = 1.0, window_khz = 50.0, delta_hz = 0.0, tolerance = 1e-9;
  int moment = 0, n_max = 4;
  bool square = false, detuned_ref = false;
  auto* solve = app.add_subcommand("solve", "Shape a CMC-nulled, moment-K stabilized probe pulse");
  solve->add_option("--modes", modes_path, "Mode file (JSON: frequencies_mhz in MHz, eta, n_ions, n_modes)")->required();
  solve->add_option("--target", target, "Target mode index p* (0-based)")->capture_default_str();
  solve->add_option("--tau-us", tau_us, "Pulse length tau in µs")->required();
  solve->add_option("--alpha", alpha, "Rabi-frequency scaling alpha = |Theta_p*| (dimensionless)")->capture_default_str();
  solve->add_option("--moment", moment, "Moment of stabilization K (dimensionless, 0..8)")->capture_default_str();
  solve->add_option("--window-khz", window_khz, "Basis margin W around the mode band in kHz")->capture_default_str();
  solve->add_option("--null-pairs", pairs_text, "Off-diagonal mode pairs whose second-order integral is nulled, e.g. \"1,0 2,1\"");
  solve->add_flag("--square", square, "Emit the resonant square pulse (amplitude alpha/tau) instead of a shaped one");
  solve->add_option("--out", out_path, "Output solution JSON path (default stdout)");

  auto* simulate = app.add_subcommand("simulate", "Multi-mode and single-mode bright-state populations of a pulse");
  std::string sim_modes, sim_pulse, sim_out;
  std::size_t sim_target = 2, sim_ion = 2;
  simulate->add_option("--modes", sim_modes, "Mode file (JSON, frequencies in MHz)")->required();
  simulate->add_option("--pulse", sim_pulse, "Pulse or solution JSON (tau_us in µs, tone freq_hz in Hz)")->required();
  simulate->add_option("--delta-hz", delta_hz, "Uniform mode-frequency detuning delta/2pi in Hz")->capture_default_str();
  simulate->add_option("--target", sim_target, "Target mode index p* for the single-mode model")->capture_default_str();
  simulate->add_option("--ion", sim_ion, "Illuminated ion index j (row of eta)")->capture_default_str();
  simulate->add_option("--n-max", n_max, "Fock cutoff per mode (phonon number)")->capture_default_str();
  simulate->add_option("--tolerance", tolerance, "Relative step-halving tolerance on P, in (0, 1e-4]")->capture_default_str();
  simulate->add_flag("--detuned-reference", detuned_ref, "Run the single-mode reference at the detuned frequency too");
  simulate->add_option("--out", sim_out, "Output JSON path (default stdout)");

  auto* sweep = app.add_subcommand("sweep", "Run a sweep plan and write the error table as CSV");
  std::string sweep_plan, sweep_out, sweep_plot, sweep_axis = "alpha", sweep_land, sweep_land_out;
  std::size_t sweep_jobs = 0;
  sweep->add_option("--plan", sweep_plan, "Plan JSON (alpha, tau_us in µs, delta_hz in Hz, window_khz in kHz)")->required();
  sweep->add_option("--out", sweep_out, "Output CSV path (default stdout)");
  sweep->add_option("--plot", sweep_plot, "Also write a log-log SVG plot here");
  sweep->add_option("--plot-axis", sweep_axis, "x axis of --plot: alpha, tau (µs) or delta (Hz)")
      ->check(CLI::IsMember({"alpha", "tau", "delta"}))
      ->capture_default_str();
  sweep->add_option("--landscape", sweep_land, "Kind (square, moment-K) for an E(tau, delta) heat map");
  sweep->add_option("--landscape-out", sweep_land_out, "SVG path for --landscape");
  sweep->add_option("--jobs", sweep_jobs, "Worker threads (default MODESHAPE_JOBS or hardware concurrency)");

  auto* map = app.add_subcommand("map", "Best pulse kind per (tau, delta) cell of a plan");
  std::string map_plan, map_out, map_plot;
  std::size_t map_jobs = 0;
  map->add_option("--plan", map_plan, "Plan JSON (tau_us in µs, delta_hz in Hz; first alpha is used)")->required();
  map->add_option("--out", map_out, "Output CSV path (default stdout)");
  map->add_option("--plot", map_plot, "Also write an SVG map here");
  map->add_option("--jobs", map_jobs, "Worker threads (default MODESHAPE_JOBS or hardware concurrency)");

  auto* scaling = app.add_subcommand("scaling", "Solver runtime and average Rabi frequency over synthesized chains");
  std::vector<std::size_t> n_list{3, 4, 5, 6, 7};
  std::vector<double> tau_list{500, 1000, 2000};
  std::string scaling_out;
  double scaling_alpha = 1.0, scaling_window = 50.0, anchor_mhz = units::radps_to_mhz(kChainAnchor);
  int scaling_moment = 0, reps = 3;
  scaling->add_option("--n", n_list, "Chain sizes N (3..7, gaps in kHz from the built-in table)")->delimiter(',')->capture_default_str();
  scaling->add_option("--tau-us", tau_list, "Pulse lengths in µs")->delimiter(',')->capture_default_str();
  scaling->add_option("--alpha", scaling_alpha, "Rabi-frequency scaling alpha (dimensionless)")->capture_default_str();
  scaling->add_option("--moment", scaling_moment, "Moment of stabilization K")->capture_default_str();
  scaling->add_option("--window-khz", scaling_window, "Basis margin W in kHz")->capture_default_str();
  scaling->add_option("--anchor-mhz", anchor_mhz, "Lowest mode frequency of each chain in MHz")->capture_default_str();
  scaling->add_option("--reps", reps, "Timed repetitions per point (median reported)")->capture_default_str();
  scaling->add_option("--out", scaling_out, "Output CSV path (default stdout)");

  auto* exp = app.add_subcommand("export-pulse", "Write spectrum, time series or Magnus integrals of a pulse as CSV");
  std::string exp_pulse, exp_spectrum, exp_series, exp_magnus, exp_modes;
  std::size_t samples = 2000;
  int exp_k = 0;
  exp->add_option("--pulse", exp_pulse, "Pulse or solution JSON")->required();
  exp->add_option("--spectrum", exp_spectrum, "CSV of f_n in Hz, |A_n|, arg A_n");
  exp->add_option("--timeseries", exp_series, "CSV of t in µs, Re g, Im g (g in rad/s)");
  exp->add_option("--samples", samples, "Time-series intervals")->capture_default_str();
  exp->add_option("--magnus", exp_magnus, "CSV of first/second-order integrals (needs --modes)");
  exp->add_option("--modes", exp_modes, "Mode file for --magnus (frequencies in MHz)");
  exp->add_option("--moment", exp_k, "Highest derivative order reported with --magnus")->capture_default_str();

  try {
    try {
      app.parse(argc, argv);
    } catch (const CLI::CallForHelp&) {
      out << app.help();
      return 0;
    } catch (const CLI::CallForAllHelp&) {
      out << app.help("", CLI::AppFormatMode::All);
      return 0;
    } catch (const CLI::ParseError& e) {
      err << detail::error_line("validation", e.what()) << '\n';
      return 1;
    }

    if (solve->parsed()) {
      const ModeSpec spec = load_mode_spec(modes_path);
      const double tau = units::us_to_s(tau_us);
      nlohmann::json doc;
      if (square) {
        if (!pairs_text.empty()) throw ValidationError("null-pairs: not applicable with --square");
        const Pulse p = square_probe(spec, target, alpha, tau);
        ModeSpec nominal = spec;
        nominal.delta.assign(spec.n_modes, 0.0);
        PulseSolution s;
        s.pulse = p;
        s.target = target;
        s.moment = 0;
        s.basis_size = p.coeffs().size();
        s.diagnostics = magnus_report(p, nominal, 0, true);
        s.alpha = std::abs(s.diagnostics.theta1[target]);
        for (std::size_t q = 0; q < spec.n_modes; ++q)
          if (q != target) s.cmc_max = std::max(s.cmc_max, std::abs(s.diagnostics.theta1[q]) / alpha);
        doc = to_json(s);
        doc["kind"] = "square";
      } else {
        ShapeRequest req;
        req.spec = spec;
        req.target = target;
        req.tau = tau;
        req.alpha = alpha;
        req.moment = moment;
        req.window = units::khz_to_radps(window_khz);
        req.second_order_pairs = detail::parse_pairs(pairs_text);
        doc = to_json(solve_pulse(req));
        doc["kind"] = "moment-" + std::to_string(moment);
      }
      detail::write_text(out_path, doc.dump(2) + "\n", out);
      return 0;
    }

    if (simulate->parsed()) {
      const ModeSpec spec = load_mode_spec(sim_modes);
      const Pulse pulse = load_pulse(sim_pulse);
      SimConfig cfg;
      cfg.target = sim_target;
      cfg.ion = sim_ion;
      cfg.n_max = n_max;
      cfg.tolerance = tolerance;
      const double delta = units::hz_to_radps(delta_hz);
      const ModeSpec detuned = delta == 0.0 ? spec : with_detuning(spec, delta);
      const Populations pop = populations(pulse, detuned, cfg, detuned_ref);
      const nlohmann::json doc = {{"P", pop.P},
                                  {"P_model", pop.P_model},
                                  {"E", fractional_error(pop.P, pop.P_model)},
                                  {"n_max_used", pop.n_max_used},
                                  {"dt_used", pop.dt_used}};
      detail::write_text(sim_out, doc.dump(2) + "\n", out);
      return 0;
    }

    if (sweep->parsed()) {
      const SweepPlan plan = load_plan(sweep_plan);
      const SweepTable table = run_sweep(plan, sweep_jobs ? sweep_jobs : default_jobs());
      std::ostringstream csv;
      emit_csv(table, csv);
      detail::write_text(sweep_out, csv.str(), out);
      if (!sweep_plot.empty()) {
        const PlotAxis axis = sweep_axis == "tau" ? PlotAxis::tau : sweep_axis == "delta" ? PlotAxis::delta : PlotAxis::alpha;
        emit_plot(table, axis, sweep_plot);
      }
      if (!sweep_land.empty()) {
        if (sweep_land_out.empty()) throw ValidationError("landscape-out: required with --landscape");
        svg::write(sweep_land_out, landscape_svg(table, parse_kind(sweep_land).name()));
      }
      return 0;
    }

    if (map->parsed()) {
      const SweepPlan plan = load_plan(map_plan);
      SweepPlan first = plan;
      first.alpha_grid = {plan.alpha_grid.front()};
      const BestPulseMap m = best_pulse_map(run_sweep(first, map_jobs ? map_jobs : default_jobs()));
      std::ostringstream csv;
      emit_map_csv(m, csv);
      detail::write_text(map_out, csv.str(), out);
      if (!map_plot.empty()) svg::write(map_plot, map_svg(m));
      return 0;
    }

    if (scaling->parsed()) {
      std::vector<double> taus;
      for (double t : tau_list) taus.push_back(units::us_to_s(t));
      const auto rows = scaling_study(n_list, taus, scaling_alpha, scaling_moment, units::khz_to_radps(scaling_window), {},
                                      reps, units::mhz_to_radps(anchor_mhz));
      std::ostringstream csv;
      emit_scaling_csv(rows, csv);
      detail::write_text(scaling_out, csv.str(), out);
      return 0;
    }

    if (exp->parsed()) {
      const Pulse pulse = load_pulse(exp_pulse);
      if (exp_spectrum.empty() && exp_series.empty() && exp_magnus.empty())
        throw ValidationError("export-pulse: give at least one of --spectrum, --timeseries, --magnus");
      if (!exp_spectrum.empty()) {
        std::ostringstream s;
        write_spectrum_csv(pulse, s);
        detail::write_text(exp_spectrum, s.str(), out);
      }
      if (!exp_series.empty()) {
        if (samples == 0) throw ValidationError("samples: must be positive");
        std::ostringstream s;
        write_timeseries_csv(pulse, s, samples);
        detail::write_text(exp_series, s.str(), out);
      }
      if (!exp_magnus.empty()) {
        if (exp_modes.empty()) throw ValidationError("modes: required with --magnus");
        std::ostringstream s;
        write_magnus_csv(magnus_report(pulse, load_mode_spec(exp_modes), exp_k, true), s);
        detail::write_text(exp_magnus, s.str(), out);
      }
      return 0;
    }
  } catch (const ValidationError& e) {
    err << detail::error_line("validation", e.what()) << '\n';
    return 1;
  } catch (const SizingError& e) {
    err << detail::error_line("sizing", e.what(), {{"min_tau_us", units::s_to_us(e.min_tau())}}) << '\n';
    return 2;
  } catch (const ConvergenceError& e) {
    err << detail::error_line("convergence", e.what(), {{"achieved", e.achieved()}}) << '\n';
    return 2;
  } catch (const NumericalError& e) {
    err << detail::error_line("numerical", e.what()) << '\n';
    return 2;
  } catch (const std::exception& e) {
    err << detail::error_line("io", e.what()) << '\n';
    return 1;
  }
  return 1;
}

}  // namespace modeshape::cli
