// Acceptance suite: one PASS/FAIL line per criterion.
#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <set>
#include <sstream>

#include <CLI11.hpp>

#include "modeshape/bench.hpp"
#include "modeshape/dynamics.hpp"
#include "modeshape/magnus.hpp"
#include "modeshape/metrics.hpp"
#include "modeshape/shaper.hpp"
#include "random_instances.hpp"

using namespace modeshape;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  bool pass = true;
  std::string detail;
};

struct Args {
  std::string cli;
  std::string data;
};

std::string fmt(const char* f, auto... xs) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, xs...);
  return buf;
}

std::vector<double> log_grid(double lo, double hi, int n) {
  std::vector<double> out;
  for (int i = 0; i < n; ++i) out.push_back(lo * std::pow(hi / lo, i / static_cast<double>(n - 1)));
  return out;
}

SimConfig sim_cfg() {
  SimConfig c;
  c.target = 2;
  c.ion = 2;
  return c;
}

PulseSolution shaped(double tau, double alpha, int moment, std::vector<ModePair> pairs = {}) {
  ShapeRequest r;
  r.spec = table1_spec();
  r.target = 2;
  r.tau = tau;
  r.alpha = alpha;
  r.moment = moment;
  r.second_order_pairs = std::move(pairs);
  SolveOptions opt;
  opt.theta2_diagnostics = false;
  return solve_pulse(r, opt);
}

double shaped_E(double tau, double alpha, int moment, double delta_hz = 0.0) {
  return error_at(shaped(tau, alpha, moment).pulse, table1_spec(), units::hz_to_radps(delta_hz), sim_cfg()).E;
}

double square_E(double tau, double alpha) {
  const ModeSpec spec = table1_spec();
  return error_at(square_probe(spec, 2, alpha, tau), spec, 0.0, sim_cfg()).E;
}

Outcome c1(const Args&) {
  std::mt19937_64 rng(20240607);
  const auto t0 = std::chrono::steady_clock::now();
  double worst = 0.0;
  for (int i = 0; i < 100; ++i) {
    const auto inst = testing::random_instance(rng, i % 4 == 3);
    worst = std::max(worst, testing::max_oracle_deviation(inst, 3));
  }
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return {worst < 1e-8 && secs < 60.0, fmt("max rel dev %.3g (< 1e-8), %.1f s (< 60 s)", worst, secs)};
}

Outcome c2(const Args&) {
  const ModeSpec spec = table1_spec();
  double worst_alpha = 0, worst_cmc = 0, worst_deriv = 0;
  std::size_t dim_bad = 0, cases = 0;
  for (double tau : {100e-6, 500e-6, 1000e-6})
    for (int k = 0; k <= 3; ++k)
      for (double a : {0.5, 1.0, 2.0}) {
        const auto s = shaped(tau, a, k);
        ++cases;
        worst_alpha = std::max(worst_alpha, std::abs(std::abs(theta1(s.pulse, spec, 2)) - a) / a);
        for (std::size_t p = 0; p < 3; ++p) {
          if (p != 2) worst_cmc = std::max(worst_cmc, std::abs(theta1(s.pulse, spec, p)) / a);
          for (int kappa = 1; kappa <= k; ++kappa)
            worst_deriv = std::max(worst_deriv, std::abs(theta1_derivative(s.pulse, spec, p, kappa)) / (a * std::pow(tau, kappa)));
        }
        const std::size_t expected = s.basis_size - 2 - static_cast<std::size_t>(k) * 3;
        if (!s.rank_deficient && s.null_space_dim != expected) ++dim_bad;
      }
  return {worst_alpha <= 1e-9 && worst_cmc <= 1e-9 && worst_deriv <= 1e-9 && dim_bad == 0,
          fmt("%zu cases: alpha rel %.2g, CMC %.2g, derivatives %.2g (all <= 1e-9), null-space dim mismatches %zu",
              cases, worst_alpha, worst_cmc, worst_deriv, dim_bad)};
}

Outcome c3(const Args&) {
  const ModeSpec spec = table1_spec();
  const double tau = 150e-6, eta = spec.eta(2, 2);
  SimConfig c = sim_cfg();
  c.model = Model::single_mode;
  double worst = 0;
  for (int i = 0; i < 20; ++i) {
    const double x = std::numbers::pi * i / 19.0;
    const double P = evolve(square_pulse(x / (eta * tau), spec.omega[2], 0.0, tau), spec, c).P;
    worst = std::max(worst, std::abs(P - std::pow(std::sin(x), 2)));
  }
  return {worst <= 1e-8, fmt("max |P - sin^2| = %.3g (<= 1e-8)", worst)};
}

Outcome c4(const Args&) {
  const auto alphas = log_grid(0.2, 1.0, 9);
  std::vector<double> sh, sq;
  bool ordered = true;
  for (double a : alphas) {
    sh.push_back(shaped_E(150e-6, a, 0));
    sq.push_back(square_E(150e-6, a));
    ordered = ordered && sh.back() < sq.back();
  }
  const auto fs_ = fit_loglog(alphas, sh, true), fq = fit_loglog(alphas, sq, true);
  return {std::abs(fs_.slope - 2.0) <= 0.3 && std::abs(fq.slope) <= 0.3 && ordered,
          fmt("slope shaped %.3f (2 +- 0.3), square %.3f (0 +- 0.3), shaped < square at every alpha: %s", fs_.slope,
              fq.slope, ordered ? "yes" : "no")};
}

Outcome c5(const Args&) {
  const auto taus = log_grid(100e-6, 2000e-6, 16);
  std::vector<double> sh, sq;
  for (double t : taus) {
    sh.push_back(shaped_E(t, 1.0, 0));
    sq.push_back(square_E(t, 1.0));
  }
  const auto fs_ = fit_loglog(taus, sh, true), fq = fit_loglog(taus, sq, true);
  return {std::abs(fs_.slope + 2.0) <= 0.3 && std::abs(fq.slope + 2.0) <= 0.3,
          fmt("slope shaped %.3f (%zu/16 kept), square %.3f (%zu/16 kept), target -2 +- 0.3", fs_.slope, fs_.used,
              fq.slope, fq.used)};
}

Outcome c6(const Args&) {
  const ModeSpec spec = table1_spec();
  double worst_sq = 0, worst_m0 = 0;
  std::size_t non_monotone = 0;
  for (double t : log_grid(100e-6, 2000e-6, 8)) {
    worst_sq = std::max(worst_sq, std::abs(average_rabi(square_probe(spec, 2, 1.0, t)) * t - 1.0));
    double last = 0;
    for (int k = 0; k <= 3; ++k) {
      const double abar = average_rabi(shaped(t, 1.0, k).pulse);
      if (k == 0) worst_m0 = std::max(worst_m0, std::abs(abar * t - 1.0));
      if (abar < last) ++non_monotone;
      last = abar;
    }
  }
  return {worst_sq <= 0.2 && worst_m0 <= 0.2 && non_monotone == 0,
          fmt("max |A_bar tau/alpha - 1|: square %.3g, moment-0 %.3g (<= 0.2); K-order violations %zu", worst_sq,
              worst_m0, non_monotone)};
}

Outcome c7(const Args&) {
  const ModeSpec spec = table1_spec();
  const auto deltas = log_grid(1.0, 50.0, 10);
  bool ok = true;
  std::string d;
  for (int k = 0; k <= 3; ++k) {
    const Pulse p = shaped(1000e-6, 1.0, k).pulse;
    std::vector<double> shift;
    for (double dh : deltas) shift.push_back(detuning_shift(p, spec, 2, units::hz_to_radps(dh)));
    const double slope = fit_loglog(deltas, shift).slope;
    ok = ok && std::abs(slope - (k + 1)) <= 0.3;
    d += fmt("K=%d slope %.3f; ", k, slope);
  }
  return {ok, d + "target K+1 +- 0.3"};
}

Outcome c8(const Args&) {
  const ModeSpec spec = table1_spec();
  std::vector<Pulse> p;
  for (int k = 0; k <= 2; ++k) p.push_back(shaped(860e-6, 1.0, k).pulse);
  bool ok = true;
  std::string d;
  for (double dh : {40.0, 70.0, 100.0}) {
    double e[3];
    for (int k = 0; k <= 2; ++k) e[k] = error_at(p[k], spec, units::hz_to_radps(dh), sim_cfg()).E;
    ok = ok && e[1] >= e[0] && e[2] <= e[1];
    d += fmt("%g Hz: E0 %.2e E1 %.2e E2 %.2e; ", dh, e[0], e[1], e[2]);
  }
  return {ok, d + "need E1 >= E0 and E2 <= E1"};
}

Outcome c9(const Args&) {
  std::vector<double> taus, deltas;
  for (int i = 0; i < 6; ++i) taus.push_back((200.0 + 360.0 * i) * 1e-6);
  for (int i = 0; i < 7; ++i) deltas.push_back(units::hz_to_radps(100.0 * i / 6.0));
  std::vector<PulseKind> kinds{parse_kind("square")};
  for (int k = 0; k <= 3; ++k) kinds.push_back(parse_kind("moment-" + std::to_string(k)));
  const auto m = best_pulse_map(taus, deltas, kinds, table1_spec(), 1.0, 2, default_jobs());

  bool zero_ok = true, mid_ok = true;
  std::string d = "delta=0 winners:";
  for (std::size_t it = 0; it < taus.size(); ++it) {
    const auto& w = m.winner[it][0];
    zero_ok = zero_ok && (w == "square" || w == "moment-0");
    d += " " + w;
  }
  d += "; tau>=1000us, 40-80 Hz cells:";
  for (std::size_t it = 0; it < taus.size(); ++it) {
    if (taus[it] < 1000e-6) continue;
    for (std::size_t id = 0; id < deltas.size(); ++id) {
      const double hz = units::radps_to_hz(deltas[id]);
      if (hz < 40.0 - 1e-9 || hz > 80.0 + 1e-9) continue;
      const auto& w = m.winner[it][id];
      const double e = m.best_E[it][id];
      mid_ok = mid_ok && w == "moment-2" && e >= 1e-5 && e <= 1e-2;
      d += fmt(" (%.0f us, %.1f Hz) %s %.2e", taus[it] * 1e6, hz, w.c_str(), e);
    }
  }
  return {zero_ok && mid_ok, d};
}

Outcome c10(const Args&) {
  const ModeSpec spec = table1_spec();
  const auto taus = log_grid(100e-6, 2000e-6, 40);
  struct Expect {
    std::size_t p, q;
    double slope;
  };
  const std::vector<Expect> pairs{{2, 2, -2.0}, {0, 2, -1.0}, {2, 0, -1.0}, {1, 2, -1.0},
                                  {2, 1, -0.841}, {0, 0, -1.0}, {1, 1, -1.0}};
  std::vector<std::vector<double>> mag(pairs.size());
  for (double t : taus) {
    const Pulse p = shaped(t, 1.0, 0).pulse;
    for (std::size_t i = 0; i < pairs.size(); ++i) mag[i].push_back(std::abs(theta2(p, spec, pairs[i].p, pairs[i].q)));
  }
  bool ok = true;
  std::string d;
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    const double s = fit_loglog(taus, mag[i]).slope;
    const bool good = std::abs(s - pairs[i].slope) <= 0.3;
    ok = ok && good;
    d += fmt("(%zu,%zu) %.3f vs %.3f%s; ", pairs[i].p, pairs[i].q, s, pairs[i].slope, good ? "" : " X");
  }
  return {ok, d + "tolerance 0.3"};
}

Outcome c11(const Args&) {
  const ModeSpec spec = table1_spec();
  const double tau = 500e-6;
  const auto grid = build_basis(tau, spec, kDefaultWindow, 6);
  const Eigen::MatrixXcd first = null_space(build_constraint_matrix(spec, grid, 2, 0), kNullTolerance).basis;
  std::size_t rejected = 0;
  for (std::size_t p = 0; p < 3; ++p) {
    try {
      null_second_order(spec, grid, 2, {{p, p}}, first);
    } catch (const ValidationError& e) {
      if (std::string(e.what()).find("positive-definite") != std::string::npos) ++rejected;
    }
  }
  // A pair and its reverse share no near-null vectors, and nulling any (p,q) with p < q
  // removes the target signal, so the requests use p > q; the six-pair request is
  // attempted and reported.
  std::string d = fmt("diagonal rejections %zu/3", rejected);
  bool ok = rejected == 3;
  const double e1 = shaped_E(tau, 1.0, 0);
  const std::vector<std::vector<ModePair>> requests{{{2, 1}}, {{1, 0}, {2, 0}}, {{1, 0}, {2, 1}, {2, 0}}};
  for (const auto& pairs : requests) {
    const Pulse second = shaped(tau, 1.0, 0, pairs).pulse;
    const double scale = std::pow(average_rabi(second) * tau, 2);
    double worst = 0;
    for (const auto& [p, q] : pairs) worst = std::max(worst, std::abs(theta2(second, spec, p, q)) / scale);
    const double e2 = error_at(second, spec, 0.0, sim_cfg()).E;
    ok = ok && worst <= 1e-8 && e2 >= e1;
    d += "; {";
    for (const auto& [p, q] : pairs) d += fmt("(%zu,%zu)", p, q);
    d += fmt("} max |theta2|/(A_bar tau)^2 %.2g, E %.3e vs first-order %.3e", worst, e2, e1);
  }
  try {
    shaped(tau, 1.0, 0, {{0, 1}, {1, 0}, {2, 1}, {1, 2}, {2, 0}, {0, 2}});
    d += "; all six ordered pairs: solved";
  } catch (const InfeasibleError&) {
    d += "; all six ordered pairs: infeasible";
  } catch (const NumericalError&) {
    d += "; all six ordered pairs: no signal";
  }
  return {ok, d};
}

Outcome c12(const Args&) {
  const std::vector<std::size_t> ns{3, 4, 5, 6, 7};
  const std::vector<double> taus{500e-6, 1000e-6, 2000e-6};
  const auto rows = scaling_study(ns, taus, 1.0, 0, kDefaultWindow, {}, 3);
  bool ok = true;
  std::string d;
  for (double t : taus) {
    double amin = INFINITY, amax = 0, wmin = INFINITY, wmax = 0;
    for (const auto& r : rows) {
      if (r.tau != t) continue;
      if (r.status != "ok") {
        ok = false;
        d += "N=" + std::to_string(r.n_ions) + " " + r.status + "; ";
        continue;
      }
      amin = std::min(amin, r.a_bar);
      amax = std::max(amax, r.a_bar);
      wmin = std::min(wmin, r.wall_s);
      wmax = std::max(wmax, r.wall_s);
    }
    const bool good = amax / amin - 1.0 < 0.25 && wmax / wmin < 2.0 && (t < 2000e-6 || wmax < 60.0);
    ok = ok && good;
    d += fmt("tau %.0f us: A_bar spread %.1f%%, wall %.3g-%.3g s (ratio %.2f); ", t * 1e6, 100 * (amax / amin - 1.0),
             wmin, wmax, wmax / wmin);
  }
  return {ok, d + "need spread < 25%, ratio < 2, < 60 s"};
}

Outcome c13(const Args& a) {
  const fs::path dir = fs::temp_directory_path() / "modeshape_acceptance_determinism";
  const std::string modes = fs::absolute(fs::path(a.data) / "table1.json").string();
  fs::remove_all(dir);
  fs::create_directories(dir);
  std::ofstream(dir / "plan.json") << R"({"modes": ")" << modes << R"(", "kinds": ["square", "moment-0", "moment-2"],
    "alpha": [0.5, 1], "tau_us": [150, 400], "delta_hz": [0, 50]})";
  auto sh = [&](const std::string& args) {
    const std::string cmd = "\"" + a.cli + "\" " + args + " 2>/dev/null";
    return std::system(cmd.c_str());
  };
  auto slurp = [](const fs::path& f) {
    std::ifstream in(f, std::ios::binary);
    return std::string(std::istreambuf_iterator<char>(in), {});
  };
  const std::string solve = "solve --modes \"" + modes + "\" --tau-us 500 --moment 2 --null-pairs \"1,0 2,1\" --out ";
  int rc = 0;
  rc |= sh(solve + "\"" + (dir / "s1.json").string() + "\"");
  rc |= sh(solve + "\"" + (dir / "s2.json").string() + "\"");
  rc |= sh("sweep --jobs 1 --plan \"" + (dir / "plan.json").string() + "\" --out \"" + (dir / "w1.csv").string() + "\"");
  rc |= sh("sweep --jobs 4 --plan \"" + (dir / "plan.json").string() + "\" --out \"" + (dir / "w2.csv").string() + "\"");
  const std::string s1 = slurp(dir / "s1.json"), w1 = slurp(dir / "w1.csv");
  const bool same_solve = !s1.empty() && s1 == slurp(dir / "s2.json");
  const bool same_sweep = !w1.empty() && w1 == slurp(dir / "w2.csv");
  fs::remove_all(dir);
  return {rc == 0 && same_solve && same_sweep,
          fmt("exit codes %s; solve identical %s (%zu bytes); sweep identical %s (%zu bytes)", rc == 0 ? "0" : "nonzero",
              same_solve ? "yes" : "no", s1.size(), same_sweep ? "yes" : "no", w1.size())};
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"modeshape acceptance suite"};
  Args args;
  std::string report;
  std::vector<int> known, only;
  app.add_option("--cli", args.cli, "Path to the modeshape executable")->required();
  app.add_option("--data", args.data, "Directory holding table1.json")->required();
  app.add_option("--report", report, "Also write the result lines here");
  app.add_option("--known-unattainable", known, "Criteria that are reported but do not fail the run")->delimiter(',');
  app.add_option("--only", only, "Run only these criteria")->delimiter(',');
  CLI11_PARSE(app, argc, argv);

  const std::vector<std::function<Outcome(const Args&)>> criteria{c1, c2, c3, c4, c5, c6, c7,
                                                                  c8, c9, c10, c11, c12, c13};
  const std::set<int> allowed(known.begin(), known.end());
  std::ostringstream lines;
  int unexpected = 0;
  for (int i = 1; i <= static_cast<int>(criteria.size()); ++i) {
    if (!only.empty() && std::find(only.begin(), only.end(), i) == only.end()) continue;
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = criteria[i - 1](args);
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    const std::string line = fmt("criterion %d: %s", i, o.pass ? "PASS" : "FAIL") + " " + o.detail + fmt(" [%.1f s]", secs);
    std::cout << line << std::endl;
    lines << line << '\n';
    if (!o.pass && !allowed.count(i)) ++unexpected;
  }
  if (!report.empty()) std::ofstream(report) << lines.str();
  return unexpected == 0 ? 0 : 1;
}
