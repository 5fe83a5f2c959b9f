#pragma once

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <limits>
#include <map>
#include <mutex>
#include <ostream>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <json.hpp>

#include "modeshape/dynamics.hpp"
#include "modeshape/errors.hpp"
#include "modeshape/metrics.hpp"
#include "modeshape/modes.hpp"
#include "modeshape/pulses.hpp"
#include "modeshape/shaper.hpp"
#include "modeshape/units.hpp"

namespace modeshape {

inline constexpr const char* kVersion = "modeshape 1.0.0";

// ---- pulse kinds ------------------------------------------------------------

/// "square" or "moment-K".
struct PulseKind {
  int moment = -1;  // -1 is the square pulse
  bool square() const { return moment < 0; }
  std::string name() const { return square() ? "square" : "moment-" + std::to_string(moment); }
  friend bool operator==(const PulseKind&, const PulseKind&) = default;
};

inline PulseKind parse_kind(const std::string& s) {
  if (s == "square") return {-1};
  const std::string prefix = "moment-";
  if (s.rfind(prefix, 0) == 0 && s.size() > prefix.size()) {
    const std::string digits = s.substr(prefix.size());
    if (digits.find_first_not_of("0123456789") == std::string::npos && digits.size() <= 2) {
      const int k = std::stoi(digits);
      if (k <= kMaxDerivativeOrder) return {k};
    }
  }
  throw ValidationError("kinds: unknown pulse kind '" + s + "' (expected square or moment-K, K <= " +
                        std::to_string(kMaxDerivativeOrder) + ")");
}

// ---- work pool --------------------------------------------------------------

/// MODESHAPE_JOBS if set, else the hardware concurrency.
inline std::size_t default_jobs() {
  if (const char* env = std::getenv("MODESHAPE_JOBS")) {
    char* end = nullptr;
    const long v = std::strtol(env, &end, 10);
    if (end != env && *end == '\0' && v > 0) return static_cast<std::size_t>(v);
    throw ValidationError("MODESHAPE_JOBS: must be a positive integer");
  }
  return std::max(1u, std::thread::hardware_concurrency());
}

/// Runs task(i) for i in [0, n) on `jobs` threads. Results must be written by index.
inline void parallel_for(std::size_t n, std::size_t jobs, const std::function<void(std::size_t)>& task) {
  jobs = std::clamp<std::size_t>(jobs, 1, std::max<std::size_t>(n, 1));
  if (jobs == 1) {
    for (std::size_t i = 0; i < n; ++i) task(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::vector<std::thread> pool;
  for (std::size_t w = 0; w < jobs; ++w)
    pool.emplace_back([&] {
      for (std::size_t i = next++; i < n; i = next++) task(i);
    });
  for (auto& t : pool) t.join();
}

// ---- plan and table ---------------------------------------------------------

struct SweepPlan {
  std::vector<PulseKind> kinds;
  std::vector<double> alpha_grid;
  std::vector<double> tau_grid;    // s
  std::vector<double> delta_grid;  // rad/s, uniform over modes
  ModeSpec spec;
  std::size_t target = 2;
  std::size_t ion = 2;
  double window = kDefaultWindow;
  int n_max = 4;
  double tolerance = 1e-9;
  std::uint64_t seed = 0;  // no randomized elements yet; kept for plan identity

  /// Grids nonempty and every shaped kind feasible at every tau.
  void validate() const {
    if (kinds.empty()) throw ValidationError("kinds: must be nonempty");
    if (alpha_grid.empty()) throw ValidationError("alpha: grid must be nonempty");
    if (tau_grid.empty()) throw ValidationError("tau_us: grid must be nonempty");
    if (delta_grid.empty()) throw ValidationError("delta_hz: grid must be nonempty");
    spec.validate();
    if (target >= spec.n_modes) throw ValidationError("target: mode index out of range");
    for (double a : alpha_grid)
      if (!(a > 0.0)) throw ValidationError("alpha: values must be positive");
    int kmax = -1;
    for (const auto& k : kinds) kmax = std::max(kmax, k.moment);
    for (double t : tau_grid) {
      if (!(t > 0.0)) throw ValidationError("tau_us: values must be positive");
      if (kmax >= 0) {
        const std::size_t rows = (spec.n_modes - 1) + static_cast<std::size_t>(kmax) * spec.n_modes;
        build_basis(t, spec, window, rows + 4);
      }
    }
  }
};

inline nlohmann::json to_json(const SweepPlan& p) {
  nlohmann::json kinds = nlohmann::json::array();
  for (const auto& k : p.kinds) kinds.push_back(k.name());
  std::vector<double> tau_us, delta_hz;
  for (double t : p.tau_grid) tau_us.push_back(units::s_to_us(t));
  for (double d : p.delta_grid) delta_hz.push_back(units::radps_to_hz(d));
  return {{"kinds", kinds},
          {"alpha", p.alpha_grid},
          {"tau_us", tau_us},
          {"delta_hz", delta_hz},
          {"modes", to_json(p.spec)},
          {"target", p.target},
          {"ion", p.ion},
          {"window_khz", units::radps_to_khz(p.window)},
          {"n_max", p.n_max},
          {"tolerance", p.tolerance},
          {"seed", p.seed}};
}

/// "modes" may be an inline object or a path resolved against `base_dir`.
inline SweepPlan plan_from_json(const nlohmann::json& doc, const std::filesystem::path& base_dir = {}) {
  if (!doc.is_object()) throw ValidationError("plan: document must be a JSON object");
  static const char* known[] = {"kinds", "alpha", "tau_us", "delta_hz", "modes", "target", "ion",
                                "window_khz", "n_max", "tolerance", "seed", "description"};
  for (const auto& [key, value] : doc.items()) {
    (void)value;
    if (std::find(std::begin(known), std::end(known), key) == std::end(known))
      throw ValidationError(key + ": unknown plan field");
  }
  SweepPlan p;
  for (const auto& k : detail::required<std::vector<std::string>>(doc, "kinds")) p.kinds.push_back(parse_kind(k));
  p.alpha_grid = detail::required<std::vector<double>>(doc, "alpha");
  for (double t : detail::required<std::vector<double>>(doc, "tau_us")) p.tau_grid.push_back(units::us_to_s(t));
  if (doc.contains("delta_hz")) {
    for (double d : detail::required<std::vector<double>>(doc, "delta_hz")) p.delta_grid.push_back(units::hz_to_radps(d));
  } else {
    p.delta_grid = {0.0};
  }
  if (!doc.contains("modes")) throw ValidationError("modes: missing field");
  const auto& modes = doc.at("modes");
  if (modes.is_string()) {
    std::filesystem::path path = modes.get<std::string>();
    if (path.is_relative() && !base_dir.empty()) path = base_dir / path;
    p.spec = load_mode_spec(path.string());
  } else {
    p.spec = mode_spec_from_json(modes);
  }
  if (doc.contains("target")) p.target = detail::required<std::size_t>(doc, "target");
  if (doc.contains("ion")) p.ion = detail::required<std::size_t>(doc, "ion");
  if (doc.contains("window_khz")) p.window = units::khz_to_radps(detail::required<double>(doc, "window_khz"));
  if (doc.contains("n_max")) p.n_max = detail::required<int>(doc, "n_max");
  if (doc.contains("tolerance")) p.tolerance = detail::required<double>(doc, "tolerance");
  if (doc.contains("seed")) p.seed = detail::required<std::uint64_t>(doc, "seed");
  p.validate();
  return p;
}

inline SweepPlan load_plan(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("plan: cannot open " + path);
  nlohmann::json doc;
  try {
    in >> doc;
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError("plan: " + std::string(e.what()));
  }
  return plan_from_json(doc, std::filesystem::path(path).parent_path());
}

/// FNV-1a over the canonical plan JSON.
inline std::string plan_hash(const SweepPlan& p) {
  std::uint64_t h = 1469598103934665603ull;
  for (unsigned char c : to_json(p).dump()) {
    h ^= c;
    h *= 1099511628211ull;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

struct SweepRow {
  ErrorPoint point;
  double a_bar = std::numeric_limits<double>::quiet_NaN();  // rad/s
  double cmc_residual = std::numeric_limits<double>::quiet_NaN();
  double deriv_residual = std::numeric_limits<double>::quiet_NaN();
  std::string status = "ok";
  bool ok() const { return status == "ok"; }
};

struct SweepTable {
  std::vector<SweepRow> rows;
  std::string plan_hash;
  std::string code_version = kVersion;
};

namespace detail {

struct Probe {
  Pulse pulse;
  double a_bar = 0.0;
  double cmc = 0.0;
  double deriv = std::numeric_limits<double>::quiet_NaN();
};

inline Probe make_probe(const PulseKind& kind, const ModeSpec& spec, std::size_t target, double alpha, double tau,
                        double window) {
  ModeSpec nominal = spec;
  nominal.delta.assign(spec.n_modes, 0.0);
  Probe pr;
  if (kind.square()) {
    pr.pulse = square_probe(nominal, target, alpha, tau);
    pr.a_bar = average_rabi(pr.pulse);
    for (std::size_t p = 0; p < spec.n_modes; ++p)
      if (p != target) pr.cmc = std::max(pr.cmc, std::abs(theta1(pr.pulse, nominal, p)) / alpha);
    return pr;
  }
  ShapeRequest req;
  req.spec = nominal;
  req.target = target;
  req.tau = tau;
  req.alpha = alpha;
  req.moment = kind.moment;
  req.window = window;
  SolveOptions opt;
  opt.theta2_diagnostics = false;
  const auto sol = solve_pulse(req, opt);
  pr.pulse = sol.pulse;
  pr.a_bar = average_rabi(sol.pulse);
  pr.cmc = sol.cmc_max;
  pr.deriv = sol.deriv_max;
  return pr;
}

}  // namespace detail

/// Rows ordered kind, tau, alpha, delta (last fastest) regardless of scheduling.
/// Failed cells keep their coordinates and carry the reason in `status`.
inline SweepTable run_sweep(const SweepPlan& plan, std::size_t jobs = 1) {
  plan.validate();
  SimConfig cfg;
  cfg.target = plan.target;
  cfg.ion = plan.ion;
  cfg.n_max = plan.n_max;
  cfg.tolerance = plan.tolerance;
  cfg.validate(plan.spec);

  const std::size_t nk = plan.kinds.size(), nt = plan.tau_grid.size(), na = plan.alpha_grid.size(),
                    nd = plan.delta_grid.size();
  SweepTable table;
  table.plan_hash = plan_hash(plan);
  table.rows.resize(nk * nt * na * nd);
  // one task per probe pulse; the detuning loop reuses it
  parallel_for(nk * nt * na, jobs, [&](std::size_t g) {
    const std::size_t ia = g % na, it = (g / na) % nt, ik = g / (na * nt);
    const PulseKind kind = plan.kinds[ik];
    const double tau = plan.tau_grid[it], alpha = plan.alpha_grid[ia];
    std::string probe_error;
    detail::Probe probe;
    try {
      probe = detail::make_probe(kind, plan.spec, plan.target, alpha, tau, plan.window);
    } catch (const std::exception& e) {
      probe_error = e.what();
    }
    for (std::size_t id = 0; id < nd; ++id) {
      SweepRow& row = table.rows[g * nd + id];
      row.point.tau = tau;
      row.point.alpha = alpha;
      row.point.delta = plan.delta_grid[id];
      row.point.kind = kind.name();
      row.point.moment = kind.moment;
      row.point.P = row.point.P_model = row.point.E = std::numeric_limits<double>::quiet_NaN();
      if (!probe_error.empty()) {
        row.status = "failed: " + probe_error;
        continue;
      }
      row.a_bar = probe.a_bar;
      row.cmc_residual = probe.cmc;
      row.deriv_residual = probe.deriv;
      try {
        row.point = error_at(probe.pulse, plan.spec, plan.delta_grid[id], cfg, kind.name(), kind.moment, alpha);
      } catch (const std::exception& e) {
        row.status = "failed: " + std::string(e.what());
      }
    }
  });
  std::size_t failed = 0;
  for (const auto& r : table.rows) failed += r.ok() ? 0 : 1;
  if (10 * failed > table.rows.size())
    throw NumericalError("sweep: " + std::to_string(failed) + " of " + std::to_string(table.rows.size()) +
                         " cells failed (first: " +
                         std::find_if(table.rows.begin(), table.rows.end(), [](const SweepRow& r) { return !r.ok(); })->status +
                         ")");
  return table;
}

// ---- best-pulse map ---------------------------------------------------------

struct BestPulseMap {
  std::vector<double> tau_grid;
  std::vector<double> delta_grid;
  std::vector<std::vector<std::string>> winner;  // [tau][delta]
  std::vector<std::vector<double>> best_E;
  std::size_t ties = 0;
};

/// Per (tau, delta) the kind with the smallest E at the table's first alpha.
/// Exact ties go to the lower moment, square last.
inline BestPulseMap best_pulse_map(const SweepTable& table) {
  if (table.rows.empty()) throw ValidationError("best_pulse_map: empty table");
  BestPulseMap m;
  const double alpha = table.rows.front().point.alpha;
  for (const auto& r : table.rows) {
    if (std::find(m.tau_grid.begin(), m.tau_grid.end(), r.point.tau) == m.tau_grid.end()) m.tau_grid.push_back(r.point.tau);
    if (std::find(m.delta_grid.begin(), m.delta_grid.end(), r.point.delta) == m.delta_grid.end())
      m.delta_grid.push_back(r.point.delta);
  }
  std::sort(m.tau_grid.begin(), m.tau_grid.end());
  std::sort(m.delta_grid.begin(), m.delta_grid.end());
  m.winner.assign(m.tau_grid.size(), std::vector<std::string>(m.delta_grid.size(), "none"));
  m.best_E.assign(m.tau_grid.size(), std::vector<double>(m.delta_grid.size(), std::numeric_limits<double>::infinity()));
  std::vector<std::vector<int>> rank(m.tau_grid.size(), std::vector<int>(m.delta_grid.size(), 1 << 30));
  for (const auto& r : table.rows) {
    if (!r.ok() || r.point.alpha != alpha) continue;
    const auto it = static_cast<std::size_t>(std::find(m.tau_grid.begin(), m.tau_grid.end(), r.point.tau) - m.tau_grid.begin());
    const auto id = static_cast<std::size_t>(std::find(m.delta_grid.begin(), m.delta_grid.end(), r.point.delta) - m.delta_grid.begin());
    const int order = r.point.moment < 0 ? 1000 : r.point.moment;
    double& best = m.best_E[it][id];
    if (r.point.E < best || (r.point.E == best && order < rank[it][id])) {
      if (r.point.E == best) ++m.ties;
      best = r.point.E;
      rank[it][id] = order;
      m.winner[it][id] = r.point.kind;
    } else if (r.point.E == best) {
      ++m.ties;
    }
  }
  return m;
}

inline BestPulseMap best_pulse_map(const std::vector<double>& tau_grid, const std::vector<double>& delta_grid,
                                   const std::vector<PulseKind>& kinds, const ModeSpec& spec, double alpha,
                                   std::size_t target = 2, std::size_t jobs = 1) {
  SweepPlan plan;
  plan.kinds = kinds;
  plan.alpha_grid = {alpha};
  plan.tau_grid = tau_grid;
  plan.delta_grid = delta_grid;
  plan.spec = spec;
  plan.target = target;
  return best_pulse_map(run_sweep(plan, jobs));
}

// ---- slope fits -------------------------------------------------------------

struct SlopeFit {
  double slope = std::numeric_limits<double>::quiet_NaN();
  double intercept = std::numeric_limits<double>::quiet_NaN();
  std::size_t used = 0;
  std::vector<bool> kept;
};

namespace detail {

inline double median(std::vector<double> v) {
  if (v.empty()) return std::numeric_limits<double>::quiet_NaN();
  const auto mid = v.begin() + static_cast<std::ptrdiff_t>(v.size() / 2);
  std::nth_element(v.begin(), mid, v.end());
  double m = *mid;
  if (v.size() % 2 == 0) m = 0.5 * (m + *std::max_element(v.begin(), mid));
  return m;
}

inline void least_squares(const std::vector<double>& x, const std::vector<double>& y, const std::vector<bool>& keep,
                          double& slope, double& intercept) {
  double n = 0, sx = 0, sy = 0;
  for (std::size_t i = 0; i < x.size(); ++i)
    if (keep[i]) {
      n += 1;
      sx += x[i];
      sy += y[i];
    }
  const double mx = sx / n, my = sy / n;
  double sxx = 0, sxy = 0;
  for (std::size_t i = 0; i < x.size(); ++i)
    if (keep[i]) {
      sxx += (x[i] - mx) * (x[i] - mx);
      sxy += (x[i] - mx) * (y[i] - my);
    }
  slope = sxy / sxx;
  intercept = my - slope * mx;
}

}  // namespace detail

/// Least squares of log y on log x. With `reject_outliers`, points whose residual
/// lies more than 3 scaled MADs from the median residual are dropped and the fit
/// repeated until the kept set is stable.
inline SlopeFit fit_loglog(const std::vector<double>& x, const std::vector<double>& y, bool reject_outliers = false) {
  if (x.size() != y.size()) throw ValidationError("fit_loglog: length mismatch");
  std::vector<double> lx, ly;
  for (std::size_t i = 0; i < x.size(); ++i) {
    if (!(x[i] > 0.0) || !(y[i] > 0.0)) throw ValidationError("fit_loglog: values must be positive");
    lx.push_back(std::log(x[i]));
    ly.push_back(std::log(y[i]));
  }
  if (lx.size() < 2) throw ValidationError("fit_loglog: need at least two points");
  SlopeFit f;
  f.kept.assign(lx.size(), true);
  detail::least_squares(lx, ly, f.kept, f.slope, f.intercept);
  for (int iter = 0; reject_outliers && iter < 10; ++iter) {
    std::vector<double> res(lx.size());
    std::vector<double> kept_res;
    for (std::size_t i = 0; i < lx.size(); ++i) {
      res[i] = ly[i] - (f.intercept + f.slope * lx[i]);
      if (f.kept[i]) kept_res.push_back(res[i]);
    }
    const double med = detail::median(kept_res);
    std::vector<double> dev;
    for (double r : kept_res) dev.push_back(std::abs(r - med));
    const double mad = 1.4826 * detail::median(dev);
    std::vector<bool> next(lx.size());
    std::size_t count = 0;
    for (std::size_t i = 0; i < lx.size(); ++i) {
      next[i] = mad == 0.0 || std::abs(res[i] - med) <= 3.0 * mad;
      count += next[i] ? 1 : 0;
    }
    if (next == f.kept || count < 2) break;
    f.kept = next;
    detail::least_squares(lx, ly, f.kept, f.slope, f.intercept);
  }
  f.used = static_cast<std::size_t>(std::count(f.kept.begin(), f.kept.end(), true));
  return f;
}

// ---- scaling study ----------------------------------------------------------

struct ScalingRow {
  std::size_t n_ions = 0;
  double tau = 0.0;     // s
  double wall_s = std::numeric_limits<double>::quiet_NaN();
  double a_bar = std::numeric_limits<double>::quiet_NaN();  // rad/s
  std::size_t basis_size = 0;
  std::string status = "ok";
};

inline constexpr double kChainAnchor = units::mhz_to_radps(2.9574);

/// Solver-only timing over synthesized chains; each entry is the median of
/// `reps` timed repetitions. The target is the highest mode of each chain.
inline std::vector<ScalingRow> scaling_study(const std::vector<std::size_t>& n_list, const std::vector<double>& tau_list,
                                             double alpha, int moment, double window = kDefaultWindow,
                                             const std::function<std::vector<double>(std::size_t)>& spacing_table = {},
                                             int reps = 3, double anchor = kChainAnchor) {
  std::vector<ScalingRow> out;
  for (std::size_t n : n_list)
    for (double tau : tau_list) {
      ScalingRow row;
      row.n_ions = n;
      row.tau = tau;
      try {
        std::vector<double> gaps_khz = spacing_table ? spacing_table(n) : table2_spacings_khz(n);
        std::vector<double> gaps;
        for (double g : gaps_khz) gaps.push_back(units::khz_to_radps(g));
        ShapeRequest req;
        req.spec = synthesize_chain(gaps, anchor);
        req.target = req.spec.n_modes - 1;
        req.tau = tau;
        req.alpha = alpha;
        req.moment = moment;
        req.window = window;
        SolveOptions opt;
        opt.theta2_diagnostics = false;
        std::vector<double> times;
        for (int r = 0; r < std::max(1, reps); ++r) {
          const auto t0 = std::chrono::steady_clock::now();
          const auto sol = solve_pulse(req, opt);
          times.push_back(std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count());
          row.a_bar = average_rabi(sol.pulse);
          row.basis_size = sol.basis_size;
        }
        row.wall_s = detail::median(times);
      } catch (const NumericalError& e) {
        row.status = "failed: " + std::string(e.what());
      }
      out.push_back(row);
    }
  return out;
}

// ---- output -----------------------------------------------------------------

inline constexpr const char* kCsvHeader =
    "kind,K,alpha,tau_us,delta_hz,P,P_model,E,A_bar_radps,cmc_residual,deriv_residual,status";

namespace detail {

inline std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string q = "\"";
  for (char c : s) {
    if (c == '"') q += '"';
    q += c == '\n' ? ' ' : c;
  }
  return q + '"';
}

inline std::string num(double x) { return std::isnan(x) ? "nan" : format_double(x); }

}  // namespace detail

inline void emit_csv(const SweepTable& table, std::ostream& out) {
  if (table.rows.empty()) throw ValidationError("emit_csv: empty table");
  out << kCsvHeader << '\n';
  for (const auto& r : table.rows) {
    const auto& p = r.point;
    out << p.kind << ',' << (p.moment < 0 ? std::string() : std::to_string(p.moment)) << ',' << detail::num(p.alpha) << ','
        << detail::num(units::s_to_us(p.tau)) << ',' << detail::num(units::radps_to_hz(p.delta)) << ','
        << detail::num(p.P) << ',' << detail::num(p.P_model) << ',' << detail::num(p.E) << ','
        << detail::num(r.a_bar) << ',' << detail::num(r.cmc_residual) << ',' << detail::num(r.deriv_residual) << ','
        << detail::csv_field(r.status) << '\n';
  }
}

inline void emit_csv(const SweepTable& table, const std::string& path) {
  if (table.rows.empty()) throw ValidationError("emit_csv: empty table");
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path);
  emit_csv(table, out);
  if (!out) throw std::runtime_error("write failed: " + path);
}

inline void emit_scaling_csv(const std::vector<ScalingRow>& rows, std::ostream& out) {
  out << "N,tau_us,wall_s,A_bar_radps,basis_size,status\n";
  for (const auto& r : rows)
    out << r.n_ions << ',' << detail::num(units::s_to_us(r.tau)) << ',' << detail::num(r.wall_s) << ','
        << detail::num(r.a_bar) << ',' << r.basis_size << ',' << detail::csv_field(r.status) << '\n';
}

inline void emit_map_csv(const BestPulseMap& m, std::ostream& out) {
  out << "tau_us,delta_hz,winner,E\n";
  for (std::size_t i = 0; i < m.tau_grid.size(); ++i)
    for (std::size_t j = 0; j < m.delta_grid.size(); ++j)
      out << detail::num(units::s_to_us(m.tau_grid[i])) << ',' << detail::num(units::radps_to_hz(m.delta_grid[j])) << ','
          << m.winner[i][j] << ',' << detail::num(m.best_E[i][j]) << '\n';
}

}  // namespace modeshape
