#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "modeshape/bench.hpp"

namespace modeshape {

enum class PlotAxis { alpha, tau, delta };

namespace svg {

inline constexpr double kWidth = 640, kHeight = 440, kLeft = 80, kRight = 150, kTop = 30, kBottom = 60;

inline std::string fmt(double x) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", x);
  return buf;
}

inline std::string label(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%g", v);
  return buf;
}

inline const std::array<const char*, 8> kPalette = {"#1f77b4", "#ff7f0e", "#2ca02c", "#d62728",
                                                    "#9467bd", "#8c564b", "#e377c2", "#7f7f7f"};

struct Axis {
  double lo, hi;
  bool log;
  double map(double v, double a, double b) const {
    const double t = log ? (std::log10(v) - std::log10(lo)) / (std::log10(hi) - std::log10(lo)) : (v - lo) / (hi - lo);
    return a + t * (b - a);
  }
};

inline Axis make_axis(const std::vector<double>& v, bool log) {
  double lo = *std::min_element(v.begin(), v.end()), hi = *std::max_element(v.begin(), v.end());
  if (log) {
    lo = std::pow(10.0, std::floor(std::log10(lo)));
    hi = std::pow(10.0, std::ceil(std::log10(hi)));
    if (hi <= lo) hi = lo * 10.0;
  } else if (hi <= lo) {
    hi = lo + 1.0;
  }
  return {lo, hi, log};
}

inline void header(std::ostream& o, const std::string& title) {
  o << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << kWidth << "\" height=\"" << kHeight
    << "\" font-family=\"sans-serif\" font-size=\"12\">\n"
    << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n"
    << "<text x=\"" << fmt(kWidth / 2) << "\" y=\"18\" text-anchor=\"middle\">" << title << "</text>\n";
}

inline void frame(std::ostream& o, const Axis& x, const Axis& y, const std::string& xlabel, const std::string& ylabel) {
  const double x0 = kLeft, x1 = kWidth - kRight, y0 = kHeight - kBottom, y1 = kTop;
  o << "<rect x=\"" << fmt(x0) << "\" y=\"" << fmt(y1) << "\" width=\"" << fmt(x1 - x0) << "\" height=\"" << fmt(y0 - y1)
    << "\" fill=\"none\" stroke=\"black\"/>\n";
  auto ticks = [](const Axis& a) {
    std::vector<double> t;
    if (a.log) {
      for (double v = a.lo; v <= a.hi * 1.0001; v *= 10.0) t.push_back(v);
    } else {
      for (int i = 0; i <= 5; ++i) t.push_back(a.lo + (a.hi - a.lo) * i / 5.0);
    }
    return t;
  };
  for (double v : ticks(x)) {
    const double px = x.map(v, x0, x1);
    o << "<line x1=\"" << fmt(px) << "\" y1=\"" << fmt(y0) << "\" x2=\"" << fmt(px) << "\" y2=\"" << fmt(y0 + 5)
      << "\" stroke=\"black\"/><text x=\"" << fmt(px) << "\" y=\"" << fmt(y0 + 18) << "\" text-anchor=\"middle\">"
      << label(v) << "</text>\n";
  }
  for (double v : ticks(y)) {
    const double py = y.map(v, y0, y1);
    o << "<line x1=\"" << fmt(x0 - 5) << "\" y1=\"" << fmt(py) << "\" x2=\"" << fmt(x0) << "\" y2=\"" << fmt(py)
      << "\" stroke=\"black\"/><text x=\"" << fmt(x0 - 8) << "\" y=\"" << fmt(py + 4) << "\" text-anchor=\"end\">"
      << label(v) << "</text>\n";
  }
  o << "<text x=\"" << fmt((x0 + x1) / 2) << "\" y=\"" << fmt(kHeight - 20) << "\" text-anchor=\"middle\">" << xlabel
    << "</text>\n<text transform=\"translate(20," << fmt((y0 + y1) / 2) << ") rotate(-90)\" text-anchor=\"middle\">"
    << ylabel << "</text>\n";
}

/// Viridis-like ramp, t in [0, 1].
inline std::string ramp(double t) {
  static const std::array<std::array<double, 3>, 5> stops = {
      {{68, 1, 84}, {59, 82, 139}, {33, 145, 140}, {94, 201, 98}, {253, 231, 37}}};
  t = std::clamp(t, 0.0, 1.0) * 4.0;
  const auto i = std::min<std::size_t>(3, static_cast<std::size_t>(t));
  const double f = t - static_cast<double>(i);
  char buf[8];
  std::snprintf(buf, sizeof buf, "#%02x%02x%02x", static_cast<int>(stops[i][0] + f * (stops[i + 1][0] - stops[i][0])),
                static_cast<int>(stops[i][1] + f * (stops[i + 1][1] - stops[i][1])),
                static_cast<int>(stops[i][2] + f * (stops[i + 1][2] - stops[i][2])));
  return buf;
}

inline void write(const std::string& path, const std::string& body) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path);
  out << body;
  if (!out) throw std::runtime_error("write failed: " + path);
}

}  // namespace svg

/// Log-log E against alpha, tau or |delta|, one line per kind. Rows are taken
/// at the first value of the two coordinates not on the x axis.
inline std::string plot_svg(const SweepTable& table, PlotAxis axis) {
  if (table.rows.empty()) throw ValidationError("emit_plot: empty table");
  const auto& first = table.rows.front().point;
  std::map<std::string, std::vector<std::pair<double, double>>> series;
  std::vector<std::string> order;
  for (const auto& r : table.rows) {
    const auto& p = r.point;
    if (!r.ok() || !(p.E > 0.0)) continue;
    double x = 0.0;
    switch (axis) {
      case PlotAxis::alpha:
        if (p.tau != first.tau || p.delta != first.delta) continue;
        x = p.alpha;
        break;
      case PlotAxis::tau:
        if (p.alpha != first.alpha || p.delta != first.delta) continue;
        x = units::s_to_us(p.tau);
        break;
      case PlotAxis::delta:
        if (p.alpha != first.alpha || p.tau != first.tau || p.delta == 0.0) continue;
        x = std::abs(units::radps_to_hz(p.delta));
        break;
    }
    if (!series.count(p.kind)) order.push_back(p.kind);
    series[p.kind].push_back({x, p.E});
  }
  std::vector<double> xs, ys;
  for (const auto& [k, pts] : series)
    for (const auto& [x, y] : pts) {
      xs.push_back(x);
      ys.push_back(y);
    }
  if (xs.empty()) throw ValidationError("emit_plot: no plottable rows");
  const auto ax = svg::make_axis(xs, true), ay = svg::make_axis(ys, true);
  const char* xlabel = axis == PlotAxis::alpha ? "alpha" : axis == PlotAxis::tau ? "tau (us)" : "|delta|/2pi (Hz)";
  std::ostringstream o;
  svg::header(o, std::string("fractional population error vs ") + xlabel);
  svg::frame(o, ax, ay, xlabel, "E");
  const double x0 = svg::kLeft, x1 = svg::kWidth - svg::kRight, y0 = svg::kHeight - svg::kBottom, y1 = svg::kTop;
  for (std::size_t s = 0; s < order.size(); ++s) {
    auto pts = series[order[s]];
    std::sort(pts.begin(), pts.end());
    const char* color = svg::kPalette[s % svg::kPalette.size()];
    o << "<polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"1.5\" points=\"";
    for (const auto& [x, y] : pts) o << svg::fmt(ax.map(x, x0, x1)) << ',' << svg::fmt(ay.map(y, y0, y1)) << ' ';
    o << "\"/>\n";
    for (const auto& [x, y] : pts)
      o << "<circle cx=\"" << svg::fmt(ax.map(x, x0, x1)) << "\" cy=\"" << svg::fmt(ay.map(y, y0, y1))
        << "\" r=\"2.5\" fill=\"" << color << "\"/>\n";
    o << "<text x=\"" << svg::fmt(x1 + 12) << "\" y=\"" << svg::fmt(y1 + 16 + 18.0 * static_cast<double>(s))
      << "\" fill=\"" << color << "\">" << order[s] << "</text>\n";
  }
  o << "</svg>\n";
  return o.str();
}

inline void emit_plot(const SweepTable& table, PlotAxis axis, const std::string& path) {
  svg::write(path, plot_svg(table, axis));
}

namespace detail {

/// Marching-squares segments of log10(E) = level on a cell-centred grid.
inline void contour(std::ostream& o, const std::vector<std::vector<double>>& z, double level, double cw, double ch,
                    double x0, double y0) {
  const std::size_t nx = z.size(), ny = nx ? z[0].size() : 0;
  auto px = [&](double i) { return x0 + (i + 0.5) * cw; };
  auto py = [&](double j) { return y0 - (j + 0.5) * ch; };
  for (std::size_t i = 0; i + 1 < nx; ++i)
    for (std::size_t j = 0; j + 1 < ny; ++j) {
      const double c[4] = {z[i][j], z[i + 1][j], z[i + 1][j + 1], z[i][j + 1]};
      const double cx[4] = {0, 1, 1, 0}, cy[4] = {0, 0, 1, 1};
      std::vector<std::pair<double, double>> hits;
      for (int e = 0; e < 4; ++e) {
        const int f = (e + 1) % 4;
        if (!std::isfinite(c[e]) || !std::isfinite(c[f])) continue;
        if ((c[e] < level) != (c[f] < level)) {
          const double t = (level - c[e]) / (c[f] - c[e]);
          hits.push_back({static_cast<double>(i) + cx[e] + t * (cx[f] - cx[e]),
                          static_cast<double>(j) + cy[e] + t * (cy[f] - cy[e])});
        }
      }
      for (std::size_t h = 0; h + 1 < hits.size(); h += 2)
        o << "<line x1=\"" << svg::fmt(px(hits[h].first)) << "\" y1=\"" << svg::fmt(py(hits[h].second)) << "\" x2=\""
          << svg::fmt(px(hits[h + 1].first)) << "\" y2=\"" << svg::fmt(py(hits[h + 1].second))
          << "\" stroke=\"white\" stroke-width=\"1\"/>\n";
    }
}

}  // namespace detail

/// Heat map of log10 E over (tau, delta) for one kind, contours at 1e-4 .. 1e-1.
inline std::string landscape_svg(const SweepTable& table, const std::string& kind) {
  std::vector<double> taus, deltas;
  for (const auto& r : table.rows)
    if (r.point.kind == kind) {
      if (std::find(taus.begin(), taus.end(), r.point.tau) == taus.end()) taus.push_back(r.point.tau);
      if (std::find(deltas.begin(), deltas.end(), r.point.delta) == deltas.end()) deltas.push_back(r.point.delta);
    }
  if (taus.empty()) throw ValidationError("emit_plot: no rows for kind " + kind);
  std::sort(taus.begin(), taus.end());
  std::sort(deltas.begin(), deltas.end());
  std::vector<std::vector<double>> z(taus.size(), std::vector<double>(deltas.size(), NAN));
  for (const auto& r : table.rows)
    if (r.point.kind == kind && r.ok() && r.point.E > 0.0) {
      const auto i = static_cast<std::size_t>(std::find(taus.begin(), taus.end(), r.point.tau) - taus.begin());
      const auto j = static_cast<std::size_t>(std::find(deltas.begin(), deltas.end(), r.point.delta) - deltas.begin());
      z[i][j] = std::log10(r.point.E);
    }
  const double lo = -6.0, hi = 0.0;
  const double x0 = svg::kLeft, x1 = svg::kWidth - svg::kRight, y0 = svg::kHeight - svg::kBottom, y1 = svg::kTop;
  const double cw = (x1 - x0) / static_cast<double>(taus.size()), ch = (y0 - y1) / static_cast<double>(deltas.size());
  std::ostringstream o;
  svg::header(o, "log10 E, " + kind);
  for (std::size_t i = 0; i < taus.size(); ++i)
    for (std::size_t j = 0; j < deltas.size(); ++j) {
      const std::string fill = std::isfinite(z[i][j]) ? svg::ramp((z[i][j] - lo) / (hi - lo)) : "#cccccc";
      o << "<rect x=\"" << svg::fmt(x0 + static_cast<double>(i) * cw) << "\" y=\"" << svg::fmt(y0 - static_cast<double>(j + 1) * ch)
        << "\" width=\"" << svg::fmt(cw) << "\" height=\"" << svg::fmt(ch) << "\" fill=\"" << fill << "\"/>\n";
    }
  for (double level : {-4.0, -3.0, -2.0, -1.0}) detail::contour(o, z, level, cw, ch, x0, y0);
  for (std::size_t i = 0; i < taus.size(); ++i)
    o << "<text x=\"" << svg::fmt(x0 + (static_cast<double>(i) + 0.5) * cw) << "\" y=\"" << svg::fmt(y0 + 18)
      << "\" text-anchor=\"middle\">" << svg::label(units::s_to_us(taus[i])) << "</text>\n";
  for (std::size_t j = 0; j < deltas.size(); ++j)
    o << "<text x=\"" << svg::fmt(x0 - 8) << "\" y=\"" << svg::fmt(y0 - (static_cast<double>(j) + 0.5) * ch + 4)
      << "\" text-anchor=\"end\">" << svg::label(units::radps_to_hz(deltas[j])) << "</text>\n";
  o << "<text x=\"" << svg::fmt((x0 + x1) / 2) << "\" y=\"" << svg::fmt(svg::kHeight - 20)
    << "\" text-anchor=\"middle\">tau (us)</text>\n<text transform=\"translate(20," << svg::fmt((y0 + y1) / 2)
    << ") rotate(-90)\" text-anchor=\"middle\">delta/2pi (Hz)</text>\n";
  for (int k = 0; k <= 6; ++k) {
    const double v = lo + (hi - lo) * k / 6.0;
    o << "<rect x=\"" << svg::fmt(x1 + 20) << "\" y=\"" << svg::fmt(y0 - (k + 1) * 20.0) << "\" width=\"16\" height=\"20\" fill=\""
      << svg::ramp((v - lo) / (hi - lo)) << "\"/><text x=\"" << svg::fmt(x1 + 42) << "\" y=\"" << svg::fmt(y0 - k * 20.0 - 6)
      << "\">1e" << static_cast<int>(v) << "</text>\n";
  }
  o << "</svg>\n";
  return o.str();
}

/// Categorical map of the winning kind per (tau, delta) cell.
inline std::string map_svg(const BestPulseMap& m) {
  if (m.tau_grid.empty() || m.delta_grid.empty()) throw ValidationError("emit_plot: empty map");
  std::vector<std::string> kinds;
  for (const auto& row : m.winner)
    for (const auto& w : row)
      if (std::find(kinds.begin(), kinds.end(), w) == kinds.end()) kinds.push_back(w);
  std::sort(kinds.begin(), kinds.end());
  const double x0 = svg::kLeft, x1 = svg::kWidth - svg::kRight, y0 = svg::kHeight - svg::kBottom, y1 = svg::kTop;
  const double cw = (x1 - x0) / static_cast<double>(m.tau_grid.size()),
               ch = (y0 - y1) / static_cast<double>(m.delta_grid.size());
  auto color = [&](const std::string& k) {
    return svg::kPalette[static_cast<std::size_t>(std::find(kinds.begin(), kinds.end(), k) - kinds.begin()) %
                         svg::kPalette.size()];
  };
  std::ostringstream o;
  svg::header(o, "pulse with the smallest E");
  for (std::size_t i = 0; i < m.tau_grid.size(); ++i)
    for (std::size_t j = 0; j < m.delta_grid.size(); ++j)
      o << "<rect x=\"" << svg::fmt(x0 + static_cast<double>(i) * cw) << "\" y=\"" << svg::fmt(y0 - static_cast<double>(j + 1) * ch)
        << "\" width=\"" << svg::fmt(cw) << "\" height=\"" << svg::fmt(ch) << "\" fill=\"" << color(m.winner[i][j])
        << "\" stroke=\"white\"/>\n";
  for (std::size_t i = 0; i < m.tau_grid.size(); ++i)
    o << "<text x=\"" << svg::fmt(x0 + (static_cast<double>(i) + 0.5) * cw) << "\" y=\"" << svg::fmt(y0 + 18)
      << "\" text-anchor=\"middle\">" << svg::label(units::s_to_us(m.tau_grid[i])) << "</text>\n";
  for (std::size_t j = 0; j < m.delta_grid.size(); ++j)
    o << "<text x=\"" << svg::fmt(x0 - 8) << "\" y=\"" << svg::fmt(y0 - (static_cast<double>(j) + 0.5) * ch + 4)
      << "\" text-anchor=\"end\">" << svg::label(units::radps_to_hz(m.delta_grid[j])) << "</text>\n";
  o << "<text x=\"" << svg::fmt((x0 + x1) / 2) << "\" y=\"" << svg::fmt(svg::kHeight - 20)
    << "\" text-anchor=\"middle\">tau (us)</text>\n<text transform=\"translate(20," << svg::fmt((y0 + y1) / 2)
    << ") rotate(-90)\" text-anchor=\"middle\">delta/2pi (Hz)</text>\n";
  for (std::size_t k = 0; k < kinds.size(); ++k)
    o << "<rect x=\"" << svg::fmt(x1 + 12) << "\" y=\"" << svg::fmt(y1 + 18.0 * static_cast<double>(k)) << "\" width=\"12\" height=\"12\" fill=\""
      << color(kinds[k]) << "\"/><text x=\"" << svg::fmt(x1 + 30) << "\" y=\"" << svg::fmt(y1 + 10 + 18.0 * static_cast<double>(k))
      << "\">" << kinds[k] << "</text>\n";
  o << "</svg>\n";
  return o.str();
}

}  // namespace modeshape
