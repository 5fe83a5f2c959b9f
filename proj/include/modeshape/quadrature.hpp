#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <complex>
#include <cstddef>
#include <limits>
#include <queue>
#include <vector>

#include "modeshape/errors.hpp"

namespace modeshape::quadrature {

struct Options {
  double rel_tol = 1e-13;
  double abs_tol = 0.0;
  /// Uniform pre-partition; oscillatory integrands need at least one panel per half period.
  std::size_t initial_panels = 1;
  std::size_t max_intervals = 1u << 20;
};

struct Result {
  std::complex<double> value;
  double error = 0.0;
  std::size_t evaluations = 0;
};

namespace detail {

// 15-point Kronrod extension of the 7-point Gauss rule (abscissae on [-1, 1]).
inline constexpr std::array<double, 8> kXk = {
    0.991455371120812639206854697526329, 0.949107912342758524526189684047851,
    0.864864423359769072789712788640926, 0.741531185599394439863864773280788,
    0.586087235467691130294144845693013, 0.405845151377397166906606412076961,
    0.207784955007898467600689403773245, 0.000000000000000000000000000000000};
inline constexpr std::array<double, 8> kWk = {
    0.022935322010529224963732008058970, 0.063092092629978553290700663189204,
    0.104790010322250183839876322541518, 0.140653259715525918745189590510238,
    0.169004726639267902826583426598550, 0.190350578064785409913256402421014,
    0.204432940075298892414161999234649, 0.209482141084727828012999174891714};
inline constexpr std::array<double, 4> kWg = {
    0.129484966168869693270611432679082, 0.279705391489276667901467771423780,
    0.381830050505118944950369775488975, 0.417959183673469387755102040816327};

struct Interval {
  double a, b;
  std::complex<double> value;
  double error;
  double magnitude;  // integral of |f|, for the round-off floor
  bool operator<(const Interval& o) const { return error < o.error; }
};

template <class F>
Interval gk15(F& f, double a, double b) {
  const double c = 0.5 * (a + b);
  const double h = 0.5 * (b - a);
  const std::complex<double> fc = f(c);
  std::complex<double> kron = fc * kWk[7];
  std::complex<double> gauss = fc * kWg[3];
  double mag = std::abs(fc) * kWk[7];
  for (std::size_t i = 0; i < 7; ++i) {
    const double dx = h * kXk[i];
    const std::complex<double> f1 = f(c - dx);
    const std::complex<double> f2 = f(c + dx);
    kron += (f1 + f2) * kWk[i];
    mag += (std::abs(f1) + std::abs(f2)) * kWk[i];
    if (i % 2 == 1) gauss += (f1 + f2) * kWg[i / 2];
  }
  return {a, b, kron * h, std::abs((kron - gauss) * h), mag * std::abs(h)};
}

}  // namespace detail

/// Globally adaptive Gauss-Kronrod (7/15) integration of a complex integrand.
///
/// Stops when the summed error estimate drops below max(abs_tol, rel_tol*|I|,
/// 50 eps int|f|) or when every remaining interval is at its own round-off floor.
template <class F>
Result integrate(F&& f, double a, double b, const Options& opt = {}) {
  const double eps = std::numeric_limits<double>::epsilon();
  std::priority_queue<detail::Interval> heap;
  std::vector<detail::Interval> settled;
  std::size_t evals = 0;
  const std::size_t panels = std::max<std::size_t>(1, opt.initial_panels);
  for (std::size_t k = 0; k < panels; ++k) {
    const double lo = a + (b - a) * static_cast<double>(k) / static_cast<double>(panels);
    const double hi = k + 1 == panels ? b : a + (b - a) * static_cast<double>(k + 1) / static_cast<double>(panels);
    heap.push(detail::gk15(f, lo, hi));
    evals += 15;
  }

  auto floor_of = [&](const detail::Interval& iv) { return 50.0 * eps * iv.magnitude; };
  auto totals = [&](std::complex<double>& value, double& err, double& mag) {
    value = {};
    err = 0.0;
    mag = 0.0;
    auto copy = heap;
    while (!copy.empty()) {
      value += copy.top().value;
      err += copy.top().error;
      mag += copy.top().magnitude;
      copy.pop();
    }
    for (const auto& s : settled) {
      value += s.value;
      err += s.error;
      mag += s.magnitude;
    }
  };

  std::complex<double> value{};
  double err = 0.0;
  double mag = 0.0;
  totals(value, err, mag);
  while (!heap.empty()) {
    // a result that cancels far below int |f| cannot be resolved past the round-off of int |f|
    const double target = std::max({opt.abs_tol, opt.rel_tol * std::abs(value), 50.0 * eps * mag});
    if (err <= target) break;
    detail::Interval worst = heap.top();
    heap.pop();
    if (worst.error <= floor_of(worst) || worst.b - worst.a <= 8.0 * eps * std::max(std::abs(worst.a), std::abs(worst.b))) {
      settled.push_back(worst);
      continue;
    }
    if (heap.size() + settled.size() >= opt.max_intervals) {
      heap.push(worst);
      throw ConvergenceError("quadrature: interval budget exhausted", err);
    }
    const double mid = 0.5 * (worst.a + worst.b);
    auto left = detail::gk15(f, worst.a, mid);
    auto right = detail::gk15(f, mid, worst.b);
    evals += 30;
    value += left.value + right.value - worst.value;
    err += left.error + right.error - worst.error;
    mag += left.magnitude + right.magnitude - worst.magnitude;
    heap.push(left);
    heap.push(right);
  }
  // re-sum: the running totals above accumulate cancellation error
  totals(value, err, mag);
  return {value, err, evals};
}

}  // namespace modeshape::quadrature
