#include <catch_amalgamated.hpp>

#include <random>

#include "modeshape/pulses.hpp"
#include "modeshape/quadrature.hpp"
#include "modeshape/shaper.hpp"

using namespace modeshape;
using Catch::Matchers::WithinAbs;
using Catch::Matchers::WithinRel;

TEST_CASE("square pulse", "[pulses]") {
  const ModeSpec spec = table1_spec();
  const double tau = 100e-6, amp = 1e4;
  const Pulse p = square_pulse(amp, spec.omega[2], 0.0, tau);
  CHECK_THAT(average_rabi(p), WithinRel(amp, 1e-15));
  for (double t : {0.0, 13e-6, 57.3e-6, tau}) {
    const cplx expected = amp * std::polar(1.0, -spec.omega[2] * t);
    CHECK(std::abs(p.evaluate(t) - expected) < 1e-9 * amp);
  }
  const Pulse zero = square_pulse(0.0, spec.omega[2], 0.0, tau);
  CHECK(std::abs(zero.evaluate(42e-6)) == 0.0);

  const Pulse flipped = square_pulse(amp, spec.omega[2], std::numbers::pi, tau);
  for (double t : {0.0, 31e-6, 77e-6}) CHECK_THAT(std::abs(flipped.evaluate(t)), WithinRel(std::abs(p.evaluate(t)), 1e-14));
}

TEST_CASE("square pulse lands on the grid when commensurate", "[pulses]") {
  const double tau = 100e-6;
  const Pulse on = square_pulse(1.0, units::kTwoPi * 300 / tau, 0.0, tau);
  CHECK(on.on_grid());
  REQUIRE(on.indices() == std::vector<long>{300});
  const Pulse off = square_pulse(1.0, units::kTwoPi * 300.5 / tau, 0.0, tau);
  CHECK_FALSE(off.on_grid());
  REQUIRE(off.tones().size() == 1);
}

TEST_CASE("evaluate examples", "[pulses]") {
  const double tau = 1e-4;
  CHECK(std::abs(Pulse(tau, {}, {}).evaluate(3e-5)) == 0.0);
  const cplx a{0.3, -1.7};
  CHECK(Pulse(tau, {7}, {a}).evaluate(0.0) == a);
  const long n = 5;
  const Pulse pair(tau, {-n, n}, {a, a});
  CHECK(std::abs(pair.evaluate(tau / (4.0 * n))) < 1e-14);
  CHECK_THROWS_AS(pair.evaluate(-1e-9), std::domain_error);
}

TEST_CASE("evaluate agrees with direct summation", "[pulses]") {
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  const double tau = 250e-6;
  const std::vector<long> idx{700, 701, 703, 710, 760};
  std::vector<cplx> c;
  for (std::size_t i = 0; i < idx.size(); ++i) c.emplace_back(u(rng), u(rng));
  const Pulse p(tau, idx, c, {Tone{1.234e7, {0.5, 0.1}}});
  for (int k = 0; k <= 10; ++k) {
    const double t = tau * k / 10.0;
    cplx direct{};
    for (std::size_t i = 0; i < idx.size(); ++i) direct += c[i] * std::polar(1.0, -units::kTwoPi * idx[i] * t / tau);
    direct += cplx{0.5, 0.1} * std::polar(1.0, -1.234e7 * t);
    CHECK(std::abs(p.evaluate(t) - direct) < 1e-11);
  }
}

TEST_CASE("evaluate is linear in the coefficients", "[pulses]") {
  const double tau = 1e-4;
  const std::vector<long> idx{290, 300, 310};
  const std::vector<cplx> a{{1, 2}, {-0.5, 0.1}, {0, 3}}, b{{0.2, 0}, {4, -1}, {1, 1}};
  std::vector<cplx> ab;
  const cplx s{0.7, -0.3};
  for (std::size_t i = 0; i < 3; ++i) ab.push_back(a[i] + s * b[i]);
  const Pulse pa(tau, idx, a), pb(tau, idx, b), pab(tau, idx, ab);
  for (double t : {0.0, 1.1e-5, 6.6e-5})
    CHECK(std::abs(pab.evaluate(t) - (pa.evaluate(t) + s * pb.evaluate(t))) < 1e-12);
}

TEST_CASE("average_rabi", "[pulses]") {
  CHECK_THAT(average_rabi(Pulse(1e-4, {1, 2}, {cplx{3, 0}, cplx{0, 4}})), WithinRel(5.0, 1e-15));
  const std::vector<cplx> c{{1, 1}, {2, -3}, {0.5, 0}};
  std::vector<cplx> rotated;
  for (std::size_t i = 0; i < c.size(); ++i) rotated.push_back(c[i] * std::polar(1.0, 0.9 * i + 0.3));
  CHECK_THAT(average_rabi(Pulse(1e-4, {1, 2, 3}, rotated)), WithinRel(average_rabi(Pulse(1e-4, {1, 2, 3}, c)), 1e-14));
}

TEST_CASE("solved moment-0 pulse has square-like power", "[pulses]") {
  ShapeRequest r;
  r.spec = table1_spec();
  r.target = 2;
  r.tau = 100e-6;
  r.alpha = 1.0;
  const auto sol = solve_pulse(r);
  CHECK_THAT(average_rabi(sol.pulse), WithinRel(1.0 / r.tau, 0.2));
}

TEST_CASE("Parseval consistency", "[pulses]") {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  const double tau = 100e-6;
  const auto grid = build_basis(tau, table1_spec(), kDefaultWindow);
  std::vector<cplx> c;
  for (std::size_t i = 0; i < grid.size(); ++i) c.emplace_back(u(rng), u(rng));
  const Pulse p(tau, grid.indices, c);
  auto f = [&](double t) { return cplx(std::norm(p.evaluate(t)), 0.0); };
  quadrature::Options opt;
  opt.initial_panels = 64;
  opt.rel_tol = 1e-12;
  const double mean_power = quadrature::integrate(f, 0.0, tau, opt).value.real() / tau;
  const double abar = average_rabi(p);
  CHECK_THAT(mean_power, WithinRel(abar * abar, 1e-8));
}

TEST_CASE("build_basis window arithmetic", "[pulses]") {
  const ModeSpec spec = table1_spec();
  const auto g = build_basis(100e-6, spec, units::khz_to_radps(50.0));
  REQUIRE(g.size() == 27);
  CHECK(g.indices.front() == 291);
  CHECK(g.indices.back() == 317);

  const auto g2 = build_basis(200e-6, spec, units::khz_to_radps(50.0));
  CHECK(g2.size() >= 2 * g.size() - 2);
  CHECK(g2.size() <= 2 * g.size() + 2);

  const auto g0 = build_basis(100e-6, spec, 0.0);
  CHECK(g0.indices.front() == 296);
  CHECK(g0.indices.back() == 312);
  for (long n : g0.indices) {
    const double w = units::kTwoPi * n / 100e-6;
    CHECK(w >= spec.omega.front());
    CHECK(w <= spec.omega.back());
  }
}

TEST_CASE("build_basis reports the minimum feasible tau", "[pulses]") {
  const ModeSpec spec = table1_spec();
  try {
    build_basis(5e-6, spec, kDefaultWindow, 15);
    FAIL("expected SizingError");
  } catch (const SizingError& e) {
    REQUIRE(e.min_tau() > 5e-6);
    CHECK(build_basis(e.min_tau() * (1 + 1e-9), spec, kDefaultWindow).size() >= 15);
  }
}

TEST_CASE("pulse validation and file round-trip", "[pulses]") {
  CHECK_THROWS_AS(Pulse(0.0, {}, {}), ValidationError);
  CHECK_THROWS_AS(Pulse(1e-4, {2, 1}, {1.0, 1.0}), ValidationError);
  CHECK_THROWS_AS(Pulse(1e-4, {1, 1}, {1.0, 1.0}), ValidationError);
  CHECK_THROWS_AS(Pulse(1e-4, {1}, {1.0, 2.0}), ValidationError);
  CHECK_THROWS_AS(Pulse(1e-4, {1}, {cplx(std::nan(""), 0)}), ValidationError);

  const Pulse p(123e-6, {10, 12}, {cplx{0.1, -0.2}, cplx{1e3, 7.25}}, {Tone{2e7, {3, 4}}});
  const Pulse back = pulse_from_json(nlohmann::json::parse(to_json(p).dump()));
  CHECK_THAT(back.tau(), WithinRel(p.tau(), 1e-15));
  CHECK(back.indices() == p.indices());
  CHECK(back.coeffs() == p.coeffs());
  REQUIRE(back.tones().size() == 1);
  CHECK_THAT(back.tones()[0].omega, WithinRel(2e7, 1e-15));
}

TEST_CASE("spectrum and time-series exports", "[pulses]") {
  const Pulse p(100e-6, {300}, {cplx{0, 2}});
  std::ostringstream spec_csv, ts_csv;
  write_spectrum_csv(p, spec_csv);
  write_timeseries_csv(p, ts_csv, 4);
  CHECK(spec_csv.str().rfind("f_n_hz,abs_A,arg_A\n", 0) == 0);
  CHECK(spec_csv.str().find(",2,") != std::string::npos);
  std::istringstream lines(ts_csv.str());
  std::string line;
  int count = 0;
  while (std::getline(lines, line)) ++count;
  CHECK(count == 6);
  CHECK_THAT(std::abs(p.evaluate(50e-6)), WithinAbs(2.0, 1e-12));
}
