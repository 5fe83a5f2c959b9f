#pragma once

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstddef>
#include <cstdio>
#include <iostream>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

#include "modeshape/errors.hpp"
#include "modeshape/linalg.hpp"
#include "modeshape/magnus.hpp"
#include "modeshape/modes.hpp"
#include "modeshape/pulses.hpp"
#include "modeshape/units.hpp"

namespace modeshape {

using ModePair = std::pair<std::size_t, std::size_t>;

inline constexpr double kDefaultWindow = units::khz_to_radps(50.0);
inline constexpr double kNullTolerance = 1e-12;
/// Singular-value cut (relative to tau^2) for the second-order kernel null directions.
inline constexpr double kSecondOrderTolerance = 1e-9;

struct ShapeRequest {
  ModeSpec spec;
  std::size_t target = 0;
  double tau = 0.0;    // s
  double alpha = 1.0;  // target |Theta_{p*}|
  int moment = 0;      // K
  double window = kDefaultWindow;
  std::vector<ModePair> second_order_pairs;

  void validate() const {
    if (target >= spec.n_modes) throw ValidationError("target: mode index out of range");
    if (!(alpha > 0.0)) throw ValidationError("alpha: must be positive");
    if (moment < 0 || moment > kMaxDerivativeOrder)
      throw ValidationError("moment: must be in [0, " + std::to_string(kMaxDerivativeOrder) + "]");
    if (!(tau > 0.0)) throw ValidationError("tau: must be positive");
    if (!(window >= 0.0)) throw ValidationError("window: must be non-negative");
  }
};

struct PulseSolution {
  Pulse pulse;
  double alpha = 0.0;  // achieved |Theta_{p*}|
  int moment = 0;
  std::size_t target = 0;
  std::size_t basis_size = 0;
  std::size_t constraint_rows = 0;
  std::size_t constraint_rank = 0;
  std::size_t null_space_dim = 0;
  bool rank_deficient = false;
  double lambda_max = 0.0;
  /// max_{p != p*} |Theta_p| / alpha
  double cmc_max = 0.0;
  /// max_{p, 1<=kappa<=K} |d^kappa Theta_p| / (alpha tau^kappa)
  double deriv_max = 0.0;
  MagnusReport diagnostics;
};

/// Rows: (N'-1) zeroth-order rows for p != p*, then K*N' derivative rows
/// ordered kappa-major. Row kappa is divided by tau^(kappa+1) so every row is O(1);
/// that leaves the null space unchanged. Nominal frequencies only; eta is never read.
inline Eigen::MatrixXcd build_constraint_matrix(const ModeSpec& spec, const BasisGrid& grid, std::size_t target,
                                                int moment) {
  if (target >= spec.n_modes) throw ValidationError("target: mode index out of range");
  const auto n_modes = static_cast<Eigen::Index>(spec.n_modes);
  const Eigen::Index rows = (n_modes - 1) + static_cast<Eigen::Index>(moment) * n_modes;
  const auto cols = static_cast<Eigen::Index>(grid.size());
  const double tau = grid.tau;
  Eigen::MatrixXcd m(rows, cols);
  Eigen::Index r = 0;
  for (std::size_t p = 0; p < spec.n_modes; ++p) {
    if (p == target) continue;
    for (Eigen::Index c = 0; c < cols; ++c) {
      const double w = spec.omega[p] - units::kTwoPi * static_cast<double>(grid.indices[static_cast<std::size_t>(c)]) / tau;
      m(r, c) = phase_integral(w, 0, tau) / tau;
    }
    ++r;
  }
  for (int k = 1; k <= moment; ++k) {
    const double scale = std::pow(tau, k + 1);
    for (std::size_t p = 0; p < spec.n_modes; ++p, ++r)
      for (Eigen::Index c = 0; c < cols; ++c) {
        const double w = spec.omega[p] - units::kTwoPi * static_cast<double>(grid.indices[static_cast<std::size_t>(c)]) / tau;
        m(r, c) = phase_integral(w, k, tau) / scale;
      }
  }
  return m;
}

/// v with Theta_{p*} = v^H A.
inline Eigen::VectorXcd target_row(const ModeSpec& spec, const BasisGrid& grid, std::size_t target) {
  Eigen::VectorXcd v(static_cast<Eigen::Index>(grid.size()));
  for (std::size_t c = 0; c < grid.size(); ++c) {
    const double w = spec.omega[target] - units::kTwoPi * static_cast<double>(grid.indices[c]) / grid.tau;
    v(static_cast<Eigen::Index>(c)) = std::conj(phase_integral(w, 0, grid.tau));
  }
  return v;
}

/// Subspace of coefficient vectors whose second-order integrals vanish for every
/// requested off-diagonal pair, intersected with `first_order`.
///
/// For a pair the integral is the form sum A_n K_nn' conj(A_n'); with y = conj(A)
/// it reads y^H K y, which vanishes (together with its conjugate) whenever K y = 0.
/// The near-null right singular vectors of K, conjugated back, are intersected.
inline Eigen::MatrixXcd null_second_order(const ModeSpec& spec, const BasisGrid& grid, std::size_t target,
                                          const std::vector<ModePair>& pairs,
                                          const Eigen::MatrixXcd& first_order,
                                          double tol = kSecondOrderTolerance) {
  Eigen::MatrixXcd space = first_order;
  const double tau2 = grid.tau * grid.tau;
  for (const auto& [p, q] : pairs) {
    if (p >= spec.n_modes || q >= spec.n_modes) throw ValidationError("pair: mode index out of range");
    if (p == q)
      throw ValidationError("pair (" + std::to_string(p) + "," + std::to_string(q) +
                            "): second-order kernel is positive-definite for diagonal pairs and has no "
                            "sufficiently small singular values");
    (void)target;
    const Eigen::MatrixXcd k = theta2_kernel(grid.indices, grid.tau, spec, p, q) / tau2;
    Eigen::BDCSVD<Eigen::MatrixXcd> svd(k, Eigen::ComputeFullV);
    const auto& sv = svd.singularValues();
    Eigen::Index keep = 0;
    for (Eigen::Index i = 0; i < sv.size(); ++i)
      if (sv(i) <= tol) ++keep;
    if (keep == 0)
      throw InfeasibleError("pair (" + std::to_string(p) + "," + std::to_string(q) +
                            "): second-order kernel has no singular values below threshold");
    const Eigen::MatrixXcd pair_space = svd.matrixV().rightCols(keep).conjugate();
    space = intersect_subspaces(space, pair_space);
    if (space.cols() == 0) throw InfeasibleError("second-order nulling: empty subspace intersection");
  }
  return space;
}

namespace detail {

/// Rotates the first non-negligible coefficient onto the positive real axis.
inline void fix_global_phase(Eigen::VectorXcd& a) {
  const double big = a.cwiseAbs().maxCoeff();
  for (Eigen::Index i = 0; i < a.size(); ++i)
    if (std::abs(a(i)) > 1e-12 * big) {
      a *= std::conj(a(i)) / std::abs(a(i));
      a(i) = std::abs(a(i));
      return;
    }
}

}  // namespace detail

struct SolveOptions {
  bool theta2_diagnostics = true;
};

/// Basis -> constraints -> null space -> signal maximization.
inline PulseSolution solve_pulse(const ShapeRequest& req, const SolveOptions& opt = {}) {
  req.validate();
  const auto& spec = req.spec;
  const std::size_t rows = (spec.n_modes - 1) + static_cast<std::size_t>(req.moment) * spec.n_modes;
  // Four spare directions beyond the constraint count.
  const BasisGrid grid = build_basis(req.tau, spec, req.window, rows + 4);

  const Eigen::MatrixXcd m = build_constraint_matrix(spec, grid, req.target, req.moment);
  NullSpace ns = null_space(m, kNullTolerance);
  Eigen::MatrixXcd space = ns.basis;
  if (ns.rank < rows)
    std::clog << "warning: constraint matrix is rank deficient (rank " << ns.rank << " of " << rows << " rows)\n";
  if (!req.second_order_pairs.empty())
    space = null_second_order(spec, grid, req.target, req.second_order_pairs, space);

  const Eigen::VectorXcd v = target_row(spec, grid, req.target);
  SignalMax sig = maximize_signal(space, v, req.alpha);
  detail::fix_global_phase(sig.coeffs);

  PulseSolution sol;
  sol.pulse = Pulse(req.tau, grid.indices, std::vector<cplx>(sig.coeffs.data(), sig.coeffs.data() + sig.coeffs.size()));
  sol.moment = req.moment;
  sol.target = req.target;
  sol.basis_size = grid.size();
  sol.constraint_rows = rows;
  sol.constraint_rank = ns.rank;
  sol.rank_deficient = ns.rank < rows;
  sol.null_space_dim = static_cast<std::size_t>(space.cols());
  sol.lambda_max = sig.lambda_max;

  ModeSpec nominal = spec;
  nominal.delta.assign(spec.n_modes, 0.0);
  sol.diagnostics = magnus_report(sol.pulse, nominal, req.moment, opt.theta2_diagnostics);
  sol.alpha = std::abs(sol.diagnostics.theta1[req.target]);
  for (std::size_t p = 0; p < spec.n_modes; ++p) {
    if (p != req.target) sol.cmc_max = std::max(sol.cmc_max, std::abs(sol.diagnostics.theta1[p]) / req.alpha);
    for (int k = 1; k <= req.moment; ++k)
      sol.deriv_max = std::max(sol.deriv_max, std::abs(sol.diagnostics.theta1_derivs(static_cast<Eigen::Index>(p), k - 1)) /
                                                  (req.alpha * std::pow(req.tau, k)));
  }
  return sol;
}

inline nlohmann::json to_json(const PulseSolution& s) {
  nlohmann::json doc;
  doc["pulse"] = to_json(s.pulse);
  doc["alpha"] = s.alpha;
  doc["moment"] = s.moment;
  doc["target"] = s.target;
  doc["basis_size"] = s.basis_size;
  doc["null_space_dim"] = s.null_space_dim;
  doc["constraint_rank"] = s.constraint_rank;
  doc["rank_deficient"] = s.rank_deficient;
  doc["lambda_max"] = s.lambda_max;
  doc["a_bar_radps"] = average_rabi(s.pulse);
  doc["residuals"] = {{"cmc_max", s.cmc_max}, {"deriv_max", s.deriv_max}};
  auto t1 = nlohmann::json::array();
  for (const auto& v : s.diagnostics.theta1) t1.push_back({v.real(), v.imag()});
  auto t2 = nlohmann::json::array();
  for (Eigen::Index p = 0; p < s.diagnostics.theta2.rows(); ++p) {
    auto row = nlohmann::json::array();
    for (Eigen::Index q = 0; q < s.diagnostics.theta2.cols(); ++q)
      row.push_back({s.diagnostics.theta2(p, q).real(), s.diagnostics.theta2(p, q).imag()});
    t2.push_back(row);
  }
  doc["diagnostics"] = {{"theta1", t1}, {"theta2", t2}};
  return doc;
}

}  // namespace modeshape
