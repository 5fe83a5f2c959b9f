#pragma once

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstddef>

#include <Eigen/Dense>
#include <Eigen/SVD>

#include "modeshape/errors.hpp"

namespace modeshape {

struct NullSpace {
  Eigen::MatrixXcd basis;  // orthonormal columns
  std::size_t rank = 0;
  Eigen::VectorXd singular_values;
};

/// Right null space of `m` from its SVD; directions with sigma <= tol * sigma_max are kept.
/// Columns come out in the SVD's fixed order (descending sigma of the rank part, then the rest).
inline NullSpace null_space(const Eigen::MatrixXcd& m, double tol = 1e-12) {
  if (m.cols() == 0) throw ValidationError("null_space: matrix has no columns");
  NullSpace out;
  if (m.rows() == 0) {
    out.basis = Eigen::MatrixXcd::Identity(m.cols(), m.cols());
    return out;
  }
  Eigen::BDCSVD<Eigen::MatrixXcd> svd(m, Eigen::ComputeFullV);
  out.singular_values = svd.singularValues();
  const double smax = out.singular_values.size() > 0 ? out.singular_values(0) : 0.0;
  std::size_t rank = 0;
  for (Eigen::Index i = 0; i < out.singular_values.size(); ++i)
    if (out.singular_values(i) > tol * smax) ++rank;
  out.rank = rank;
  const auto r = static_cast<Eigen::Index>(rank);
  out.basis = svd.matrixV().rightCols(m.cols() - r);
  if (out.basis.cols() == 0) throw InfeasibleError("null space is empty; increase tau or the basis window");
  return out;
}

/// Orthonormal basis of span(s1) ∩ span(s2) from the null space of [s1 | -s2].
/// Returns a zero-column matrix when the spans meet only at the origin.
inline Eigen::MatrixXcd intersect_subspaces(const Eigen::MatrixXcd& s1, const Eigen::MatrixXcd& s2,
                                            double tol = 1e-10) {
  if (s1.cols() == 0 || s2.cols() == 0) throw ValidationError("intersect_subspaces: empty column set");
  if (s1.rows() != s2.rows()) throw ValidationError("intersect_subspaces: row dimensions differ");
  const Eigen::Index n = s1.rows();
  Eigen::MatrixXcd u(n, s1.cols() + s2.cols());
  u << s1, -s2;
  Eigen::BDCSVD<Eigen::MatrixXcd> svd(u, Eigen::ComputeFullV);
  const auto& sv = svd.singularValues();
  const double smax = sv.size() > 0 ? sv(0) : 0.0;
  Eigen::Index rank = 0;
  for (Eigen::Index i = 0; i < sv.size(); ++i)
    if (sv(i) > tol * smax) ++rank;
  const Eigen::Index dim = u.cols() - rank;
  if (dim <= 0) return Eigen::MatrixXcd(n, 0);
  const Eigen::MatrixXcd nulls = svd.matrixV().rightCols(dim);
  const Eigen::MatrixXcd vecs = s1 * nulls.topRows(s1.cols());
  // re-orthonormalize; the s1 half of each null vector need not have unit norm
  Eigen::BDCSVD<Eigen::MatrixXcd> orth(vecs, Eigen::ComputeThinU);
  return orth.matrixU().leftCols(std::min<Eigen::Index>(dim, vecs.cols()));
}

struct SignalMax {
  Eigen::VectorXcd coeffs;
  double lambda_max = 0.0;
};

/// Largest |v^H A| at fixed ||A|| over span(null_basis), rescaled so |v^H A| = alpha.
///
/// N^H v v^H N is rank one, so its top eigenvector is N^H v / ||N^H v|| with
/// eigenvalue ||N^H v||^2.
inline SignalMax maximize_signal(const Eigen::MatrixXcd& null_basis, const Eigen::VectorXcd& v, double alpha) {
  if (null_basis.rows() != v.size()) throw ValidationError("maximize_signal: dimension mismatch");
  if (!(alpha > 0.0)) throw ValidationError("alpha: must be positive");
  const Eigen::VectorXcd proj = null_basis.adjoint() * v;
  const double lambda = proj.squaredNorm();
  // below this the pulse power exceeds the square pulse by 1e4 and the overlap is null-space noise
  if (!(lambda > 1e-8 * v.squaredNorm()))
    throw InfeasibleError("no signal: target row is annihilated by the constraints");
  const Eigen::VectorXcd xi = proj / std::sqrt(lambda);
  return {(alpha / std::sqrt(lambda)) * (null_basis * xi), lambda};
}

}  // namespace modeshape
