#pragma once

#include <algorithm>
#include <cmath>
#include <numeric>
#include <vector>

#include "srdo/errors.hpp"
#include "srdo/types.hpp"

namespace srdo {

struct SymmetricEigen {
  Vector values;   // ascending
  Matrix vectors;  // orthonormal columns, vectors.col(k) pairs with values[k]
};

namespace detail {

inline void check_symmetric(const Matrix& S, double tol = 1e-9) {
  if (S.rows() != S.cols()) throw NotSymmetric();
  for (Eigen::Index i = 0; i < S.rows(); ++i)
    for (Eigen::Index j = i + 1; j < S.cols(); ++j)
      if (std::abs(S(i, j) - S(j, i)) > tol) throw NotSymmetric();
}

inline double offdiag_norm(const Matrix& A) {
  double sum = 0.0;
  for (Eigen::Index i = 0; i < A.rows(); ++i)
    for (Eigen::Index j = 0; j < A.cols(); ++j)
      if (i != j) sum += A(i, j) * A(i, j);
  return std::sqrt(sum);
}

}  // namespace detail

/// Eigen-decomposition of a symmetric matrix by cyclic Jacobi sweeps.
///
/// Deterministic: the rotation order is fixed (row-major upper triangle), so a
/// given input always produces bit-identical output. Converges when the
/// off-diagonal Frobenius norm drops below `tol * max(1, ||S||_F)`. Intended
/// for p up to a few hundred.
inline SymmetricEigen jacobi_eigen(const Matrix& S, double tol = 1e-12, int max_sweeps = 100) {
  detail::check_symmetric(S);
  const Eigen::Index p = S.rows();
  Matrix A = (S + S.transpose()) / 2.0;  // exact symmetry for the sweeps
  Matrix V = Matrix::Identity(p, p);
  const double scale = std::max(1.0, A.norm());

  for (int sweep = 0; sweep < max_sweeps && detail::offdiag_norm(A) > tol * scale; ++sweep) {
    for (Eigen::Index q = 1; q < p; ++q) {
      for (Eigen::Index r = 0; r < q; ++r) {
        const double apq = A(r, q);
        if (std::abs(apq) <= 1e-300) continue;
        const double theta = (A(q, q) - A(r, r)) / (2.0 * apq);
        const double t = (theta >= 0.0 ? 1.0 : -1.0) /
                         (std::abs(theta) + std::sqrt(theta * theta + 1.0));
        const double c = 1.0 / std::sqrt(t * t + 1.0);
        const double s = t * c;

        for (Eigen::Index k = 0; k < p; ++k) {
          const double akr = A(k, r), akq = A(k, q);
          A(k, r) = c * akr - s * akq;
          A(k, q) = s * akr + c * akq;
        }
        for (Eigen::Index k = 0; k < p; ++k) {
          const double ark = A(r, k), aqk = A(q, k);
          A(r, k) = c * ark - s * aqk;
          A(q, k) = s * ark + c * aqk;
        }
        for (Eigen::Index k = 0; k < p; ++k) {
          const double vkr = V(k, r), vkq = V(k, q);
          V(k, r) = c * vkr - s * vkq;
          V(k, q) = s * vkr + c * vkq;
        }
      }
    }
  }

  std::vector<Eigen::Index> order(p);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](Eigen::Index a, Eigen::Index b) { return A(a, a) < A(b, b); });

  SymmetricEigen out;
  out.values.resize(p);
  out.vectors.resize(p, p);
  for (Eigen::Index k = 0; k < p; ++k) {
    out.values[k] = A(order[k], order[k]);
    out.vectors.col(k) = V.col(order[k]);
  }
  return out;
}

/// Minimum eigenvalue of a symmetric matrix (symmetry checked within 1e-9).
inline double smallest_eigenvalue(const Matrix& S) { return jacobi_eigen(S).values[0]; }

/// Lower-triangular Cholesky factor; throws NotPositiveDefinite when a pivot
/// falls at or below 1e-12.
inline Matrix cholesky_lower(const Matrix& S) {
  detail::check_symmetric(S);
  const Eigen::Index p = S.rows();
  Matrix L = Matrix::Zero(p, p);
  for (Eigen::Index j = 0; j < p; ++j) {
    double d = S(j, j);
    for (Eigen::Index k = 0; k < j; ++k) d -= L(j, k) * L(j, k);
    if (d <= 1e-12) throw NotPositiveDefinite();
    L(j, j) = std::sqrt(d);
    for (Eigen::Index i = j + 1; i < p; ++i) {
      double v = S(i, j);
      for (Eigen::Index k = 0; k < j; ++k) v -= L(i, k) * L(j, k);
      L(i, j) = v / L(j, j);
    }
  }
  return L;
}

}  // namespace srdo
