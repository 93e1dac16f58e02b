#pragma once

#include "kdq/common.hpp"

#include <Eigen/Eigenvalues>
#include <cmath>

namespace kdq {

// Lower-triangular Cholesky factor of a symmetric matrix, together with the
// diagnostics downstream code needs: whether the factorization ran to
// completion, the first pivot that failed if not, and the diagonal jitter that
// was in effect.  `jitter` is the absolute value added to every diagonal
// entry; `rung` indexes the ladder step that produced it (0 means none).
struct CholeskyFactor {
  Matrix L;
  bool ok = false;
  Eigen::Index failedPivot = -1;
  double jitter = 0.0;
  int rung = 0;

  // Solves (L L') x = b.  Only valid when ok.
  [[nodiscard]] Vector solve(const Vector& b) const {
    Vector x = L.triangularView<Eigen::Lower>().solve(b);
    L.triangularView<Eigen::Lower>().transpose().solveInPlace(x);
    return x;
  }

  [[nodiscard]] Matrix solveMatrix(const Matrix& B) const {
    Matrix X = L.triangularView<Eigen::Lower>().solve(B);
    L.triangularView<Eigen::Lower>().transpose().solveInPlace(X);
    return X;
  }

  [[nodiscard]] double logDet() const {
    return 2.0 * L.diagonal().array().log().sum();
  }
};

// Plain lower Cholesky without pivoting.  Stops at the first diagonal pivot
// that is not strictly positive and finite, reporting its index; the returned
// factor is unusable in that case.
inline CholeskyFactor choleskyLower(Matrix a) {
  const Eigen::Index n = a.rows();
  CholeskyFactor f;
  for (Eigen::Index j = 0; j < n; ++j) {
    double d = a(j, j);
    for (Eigen::Index k = 0; k < j; ++k) d -= a(j, k) * a(j, k);
    if (!(d > 0.0) || !std::isfinite(d)) {
      f.ok = false;
      f.failedPivot = j;
      return f;
    }
    const double root = std::sqrt(d);
    a(j, j) = root;
    for (Eigen::Index i = j + 1; i < n; ++i) {
      double s = a(i, j);
      for (Eigen::Index k = 0; k < j; ++k) s -= a(i, k) * a(j, k);
      a(i, j) = s / root;
    }
  }
  f.L = a.triangularView<Eigen::Lower>();
  f.ok = true;
  f.failedPivot = -1;
  return f;
}

// Jitter ladder relative to the mean diagonal entry.  The first rung adds
// nothing; later rungs add 1e-12, 1e-10, 1e-8 times the mean diagonal.  The
// first rung whose factorization completes wins and is recorded in the
// result.  If every rung fails, the returned factor carries the failing pivot
// of the unjittered attempt.
inline CholeskyFactor choleskyWithJitter(const Matrix& a) {
  static constexpr double kLadder[] = {0.0, 1e-12, 1e-10, 1e-8};
  const double meanDiag = a.rows() > 0 ? a.diagonal().mean() : 0.0;
  CholeskyFactor first;
  for (int r = 0; r < 4; ++r) {
    const double jitter = kLadder[r] * std::abs(meanDiag);
    Matrix shifted = a;
    shifted.diagonal().array() += jitter;
    CholeskyFactor f = choleskyLower(std::move(shifted));
    f.jitter = jitter;
    f.rung = r;
    if (f.ok) return f;
    if (r == 0) first = f;
  }
  first.jitter = 0.0;
  first.rung = 0;
  return first;
}

// Largest eigenvalue of a symmetric matrix.
inline double lambdaMax(const Matrix& a) {
  if (a.rows() == 0) throw std::invalid_argument("lambdaMax: empty matrix");
  Eigen::SelfAdjointEigenSolver<Matrix> es(a, Eigen::EigenvaluesOnly);
  if (es.info() != Eigen::Success) {
    throw NumericalError("lambdaMax: eigenvalue iteration failed");
  }
  return es.eigenvalues().maxCoeff();
}

}  // namespace kdq
