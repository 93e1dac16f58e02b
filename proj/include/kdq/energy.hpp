#pragma once

#include "kdq/potentials.hpp"

#include <cmath>
#include <tuple>

namespace kdq {

// K recentered at the target measure: K_mu(x,x') = K(x,x') - P(x) - P(x') + E.
// Under this kernel the discrepancy to mu becomes a plain energy.  The
// evaluation order ((K - P(x)) - P(y)) + E is fixed so reassembling the same
// bundle reproduces identical bits.
class ReducedKernel {
 public:
  ReducedKernel(Kernel base, PotentialProvider provider, double baseEnergy)
      : base_(std::move(base)), provider_(std::move(provider)), baseEnergy_(baseEnergy) {
    provider_.requireKernel(base_);
  }

  [[nodiscard]] double eval(Span x, Span y) const {
    return ((base_.eval(x, y) - provider_.potential(x)) - provider_.potential(y)) + baseEnergy_;
  }

  [[nodiscard]] const Kernel& base() const { return base_; }
  [[nodiscard]] const PotentialProvider& provider() const { return provider_; }
  [[nodiscard]] double baseEnergy() const { return baseEnergy_; }
  [[nodiscard]] int dim() const { return base_.dim(); }

 private:
  Kernel base_;
  PotentialProvider provider_;
  double baseEnergy_;
};

inline ReducedKernel reduce(const Kernel& k, const PotentialProvider& pot, double energy) {
  return ReducedKernel(k, pot, energy);
}

// E_K(xi) = sum_{i,j} w_i w_j K(x_i, x_j).  Bounded kernels use the full double
// sum; singular kernels drop the diagonal, which is the off-diagonal value the
// distinct-support precondition makes finite.  This diagonal convention is
// applied uniformly to discrete energies, MMD, and Monte-Carlo estimators.
inline double energyOfDiscrete(const Kernel& k, const DiscreteSignedMeasure& xi) {
  const Eigen::Index n = xi.size();
  const bool skipDiag = k.singular();
  const PointMatrix& pts = xi.points();
  const Vector& w = xi.weights();
  double acc = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) {
    const double* xi_p = pts.data() + i * pts.cols();
    for (Eigen::Index j = 0; j < n; ++j) {
      if (skipDiag && i == j) continue;
      acc += w[i] * w[j] * k.evalUnchecked(xi_p, pts.data() + j * pts.cols());
    }
  }
  return acc;
}

// Signed combination ca*a + cb*b with bitwise-equal support points merged and
// exact zero weights dropped.  Keeps supports distinct, so the measure stays
// valid for singular kernels.
inline DiscreteSignedMeasure mergeSigned(const DiscreteSignedMeasure& a,
                                         const DiscreteSignedMeasure& b, double ca, double cb) {
  if (a.dim() != b.dim()) throw std::invalid_argument("mergeSigned: dimension mismatch");
  const Eigen::Index d = a.points().cols();
  const Eigen::Index total = a.size() + b.size();
  PointMatrix pts(total, d);
  Vector w(total);
  for (Eigen::Index i = 0; i < a.size(); ++i) {
    pts.row(i) = a.points().row(i);
    w[i] = ca * a.weights()[i];
  }
  for (Eigen::Index i = 0; i < b.size(); ++i) {
    pts.row(a.size() + i) = b.points().row(i);
    w[a.size() + i] = cb * b.weights()[i];
  }

  std::vector<Eigen::Index> order(static_cast<std::size_t>(total));
  std::iota(order.begin(), order.end(), Eigen::Index{0});
  auto lexLess = [&](Eigen::Index x, Eigen::Index y) {
    for (Eigen::Index j = 0; j < d; ++j) {
      if (pts(x, j) != pts(y, j)) return pts(x, j) < pts(y, j);
    }
    return false;
  };
  std::sort(order.begin(), order.end(), lexLess);

  PointMatrix outPts(total, d);
  Vector outW(total);
  Eigen::Index m = 0;
  for (std::size_t r = 0; r < order.size(); ++r) {
    Eigen::Index idx = order[r];
    if (m > 0 && !lexLess(order[r - 1], idx)) {
      outW[m - 1] += w[idx];
      continue;
    }
    outPts.row(m) = pts.row(idx);
    outW[m] = w[idx];
    ++m;
  }
  Eigen::Index keep = 0;
  for (Eigen::Index i = 0; i < m; ++i) {
    if (outW[i] == 0.0) continue;
    outPts.row(keep) = outPts.row(i);
    outW[keep] = outW[i];
    ++keep;
  }
  return DiscreteSignedMeasure(outPts.topRows(keep), outW.head(keep));
}

// Squared discrepancy between xi and the provider's target measure:
// w'Kw - 2 w'p + Emu.  Emu is passed explicitly so callers control which
// estimate of the target energy enters the identity.
inline double energyOfSignedDiff(const Kernel& k, const DiscreteSignedMeasure& xi,
                                 const PotentialProvider& p, double Emu) {
  p.requireKernel(k);
  const Eigen::Index n = xi.size();
  double wKw = energyOfDiscrete(k, xi);
  double wp = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) {
    double pi = p.potential(xi.point(i));
    if (!std::isfinite(pi)) throw NumericalError("non-finite potential value at a support point");
    wp += xi.weights()[i] * pi;
  }
  // Nonnegativity for bounded strictly definite kernels is a property of the
  // exact value; rounding across the O(n^2) sum can undershoot zero by more
  // than callers might expect, so the raw value is returned unclamped.
  return wKw - 2.0 * wp + Emu;
}

// gamma_K(xi, nu) between two discrete measures: energy of the merged signed
// difference, square-rooted.  Small negative values from cancellation are
// clamped; anything below -1e-12 under a strictly definite kernel is an error.
inline double mmd(const Kernel& k, const DiscreteSignedMeasure& xi,
                  const DiscreteSignedMeasure& nu) {
  DiscreteSignedMeasure diff = mergeSigned(xi, nu, 1.0, -1.0);
  double e = energyOfDiscrete(k, diff);
  if (e < -1e-12 && k.definiteness() == DefinitenessClass::ISPD && !k.singular()) {
    throw NumericalError("negative squared discrepancy under a strictly definite kernel");
  }
  return std::sqrt(std::max(0.0, e));
}

}  // namespace kdq
