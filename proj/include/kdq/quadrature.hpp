#pragma once

#include "kdq/energy.hpp"
#include "kdq/linalg.hpp"

#include <Eigen/LU>
#include <optional>
#include <utility>

namespace kdq {

// Design-side Gram data for one kernel and one target measure: the plain Gram
// K, the reduced Gram Kt (kernel recentred by the target potentials), the
// potential vector p, and the target energy.  Both factorizations are
// attempted at assembly with the escalating-jitter ladder; a factorization
// that fails even at the last rung leaves the corresponding singular flag set
// together with the failing pivot index.  Immutable after assembly; the
// solve methods are const and safe to call concurrently.
class GramBundle {
 public:
  static GramBundle assemble(const Kernel& k, PointMatrix design,
                             PotentialProvider provider, double Emu) {
    if (k.singular()) {
      throw std::invalid_argument(
          "assemble: kernel diagonal is unbounded; Gram assembly needs a "
          "bounded kernel");
    }
    provider.requireKernel(k);
    detail::requireDistinctRows(design, "assemble");
    const Eigen::Index n = design.rows();
    if (n == 0) throw std::invalid_argument("assemble: empty design");
    if (design.cols() != k.dim()) {
      throw std::invalid_argument("assemble: design dimension mismatch");
    }

    GramBundle g;
    g.kernel_ = k;
    g.design_ = std::move(design);
    g.provider_ = std::move(provider);
    g.emu_ = Emu;

    g.p_.resize(n);
    for (Eigen::Index i = 0; i < n; ++i) {
      g.p_[i] = g.provider_->potential(rowSpan(g.design_, i));
    }

    g.k_.resize(n, n);
    g.kt_.resize(n, n);
    for (Eigen::Index i = 0; i < n; ++i) {
      for (Eigen::Index j = 0; j <= i; ++j) {
        const double v = k.eval(rowSpan(g.design_, i), rowSpan(g.design_, j));
        g.k_(i, j) = v;
        g.k_(j, i) = v;
        const double red = ((v - g.p_[i]) - g.p_[j]) + Emu;
        g.kt_(i, j) = red;
        g.kt_(j, i) = ((v - g.p_[j]) - g.p_[i]) + Emu;
      }
    }
    g.kFactor_ = choleskyWithJitter(g.k_);
    g.ktFactor_ = choleskyWithJitter(g.kt_);
    return g;
  }

  [[nodiscard]] const Kernel& kernel() const { return *kernel_; }
  [[nodiscard]] const PointMatrix& design() const { return design_; }
  [[nodiscard]] const PotentialProvider& provider() const { return *provider_; }
  [[nodiscard]] const Matrix& K() const { return k_; }
  [[nodiscard]] const Matrix& Ktilde() const { return kt_; }
  [[nodiscard]] const Vector& p() const { return p_; }
  [[nodiscard]] double Emu() const { return emu_; }
  [[nodiscard]] Eigen::Index size() const { return design_.rows(); }

  [[nodiscard]] const CholeskyFactor& kFactor() const { return kFactor_; }
  [[nodiscard]] const CholeskyFactor& ktFactor() const { return ktFactor_; }
  [[nodiscard]] bool kSingular() const { return !kFactor_.ok; }
  [[nodiscard]] bool ktSingular() const { return !ktFactor_.ok; }

  [[nodiscard]] Vector solveK(const Vector& b) const {
    requireFactor(kFactor_, "K");
    return kFactor_.solve(b);
  }
  [[nodiscard]] Vector solveKt(const Vector& b) const {
    requireFactor(ktFactor_, "Ktilde");
    return ktFactor_.solve(b);
  }

 private:
  GramBundle() = default;

  static void requireFactor(const CholeskyFactor& f, const char* name) {
    if (!f.ok) {
      throw NumericalError(std::string("singular Gram matrix ") + name +
                           " (pivot " + std::to_string(f.failedPivot) + ")");
    }
  }

  std::optional<Kernel> kernel_;
  PointMatrix design_;
  std::optional<PotentialProvider> provider_;
  double emu_ = 0.0;
  Vector p_;
  Matrix k_;
  Matrix kt_;
  CholeskyFactor kFactor_;
  CholeskyFactor ktFactor_;
};

enum class WeightMode { Unconstrained, SumToOne, KnownMean };

// Quadrature weights together with the variance of the resulting estimator
// (no observation-noise scale factor).  `estimate` is present only when
// function values were supplied.
struct QuadratureSolution {
  Vector weights;
  double variance = 0.0;
  std::optional<double> estimate;
  WeightMode mode = WeightMode::Unconstrained;
};

// w = K^{-1} p, variance = Emu - p'K^{-1}p.
inline QuadratureSolution optimalWeightsUnconstrained(const GramBundle& g) {
  QuadratureSolution sol;
  sol.weights = g.solveK(g.p());
  sol.variance = g.Emu() - g.p().dot(sol.weights);
  sol.mode = WeightMode::Unconstrained;
  return sol;
}

// Sum-to-one weights solved with a bordered system on the reduced Gram:
// z = (Kt + 11')^{-1} 1, w = z / (1'z), variance = 1/(1'z) - 1.  Works for
// conditionally definite kernels whose plain Gram is indefinite.
inline QuadratureSolution borderedWeights(const GramBundle& g) {
  const Eigen::Index n = g.size();
  Matrix b = g.Ktilde();
  b.array() += 1.0;
  Eigen::FullPivLU<Matrix> lu(b);
  if (!lu.isInvertible()) {
    throw NumericalError("bordered weight system is singular");
  }
  const Vector z = lu.solve(Vector::Ones(n));
  const double d = z.sum();
  if (!(d > 0.0) || !std::isfinite(d)) {
    throw NumericalError("bordered weight system yields nonpositive mass");
  }
  QuadratureSolution sol;
  sol.weights = z / d;
  sol.variance = 1.0 / d - 1.0;
  sol.mode = WeightMode::SumToOne;
  return sol;
}

// Optimal weights under the sum-to-one constraint: with a = K^{-1}p and
// b = K^{-1}1, w = a + b (1 - 1'a)/(1'b) and the variance follows from the
// constrained optimum.  Falls through to the bordered route when the plain
// Gram is singular.
inline QuadratureSolution optimalWeightsSumToOne(const GramBundle& g) {
  if (g.kSingular()) return borderedWeights(g);
  const Eigen::Index n = g.size();
  const Vector a = g.solveK(g.p());
  const Vector b = g.solveK(Vector::Ones(n));
  const double ob = b.sum();
  if (!(ob > 0.0) || !std::isfinite(ob)) {
    throw NumericalError("sum-to-one normalization is nonpositive");
  }
  const double pa = g.p().dot(a);
  const double pb = g.p().dot(b);
  QuadratureSolution sol;
  sol.weights = a + b * ((1.0 - a.sum()) / ob);
  sol.variance = g.Emu() - pa + (1.0 - pb) * (1.0 - pb) / ob;
  sol.mode = WeightMode::SumToOne;
  return sol;
}

// w'y for a sum-to-one solution; exact for constant integrands.
inline double estimateIntegral(const QuadratureSolution& sol, const Vector& y) {
  if (sol.mode != WeightMode::SumToOne) {
    throw std::invalid_argument("estimateIntegral: needs a sum-to-one solution");
  }
  if (y.size() != sol.weights.size()) {
    throw std::invalid_argument("estimateIntegral: value count mismatch");
  }
  return sol.weights.dot(y);
}

// Unconstrained weights used with a known process mean: the estimate adds
// beta0 times the weight deficit, the variance is the unconstrained one.
inline QuadratureSolution knownMeanSolution(const GramBundle& g, const Vector& y,
                                            double beta0) {
  QuadratureSolution sol = optimalWeightsUnconstrained(g);
  if (y.size() != sol.weights.size()) {
    throw std::invalid_argument("knownMeanSolution: value count mismatch");
  }
  sol.estimate = sol.weights.dot(y) + beta0 * (1.0 - sol.weights.sum());
  sol.mode = WeightMode::KnownMean;
  return sol;
}

struct BlueResult {
  double estimate = 0.0;
  double variance = 0.0;
  Vector weights;  // b / (1'b); exposes the oscillating-sign diagnostic
};

// Best linear unbiased estimate of a constant mean from correlated values:
// beta = 1'K^{-1}y / (1'K^{-1}1), variance = 1/(1'K^{-1}1).  The estimator is
// defined by the exact Gram, so when the bundle's factorization needed
// diagonal jitter the solve falls back to unregularized LU; near-singular
// smooth-kernel Grams then keep their characteristic oscillating weights.
inline BlueResult discreteBlue(const GramBundle& g, const Vector& y) {
  if (y.size() != g.size()) {
    throw std::invalid_argument("discreteBlue: value count mismatch");
  }
  Vector b;
  if (!g.kSingular() && g.kFactor().jitter == 0.0) {
    b = g.solveK(Vector::Ones(g.size()));
  } else {
    Eigen::PartialPivLU<Matrix> lu(g.K());
    b = lu.solve(Vector::Ones(g.size()));
    if (!b.allFinite()) {
      throw NumericalError("discreteBlue: singular Gram matrix");
    }
  }
  const double ob = b.sum();
  if (!(ob > 0.0) || !std::isfinite(ob)) {
    throw NumericalError("discreteBlue: nonpositive normalization");
  }
  BlueResult r;
  r.estimate = b.dot(y) / ob;
  r.variance = 1.0 / ob;
  r.weights = b / ob;
  return r;
}

// Mean over the target measure of the kernel diagonal K(x,x).  Closed-form
// for the uniform families (product across tensor factors); sample mean for
// Monte Carlo providers.
inline double uniformDiagMean(const Kernel& k) {
  switch (k.family()) {
    case KernelFamily::DistanceInduced:
      return 2.0 / (1.0 + k.param1());
    case KernelFamily::TensorProduct: {
      double prod = 1.0;
      for (const Kernel& f : k.factors()) prod *= uniformDiagMean(f);
      return prod;
    }
    default: {
      // Remaining bounded families are translation invariant: constant diagonal.
      const std::vector<double> z(static_cast<std::size_t>(k.dim()), 0.0);
      return k.eval(Span(z), Span(z));
    }
  }
}

inline double targetDiagMean(const PotentialProvider& prov) {
  switch (prov.kind()) {
    case ProviderKind::ClosedFormUniform:
      return uniformDiagMean(prov.kernel());
    case ProviderKind::MonteCarlo: {
      const PointMatrix& z = prov.sample();
      double s = 0.0;
      for (Eigen::Index i = 0; i < z.rows(); ++i) {
        s += prov.kernel().eval(rowSpan(z, i), rowSpan(z, i));
      }
      return s / static_cast<double>(z.rows());
    }
    case ProviderKind::Zero:
      throw std::invalid_argument(
          "targetDiagMean: undefined for the zero provider");
  }
  throw std::invalid_argument("targetDiagMean: unknown provider kind");
}

// Integrated mean squared prediction error of the constant-mean predictor
// over the target measure.  H holds the second-moment matrix
// H_jk = E[K(X,x_j)K(X,x_k)] for X distributed as the target.
inline double imspe(const GramBundle& g, const Matrix& h) {
  const Eigen::Index n = g.size();
  if (h.rows() != n || h.cols() != n) {
    throw std::invalid_argument("imspe: H dimension mismatch");
  }
  const double scale = 1.0 + h.cwiseAbs().maxCoeff();
  if ((h - h.transpose()).cwiseAbs().maxCoeff() > 1e-8 * scale) {
    throw std::invalid_argument("imspe: H must be symmetric");
  }
  if (g.kSingular()) {
    throw NumericalError("imspe: singular Gram matrix K");
  }
  const double diagMean = targetDiagMean(g.provider());
  const Vector b = g.solveK(Vector::Ones(n));
  const double ob = b.sum();
  if (!(ob > 0.0) || !std::isfinite(ob)) {
    throw NumericalError("imspe: nonpositive normalization");
  }
  const double pb = g.p().dot(b);
  const double tr = g.kFactor().solveMatrix(h).trace();
  const double bhb = b.dot(h * b);
  return diagMean + 1.0 / ob - 2.0 * pb / ob - (tr - bhb / ob);
}

struct MatrixWithSe {
  Matrix value;
  Matrix se;
};

// H by Monte Carlo over the uniform target: one stream of draws, Welford
// accumulation per entry so the caller gets entrywise standard errors.
inline MatrixWithSe hMatrixMonteCarloStats(const Kernel& k,
                                           const PointMatrix& design,
                                           std::size_t samples,
                                           std::uint64_t seed) {
  const Eigen::Index n = design.rows();
  if (samples < 2) throw std::invalid_argument("hMatrixMonteCarloStats: need samples >= 2");
  if (design.cols() != k.dim()) {
    throw std::invalid_argument("hMatrixMonteCarloStats: dimension mismatch");
  }
  UniformRng rng(seed);
  std::vector<double> z(static_cast<std::size_t>(k.dim()));
  Vector kv(n);
  Matrix mean = Matrix::Zero(n, n);
  Matrix m2 = Matrix::Zero(n, n);
  for (std::size_t s = 0; s < samples; ++s) {
    for (double& c : z) c = rng.next();
    for (Eigen::Index j = 0; j < n; ++j) kv[j] = k.eval(Span(z), rowSpan(design, j));
    const Matrix outer = kv * kv.transpose();
    const Matrix delta = outer - mean;
    mean += delta / static_cast<double>(s + 1);
    m2 += delta.cwiseProduct(outer - mean);
  }
  MatrixWithSe out;
  out.value = mean;
  out.se = (m2 / static_cast<double>(samples - 1) / static_cast<double>(samples))
               .cwiseSqrt();
  return out;
}

inline Matrix hMatrixMonteCarlo(const Kernel& k, const PointMatrix& design,
                                std::size_t samples, std::uint64_t seed) {
  return hMatrixMonteCarloStats(k, design, samples, seed).value;
}

namespace detail {
// Composite Simpson over [0,1] with an even panel count.
template <typename F>
double simpson01(F&& f, int panels) {
  const double hstep = 1.0 / panels;
  double sum = f(0.0) + f(1.0);
  for (int m = 1; m < panels; ++m) {
    sum += f(m * hstep) * (m % 2 == 1 ? 4.0 : 2.0);
  }
  return sum * hstep / 3.0;
}
}  // namespace detail

// H for coordinate-separable kernels over the uniform target: per-dimension
// Simpson panels multiplied across dimensions.  Accepts one-dimensional
// kernels and tensor products of them.
inline Matrix hMatrixPerDimension(const Kernel& k, const PointMatrix& design,
                                  int panels = 2048) {
  if (panels < 2 || panels % 2 != 0) {
    throw std::invalid_argument("hMatrixPerDimension: panels must be even and >= 2");
  }
  if (design.cols() != k.dim()) {
    throw std::invalid_argument("hMatrixPerDimension: dimension mismatch");
  }
  const Eigen::Index n = design.rows();
  std::vector<Kernel> factors;
  if (k.family() == KernelFamily::TensorProduct) {
    factors = k.factors();
  } else if (k.dim() == 1) {
    factors.push_back(k);
  } else {
    throw std::invalid_argument(
        "hMatrixPerDimension: kernel must be one-dimensional or a tensor "
        "product");
  }
  Matrix h = Matrix::Ones(n, n);
  for (std::size_t f = 0; f < factors.size(); ++f) {
    const Kernel& kf = factors[f];
    if (kf.singular()) {
      throw std::invalid_argument("hMatrixPerDimension: unbounded factor");
    }
    const Eigen::Index col = static_cast<Eigen::Index>(f);
    for (Eigen::Index i = 0; i < n; ++i) {
      const double xi = design(i, col);
      for (Eigen::Index j = 0; j <= i; ++j) {
        const double xj = design(j, col);
        const double integral = detail::simpson01(
            [&](double t) {
              return kf.eval(Span(&t, 1), Span(&xi, 1)) *
                     kf.eval(Span(&t, 1), Span(&xj, 1));
            },
            panels);
        h(i, j) *= integral;
        if (j != i) h(j, i) = h(i, j);
      }
    }
  }
  return h;
}

}  // namespace kdq
