#pragma once

#include "kdq/quadrature.hpp"

#include <Eigen/Cholesky>
#include <functional>
#include <memory>

namespace kdq {

// Joint estimation of several integrals E[r_j(X) f(X)] at once.  r collects
// the p+1 regression functions with r[0] identically one; Mr, B, U are the
// moment matrices of r under the target measure (B equals Mr here, where the
// process regressors coincide with r), and uMu(x) = E[r(X)K(X,x)] is the
// vector-valued potential.
struct MultiIntegralSpec {
  int dim = 1;
  std::vector<std::function<double(Span)>> r;
  Matrix Mr;
  Matrix B;
  Matrix U;
  std::function<Vector(Span)> uMu;

  [[nodiscard]] int p() const { return static_cast<int>(r.size()) - 1; }

  [[nodiscard]] Vector rAt(Span x) const {
    Vector v(static_cast<Eigen::Index>(r.size()));
    for (std::size_t j = 0; j < r.size(); ++j) {
      v[static_cast<Eigen::Index>(j)] = r[j](x);
    }
    return v;
  }
};

// Exact single-integral spec (p = 0) backed by a potential provider.
inline MultiIntegralSpec multiIntegralSpecConstant(const Kernel& k,
                                                  const PotentialProvider& prov,
                                                  double Emu) {
  prov.requireKernel(k);
  MultiIntegralSpec spec;
  spec.dim = k.dim();
  spec.r.emplace_back([](Span) { return 1.0; });
  spec.Mr = Matrix::Ones(1, 1);
  spec.B = Matrix::Ones(1, 1);
  spec.U = Matrix::Constant(1, 1, Emu);
  spec.uMu = [prov](Span x) {
    Vector v(1);
    v[0] = prov.potential(x);
    return v;
  };
  return spec;
}

// Moment matrices by Monte Carlo over the uniform target.  Mr uses the full
// sample; U uses disjoint draw pairs so the two arguments are independent;
// uMu closes over the sample and averages on demand.
inline MultiIntegralSpec multiIntegralSpecMonteCarlo(
    const Kernel& k, std::vector<std::function<double(Span)>> rFuncs,
    std::size_t samples = 100000, std::uint64_t seed = 1) {
  if (rFuncs.empty()) {
    throw std::invalid_argument("multiIntegralSpecMonteCarlo: need r functions");
  }
  if (rFuncs.size() > 3) {
    throw std::invalid_argument(
        "multiIntegralSpecMonteCarlo: at most three r functions supported");
  }
  if (samples < 4) {
    throw std::invalid_argument("multiIntegralSpecMonteCarlo: need samples >= 4");
  }
  const int dim = k.dim();
  const auto q = static_cast<Eigen::Index>(rFuncs.size());
  const auto n = static_cast<Eigen::Index>(samples);

  auto z = std::make_shared<PointMatrix>(n, dim);
  UniformRng rng(seed);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (int j = 0; j < dim; ++j) (*z)(i, j) = rng.next();
  }
  auto rz = std::make_shared<Matrix>(n, q);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j < q; ++j) {
      (*rz)(i, j) = rFuncs[static_cast<std::size_t>(j)](rowSpan(*z, i));
    }
  }
  if ((rz->col(0).array() - 1.0).abs().maxCoeff() > 1e-12) {
    throw std::invalid_argument(
        "multiIntegralSpecMonteCarlo: first r function must be constant one");
  }

  MultiIntegralSpec spec;
  spec.dim = dim;
  spec.r = std::move(rFuncs);
  spec.Mr = (rz->transpose() * (*rz)) / static_cast<double>(n);
  spec.Mr = ((spec.Mr + spec.Mr.transpose()) / 2.0).eval();
  spec.B = spec.Mr;

  const Eigen::Index pairs = n / 2;
  Matrix u = Matrix::Zero(q, q);
  for (Eigen::Index m = 0; m < pairs; ++m) {
    const Eigen::Index a = 2 * m;
    const Eigen::Index b = a + 1;
    const double kab = k.eval(rowSpan(*z, a), rowSpan(*z, b));
    const Vector ra = rz->row(a).transpose();
    const Vector rb = rz->row(b).transpose();
    u += (ra * rb.transpose() + rb * ra.transpose()) * (0.5 * kab);
  }
  spec.U = u / static_cast<double>(pairs);

  Kernel kc = k;
  spec.uMu = [kc, z, rz, q](Span x) {
    Vector acc = Vector::Zero(q);
    for (Eigen::Index i = 0; i < z->rows(); ++i) {
      acc += rz->row(i).transpose() * kc.eval(rowSpan(*z, i), x);
    }
    return (acc / static_cast<double>(z->rows())).eval();
  };
  return spec;
}

// Design-side data for the multi-integral posterior: the regression matrix R,
// the r-projected reduced Gram Ktr with its factorization, and the small
// normal matrix G = R' Ktr^{-1} R.  Immutable after assembly.
class MultiIntegralBundle {
 public:
  static MultiIntegralBundle assemble(const MultiIntegralSpec& spec,
                                      const Kernel& k, PointMatrix design) {
    if (k.singular()) {
      throw std::invalid_argument("multi-integral assemble: unbounded kernel");
    }
    if (k.dim() != spec.dim || design.cols() != k.dim()) {
      throw std::invalid_argument("multi-integral assemble: dimension mismatch");
    }
    detail::requireDistinctRows(design, "multi-integral assemble");
    const Eigen::Index n = design.rows();
    const Eigen::Index q = static_cast<Eigen::Index>(spec.r.size());
    if (n < q) {
      throw NumericalError("multi-integral assemble: fewer points than integrals");
    }

    MultiIntegralBundle g;
    g.kernel_ = k;
    g.design_ = std::move(design);

    g.mrLlt_.compute(spec.Mr);
    if (g.mrLlt_.info() != Eigen::Success) {
      throw NumericalError("multi-integral assemble: moment matrix not positive definite");
    }

    g.pn_.resize(q, n);
    g.rmat_.resize(n, q);
    for (Eigen::Index i = 0; i < n; ++i) {
      g.pn_.col(i) = spec.uMu(rowSpan(g.design_, i));
      g.rmat_.row(i) = spec.rAt(rowSpan(g.design_, i)).transpose();
    }
    if ((g.rmat_.col(0).array() - 1.0).abs().maxCoeff() > 1e-12) {
      throw std::invalid_argument(
          "multi-integral assemble: first r function must be constant one");
    }

    Matrix kmat(n, n);
    for (Eigen::Index i = 0; i < n; ++i) {
      for (Eigen::Index j = 0; j <= i; ++j) {
        const double v =
            k.eval(rowSpan(g.design_, i), rowSpan(g.design_, j));
        kmat(i, j) = v;
        kmat(j, i) = v;
      }
    }
    const Matrix a = g.mrLlt_.solve(g.pn_);
    g.cmat_ = g.mrLlt_.solve(g.mrLlt_.solve(spec.U).transpose());
    const Matrix ra = g.rmat_ * a;
    g.ktr_ = ((kmat - ra.transpose()) - ra) + g.rmat_ * g.cmat_ * g.rmat_.transpose();
    g.chol_ = choleskyWithJitter(g.ktr_);
    if (g.chol_.ok) {
      g.btilde_ = g.chol_.solve(Vector::Ones(n));
      g.gmat_ = g.rmat_.transpose() * g.chol_.solveMatrix(g.rmat_);
      g.glu_.compute(g.gmat_);
      g.gInvertible_ = g.glu_.isInvertible();
    }
    return g;
  }

  [[nodiscard]] const Kernel& kernel() const { return *kernel_; }
  [[nodiscard]] const PointMatrix& design() const { return design_; }
  [[nodiscard]] const Matrix& R() const { return rmat_; }
  [[nodiscard]] const Matrix& Ktr() const { return ktr_; }
  [[nodiscard]] const Matrix& Pn() const { return pn_; }
  [[nodiscard]] const CholeskyFactor& chol() const { return chol_; }
  [[nodiscard]] bool singular() const { return !chol_.ok; }
  [[nodiscard]] Eigen::Index size() const { return design_.rows(); }

  void requireSolvable() const {
    if (!chol_.ok) {
      throw NumericalError("multi-integral bundle: reduced Gram is singular (pivot " +
                           std::to_string(chol_.failedPivot) + ")");
    }
    if (!gInvertible_) {
      throw NumericalError("multi-integral bundle: regression matrix is rank deficient");
    }
  }

  [[nodiscard]] const Matrix& G() const { return gmat_; }
  [[nodiscard]] const Eigen::FullPivLU<Matrix>& Glu() const { return glu_; }
  [[nodiscard]] const Vector& btilde() const { return btilde_; }
  [[nodiscard]] const Eigen::LLT<Matrix>& MrLlt() const { return mrLlt_; }
  [[nodiscard]] const Matrix& C() const { return cmat_; }

 private:
  MultiIntegralBundle() = default;

  std::optional<Kernel> kernel_;
  PointMatrix design_;
  Matrix pn_;
  Matrix rmat_;
  Matrix ktr_;
  Matrix cmat_;
  CholeskyFactor chol_;
  Vector btilde_;
  Matrix gmat_;
  Eigen::FullPivLU<Matrix> glu_;
  bool gInvertible_ = false;
  Eigen::LLT<Matrix> mrLlt_;
};

struct MultiIntegralPosterior {
  std::optional<Vector> estimate;
  Matrix V;
};

// Posterior covariance V = Mr G^{-1} Mr and, when values are supplied, the
// posterior mean Mr G^{-1} R' Ktr^{-1} y.
inline MultiIntegralPosterior multiIntegralPosterior(const MultiIntegralSpec& spec,
                                                     const MultiIntegralBundle& g,
                                                     const Vector* y = nullptr) {
  g.requireSolvable();
  MultiIntegralPosterior out;
  const Matrix ginv = g.Glu().inverse();
  Matrix v = spec.Mr * ginv * spec.Mr;
  out.V = (v + v.transpose()) / 2.0;
  if (y != nullptr) {
    if (y->size() != g.size()) {
      throw std::invalid_argument("multiIntegralPosterior: value count mismatch");
    }
    const Vector c = g.R().transpose() * g.chol().solve(*y);
    out.estimate = spec.Mr * g.Glu().solve(c);
  }
  return out;
}

struct GreedyScores {
  double detRatio = 0.0;   // det V_{n+1} / det V_n
  double traceDrop = 0.0;  // tr V_n - tr V_{n+1}
};

// One-point-ahead scores for candidate x, from rank-one update identities on
// the bordered posterior; both are exact given the current factorization.
inline GreedyScores multiIntegralGreedyScores(const MultiIntegralSpec& spec,
                                              const MultiIntegralBundle& g,
                                              Span x) {
  g.requireSolvable();
  const Eigen::Index n = g.size();
  const Kernel& k = g.kernel();
  if (static_cast<int>(x.size()) != k.dim()) {
    throw std::invalid_argument("multiIntegralGreedyScores: dimension mismatch");
  }

  const Vector rx = spec.rAt(x);
  const Vector ux = spec.uMu(x);
  const Vector w1 = g.MrLlt().solve(rx);
  const Vector w2 = g.MrLlt().solve(ux);
  const Vector crx = g.C() * rx;

  Vector ktil(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const double kxi = k.eval(rowSpan(g.design(), i), x);
    ktil[i] = kxi - g.Pn().col(i).dot(w1) - g.R().row(i).dot(w2) +
              g.R().row(i).dot(crx);
  }
  const double kxx = k.eval(x, x);
  const double krxx = kxx - ux.dot(w1) - rx.dot(w2) + rx.dot(crx);

  const Vector alpha = g.chol().solve(ktil);
  const double s = krxx - ktil.dot(alpha);
  // Relative floor: a candidate coinciding with a design point gives s = 0 up
  // to roundoff and must be rejected, not scored.
  const double floor = 1e-12 * (std::abs(krxx) + 1.0);
  if (!(s > floor) || !std::isfinite(s)) {
    throw NumericalError("multiIntegralGreedyScores: candidate has no residual variance");
  }
  // Bordered update: G grows by vv'/s, so the prediction variance correction
  // uses the full regression residual v, not only its constant component.
  const Vector v = rx - g.R().transpose() * alpha;
  const Vector gv = g.Glu().solve(v);
  const double rho2 = s + v.dot(gv);
  if (!(rho2 > 0.0) || !std::isfinite(rho2)) {
    throw NumericalError("multiIntegralGreedyScores: degenerate prediction variance");
  }

  GreedyScores out;
  out.detRatio = s / rho2;
  const Vector mw = spec.Mr * gv;
  out.traceDrop = mw.squaredNorm() / rho2;
  return out;
}

// Validation-only covariance from the unreduced Gram and the full moment set:
// V = U - P K^{-1} P' + (B - P K^{-1} R)(R' K^{-1} R)^{-1}(B - P K^{-1} R)'.
inline Matrix multiIntegralPosteriorValidation(const MultiIntegralSpec& spec,
                                               const Kernel& k,
                                               const PointMatrix& design) {
  const Eigen::Index n = design.rows();
  const Eigen::Index q = static_cast<Eigen::Index>(spec.r.size());
  Matrix kmat(n, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j <= i; ++j) {
      const double v = k.eval(rowSpan(design, i), rowSpan(design, j));
      kmat(i, j) = v;
      kmat(j, i) = v;
    }
  }
  const CholeskyFactor chol = choleskyWithJitter(kmat);
  if (!chol.ok) {
    throw NumericalError("multiIntegralPosteriorValidation: singular Gram");
  }
  Matrix pn(q, n);
  Matrix r(n, q);
  for (Eigen::Index i = 0; i < n; ++i) {
    pn.col(i) = spec.uMu(rowSpan(design, i));
    r.row(i) = spec.rAt(rowSpan(design, i)).transpose();
  }
  const Matrix kinvPt = chol.solveMatrix(pn.transpose());
  const Matrix kinvR = chol.solveMatrix(r);
  const Matrix pkp = pn * kinvPt;
  const Matrix pkh = pn * kinvR;
  const Matrix hkh = r.transpose() * kinvR;
  Eigen::FullPivLU<Matrix> lu(hkh);
  if (!lu.isInvertible()) {
    throw NumericalError("multiIntegralPosteriorValidation: rank-deficient regression matrix");
  }
  const Matrix d = spec.B - pkh;
  Matrix v = spec.U - pkp + d * lu.solve(d.transpose());
  return (v + v.transpose()) / 2.0;
}

}  // namespace kdq
