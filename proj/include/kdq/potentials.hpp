#pragma once

#include "kdq/kernels.hpp"

#include <cmath>
#include <numeric>
#include <optional>

namespace kdq {

namespace detail {
// Sort-based duplicate detection with bitwise coordinate comparison.
inline void requireDistinctRows(const PointMatrix& pts, const char* what) {
  const Eigen::Index n = pts.rows();
  if (n < 2) return;
  std::vector<Eigen::Index> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), Eigen::Index{0});
  auto lexLess = [&](Eigen::Index a, Eigen::Index b) {
    for (Eigen::Index j = 0; j < pts.cols(); ++j) {
      if (pts(a, j) != pts(b, j)) return pts(a, j) < pts(b, j);
    }
    return false;
  };
  std::sort(order.begin(), order.end(), lexLess);
  for (std::size_t i = 1; i < order.size(); ++i) {
    if (!lexLess(order[i - 1], order[i]) && !lexLess(order[i], order[i - 1])) {
      throw std::invalid_argument(std::string(what) + ": duplicate support point");
    }
  }
}
}  // namespace detail

// Finite signed measure with discrete support, one point per row.  Support
// points must be pairwise distinct (bitwise): singular kernels need off-diagonal
// support and Gram matrices need distinct rows.
class DiscreteSignedMeasure {
 public:
  DiscreteSignedMeasure(PointMatrix points, Vector weights)
      : points_(std::move(points)), weights_(std::move(weights)) {
    if (points_.rows() != weights_.size()) {
      throw std::invalid_argument("measure: point/weight count mismatch");
    }
    requireDistinct();
  }

  static DiscreteSignedMeasure dirac(const std::vector<double>& point) {
    PointMatrix p(1, static_cast<Eigen::Index>(point.size()));
    for (std::size_t j = 0; j < point.size(); ++j) p(0, static_cast<Eigen::Index>(j)) = point[j];
    Vector w(1);
    w[0] = 1.0;
    return DiscreteSignedMeasure(std::move(p), std::move(w));
  }

  [[nodiscard]] Eigen::Index size() const { return points_.rows(); }
  [[nodiscard]] int dim() const { return static_cast<int>(points_.cols()); }
  [[nodiscard]] const PointMatrix& points() const { return points_; }
  [[nodiscard]] const Vector& weights() const { return weights_; }
  [[nodiscard]] Span point(Eigen::Index i) const { return rowSpan(points_, i); }

  // Plain left-to-right accumulation; callers compare against 1.0 with their
  // own tolerance and rely on the summation order being fixed.
  [[nodiscard]] double totalMass() const {
    double m = 0.0;
    for (Eigen::Index i = 0; i < weights_.size(); ++i) m += weights_[i];
    return m;
  }

 private:
  void requireDistinct() const { detail::requireDistinctRows(points_, "measure"); }

  PointMatrix points_;
  Vector weights_;
};

struct MonteCarloStats {
  double value = 0.0;
  double se = 0.0;  // standard error of the estimator; 0 for exact values
};

namespace detail {
inline double sgn(double x) { return x > 0.0 ? 1.0 : (x < 0.0 ? -1.0 : 0.0); }
}  // namespace detail

// Closed form for one coordinate of the uniform measure on [0,1]:
// P(x) = S(x) + S(1-x) + T(x), with T identically zero for translation
// invariant kernels.  S uses the continuous-limit convention at x = 0.
class UniformPotentialForm {
 public:
  static std::optional<UniformPotentialForm> tryFor(const Kernel& k) {
    if (k.dim() != 1 || k.family() == KernelFamily::TensorProduct) return std::nullopt;
    UniformPotentialForm f(k);
    switch (k.family()) {
      case KernelFamily::SquaredExponential: {
        double t = k.param1();
        f.c1_ = std::sqrt(t);
        f.c2_ = 0.5 * std::sqrt(M_PI / t);
        f.energy_ = std::sqrt(M_PI / t) * std::erf(std::sqrt(t)) + (std::exp(-t) - 1.0) / t;
        return f;
      }
      case KernelFamily::Exponential: {
        double th = k.param1();
        f.c1_ = th;
        f.energy_ = 2.0 * (th + std::exp(-th) - 1.0) / (th * th);
        return f;
      }
      case KernelFamily::Matern32: {
        double a = std::sqrt(3.0) * k.param1();
        f.c1_ = a;
        f.energy_ = 2.0 * (a * (2.0 + std::exp(-a)) + 3.0 * (std::exp(-a) - 1.0)) / (a * a);
        return f;
      }
      case KernelFamily::Matern52: {
        double b = std::sqrt(5.0) * k.param1();
        f.c1_ = b;
        f.energy_ = (2.0 / (b * b)) *
                    ((8.0 / 3.0) * b - 5.0 + std::exp(-b) * (5.0 + (7.0 / 3.0) * b + b * b / 3.0));
        return f;
      }
      case KernelFamily::GeneralizedMultiquadric: {
        if (k.param1() != 2.0) return std::nullopt;  // closed form known for s = 2 only
        double eps = k.param2();
        f.c1_ = std::sqrt(eps);
        f.energy_ = (2.0 / f.c1_) * std::atan(1.0 / f.c1_) - std::log1p(1.0 / eps);
        return f;
      }
      case KernelFamily::RieszSingular: {
        double s = k.param1();
        if (s >= 1.0) return std::nullopt;  // uniform energy diverges
        f.c1_ = s;
        f.energy_ = 2.0 / ((1.0 - s) * (2.0 - s));
        return f;
      }
      case KernelFamily::RieszLog:
        f.energy_ = 1.5;
        return f;
      case KernelFamily::NegDistance: {
        double s = k.param1();
        f.c1_ = s;
        f.energy_ = -2.0 / ((1.0 + s) * (2.0 + s));
        return f;
      }
      case KernelFamily::DistanceInduced: {
        double s = k.param1();
        f.c1_ = s;
        f.energy_ = 2.0 / (2.0 + s);
        return f;
      }
      case KernelFamily::TriangularOneMinus: {
        f.c1_ = k.param1();
        f.energy_ = 1.0 - f.c1_ / 3.0;
        return f;
      }
      case KernelFamily::InverseDistance: {
        double eps = k.param1();
        f.c1_ = eps;
        f.energy_ = 2.0 * ((1.0 + eps) * std::log1p(1.0 / eps) - 1.0);
        return f;
      }
      case KernelFamily::InverseSqrtDistance: {
        double eps = k.param1();
        f.c1_ = eps;
        f.energy_ = (8.0 / 3.0) * (std::pow(1.0 + eps, 1.5) - std::pow(eps, 1.5)) -
                    4.0 * std::sqrt(eps);
        return f;
      }
      case KernelFamily::TensorProduct:
        return std::nullopt;
    }
    return std::nullopt;
  }

  [[nodiscard]] double S(double x) const {
    using detail::sgn;
    double ax = std::abs(x);
    switch (kernel_.family()) {
      case KernelFamily::SquaredExponential:
        return c2_ * std::erf(c1_ * x);
      case KernelFamily::Exponential:
        return sgn(x) * (1.0 - std::exp(-c1_ * ax)) / c1_;
      case KernelFamily::Matern32:
        return sgn(x) * (2.0 - (2.0 + c1_ * ax) * std::exp(-c1_ * ax)) / c1_;
      case KernelFamily::Matern52: {
        double b = c1_;
        return sgn(x) * (8.0 / 3.0 -
                         std::exp(-b * ax) * (8.0 / 3.0 + 5.0 * b * ax / 3.0 + b * b * ax * ax / 3.0)) /
               b;
      }
      case KernelFamily::GeneralizedMultiquadric:
        return std::atan(x / c1_) / c1_;
      case KernelFamily::RieszSingular:
        return x == 0.0 ? 0.0 : sgn(x) * std::pow(ax, 1.0 - c1_) / (1.0 - c1_);
      case KernelFamily::RieszLog:
        return x == 0.0 ? 0.5 : 0.5 - x * std::log(ax);
      case KernelFamily::NegDistance:
        return -x * std::pow(ax, c1_) / (1.0 + c1_);
      case KernelFamily::DistanceInduced:
        return 0.5 / (1.0 + c1_) - x * std::pow(ax, c1_) / (1.0 + c1_);
      case KernelFamily::TriangularOneMinus:
        return 0.5 - c1_ * x * ax / 2.0;
      case KernelFamily::InverseDistance:
        return sgn(x) * std::log1p(ax / c1_);
      case KernelFamily::InverseSqrtDistance:
        return 2.0 * std::sqrt(c1_) * sgn(x) * (std::sqrt(1.0 + ax / c1_) - 1.0);
      case KernelFamily::TensorProduct:
        break;
    }
    throw std::logic_error("no closed form");
  }

  [[nodiscard]] double T(double x) const {
    if (kernel_.family() == KernelFamily::DistanceInduced) return std::pow(std::abs(x), c1_);
    return 0.0;
  }

  [[nodiscard]] double potential(double x) const { return S(x) + S(1.0 - x) + T(x); }
  [[nodiscard]] double energy() const { return energy_; }
  [[nodiscard]] const Kernel& kernel() const { return kernel_; }

 private:
  explicit UniformPotentialForm(Kernel k) : kernel_(std::move(k)) {}

  Kernel kernel_;
  double c1_ = 0.0;
  double c2_ = 0.0;
  double energy_ = 0.0;
};

// Uniform measure on [0,1]^dim; arbitrary boxes are rescaled to this cube
// before any kernel evaluation happens.
struct MeasureSpec {
  int dim = 1;
};

enum class ProviderKind { ClosedFormUniform, MonteCarlo, Zero };

// Target-measure oracle: evaluates P_mu(x) and E_K(mu).  Immutable after
// construction; every query is pure and safe to call concurrently.
class PotentialProvider {
 public:
  static PotentialProvider closedFormUniform(const Kernel& k) {
    auto p = tryClosedFormUniform(k);
    if (!p) throw std::invalid_argument("no closed-form uniform potential for this kernel");
    return std::move(*p);
  }

  static std::optional<PotentialProvider> tryClosedFormUniform(const Kernel& k) {
    std::vector<UniformPotentialForm> forms;
    if (k.family() == KernelFamily::TensorProduct) {
      forms.reserve(k.factors().size());
      for (const Kernel& f : k.factors()) {
        auto form = UniformPotentialForm::tryFor(f);
        if (!form) return std::nullopt;
        forms.push_back(std::move(*form));
      }
    } else {
      auto form = UniformPotentialForm::tryFor(k);
      if (!form) return std::nullopt;
      forms.push_back(std::move(*form));
    }
    PotentialProvider p(ProviderKind::ClosedFormUniform, k);
    p.forms_ = std::move(forms);
    double e = 1.0;
    for (const auto& f : p.forms_) e *= f.energy();
    p.energy_ = MonteCarloStats{e, 0.0};
    return p;
  }

  static PotentialProvider monteCarlo(const Kernel& k, PointMatrix sample) {
    if (sample.rows() < 1) throw std::invalid_argument("monte carlo provider: empty sample");
    if (static_cast<int>(sample.cols()) != k.dim()) {
      throw std::invalid_argument("monte carlo provider: sample dimension mismatch");
    }
    PotentialProvider p(ProviderKind::MonteCarlo, k);
    p.sample_ = std::move(sample);
    p.energy_ = pairedEnergy(k, p.sample_);
    return p;
  }

  // Potential identically zero with zero energy: pure-energy problems (e.g.
  // discrete equilibrium weights) reuse the discrepancy machinery unchanged.
  static PotentialProvider zero(const Kernel& k) {
    PotentialProvider p(ProviderKind::Zero, k);
    p.energy_ = MonteCarloStats{0.0, 0.0};
    return p;
  }

  [[nodiscard]] ProviderKind kind() const { return kind_; }
  [[nodiscard]] const Kernel& kernel() const { return kernel_; }
  [[nodiscard]] const PointMatrix& sample() const { return sample_; }

  void requireKernel(const Kernel& k) const {
    if (!(kernel_ == k)) throw std::invalid_argument("provider was built for a different kernel");
  }

  [[nodiscard]] double potential(Span x) const { return potentialStats(x).value; }

  [[nodiscard]] MonteCarloStats potentialStats(Span x) const {
    if (static_cast<int>(x.size()) != kernel_.dim()) {
      throw std::invalid_argument("potential: point dimension mismatch");
    }
    switch (kind_) {
      case ProviderKind::Zero:
        return {0.0, 0.0};
      case ProviderKind::ClosedFormUniform: {
        double prod = 1.0;
        for (std::size_t j = 0; j < forms_.size(); ++j) prod *= forms_[j].potential(x[j]);
        return {prod, 0.0};
      }
      case ProviderKind::MonteCarlo: {
        const Eigen::Index n = sample_.rows();
        double mean = 0.0;
        for (Eigen::Index i = 0; i < n; ++i) {
          mean += kernel_.evalUnchecked(x.data(), sample_.data() + i * sample_.cols());
        }
        mean /= static_cast<double>(n);
        double var = 0.0;
        if (n > 1) {
          for (Eigen::Index i = 0; i < n; ++i) {
            double d = kernel_.evalUnchecked(x.data(), sample_.data() + i * sample_.cols()) - mean;
            var += d * d;
          }
          var /= static_cast<double>(n - 1);
        }
        return {mean, std::sqrt(var / static_cast<double>(n))};
      }
    }
    throw std::logic_error("unreachable");
  }

  [[nodiscard]] double energy() const { return energyStats().value; }

  [[nodiscard]] MonteCarloStats energyStats() const {
    if (!energy_) {
      throw NumericalError("paired energy estimator needs at least two samples");
    }
    return *energy_;
  }

 private:
  PotentialProvider(ProviderKind kind, Kernel k) : kind_(kind), kernel_(std::move(k)) {}

  // Disjoint-pair estimator: mean of K(z_{2i}, z_{2i+1}).  Pairs never reuse a
  // sample point, so singular kernels stay finite almost surely.
  static std::optional<MonteCarloStats> pairedEnergy(const Kernel& k, const PointMatrix& sample) {
    const Eigen::Index m = sample.rows() / 2;
    if (m < 1) return std::nullopt;
    double mean = 0.0;
    Vector vals(m);
    for (Eigen::Index i = 0; i < m; ++i) {
      vals[i] = k.evalUnchecked(sample.data() + (2 * i) * sample.cols(),
                                sample.data() + (2 * i + 1) * sample.cols());
      mean += vals[i];
    }
    mean /= static_cast<double>(m);
    double var = 0.0;
    if (m > 1) {
      for (Eigen::Index i = 0; i < m; ++i) {
        double d = vals[i] - mean;
        var += d * d;
      }
      var /= static_cast<double>(m - 1);
    }
    return MonteCarloStats{mean, std::sqrt(var / static_cast<double>(m))};
  }

  ProviderKind kind_;
  Kernel kernel_;
  std::vector<UniformPotentialForm> forms_;
  PointMatrix sample_;
  std::optional<MonteCarloStats> energy_;
};

// Draws N iid points from the uniform measure on [0,1]^dim and wraps them in a
// MonteCarlo provider.  The fill order (point-major, coordinate-minor) is part
// of the determinism contract: same (spec, N, seed) gives a bit-identical provider.
inline PotentialProvider mcPotentialProvider(const Kernel& k, const MeasureSpec& spec,
                                             std::size_t n, std::uint64_t seed) {
  if (n < 1) throw std::invalid_argument("monte carlo provider: need at least one sample");
  if (spec.dim != k.dim()) throw std::invalid_argument("measure/kernel dimension mismatch");
  PointMatrix sample(static_cast<Eigen::Index>(n), spec.dim);
  UniformRng rng(seed);
  for (Eigen::Index i = 0; i < sample.rows(); ++i) {
    for (Eigen::Index j = 0; j < sample.cols(); ++j) sample(i, j) = rng.next();
  }
  return PotentialProvider::monteCarlo(k, std::move(sample));
}

inline double potential(const PotentialProvider& p, const Kernel& k, Span x) {
  p.requireKernel(k);
  return p.potential(x);
}

inline double energyOfUniform(const PotentialProvider& p) { return p.energy(); }

}  // namespace kdq
