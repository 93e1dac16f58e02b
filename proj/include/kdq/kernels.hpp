#pragma once

#include "kdq/common.hpp"

#include <cmath>
#include <limits>
#include <optional>
#include <sstream>
#include <utility>

namespace kdq {

enum class KernelFamily {
  SquaredExponential,   // exp(-t r^2)
  Exponential,          // exp(-theta r)
  Matern32,             // (1 + sqrt(3) theta r) exp(-sqrt(3) theta r)
  Matern52,             // (1 + sqrt(5) theta r + 5 theta^2 r^2 / 3) exp(-sqrt(5) theta r)
  GeneralizedMultiquadric,  // (r^2 + eps)^(-s/2)
  RieszSingular,        // r^(-s), unbounded on the diagonal
  RieszLog,             // -log r, unbounded on the diagonal
  NegDistance,          // -r^s
  DistanceInduced,      // |x|^s + |y|^s - r^s
  TriangularOneMinus,   // 1 - theta r, 0 < theta <= 1
  InverseDistance,      // (r + eps)^(-1)
  InverseSqrtDistance,  // (r + eps)^(-1/2)
  TensorProduct,
};

enum class DefinitenessClass { ISPD, CISPD, SPDOnly, Unknown };

// Immutable kernel value object.  eval() is pure; instances are safe to share
// across threads.  Singular families return +inf on the diagonal instead of
// raising, so selection rules skip existing support points with no special case.
class Kernel {
 public:
  static Kernel squaredExponential(double t, int dim = 1) {
    requirePositive(t, "t");
    return Kernel(KernelFamily::SquaredExponential, t, 0.0, dim);
  }
  static Kernel exponential(double theta, int dim = 1) {
    requirePositive(theta, "theta");
    return Kernel(KernelFamily::Exponential, theta, 0.0, dim);
  }
  static Kernel matern32(double theta, int dim = 1) {
    requirePositive(theta, "theta");
    return Kernel(KernelFamily::Matern32, theta, 0.0, dim);
  }
  static Kernel matern52(double theta, int dim = 1) {
    requirePositive(theta, "theta");
    return Kernel(KernelFamily::Matern52, theta, 0.0, dim);
  }
  static Kernel generalizedMultiquadric(double s, double eps, int dim = 1) {
    requirePositive(s, "s");
    requirePositive(eps, "eps");
    return Kernel(KernelFamily::GeneralizedMultiquadric, s, eps, dim);
  }
  static Kernel rieszSingular(double s, int dim = 1) {
    requirePositive(s, "s");
    return Kernel(KernelFamily::RieszSingular, s, 0.0, dim);
  }
  static Kernel rieszLog(int dim = 1) { return Kernel(KernelFamily::RieszLog, 0.0, 0.0, dim); }
  static Kernel negDistance(double s, int dim = 1) {
    requirePositive(s, "s");
    return Kernel(KernelFamily::NegDistance, s, 0.0, dim);
  }
  static Kernel distanceInduced(double s, int dim = 1) {
    requirePositive(s, "s");
    return Kernel(KernelFamily::DistanceInduced, s, 0.0, dim);
  }
  static Kernel triangularOneMinus(double theta, int dim = 1) {
    if (!(theta > 0.0 && theta <= 1.0)) {
      throw std::invalid_argument("triangular kernel requires 0 < theta <= 1");
    }
    return Kernel(KernelFamily::TriangularOneMinus, theta, 0.0, dim);
  }
  static Kernel tensorProduct(std::vector<Kernel> factors) {
    if (factors.empty()) throw std::invalid_argument("tensor product needs at least one factor");
    for (const Kernel& f : factors) {
      if (f.dim() != 1) throw std::invalid_argument("tensor product factors must be one-dimensional");
    }
    Kernel k(KernelFamily::TensorProduct, 0.0, 0.0, static_cast<int>(factors.size()));
    k.factors_ = std::move(factors);
    return k;
  }
  // Replicates one 1-D factor across d dimensions.
  static Kernel tensorPower(const Kernel& factor, int d) {
    if (d < 1) throw std::invalid_argument("tensor power dimension must be >= 1");
    return tensorProduct(std::vector<Kernel>(static_cast<std::size_t>(d), factor));
  }
  static Kernel inverseDistance(double eps, int dim = 1) {
    requirePositive(eps, "eps");
    return Kernel(KernelFamily::InverseDistance, eps, 0.0, dim);
  }
  static Kernel inverseSqrtDistance(double eps, int dim = 1) {
    requirePositive(eps, "eps");
    return Kernel(KernelFamily::InverseSqrtDistance, eps, 0.0, dim);
  }

  [[nodiscard]] KernelFamily family() const { return family_; }
  [[nodiscard]] int dim() const { return dim_; }
  [[nodiscard]] double param1() const { return p1_; }
  [[nodiscard]] double param2() const { return p2_; }
  [[nodiscard]] const std::vector<Kernel>& factors() const { return factors_; }

  [[nodiscard]] bool singular() const {
    switch (family_) {
      case KernelFamily::RieszSingular:
      case KernelFamily::RieszLog:
        return true;
      case KernelFamily::TensorProduct:
        for (const Kernel& f : factors_) {
          if (f.singular()) return true;
        }
        return false;
      default:
        return false;
    }
  }

  // Declarative metadata; never derived from numerics.
  [[nodiscard]] DefinitenessClass definiteness() const {
    switch (family_) {
      case KernelFamily::SquaredExponential:
      case KernelFamily::Exponential:
      case KernelFamily::Matern32:
      case KernelFamily::Matern52:
      case KernelFamily::GeneralizedMultiquadric:
        return DefinitenessClass::ISPD;
      case KernelFamily::RieszSingular:
        return p1_ < static_cast<double>(dim_) ? DefinitenessClass::ISPD
                                               : DefinitenessClass::Unknown;
      case KernelFamily::RieszLog:
        return DefinitenessClass::CISPD;
      case KernelFamily::NegDistance:
      case KernelFamily::DistanceInduced:
        return p1_ < 2.0 ? DefinitenessClass::CISPD : DefinitenessClass::Unknown;
      case KernelFamily::TriangularOneMinus:
        return (dim_ == 1 && p1_ == 1.0) ? DefinitenessClass::ISPD : DefinitenessClass::Unknown;
      case KernelFamily::InverseDistance:
      case KernelFamily::InverseSqrtDistance:
        return DefinitenessClass::Unknown;
      case KernelFamily::TensorProduct: {
        for (const Kernel& f : factors_) {
          DefinitenessClass c = f.definiteness();
          if (c != DefinitenessClass::ISPD && c != DefinitenessClass::CISPD) {
            return DefinitenessClass::Unknown;
          }
          if (f.singular()) return DefinitenessClass::Unknown;
        }
        return DefinitenessClass::CISPD;
      }
    }
    return DefinitenessClass::Unknown;
  }

  [[nodiscard]] double eval(Span x, Span y) const {
    if (static_cast<int>(x.size()) != dim_ || static_cast<int>(y.size()) != dim_) {
      throw std::invalid_argument("kernel eval: point dimension mismatch");
    }
    return evalUnchecked(x.data(), y.data());
  }

  [[nodiscard]] double evalUnchecked(const double* x, const double* y) const {
    switch (family_) {
      case KernelFamily::SquaredExponential:
        return std::exp(-p1_ * sqDist(x, y));
      case KernelFamily::Exponential:
        return std::exp(-p1_ * dist(x, y));
      case KernelFamily::Matern32: {
        double a = std::sqrt(3.0) * p1_ * dist(x, y);
        return (1.0 + a) * std::exp(-a);
      }
      case KernelFamily::Matern52: {
        double b = std::sqrt(5.0) * p1_ * dist(x, y);
        return (1.0 + b + b * b / 3.0) * std::exp(-b);
      }
      case KernelFamily::GeneralizedMultiquadric:
        return std::pow(sqDist(x, y) + p2_, -p1_ / 2.0);
      case KernelFamily::RieszSingular: {
        double r = dist(x, y);
        return r == 0.0 ? std::numeric_limits<double>::infinity() : std::pow(r, -p1_);
      }
      case KernelFamily::RieszLog: {
        double r = dist(x, y);
        return r == 0.0 ? std::numeric_limits<double>::infinity() : -std::log(r);
      }
      case KernelFamily::NegDistance:
        return -std::pow(dist(x, y), p1_);
      case KernelFamily::DistanceInduced:
        return std::pow(norm(x), p1_) + std::pow(norm(y), p1_) - std::pow(dist(x, y), p1_);
      case KernelFamily::TriangularOneMinus:
        return 1.0 - p1_ * dist(x, y);
      case KernelFamily::InverseDistance:
        return 1.0 / (dist(x, y) + p1_);
      case KernelFamily::InverseSqrtDistance:
        return 1.0 / std::sqrt(dist(x, y) + p1_);
      case KernelFamily::TensorProduct: {
        // If any factor hits a singular diagonal, the product is the infinity
        // marker regardless of the remaining factors (avoids 0 * inf).
        double prod = 1.0;
        for (int i = 0; i < dim_; ++i) {
          double v = factors_[static_cast<std::size_t>(i)].evalUnchecked(x + i, y + i);
          if (std::isinf(v) && v > 0.0) return std::numeric_limits<double>::infinity();
          prod *= v;
        }
        return prod;
      }
    }
    return std::numeric_limits<double>::quiet_NaN();
  }

  [[nodiscard]] bool operator==(const Kernel& o) const {
    return family_ == o.family_ && dim_ == o.dim_ && p1_ == o.p1_ && p2_ == o.p2_ &&
           factors_ == o.factors_;
  }

 private:
  Kernel(KernelFamily f, double p1, double p2, int dim) : family_(f), p1_(p1), p2_(p2), dim_(dim) {
    if (dim < 1) throw std::invalid_argument("kernel dimension must be >= 1");
  }
  static void requirePositive(double v, const char* name) {
    if (!(v > 0.0) || !std::isfinite(v)) {
      throw std::invalid_argument(std::string("kernel parameter ") + name + " must be positive");
    }
  }
  [[nodiscard]] double sqDist(const double* x, const double* y) const {
    double acc = 0.0;
    for (int i = 0; i < dim_; ++i) {
      double d = x[i] - y[i];
      acc += d * d;
    }
    return acc;
  }
  [[nodiscard]] double dist(const double* x, const double* y) const { return std::sqrt(sqDist(x, y)); }
  [[nodiscard]] double norm(const double* x) const {
    double acc = 0.0;
    for (int i = 0; i < dim_; ++i) acc += x[i] * x[i];
    return std::sqrt(acc);
  }

  KernelFamily family_;
  double p1_;
  double p2_;
  int dim_;
  std::vector<Kernel> factors_;
};

// ---------------------------------------------------------------------------
// Kernel specification strings.
//
// Grammar:
//   spec      := family | family ":" params | "tensor(" spec "," "d=" int ")"
//   params    := param ("," param)*
//   param     := name "=" number
// Families and parameter names:
//   sqexp:t=   exp:theta=   matern32:theta=   matern52:theta=
//   gmq:s=,eps=   riesz:s=   rieszlog   negdist:s=   distind:s=
//   triangular:theta=   invdist:eps=   invsqrtdist:eps=
// Non-tensor families take the ambient dimension from the caller; the tensor
// wrapper replicates its (one-dimensional) inner spec d times.

namespace detail {
inline std::string trimmed(const std::string& s) {
  std::size_t b = s.find_first_not_of(" \t");
  std::size_t e = s.find_last_not_of(" \t");
  return b == std::string::npos ? std::string() : s.substr(b, e - b + 1);
}

inline std::vector<std::pair<std::string, double>> parseParams(const std::string& body,
                                                               const std::string& spec) {
  std::vector<std::pair<std::string, double>> out;
  std::stringstream ss(body);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = trimmed(item);
    if (item.empty()) continue;
    std::size_t eq = item.find('=');
    if (eq == std::string::npos) {
      throw std::invalid_argument("kernel spec '" + spec + "': expected name=value, got '" + item + "'");
    }
    std::string name = trimmed(item.substr(0, eq));
    std::string val = trimmed(item.substr(eq + 1));
    std::size_t pos = 0;
    double v = 0.0;
    try {
      v = std::stod(val, &pos);
    } catch (const std::exception&) {
      throw std::invalid_argument("kernel spec '" + spec + "': bad number '" + val + "'");
    }
    if (pos != val.size()) {
      throw std::invalid_argument("kernel spec '" + spec + "': bad number '" + val + "'");
    }
    out.emplace_back(name, v);
  }
  return out;
}

inline double requireParam(const std::vector<std::pair<std::string, double>>& params,
                           const std::string& name, const std::string& spec) {
  for (const auto& [k, v] : params) {
    if (k == name) return v;
  }
  throw std::invalid_argument("kernel spec '" + spec + "': missing parameter '" + name + "'");
}
}  // namespace detail

inline Kernel parseKernel(const std::string& rawSpec, int dim = 1) {
  using detail::parseParams;
  using detail::requireParam;
  using detail::trimmed;
  std::string spec = trimmed(rawSpec);
  if (spec.empty()) throw std::invalid_argument("empty kernel spec");

  if (spec.rfind("tensor(", 0) == 0) {
    if (spec.back() != ')') throw std::invalid_argument("kernel spec '" + spec + "': missing ')'");
    std::string inner = spec.substr(7, spec.size() - 8);
    std::size_t cut = inner.rfind(',');
    if (cut == std::string::npos) {
      throw std::invalid_argument("kernel spec '" + spec + "': tensor(...) needs a trailing d=<int>");
    }
    std::string dPart = trimmed(inner.substr(cut + 1));
    if (dPart.rfind("d=", 0) != 0) {
      throw std::invalid_argument("kernel spec '" + spec + "': tensor(...) needs a trailing d=<int>");
    }
    int d = 0;
    try {
      d = std::stoi(dPart.substr(2));
    } catch (const std::exception&) {
      throw std::invalid_argument("kernel spec '" + spec + "': bad tensor dimension");
    }
    Kernel factor = parseKernel(inner.substr(0, cut), 1);
    if (factor.dim() != 1) {
      throw std::invalid_argument("kernel spec '" + spec + "': tensor factor must be one-dimensional");
    }
    return Kernel::tensorPower(factor, d);
  }

  std::string name = spec;
  std::vector<std::pair<std::string, double>> params;
  std::size_t colon = spec.find(':');
  if (colon != std::string::npos) {
    name = trimmed(spec.substr(0, colon));
    params = parseParams(spec.substr(colon + 1), spec);
  }

  if (name == "sqexp") return Kernel::squaredExponential(requireParam(params, "t", spec), dim);
  if (name == "exp") return Kernel::exponential(requireParam(params, "theta", spec), dim);
  if (name == "matern32") return Kernel::matern32(requireParam(params, "theta", spec), dim);
  if (name == "matern52") return Kernel::matern52(requireParam(params, "theta", spec), dim);
  if (name == "gmq") {
    return Kernel::generalizedMultiquadric(requireParam(params, "s", spec),
                                           requireParam(params, "eps", spec), dim);
  }
  if (name == "riesz") return Kernel::rieszSingular(requireParam(params, "s", spec), dim);
  if (name == "rieszlog") return Kernel::rieszLog(dim);
  if (name == "negdist") return Kernel::negDistance(requireParam(params, "s", spec), dim);
  if (name == "distind") return Kernel::distanceInduced(requireParam(params, "s", spec), dim);
  if (name == "triangular") return Kernel::triangularOneMinus(requireParam(params, "theta", spec), dim);
  if (name == "invdist") return Kernel::inverseDistance(requireParam(params, "eps", spec), dim);
  if (name == "invsqrtdist") return Kernel::inverseSqrtDistance(requireParam(params, "eps", spec), dim);
  throw std::invalid_argument("unknown kernel family '" + name + "'");
}

std::string formatKernel(const Kernel& k);

namespace detail {
inline std::string formatNumber(double v);  // defined in io.hpp-adjacent header below
}

}  // namespace kdq

// Shortest round-trip formatting lives with the kernel so spec strings and CSV
// share one convention.
#include <charconv>

namespace kdq {
namespace detail {
inline std::string shortestDouble(double v) {
  char buf[32];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  (void)ec;
  return std::string(buf, ptr);
}
}  // namespace detail

inline std::string formatKernel(const Kernel& k) {
  using detail::shortestDouble;
  switch (k.family()) {
    case KernelFamily::SquaredExponential:
      return "sqexp:t=" + shortestDouble(k.param1());
    case KernelFamily::Exponential:
      return "exp:theta=" + shortestDouble(k.param1());
    case KernelFamily::Matern32:
      return "matern32:theta=" + shortestDouble(k.param1());
    case KernelFamily::Matern52:
      return "matern52:theta=" + shortestDouble(k.param1());
    case KernelFamily::GeneralizedMultiquadric:
      return "gmq:s=" + shortestDouble(k.param1()) + ",eps=" + shortestDouble(k.param2());
    case KernelFamily::RieszSingular:
      return "riesz:s=" + shortestDouble(k.param1());
    case KernelFamily::RieszLog:
      return "rieszlog";
    case KernelFamily::NegDistance:
      return "negdist:s=" + shortestDouble(k.param1());
    case KernelFamily::DistanceInduced:
      return "distind:s=" + shortestDouble(k.param1());
    case KernelFamily::TriangularOneMinus:
      return "triangular:theta=" + shortestDouble(k.param1());
    case KernelFamily::InverseDistance:
      return "invdist:eps=" + shortestDouble(k.param1());
    case KernelFamily::InverseSqrtDistance:
      return "invsqrtdist:eps=" + shortestDouble(k.param1());
    case KernelFamily::TensorProduct: {
      // Only homogeneous tensors have a spec-string form; heterogeneous ones
      // are constructible in code but not through the grammar.
      const auto& fs = k.factors();
      for (const Kernel& f : fs) {
        if (!(f == fs.front())) {
          throw std::invalid_argument("heterogeneous tensor kernels have no spec string");
        }
      }
      return "tensor(" + formatKernel(fs.front()) + ", d=" + std::to_string(k.dim()) + ")";
    }
  }
  throw std::invalid_argument("unformattable kernel");
}

}  // namespace kdq
