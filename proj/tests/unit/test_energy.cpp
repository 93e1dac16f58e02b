#include "kdq/energy.hpp"

#include <catch2/catch_amalgamated.hpp>

#include <cmath>

using namespace kdq;
using Catch::Matchers::WithinAbs;
using Catch::Matchers::WithinRel;

namespace {
DiscreteSignedMeasure measure1d(std::vector<double> xs, std::vector<double> ws) {
  PointMatrix p(static_cast<Eigen::Index>(xs.size()), 1);
  Vector w(static_cast<Eigen::Index>(ws.size()));
  for (std::size_t i = 0; i < xs.size(); ++i) {
    p(static_cast<Eigen::Index>(i), 0) = xs[i];
    w[static_cast<Eigen::Index>(i)] = ws[i];
  }
  return DiscreteSignedMeasure(std::move(p), std::move(w));
}

DiscreteSignedMeasure randomMeasure(UniformRng& rng, int n, int dim) {
  PointMatrix p(n, dim);
  Vector w(n);
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < dim; ++j) p(i, j) = rng.next();
    w[i] = rng.next() - 0.3;
  }
  double mass = w.sum();
  w /= mass;  // total mass one, mixed signs allowed
  return DiscreteSignedMeasure(std::move(p), std::move(w));
}
}  // namespace

TEST_CASE("reduced kernel recenters at the target measure", "[energy]") {
  Kernel k = Kernel::triangularOneMinus(1.0);
  auto p = PotentialProvider::closedFormUniform(k);
  ReducedKernel rk = reduce(k, p, p.energy());
  std::vector<double> x{0.5};
  CHECK_THAT(rk.eval(Span(x), Span(x)), WithinRel(1.0 / 6.0, 1e-14));

  auto other = PotentialProvider::closedFormUniform(Kernel::exponential(1.0));
  CHECK_THROWS_AS(reduce(k, other, other.energy()), std::invalid_argument);
}

TEST_CASE("reduced kernel has zero potential under its own measure", "[energy]") {
  Kernel k = Kernel::exponential(1.0);
  auto p = PotentialProvider::closedFormUniform(k);
  ReducedKernel rk = reduce(k, p, p.energy());
  UniformRng rng(11);
  for (double x : {0.1, 0.5, 0.85}) {
    std::vector<double> xv{x};
    const int n = 40000;
    double mean = 0.0, m2 = 0.0;
    for (int i = 1; i <= n; ++i) {
      std::vector<double> z{rng.next()};
      double v = rk.eval(Span(xv), Span(z));
      double d = v - mean;
      mean += d / i;
      m2 += d * (v - mean);
    }
    double se = std::sqrt(m2 / (n - 1.0) / n);
    CHECK_THAT(mean, WithinAbs(0.0, 4.0 * se));
  }
}

TEST_CASE("signed-diff energy matches direct expansion for a dirac", "[energy]") {
  Kernel k = Kernel::triangularOneMinus(1.0);
  auto p = PotentialProvider::closedFormUniform(k);
  auto xi = measure1d({0.5}, {1.0});
  double v = energyOfSignedDiff(k, xi, p, p.energy());
  CHECK_THAT(v, WithinRel(1.0 / 6.0, 1e-14));  // K(x,x) - 2 P(x) + E

  Kernel ke = Kernel::exponential(2.0);
  auto pe = PotentialProvider::closedFormUniform(ke);
  auto xe = measure1d({0.3}, {1.0});
  std::vector<double> x{0.3};
  double expect = ke.eval(Span(x), Span(x)) - 2.0 * pe.potential(Span(x)) + pe.energy();
  CHECK_THAT(energyOfSignedDiff(ke, xe, pe, pe.energy()), WithinRel(expect, 1e-13));
}

TEST_CASE("empirical measure of the provider sample has near-zero discrepancy", "[energy]") {
  Kernel k = Kernel::exponential(1.0);
  const std::size_t N = 3000;
  auto mc = mcPotentialProvider(k, MeasureSpec{1}, N, 99);
  PointMatrix pts = mc.sample();
  Vector w = Vector::Constant(static_cast<Eigen::Index>(N), 1.0 / static_cast<double>(N));
  DiscreteSignedMeasure emp(pts, w);

  // With the full-diagonal energy of the sample itself as Emu the three terms
  // cancel exactly; with the paired estimate the residual is statistical.
  double vstat = energyOfDiscrete(k, emp);
  double exact = energyOfSignedDiff(k, emp, mc, vstat);
  CHECK_THAT(exact, WithinAbs(0.0, 1e-10));

  auto es = mc.energyStats();
  double paired = energyOfSignedDiff(k, emp, mc, es.value);
  CHECK_THAT(paired, WithinAbs(0.0, 5.0 * es.se + 1.0 / static_cast<double>(N)));
}

TEST_CASE("three-point signed measure beats the probability optimum", "[energy]") {
  const double s = 1.5;
  Kernel k = Kernel::negDistance(s);
  auto z = PotentialProvider::zero(k);
  const double w = (1.0 - std::pow(2.0, 1.0 - s)) / (std::pow(2.0, 2.0 - s) - 1.0);
  auto mu = measure1d({0.0, 0.5, 1.0}, {(1.0 + w) / 2.0, -w, (1.0 + w) / 2.0});
  CHECK_THAT(mu.totalMass(), WithinAbs(1.0, 1e-15));
  double e = energyOfSignedDiff(k, mu, z, 0.0);
  double closed = 2.0 * (1.0 - std::pow(2.0, 2.0 - s)) / std::pow(4.0 - std::pow(2.0, s), 2.0);
  CHECK_THAT(e, WithinAbs(closed, 1e-12));
  CHECK(e < -0.5);
}

TEST_CASE("discrete energies drop the diagonal only for singular kernels", "[energy]") {
  auto xi = measure1d({0.25, 0.75}, {0.5, 0.5});
  Kernel bounded = Kernel::triangularOneMinus(1.0);
  // Full sum: 0.25 + 0.25 + 2 * 0.25 * 0.5 = 0.75.
  CHECK_THAT(energyOfDiscrete(bounded, xi), WithinRel(0.75, 1e-14));
  Kernel singular = Kernel::rieszSingular(0.5);
  // Off-diagonal only: 2 * 0.25 * (1/2)^{-1/2}.
  CHECK_THAT(energyOfDiscrete(singular, xi), WithinRel(0.5 * std::sqrt(2.0), 1e-14));
}

TEST_CASE("mmd is a symmetric pseudometric with exact self-distance", "[energy]") {
  UniformRng rng(31);
  Kernel k = Kernel::matern32(2.0, 2);
  auto xi = randomMeasure(rng, 8, 2);
  auto nu = randomMeasure(rng, 5, 2);
  CHECK(mmd(k, xi, xi) == 0.0);
  CHECK(mmd(k, xi, nu) == mmd(k, nu, xi));
  CHECK(mmd(k, xi, nu) > 0.0);
}

TEST_CASE("mmd handles shared support points by merging", "[energy]") {
  Kernel k = Kernel::exponential(1.5);
  auto xi = measure1d({0.2, 0.5, 0.9}, {0.3, 0.4, 0.3});
  auto nu = measure1d({0.5, 0.7}, {0.6, 0.4});
  // Direct bilinear expansion over the union support.
  double direct = energyOfDiscrete(k, xi) - 2.0 * 0.0 + energyOfDiscrete(k, nu);
  double cross = 0.0;
  for (Eigen::Index i = 0; i < xi.size(); ++i) {
    for (Eigen::Index j = 0; j < nu.size(); ++j) {
      cross += xi.weights()[i] * nu.weights()[j] * k.eval(xi.point(i), nu.point(j));
    }
  }
  direct -= 2.0 * cross;
  CHECK_THAT(mmd(k, xi, nu), WithinRel(std::sqrt(direct), 1e-12));

  // Identical measures described with permuted rows still cancel exactly.
  auto xiPerm = measure1d({0.9, 0.2, 0.5}, {0.3, 0.3, 0.4});
  CHECK(mmd(k, xi, xiPerm) == 0.0);
}

TEST_CASE("jensen divergence identity links mmd and energies", "[energy]") {
  UniformRng rng(47);
  for (const Kernel& k : {Kernel::matern52(1.5), Kernel::triangularOneMinus(0.9)}) {
    auto xi = randomMeasure(rng, 7, 1);
    auto nu = randomMeasure(rng, 9, 1);
    double g = mmd(k, xi, nu);
    auto mix = mergeSigned(xi, nu, 0.5, 0.5);
    double jensen =
        4.0 * (0.5 * (energyOfDiscrete(k, xi) + energyOfDiscrete(k, nu)) - energyOfDiscrete(k, mix));
    CHECK_THAT(g * g, WithinRel(jensen, 1e-10));
  }
}

TEST_CASE("signed-diff energy rejects non-finite potentials", "[energy]") {
  Kernel k = Kernel::rieszSingular(0.5);
  const std::size_t N = 64;
  auto mc = mcPotentialProvider(k, MeasureSpec{1}, N, 5);
  // Potential at a sample point of the provider itself is infinite.
  double z0 = mc.sample()(0, 0);
  auto xi = measure1d({z0}, {1.0});
  CHECK_THROWS_AS(energyOfSignedDiff(k, xi, mc, 1.0), NumericalError);
}
