#include "kdq/potentials.hpp"

#include <catch2/catch_amalgamated.hpp>

#include <cmath>

using namespace kdq;
using Catch::Matchers::WithinAbs;
using Catch::Matchers::WithinRel;
using Catch::Matchers::WithinULP;

namespace {
double pot1(const PotentialProvider& p, double x) {
  std::vector<double> v{x};
  return p.potential(Span(v));
}
}  // namespace

TEST_CASE("closed-form potentials at hand-computed points", "[potentials]") {
  auto tri = PotentialProvider::closedFormUniform(Kernel::triangularOneMinus(1.0));
  CHECK_THAT(pot1(tri, 0.5), WithinAbs(0.75, 1e-15));
  CHECK_THAT(pot1(tri, 0.0), WithinAbs(0.5, 1e-15));
  CHECK_THAT(pot1(tri, 1.0), WithinAbs(0.5, 1e-15));

  auto rlog = PotentialProvider::closedFormUniform(Kernel::rieszLog());
  CHECK_THAT(pot1(rlog, 0.0), WithinAbs(1.0, 1e-15));
  CHECK_THAT(pot1(rlog, 0.5), WithinRel(1.0 + std::log(2.0), 1e-14));

  // |x| + mean|y| - mean|x-y| on [0,1].
  auto dind = PotentialProvider::closedFormUniform(Kernel::distanceInduced(1.0));
  CHECK_THAT(pot1(dind, 0.3), WithinRel(0.51, 1e-14));
}

TEST_CASE("closed-form energies match the table values", "[potentials]") {
  CHECK_THAT(PotentialProvider::closedFormUniform(Kernel::rieszLog()).energy(),
             WithinAbs(1.5, 1e-15));
  CHECK_THAT(PotentialProvider::closedFormUniform(Kernel::triangularOneMinus(1.0)).energy(),
             WithinRel(2.0 / 3.0, 1e-15));
  CHECK_THAT(PotentialProvider::closedFormUniform(Kernel::exponential(1.0)).energy(),
             WithinRel(2.0 / std::exp(1.0), 1e-14));
  CHECK_THAT(PotentialProvider::closedFormUniform(Kernel::distanceInduced(1.0)).energy(),
             WithinRel(2.0 / 3.0, 1e-15));
  CHECK_THAT(PotentialProvider::closedFormUniform(Kernel::distanceInduced(0.5)).energy(),
             WithinRel(4.0 / 5.0, 1e-15));
  CHECK_THAT(PotentialProvider::closedFormUniform(Kernel::rieszSingular(0.5)).energy(),
             WithinRel(2.0 / (0.5 * 1.5), 1e-15));
}

TEST_CASE("S limit conventions at zero", "[potentials]") {
  auto rlogForm = UniformPotentialForm::tryFor(Kernel::rieszLog());
  REQUIRE(rlogForm);
  CHECK_THAT(rlogForm->S(0.0), WithinAbs(0.5, 0.0));
  auto rForm = UniformPotentialForm::tryFor(Kernel::rieszSingular(0.5));
  REQUIRE(rForm);
  CHECK_THAT(rForm->S(0.0), WithinAbs(0.0, 0.0));
  auto eForm = UniformPotentialForm::tryFor(Kernel::exponential(2.0));
  REQUIRE(eForm);
  CHECK_THAT(eForm->S(0.0), WithinAbs(0.0, 0.0));
  // S is odd up to its constant offset, so P(x) = S(x) + S(1-x) + T(x) also
  // covers points slightly outside [0,1].
  CHECK_THAT(eForm->S(-0.25), WithinAbs(-eForm->S(0.25), 1e-15));
}

TEST_CASE("closed forms agree with Monte-Carlo estimates", "[potentials]") {
  const std::size_t N = 200000;
  int row = 0;
  for (const Kernel& k :
       {Kernel::exponential(1.5), Kernel::matern32(2.0), Kernel::matern52(1.0),
        Kernel::squaredExponential(3.0), Kernel::generalizedMultiquadric(2.0, 0.25),
        Kernel::inverseDistance(0.5), Kernel::inverseSqrtDistance(0.5),
        Kernel::triangularOneMinus(0.8), Kernel::negDistance(1.2), Kernel::distanceInduced(0.7),
        Kernel::rieszSingular(0.35), Kernel::rieszLog()}) {
    INFO("kernel row " << row << ": " << formatKernel(k));
    auto cf = PotentialProvider::closedFormUniform(k);
    auto mc = mcPotentialProvider(k, MeasureSpec{1}, N, 20240000 + static_cast<std::uint64_t>(row));
    auto e = mc.energyStats();
    REQUIRE(e.se > 0.0);
    CHECK_THAT(cf.energy(), WithinAbs(e.value, 4.0 * e.se));
    for (double x : {0.11, 0.5, 0.93}) {
      std::vector<double> xv{x};
      auto ps = mc.potentialStats(Span(xv));
      CHECK_THAT(cf.potential(Span(xv)), WithinAbs(ps.value, 4.0 * ps.se));
    }
    ++row;
  }
}

TEST_CASE("energy equals the mean of the potential over the measure", "[potentials]") {
  for (const Kernel& k : {Kernel::matern52(2.0), Kernel::inverseDistance(0.25)}) {
    auto cf = PotentialProvider::closedFormUniform(k);
    UniformRng rng(77);
    const int n = 100000;
    double mean = 0.0, m2 = 0.0;
    for (int i = 1; i <= n; ++i) {
      std::vector<double> x{rng.next()};
      double v = cf.potential(Span(x));
      double d = v - mean;
      mean += d / i;
      m2 += d * (v - mean);
    }
    double se = std::sqrt(m2 / (n - 1.0) / n);
    CHECK_THAT(cf.energy(), WithinAbs(mean, 4.0 * se));
  }
}

TEST_CASE("tensorization multiplies per-dimension forms", "[potentials]") {
  Kernel f = Kernel::matern32(1.5);
  Kernel t = Kernel::tensorPower(f, 3);
  auto cf1 = PotentialProvider::closedFormUniform(f);
  auto cf3 = PotentialProvider::closedFormUniform(t);

  double e1 = cf1.energy();
  CHECK_THAT(cf3.energy(), WithinULP(e1 * e1 * e1, 0));

  UniformRng rng(5);
  for (int rep = 0; rep < 20; ++rep) {
    std::vector<double> x{rng.next(), rng.next(), rng.next()};
    double expect = pot1(cf1, x[0]) * pot1(cf1, x[1]) * pot1(cf1, x[2]);
    CHECK_THAT(cf3.potential(Span(x)), WithinULP(expect, 6));
  }
}

TEST_CASE("kernels without closed forms fall through", "[potentials]") {
  CHECK_FALSE(PotentialProvider::tryClosedFormUniform(Kernel::generalizedMultiquadric(1.0, 0.1)));
  CHECK_FALSE(PotentialProvider::tryClosedFormUniform(Kernel::rieszSingular(1.2)));
  CHECK_FALSE(PotentialProvider::tryClosedFormUniform(Kernel::matern32(1.0, 2)));
  CHECK_THROWS_AS(PotentialProvider::closedFormUniform(Kernel::rieszSingular(1.2)),
                  std::invalid_argument);
  CHECK(PotentialProvider::tryClosedFormUniform(Kernel::tensorPower(Kernel::rieszLog(), 2)));
}

TEST_CASE("monte-carlo provider is deterministic and exact for N=1", "[potentials]") {
  Kernel k = Kernel::exponential(1.0);
  auto p1 = mcPotentialProvider(k, MeasureSpec{1}, 1, 42);
  std::vector<double> x{0.3};
  double z0 = p1.sample()(0, 0);
  std::vector<double> zv{z0};
  CHECK(pot1(p1, 0.3) == k.eval(Span(x), Span(zv)));
  CHECK_THROWS_AS(p1.energyStats(), NumericalError);

  auto a = mcPotentialProvider(k, MeasureSpec{1}, 5000, 7);
  auto b = mcPotentialProvider(k, MeasureSpec{1}, 5000, 7);
  CHECK(a.sample() == b.sample());
  CHECK(pot1(a, 0.123) == pot1(b, 0.123));
  CHECK(a.energyStats().value == b.energyStats().value);

  auto c = mcPotentialProvider(k, MeasureSpec{1}, 5000, 8);
  CHECK(a.energyStats().value != c.energyStats().value);
}

TEST_CASE("provider queries validate the kernel", "[potentials]") {
  Kernel k = Kernel::exponential(1.0);
  auto p = PotentialProvider::closedFormUniform(k);
  std::vector<double> x{0.5};
  CHECK_THAT(potential(p, k, Span(x)), WithinRel(pot1(p, 0.5), 1e-15));
  CHECK_THROWS_AS(potential(p, Kernel::exponential(2.0), Span(x)), std::invalid_argument);
  CHECK_THAT(energyOfUniform(p), WithinRel(2.0 / std::exp(1.0), 1e-14));
}

TEST_CASE("discrete signed measures validate their support", "[potentials]") {
  PointMatrix pts(3, 1);
  pts << 0.0, 0.5, 1.0;
  Vector w(3);
  w << 0.25, 0.5, 0.25;
  DiscreteSignedMeasure m(pts, w);
  CHECK(m.size() == 3);
  CHECK(m.dim() == 1);
  CHECK(m.totalMass() == 1.0);

  PointMatrix dup(3, 1);
  dup << 0.0, 0.5, 0.5;
  CHECK_THROWS_AS(DiscreteSignedMeasure(dup, w), std::invalid_argument);

  Vector wrong(2);
  wrong << 0.5, 0.5;
  CHECK_THROWS_AS(DiscreteSignedMeasure(pts, wrong), std::invalid_argument);

  auto d = DiscreteSignedMeasure::dirac({0.25, 0.75});
  CHECK(d.size() == 1);
  CHECK(d.dim() == 2);
  CHECK(d.weights()[0] == 1.0);
}

TEST_CASE("zero provider has zero potential and energy", "[potentials]") {
  auto z = PotentialProvider::zero(Kernel::negDistance(1.5));
  CHECK(pot1(z, 0.7) == 0.0);
  CHECK(z.energy() == 0.0);
  CHECK(z.kind() == ProviderKind::Zero);
}
