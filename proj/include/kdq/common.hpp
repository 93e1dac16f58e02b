#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cstdint>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

namespace kdq {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;
// Point sets are stored one point per row; row-major keeps each point contiguous.
using PointMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Span = std::span<const double>;

// Raised when a computation fails for numerical reasons (singular system,
// degenerate denominator, definiteness violation).  The CLI maps this class
// to exit code 2, anything else invalid to exit code 1.
class NumericalError : public std::runtime_error {
 public:
  explicit NumericalError(const std::string& what) : std::runtime_error(what) {}
};

[[nodiscard]] inline Span rowSpan(const PointMatrix& m, Eigen::Index i) {
  return Span(m.data() + i * m.cols(), static_cast<std::size_t>(m.cols()));
}

[[nodiscard]] inline int resolveThreads(int requested) {
  if (requested > 0) return requested;
  unsigned hw = std::thread::hardware_concurrency();
  return hw == 0 ? 1 : static_cast<int>(hw);
}

// Applies f(i) for i in [0, n).  Work is split into contiguous blocks, one per
// thread; every f(i) must be independent of the others so the result cannot
// depend on the partitioning.  Reductions over the output happen serially in
// index order, which keeps argmin selections byte-identical for any thread count.
template <class F>
void parallelFor(std::size_t n, int threads, F&& f) {
  threads = resolveThreads(threads);
  if (threads <= 1 || n < 2048) {
    for (std::size_t i = 0; i < n; ++i) f(i);
    return;
  }
  std::size_t nt = std::min<std::size_t>(static_cast<std::size_t>(threads), n);
  std::size_t chunk = (n + nt - 1) / nt;
  std::vector<std::thread> pool;
  pool.reserve(nt);
  for (std::size_t t = 0; t < nt; ++t) {
    std::size_t lo = t * chunk;
    std::size_t hi = std::min(n, lo + chunk);
    if (lo >= hi) break;
    pool.emplace_back([lo, hi, &f] {
      for (std::size_t i = lo; i < hi; ++i) f(i);
    });
  }
  for (auto& th : pool) th.join();
}

// Lowest-index argmin over a score vector; the deterministic tie-break used by
// every selection rule in this library.
[[nodiscard]] inline Eigen::Index argminLowest(const Vector& scores) {
  Eigen::Index best = 0;
  for (Eigen::Index i = 1; i < scores.size(); ++i) {
    if (scores[i] < scores[best]) best = i;
  }
  return best;
}

[[nodiscard]] inline Eigen::Index argmaxLowest(const Vector& scores) {
  Eigen::Index best = 0;
  for (Eigen::Index i = 1; i < scores.size(); ++i) {
    if (scores[i] > scores[best]) best = i;
  }
  return best;
}

// Portable uniform doubles in [0,1): the mt19937_64 stream is fixed by the
// standard, and the 53-bit ldexp mapping avoids the library-defined
// uniform_real_distribution.
class UniformRng {
 public:
  explicit UniformRng(std::uint64_t seed) : state_(seed) {}
  [[nodiscard]] double next() {
    return static_cast<double>(state_() >> 11) * 0x1.0p-53;
  }
  [[nodiscard]] std::uint64_t nextRaw() { return state_(); }

 private:
  std::mt19937_64 state_;
};

}  // namespace kdq
