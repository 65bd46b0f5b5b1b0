#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

namespace bagbayes {

// Hierarchical seeding.  A SeedPath is a root seed plus a list of child
// indices; every distinct path yields an independent, reproducible stream.
// Derivation is SplitMix64-based so results do not depend on the platform's
// library distributions.
struct SeedPath {
  std::uint64_t root_seed = 0;
  std::vector<std::uint32_t> path;

  SeedPath() = default;
  explicit SeedPath(std::uint64_t root) : root_seed(root) {}
  SeedPath(std::uint64_t root, std::vector<std::uint32_t> p)
      : root_seed(root), path(std::move(p)) {}

  SeedPath child(std::uint32_t index) const {
    SeedPath out = *this;
    out.path.push_back(index);
    return out;
  }
};

namespace detail {

inline std::uint64_t splitmix64(std::uint64_t z) {
  z += 0x9e3779b97f4a7c15ULL;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

// Order-sensitive absorption of the path into a single 64-bit key.
inline std::uint64_t derive_key(const SeedPath& sp) {
  std::uint64_t key = splitmix64(sp.root_seed);
  for (std::uint32_t e : sp.path) {
    key = splitmix64(key ^ (static_cast<std::uint64_t>(e) + 0xd1b54a32d192ed03ULL));
  }
  return key;
}

}  // namespace detail

// Deterministic random stream.  The engine is std::mt19937_64 (bit-exact by
// the standard); all variate transformations are implemented here rather than
// taken from <random> so that draws are identical across standard libraries.
class Stream {
 public:
  explicit Stream(const SeedPath& sp) : engine_(detail::derive_key(sp)) {}
  explicit Stream(std::uint64_t root_seed) : Stream(SeedPath(root_seed)) {}

  std::uint64_t next_u64() { return engine_(); }

  // Uniform on [0, 1) with 53-bit resolution.
  double uniform01() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  // Uniform on {0, ..., n-1}, unbiased via rejection.
  std::uint64_t uniform_below(std::uint64_t n) {
    if (n == 0) throw std::invalid_argument("uniform_below: n must be positive");
    const std::uint64_t threshold = (0 - n) % n;
    std::uint64_t x = next_u64();
    while (x < threshold) x = next_u64();
    return x % n;
  }

  // Standard normal via Box-Muller; the second variate of each pair is cached.
  double normal() {
    if (has_cached_) {
      has_cached_ = false;
      return cached_;
    }
    double u1 = uniform01();
    while (u1 == 0.0) u1 = uniform01();
    const double u2 = uniform01();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double a = 2.0 * std::numbers::pi * u2;
    cached_ = r * std::sin(a);
    has_cached_ = true;
    return r * std::cos(a);
  }

  // Gamma(shape, 1) via Marsaglia-Tsang squeeze; shape < 1 handled by boost.
  double gamma(double shape) {
    if (!(shape > 0.0)) throw std::invalid_argument("gamma: shape must be positive");
    if (shape < 1.0) {
      double u = uniform01();
      while (u == 0.0) u = uniform01();
      return gamma(shape + 1.0) * std::pow(u, 1.0 / shape);
    }
    const double d = shape - 1.0 / 3.0;
    const double c = 1.0 / std::sqrt(9.0 * d);
    for (;;) {
      double x = normal();
      double v = 1.0 + c * x;
      if (v <= 0.0) continue;
      v = v * v * v;
      const double u = uniform01();
      if (u < 1.0 - 0.0331 * x * x * x * x) return d * v;
      if (u > 0.0 && std::log(u) < 0.5 * x * x + d * (1.0 - v + std::log(v))) return d * v;
    }
  }

  double chi_squared(double dof) { return 2.0 * gamma(0.5 * dof); }

  // Binomial(m, p).  Inversion when the zero-count probability is
  // representable (expected cost ~ m*p), otherwise a Bernoulli sum.
  long binomial(long m, double p) {
    if (m < 0) throw std::invalid_argument("binomial: m must be non-negative");
    if (!(p >= 0.0 && p <= 1.0)) throw std::invalid_argument("binomial: p must lie in [0, 1]");
    if (m == 0 || p == 0.0) return 0;
    if (p == 1.0) return m;
    if (p > 0.5) return m - binomial(m, 1.0 - p);
    const double log_q = std::log1p(-p);
    if (-static_cast<double>(m) * log_q < 600.0) {
      const double u = uniform01();
      double pmf = std::exp(static_cast<double>(m) * log_q);
      double cdf = pmf;
      long k = 0;
      const double ratio = p / (1.0 - p);
      while (u > cdf && k < m) {
        pmf *= static_cast<double>(m - k) / static_cast<double>(k + 1) * ratio;
        ++k;
        cdf += pmf;
      }
      return k;
    }
    long count = 0;
    for (long i = 0; i < m; ++i) {
      if (uniform01() < p) ++count;
    }
    return count;
  }

 private:
  std::mt19937_64 engine_;
  double cached_ = 0.0;
  bool has_cached_ = false;
};

// Symmetric multinomial: m balls into n equally likely cells, drawn by
// sequential conditional binomials.  Returned counts always sum to m.
inline std::vector<long> draw_counts(long n, long m, Stream& stream) {
  if (n < 1) throw std::invalid_argument("draw_counts: need at least one cell");
  if (m < 0) throw std::invalid_argument("draw_counts: m must be non-negative");
  std::vector<long> counts(static_cast<std::size_t>(n), 0);
  long remaining = m;
  for (long i = 0; i + 1 < n; ++i) {
    const long k = stream.binomial(remaining, 1.0 / static_cast<double>(n - i));
    counts[static_cast<std::size_t>(i)] = k;
    remaining -= k;
  }
  counts[static_cast<std::size_t>(n - 1)] = remaining;
  return counts;
}

}  // namespace bagbayes
