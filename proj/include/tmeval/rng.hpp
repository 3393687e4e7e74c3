#pragma once

#include <cstdint>
#include <random>
#include <vector>

namespace tmeval {

using Rng = std::mt19937_64;

/// Derives an independent stream from (seed, stream). Used so that per-run and
/// per-document generators do not depend on scheduling order.
inline Rng make_rng(std::uint64_t seed, std::uint64_t stream = 0) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(stream), static_cast<std::uint32_t>(stream >> 32)};
  return Rng(seq);
}

inline double uniform01(Rng& rng) {
  // 53 random mantissa bits, [0, 1)
  return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

/// Uniform integer in [0, n). Rejection sampling, so results depend only on
/// the engine and not on the standard library's distribution implementation.
inline std::size_t uniform_index(Rng& rng, std::size_t n) {
  const std::uint64_t bound = static_cast<std::uint64_t>(n);
  const std::uint64_t limit = UINT64_MAX - UINT64_MAX % bound;
  std::uint64_t x;
  do {
    x = rng();
  } while (x >= limit);
  return static_cast<std::size_t>(x % bound);
}

template <typename T>
void shuffle_in_place(std::vector<T>& v, Rng& rng) {
  for (std::size_t i = v.size(); i > 1; --i) {
    std::swap(v[i - 1], v[uniform_index(rng, i)]);
  }
}

/// Draw from a symmetric or asymmetric Dirichlet. When every gamma draw
/// underflows (concentration near zero) the result is a one-hot vector on a
/// uniformly chosen component, which is the small-concentration limit.
inline std::vector<double> sample_dirichlet(Rng& rng, const std::vector<double>& concentration) {
  std::vector<double> out(concentration.size());
  double sum = 0.0;
  for (std::size_t i = 0; i < out.size(); ++i) {
    std::gamma_distribution<double> g(concentration[i], 1.0);
    out[i] = g(rng);
    sum += out[i];
  }
  if (!(sum > 0.0)) {
    std::fill(out.begin(), out.end(), 0.0);
    out[uniform_index(rng, out.size())] = 1.0;
    return out;
  }
  for (double& x : out) x /= sum;
  return out;
}

/// Index drawn proportionally to non-negative weights.
inline std::size_t sample_discrete(Rng& rng, const std::vector<double>& weights) {
  double total = 0.0;
  for (double w : weights) total += w;
  double u = uniform01(rng) * total;
  for (std::size_t i = 0; i < weights.size(); ++i) {
    if (u < weights[i]) return i;
    u -= weights[i];
  }
  // floating-point slack lands on the last positive weight
  for (std::size_t i = weights.size(); i > 0; --i)
    if (weights[i - 1] > 0.0) return i - 1;
  return weights.size() - 1;
}

}  // namespace tmeval
