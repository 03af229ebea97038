#pragma once

#include <cstdint>
#include <random>

#include "mlgibbs/sparse.hpp"

namespace mlgibbs {

/// Seeded 64-bit Mersenne Twister stream. Identical seed and call sequence
/// give identical draws within one build. Not safe for concurrent use.
class RandomStream {
 public:
  explicit RandomStream(std::uint64_t seed = 0) : seed_(seed), engine_(seed) {}

  std::uint64_t seed() const { return seed_; }

  /// Deterministic child stream; independent of how many draws this stream
  /// has already made.
  RandomStream split(std::uint64_t index) const;

  double standard_normal() { return normal_(engine_); }
  double uniform() { return std::uniform_real_distribution<double>(0.0, 1.0)(engine_); }
  std::mt19937_64& engine() { return engine_; }

 private:
  std::uint64_t seed_;
  std::mt19937_64 engine_;
  std::normal_distribution<double> normal_{0.0, 1.0};
};

/// Mixes a seed with a stream index (splitmix64 finalizer).
std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t index);

/// n i.i.d. draws from Normal(mean, variance).
Vector normal_vector(RandomStream& stream, Index n, double mean, double variance);

/// Fills `out` with independent draws N(0, variances[i]).
void normal_vector_heteroscedastic(RandomStream& stream, const Vector& variances,
                                   Vector& out);

/// One draw from Gamma(shape, rate); mean shape / rate.
double gamma_sample(RandomStream& stream, double shape, double rate);

}  // namespace mlgibbs
