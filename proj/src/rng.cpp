#include "mlgibbs/rng.hpp"

#include <cmath>
#include <sstream>

#include "mlgibbs/errors.hpp"

namespace mlgibbs {

std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t index) {
  std::uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (index + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

RandomStream RandomStream::split(std::uint64_t index) const {
  return RandomStream(derive_seed(seed_, index));
}

Vector normal_vector(RandomStream& stream, Index n, double mean, double variance) {
  if (!(variance >= 0.0)) {
    std::ostringstream msg;
    msg << "normal_vector: variance " << variance << " must be non-negative";
    throw DomainError(msg.str());
  }
  Vector out(n);
  if (variance == 0.0) {
    out.setConstant(mean);
    return out;
  }
  const double sd = std::sqrt(variance);
  for (Index i = 0; i < n; ++i) out[i] = mean + sd * stream.standard_normal();
  return out;
}

void normal_vector_heteroscedastic(RandomStream& stream, const Vector& variances,
                                   Vector& out) {
  out.resize(variances.size());
  for (Index i = 0; i < variances.size(); ++i) {
    if (!(variances[i] >= 0.0)) throw DomainError("normal variance must be non-negative");
    out[i] = std::sqrt(variances[i]) * stream.standard_normal();
  }
}

double gamma_sample(RandomStream& stream, double shape, double rate) {
  if (!(shape > 0.0) || !(rate > 0.0) || !std::isfinite(shape) || !std::isfinite(rate)) {
    std::ostringstream msg;
    msg << "gamma_sample: shape " << shape << " and rate " << rate
        << " must be positive and finite";
    throw DomainError(msg.str());
  }
  // std::gamma_distribution is shape-scale.
  return std::gamma_distribution<double>(shape, 1.0 / rate)(stream.engine());
}

}  // namespace mlgibbs
