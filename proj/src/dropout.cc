#include "kehnn/dropout.h"

#include <stdexcept>

namespace kehnn {

Tensor dropout_mask(std::size_t dim, double rate, std::mt19937_64& rng) {
  if (!(rate >= 0.0 && rate < 1.0)) {
    throw std::invalid_argument("dropout rate must lie in [0, 1)");
  }
  Tensor mask({1, dim}, 1.0);
  if (rate == 0.0) return mask;
  const double keep = 1.0 - rate;
  std::bernoulli_distribution kept(keep);
  for (double& v : mask.values()) v = kept(rng) ? 1.0 / keep : 0.0;
  return mask;
}

}  // namespace kehnn
