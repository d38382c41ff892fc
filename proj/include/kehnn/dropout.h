#ifndef KEHNN_DROPOUT_H_
#define KEHNN_DROPOUT_H_

#include <cstddef>
#include <random>

#include "kehnn/tensor.h"

namespace kehnn {

// Inverted dropout mask [1 x dim]: each entry is 1/(1-rate) with probability
// 1-rate and 0 otherwise. rate 0 gives all ones and draws nothing from rng.
Tensor dropout_mask(std::size_t dim, double rate, std::mt19937_64& rng);

}  // namespace kehnn

#endif  // KEHNN_DROPOUT_H_
