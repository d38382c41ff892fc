#ifndef KEHNN_GRADCHECK_H_
#define KEHNN_GRADCHECK_H_

#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "kehnn/tensor.h"

namespace kehnn {

struct GradCheckOptions {
  double eps = 1e-5;
  // Coordinates checked per tensor; 0 checks all of them. Sampled
  // coordinates are drawn from a generator seeded with `seed`.
  std::size_t max_coords_per_tensor = 0;
  std::uint64_t seed = 0;
};

struct GradCheckResult {
  double max_rel_error = 0.0;
  // Location of the worst coordinate.
  std::size_t tensor = 0;
  std::size_t coordinate = 0;
  double analytic = 0.0;
  double numeric = 0.0;
  // Worst error per tensor, parallel to the params argument.
  std::vector<double> per_tensor;
  std::size_t checked = 0;
};

// |a - b| / max(1, |a|, |b|)
double relative_error(double a, double b);

// Compares analytic gradients with central differences
// (f(x + eps) - f(x - eps)) / (2 eps). `loss` must be deterministic and read
// the tensors in `params`, which are perturbed in place and restored.
GradCheckResult finite_diff_gradcheck(const std::function<double()>& loss,
                                      std::span<Tensor* const> params,
                                      std::span<const Tensor> analytic,
                                      const GradCheckOptions& options = {});

}  // namespace kehnn

#endif  // KEHNN_GRADCHECK_H_
