#include "kehnn/gradcheck.h"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <stdexcept>

namespace kehnn {

double relative_error(double a, double b) {
  return std::abs(a - b) / std::max({1.0, std::abs(a), std::abs(b)});
}

GradCheckResult finite_diff_gradcheck(const std::function<double()>& loss,
                                      std::span<Tensor* const> params,
                                      std::span<const Tensor> analytic,
                                      const GradCheckOptions& options) {
  if (params.size() != analytic.size()) {
    throw std::invalid_argument("gradcheck: " + std::to_string(params.size()) +
                                " params but " +
                                std::to_string(analytic.size()) + " gradients");
  }
  if (!(options.eps > 0.0)) {
    throw std::invalid_argument("gradcheck: eps must be positive");
  }
  GradCheckResult result;
  result.per_tensor.assign(params.size(), 0.0);
  std::mt19937_64 rng(options.seed);

  for (std::size_t p = 0; p < params.size(); ++p) {
    Tensor& theta = *params[p];
    require_same_shape(theta, analytic[p], "gradcheck");
    std::vector<std::size_t> coords(theta.size());
    std::iota(coords.begin(), coords.end(), 0);
    if (options.max_coords_per_tensor &&
        coords.size() > options.max_coords_per_tensor) {
      std::shuffle(coords.begin(), coords.end(), rng);
      coords.resize(options.max_coords_per_tensor);
      std::sort(coords.begin(), coords.end());
    }
    for (std::size_t i : coords) {
      const double saved = theta[i];
      theta[i] = saved + options.eps;
      const double up = loss();
      theta[i] = saved - options.eps;
      const double down = loss();
      theta[i] = saved;
      const double numeric = (up - down) / (2.0 * options.eps);
      const double err = relative_error(analytic[p][i], numeric);
      ++result.checked;
      result.per_tensor[p] = std::max(result.per_tensor[p], err);
      if (err > result.max_rel_error || result.checked == 1) {
        result.max_rel_error = err;
        result.tensor = p;
        result.coordinate = i;
        result.analytic = analytic[p][i];
        result.numeric = numeric;
      }
    }
  }
  return result;
}

}  // namespace kehnn
