#pragma once

#include <cmath>
#include <vector>

#include "mifruit/prng.hpp"
#include "mifruit/tensor.hpp"

namespace mifruit {

/// Uniform on [-sqrt(6/fan_in), +sqrt(6/fan_in)], drawn in row-major order.
template <typename T>
Tensor<T> he_uniform_init(const Shape& shape, std::size_t fan_in, Prng& prng) {
  require(fan_in >= 1, "he_uniform_init: fan_in must be >= 1");
  const double bound = std::sqrt(6.0 / static_cast<double>(fan_in));
  std::vector<T> data(shape_numel(shape));
  for (auto& v : data) v = static_cast<T>(prng.uniform(-bound, bound));
  return Tensor<T>(shape, std::move(data));
}

}  // namespace mifruit
