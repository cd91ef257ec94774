#pragma once

#include <cstdint>
#include <numeric>
#include <vector>

#include "gateadapt/errors.hpp"

namespace gateadapt {

// Dense row-major tensor of doubles. Shape conventions used by the model:
// images/activations are [N, C, H, W], feature matrices [N, D].
struct Tensor {
  std::vector<std::int64_t> shape;
  std::vector<double> data;

  Tensor() = default;
  explicit Tensor(std::vector<std::int64_t> s) : shape(std::move(s)) {
    data.assign(static_cast<std::size_t>(numel_of(shape)), 0.0);
  }

  static std::int64_t numel_of(const std::vector<std::int64_t>& s) {
    std::int64_t n = 1;
    for (std::int64_t e : s) {
      if (e < 0) throw ShapeMismatch("negative tensor extent");
      n *= e;
    }
    return n;
  }

  std::int64_t numel() const { return static_cast<std::int64_t>(data.size()); }
  int rank() const { return static_cast<int>(shape.size()); }
  std::int64_t dim(int i) const { return shape[static_cast<std::size_t>(i)]; }

  double* ptr() { return data.data(); }
  const double* ptr() const { return data.data(); }
};

}  // namespace gateadapt
