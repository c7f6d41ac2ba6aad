#pragma once

#include <cstddef>
#include <vector>

namespace guq {

/// Affine per-entry standardization, (v − shift)/scale.
struct Normalization {
  std::vector<double> shift;
  std::vector<double> scale;

  std::size_t size() const { return shift.size(); }
  double apply(std::size_t i, double v) const { return (v - shift[i]) / scale[i]; }
  double invert(std::size_t i, double v) const { return v * scale[i] + shift[i]; }

  static Normalization identity(std::size_t n) {
    return {std::vector<double>(n, 0.0), std::vector<double>(n, 1.0)};
  }
};

}  // namespace guq
