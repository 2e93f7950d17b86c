#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "rdn/errors.hpp"

namespace rdn {

// Dense H x W x C grid of doubles, row-major with channel fastest
// (index order y, x, c). The universal carrier for images, feature
// maps and gradients.
struct Tensor {
  int height = 0;
  int width = 0;
  int channels = 0;
  std::vector<double> data;

  Tensor() = default;
  Tensor(int h, int w, int c, double fill = 0.0)
      : height(h), width(w), channels(c) {
    if (h < 1 || w < 1 || c < 0) {
      throw ContractViolation("tensor dimensions must be positive");
    }
    data.assign(static_cast<std::size_t>(h) * w * c, fill);
  }

  std::size_t size() const { return data.size(); }

  std::size_t index(int y, int x, int c) const {
    return (static_cast<std::size_t>(y) * width + x) * channels + c;
  }

  double& at(int y, int x, int c) { return data[index(y, x, c)]; }
  double at(int y, int x, int c) const { return data[index(y, x, c)]; }

  // Contiguous channel vector at one pixel.
  std::span<double> pixel(int y, int x) {
    return {data.data() + index(y, x, 0), static_cast<std::size_t>(channels)};
  }
  std::span<const double> pixel(int y, int x) const {
    return {data.data() + index(y, x, 0), static_cast<std::size_t>(channels)};
  }

  bool same_shape(const Tensor& o) const {
    return height == o.height && width == o.width && channels == o.channels;
  }
};

// Dense per-pixel descriptor field; every pixel vector has unit L2 norm
// (or is exactly zero).
using DescriptorField = Tensor;

}  // namespace rdn
