#pragma once

#include <vector>

#include "rdn/tensor.hpp"

namespace rdn {

// 2-D convolution weights. Kernel layout is (outC, inC, kH, kW); zero
// padding is fixed so output spatial size equals input spatial size.
struct ConvLayer {
  int out_channels = 0;
  int in_channels = 0;
  int kh = 0;
  int kw = 0;
  int dilation = 1;
  std::vector<double> kernel;  // outC * inC * kH * kW
  std::vector<double> bias;    // outC

  ConvLayer() = default;
  ConvLayer(int out_c, int in_c, int k, int dil);

  int padding() const { return (kh - 1) / 2 * dilation; }
  std::size_t kernel_index(int o, int i, int ky, int kx) const {
    return ((static_cast<std::size_t>(o) * in_channels + i) * kh + ky) * kw + kx;
  }
};

// Gradient accumulator shaped like one ConvLayer.
struct ConvGrad {
  std::vector<double> kernel;
  std::vector<double> bias;

  explicit ConvGrad(const ConvLayer& layer)
      : kernel(layer.kernel.size(), 0.0), bias(layer.bias.size(), 0.0) {}
  void zero();
};

Tensor conv2d(const Tensor& input, const ConvLayer& layer);
// Returns the input gradient; accumulates parameter gradients into *grad
// when non-null.
Tensor conv2d_backward(const Tensor& input, const ConvLayer& layer,
                       const Tensor& upstream, ConvGrad* grad);

Tensor relu(const Tensor& input);
Tensor relu_backward(const Tensor& input, const Tensor& upstream);

// Non-overlapping tiling with stride = window (clamped to the image);
// edge blocks average over their actual coverage.
Tensor avg_pool_blocks(const Tensor& input, int window);
Tensor avg_pool_blocks_backward(int in_height, int in_width, int window,
                                const Tensor& upstream);

// Center-aligned bilinear resampling with edge clamping.
Tensor bilinear_upsample(const Tensor& input, int out_height, int out_width);
Tensor bilinear_upsample_backward(int in_height, int in_width,
                                  const Tensor& upstream);

// Per-pixel d / max(||d||, epsilon).
Tensor l2_normalize_channels(const Tensor& input, double epsilon = 1e-10);
Tensor l2_normalize_channels_backward(const Tensor& input,
                                      const Tensor& upstream, double epsilon);

Tensor concat_channels(const Tensor& a, const Tensor& b);
// Splits the upstream gradient of concat_channels back into the two parts.
void concat_channels_backward(const Tensor& upstream, Tensor& grad_a,
                              Tensor& grad_b);

}  // namespace rdn
