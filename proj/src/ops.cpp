#include "rdn/ops.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>

#include "rdn/kernels.hpp"

namespace rdn {

ConvLayer::ConvLayer(int out_c, int in_c, int k, int dil)
    : out_channels(out_c), in_channels(in_c), kh(k), kw(k), dilation(dil) {
  if (out_c < 1 || in_c < 1 || k < 1 || dil < 1) {
    throw ContractViolation("invalid convolution layer shape");
  }
  kernel.assign(static_cast<std::size_t>(out_c) * in_c * k * k, 0.0);
  bias.assign(static_cast<std::size_t>(out_c), 0.0);
}

void ConvGrad::zero() {
  std::fill(kernel.begin(), kernel.end(), 0.0);
  std::fill(bias.begin(), bias.end(), 0.0);
}

namespace {

// Repacks the kernel as (o, ky, kx, i) so the inner channel loop is a
// contiguous dot product.
std::vector<double> pack_kernel(const ConvLayer& layer) {
  std::vector<double> packed(layer.kernel.size());
  const int in_c = layer.in_channels;
  for (int o = 0; o < layer.out_channels; ++o) {
    for (int ky = 0; ky < layer.kh; ++ky) {
      for (int kx = 0; kx < layer.kw; ++kx) {
        double* dst =
            packed.data() +
            ((static_cast<std::size_t>(o) * layer.kh + ky) * layer.kw + kx) *
                in_c;
        for (int i = 0; i < in_c; ++i) {
          dst[i] = layer.kernel[layer.kernel_index(o, i, ky, kx)];
        }
      }
    }
  }
  return packed;
}

}  // namespace

Tensor conv2d(const Tensor& input, const ConvLayer& layer) {
  if (input.channels != layer.in_channels) {
    throw ContractViolation("conv2d channel mismatch: input has " +
                            std::to_string(input.channels) + ", layer expects " +
                            std::to_string(layer.in_channels));
  }
  const int pad = layer.padding();
  const int in_c = layer.in_channels;
  const std::vector<double> packed = pack_kernel(layer);
  Tensor out(input.height, input.width, layer.out_channels);
  for (int y = 0; y < input.height; ++y) {
    for (int x = 0; x < input.width; ++x) {
      double* out_px = out.data.data() + out.index(y, x, 0);
      for (int o = 0; o < layer.out_channels; ++o) out_px[o] = layer.bias[o];
      for (int ky = 0; ky < layer.kh; ++ky) {
        const int yy = y - pad + ky * layer.dilation;
        if (yy < 0 || yy >= input.height) continue;
        for (int kx = 0; kx < layer.kw; ++kx) {
          const int xx = x - pad + kx * layer.dilation;
          if (xx < 0 || xx >= input.width) continue;
          const double* in_px = input.data.data() + input.index(yy, xx, 0);
          const double* krow =
              packed.data() +
              (static_cast<std::size_t>(ky) * layer.kw + kx) * in_c;
          const std::size_t o_stride =
              static_cast<std::size_t>(layer.kh) * layer.kw * in_c;
          for (int o = 0; o < layer.out_channels; ++o) {
            out_px[o] += kernels::dot(in_px, krow + o * o_stride, in_c);
          }
        }
      }
    }
  }
  return out;
}

Tensor conv2d_backward(const Tensor& input, const ConvLayer& layer,
                       const Tensor& upstream, ConvGrad* grad) {
  if (input.channels != layer.in_channels ||
      upstream.channels != layer.out_channels ||
      upstream.height != input.height || upstream.width != input.width) {
    throw ContractViolation("conv2d_backward shape mismatch");
  }
  const int pad = layer.padding();
  const int in_c = layer.in_channels;
  const std::vector<double> packed = pack_kernel(layer);
  std::vector<double> packed_grad(grad ? packed.size() : 0, 0.0);
  Tensor grad_in(input.height, input.width, in_c);
  const std::size_t o_stride =
      static_cast<std::size_t>(layer.kh) * layer.kw * in_c;

  for (int y = 0; y < input.height; ++y) {
    for (int x = 0; x < input.width; ++x) {
      const double* up_px = upstream.data.data() + upstream.index(y, x, 0);
      if (grad) {
        for (int o = 0; o < layer.out_channels; ++o) grad->bias[o] += up_px[o];
      }
      for (int ky = 0; ky < layer.kh; ++ky) {
        const int yy = y - pad + ky * layer.dilation;
        if (yy < 0 || yy >= input.height) continue;
        for (int kx = 0; kx < layer.kw; ++kx) {
          const int xx = x - pad + kx * layer.dilation;
          if (xx < 0 || xx >= input.width) continue;
          double* gin_px = grad_in.data.data() + grad_in.index(yy, xx, 0);
          const double* in_px = input.data.data() + input.index(yy, xx, 0);
          const std::size_t tap =
              (static_cast<std::size_t>(ky) * layer.kw + kx) * in_c;
          for (int o = 0; o < layer.out_channels; ++o) {
            const double g = up_px[o];
            if (g == 0.0) continue;
            kernels::axpy(gin_px, packed.data() + tap + o * o_stride, g, in_c);
            if (grad) {
              kernels::axpy(packed_grad.data() + tap + o * o_stride, in_px, g,
                            in_c);
            }
          }
        }
      }
    }
  }
  if (grad) {
    for (int o = 0; o < layer.out_channels; ++o) {
      for (int ky = 0; ky < layer.kh; ++ky) {
        for (int kx = 0; kx < layer.kw; ++kx) {
          const double* src =
              packed_grad.data() +
              ((static_cast<std::size_t>(o) * layer.kh + ky) * layer.kw + kx) *
                  in_c;
          for (int i = 0; i < in_c; ++i) {
            grad->kernel[layer.kernel_index(o, i, ky, kx)] += src[i];
          }
        }
      }
    }
  }
  return grad_in;
}

Tensor relu(const Tensor& input) {
  Tensor out = input;
  for (double& v : out.data) v = std::max(0.0, v);
  return out;
}

Tensor relu_backward(const Tensor& input, const Tensor& upstream) {
  if (!input.same_shape(upstream)) {
    throw ContractViolation("relu_backward shape mismatch");
  }
  Tensor grad_in(input.height, input.width, input.channels);
  for (std::size_t i = 0; i < input.size(); ++i) {
    grad_in.data[i] = input.data[i] > 0.0 ? upstream.data[i] : 0.0;
  }
  return grad_in;
}

namespace {

int pool_window(int window, int h, int w) {
  if (window <= 0) throw ContractViolation("pooling window must be positive");
  return std::min(window, std::min(h, w));
}

}  // namespace

Tensor avg_pool_blocks(const Tensor& input, int window) {
  const int w = pool_window(window, input.height, input.width);
  const int out_h = (input.height + w - 1) / w;
  const int out_w = (input.width + w - 1) / w;
  Tensor out(out_h, out_w, input.channels);
  for (int by = 0; by < out_h; ++by) {
    const int y0 = by * w;
    const int y1 = std::min(y0 + w, input.height);
    for (int bx = 0; bx < out_w; ++bx) {
      const int x0 = bx * w;
      const int x1 = std::min(x0 + w, input.width);
      const double inv = 1.0 / (static_cast<double>(y1 - y0) * (x1 - x0));
      double* out_px = out.data.data() + out.index(by, bx, 0);
      for (int y = y0; y < y1; ++y) {
        for (int x = x0; x < x1; ++x) {
          kernels::axpy(out_px, input.data.data() + input.index(y, x, 0), inv,
                        input.channels);
        }
      }
    }
  }
  return out;
}

Tensor avg_pool_blocks_backward(int in_height, int in_width, int window,
                                const Tensor& upstream) {
  const int w = pool_window(window, in_height, in_width);
  Tensor grad_in(in_height, in_width, upstream.channels);
  for (int by = 0; by < upstream.height; ++by) {
    const int y0 = by * w;
    const int y1 = std::min(y0 + w, in_height);
    for (int bx = 0; bx < upstream.width; ++bx) {
      const int x0 = bx * w;
      const int x1 = std::min(x0 + w, in_width);
      const double inv = 1.0 / (static_cast<double>(y1 - y0) * (x1 - x0));
      const double* up_px = upstream.data.data() + upstream.index(by, bx, 0);
      for (int y = y0; y < y1; ++y) {
        for (int x = x0; x < x1; ++x) {
          kernels::axpy(grad_in.data.data() + grad_in.index(y, x, 0), up_px,
                        inv, upstream.channels);
        }
      }
    }
  }
  return grad_in;
}

namespace {

struct SampleTap {
  int lo;
  int hi;
  double w_hi;  // weight of hi; lo gets 1 - w_hi
};

SampleTap sample_tap(int out_idx, int out_size, int in_size) {
  const double scale = static_cast<double>(in_size) / out_size;
  double u = (out_idx + 0.5) * scale - 0.5;
  u = std::clamp(u, 0.0, static_cast<double>(in_size - 1));
  SampleTap t;
  t.lo = static_cast<int>(std::floor(u));
  t.hi = std::min(t.lo + 1, in_size - 1);
  t.w_hi = u - t.lo;
  return t;
}

}  // namespace

Tensor bilinear_upsample(const Tensor& input, int out_height, int out_width) {
  if (out_height < 1 || out_width < 1) {
    throw ContractViolation("bilinear_upsample output size must be positive");
  }
  Tensor out(out_height, out_width, input.channels);
  std::vector<SampleTap> cols(out_width);
  for (int x = 0; x < out_width; ++x) cols[x] = sample_tap(x, out_width, input.width);
  for (int y = 0; y < out_height; ++y) {
    const SampleTap ry = sample_tap(y, out_height, input.height);
    for (int x = 0; x < out_width; ++x) {
      const SampleTap& rx = cols[x];
      double* out_px = out.data.data() + out.index(y, x, 0);
      const double w00 = (1 - ry.w_hi) * (1 - rx.w_hi);
      const double w01 = (1 - ry.w_hi) * rx.w_hi;
      const double w10 = ry.w_hi * (1 - rx.w_hi);
      const double w11 = ry.w_hi * rx.w_hi;
      kernels::axpy(out_px, input.data.data() + input.index(ry.lo, rx.lo, 0), w00, input.channels);
      kernels::axpy(out_px, input.data.data() + input.index(ry.lo, rx.hi, 0), w01, input.channels);
      kernels::axpy(out_px, input.data.data() + input.index(ry.hi, rx.lo, 0), w10, input.channels);
      kernels::axpy(out_px, input.data.data() + input.index(ry.hi, rx.hi, 0), w11, input.channels);
    }
  }
  return out;
}

Tensor bilinear_upsample_backward(int in_height, int in_width,
                                  const Tensor& upstream) {
  Tensor grad_in(in_height, in_width, upstream.channels);
  std::vector<SampleTap> cols(upstream.width);
  for (int x = 0; x < upstream.width; ++x) {
    cols[x] = sample_tap(x, upstream.width, in_width);
  }
  for (int y = 0; y < upstream.height; ++y) {
    const SampleTap ry = sample_tap(y, upstream.height, in_height);
    for (int x = 0; x < upstream.width; ++x) {
      const SampleTap& rx = cols[x];
      const double* up_px = upstream.data.data() + upstream.index(y, x, 0);
      kernels::axpy(grad_in.data.data() + grad_in.index(ry.lo, rx.lo, 0), up_px,
                    (1 - ry.w_hi) * (1 - rx.w_hi), upstream.channels);
      kernels::axpy(grad_in.data.data() + grad_in.index(ry.lo, rx.hi, 0), up_px,
                    (1 - ry.w_hi) * rx.w_hi, upstream.channels);
      kernels::axpy(grad_in.data.data() + grad_in.index(ry.hi, rx.lo, 0), up_px,
                    ry.w_hi * (1 - rx.w_hi), upstream.channels);
      kernels::axpy(grad_in.data.data() + grad_in.index(ry.hi, rx.hi, 0), up_px,
                    ry.w_hi * rx.w_hi, upstream.channels);
    }
  }
  return grad_in;
}

Tensor l2_normalize_channels(const Tensor& input, double epsilon) {
  if (epsilon <= 0.0) throw ContractViolation("epsilon must be positive");
  Tensor out(input.height, input.width, input.channels);
  for (int y = 0; y < input.height; ++y) {
    for (int x = 0; x < input.width; ++x) {
      const double* d = input.data.data() + input.index(y, x, 0);
      const double norm = std::sqrt(kernels::dot(d, d, input.channels));
      const double s = 1.0 / std::max(norm, epsilon);
      double* o = out.data.data() + out.index(y, x, 0);
      for (int c = 0; c < input.channels; ++c) o[c] = d[c] * s;
    }
  }
  return out;
}

Tensor l2_normalize_channels_backward(const Tensor& input,
                                      const Tensor& upstream, double epsilon) {
  if (!input.same_shape(upstream)) {
    throw ContractViolation("l2_normalize_channels_backward shape mismatch");
  }
  Tensor grad_in(input.height, input.width, input.channels);
  const int c_n = input.channels;
  for (int y = 0; y < input.height; ++y) {
    for (int x = 0; x < input.width; ++x) {
      const double* d = input.data.data() + input.index(y, x, 0);
      const double* g = upstream.data.data() + upstream.index(y, x, 0);
      double* gi = grad_in.data.data() + grad_in.index(y, x, 0);
      const double norm = std::sqrt(kernels::dot(d, d, c_n));
      if (norm > epsilon) {
        // d(d/||d||) = (I - d d^T / ||d||^2) / ||d||
        const double inv = 1.0 / norm;
        const double dg = kernels::dot(d, g, c_n);
        const double k = dg * inv * inv * inv;
        for (int c = 0; c < c_n; ++c) gi[c] = g[c] * inv - d[c] * k;
      } else {
        // max() picks epsilon: the scale is constant here.
        const double inv = 1.0 / epsilon;
        for (int c = 0; c < c_n; ++c) gi[c] = g[c] * inv;
      }
    }
  }
  return grad_in;
}

Tensor concat_channels(const Tensor& a, const Tensor& b) {
  if (a.height != b.height || a.width != b.width) {
    throw ContractViolation("concat_channels spatial mismatch");
  }
  Tensor out(a.height, a.width, a.channels + b.channels);
  for (int y = 0; y < a.height; ++y) {
    for (int x = 0; x < a.width; ++x) {
      double* o = out.data.data() + out.index(y, x, 0);
      std::memcpy(o, a.data.data() + a.index(y, x, 0),
                  sizeof(double) * a.channels);
      std::memcpy(o + a.channels, b.data.data() + b.index(y, x, 0),
                  sizeof(double) * b.channels);
    }
  }
  return out;
}

void concat_channels_backward(const Tensor& upstream, Tensor& grad_a,
                              Tensor& grad_b) {
  if (upstream.channels != grad_a.channels + grad_b.channels ||
      upstream.height != grad_a.height || upstream.width != grad_a.width ||
      upstream.height != grad_b.height || upstream.width != grad_b.width) {
    throw ContractViolation("concat_channels_backward shape mismatch");
  }
  for (int y = 0; y < upstream.height; ++y) {
    for (int x = 0; x < upstream.width; ++x) {
      const double* u = upstream.data.data() + upstream.index(y, x, 0);
      std::memcpy(grad_a.data.data() + grad_a.index(y, x, 0), u,
                  sizeof(double) * grad_a.channels);
      std::memcpy(grad_b.data.data() + grad_b.index(y, x, 0),
                  u + grad_a.channels, sizeof(double) * grad_b.channels);
    }
  }
}

}  // namespace rdn
