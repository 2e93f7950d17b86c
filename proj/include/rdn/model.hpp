#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "rdn/autograd.hpp"
#include "rdn/ops.hpp"
#include "rdn/tensor.hpp"

namespace rdn {

// Network hyper-parameters. The full profile produces 256-d descriptors;
// the quarter profile (64-d) keeps tests and desk-scale training fast.
struct RdnConfig {
  std::array<int, 6> fen_channels{32, 32, 64, 64, 128, 128};
  std::array<int, 6> fen_dilations{1, 1, 2, 2, 4, 4};
  std::array<int, 4> spp_windows{64, 32, 16, 8};
  int branch_channels = 32;  // fen_channels.back() / 4
  double epsilon = 1e-10;
  std::uint64_t seed = 0;

  static RdnConfig full() { return RdnConfig{}; }
  static RdnConfig quarter();

  int descriptor_dim() const { return 2 * fen_channels.back(); }
  void validate() const;
};

// Six FEN convolutions plus four 1x1 pyramid-branch reducers.
struct RdnWeights {
  std::vector<ConvLayer> fen;
  std::vector<ConvLayer> reducers;
};

struct RdnGrads {
  std::vector<ConvGrad> fen;
  std::vector<ConvGrad> reducers;

  explicit RdnGrads(const RdnWeights& w);
  void zero();
};

// Seeded He-style initialization: kernel entries ~ N(0, 2 / fan_in),
// biases zero.
RdnWeights init_weights(const RdnConfig& config);

// Six dilated 3x3 convolutions, ReLU after layers 1-5, spatial size
// preserved throughout. Input must be H x W x 3.
Tensor fen_forward(const Tensor& image, const RdnWeights& weights,
                   const RdnConfig& config);

// Pyramid branches: avg pool -> 1x1 reduce -> ReLU -> upsample, then
// channel concatenation in spp_windows order.
Tensor hffm_forward(const Tensor& d_low, const RdnWeights& weights,
                    const RdnConfig& config);

// Full pipeline: l2-normalized concat of d_low and d_high.
DescriptorField describe(const Tensor& image, const RdnWeights& weights,
                         const RdnConfig& config);

// Tape node handles for the differentiable pipeline.
struct RdnForwardNodes {
  int image = -1;
  int d_low = -1;
  int d_output = -1;
};

// Same pipeline recorded on a tape; gradients land in *grads on backward.
RdnForwardNodes describe_on_tape(GradTape& tape, Tensor image,
                                 const RdnWeights& weights, RdnGrads* grads,
                                 const RdnConfig& config);

struct Keypoint {
  int x = 0;  // column
  int y = 0;  // row
  bool operator==(const Keypoint&) const = default;
};

std::vector<std::vector<double>> sample_descriptors(
    const DescriptorField& field, const std::vector<Keypoint>& keypoints);

// Binary weight file, little-endian: magic "RDNW", u32 version, u32 layer
// count, per layer u32 outC/inC/kH/kW/dilation then f32 kernel and bias,
// trailing CRC32 of all preceding bytes.
void save_weights(const RdnWeights& weights, const std::string& path);
RdnWeights load_weights(const std::string& path);

// Decode error when the stored shapes disagree with the config.
void validate_weights(const RdnWeights& weights, const RdnConfig& config);

// Reconstructs the config implied by loaded weights (spp windows keep
// their defaults; they are not stored in the weights file).
RdnConfig config_from_weights(const RdnWeights& weights);

// FEN-only ablation: the first half of each pixel vector, re-normalized.
DescriptorField fen_only_field(const DescriptorField& full, double epsilon);

// Flat views over every parameter block, for the optimizer and gradient
// checks. Order: fen kernels/biases then reducer kernels/biases.
std::vector<ParamBlock> parameter_blocks(RdnWeights& weights,
                                         const RdnGrads& grads);

}  // namespace rdn
