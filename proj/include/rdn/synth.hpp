#pragma once

#include <cstdint>
#include <vector>

#include "rdn/geometry.hpp"
#include "rdn/tensor.hpp"
#include "rdn/trainer.hpp"

namespace rdn {

// Random warp and photometric jitter ranges for pair synthesis.
struct WarpSpec {
  int frame_width = 64;
  int frame_height = 64;
  double max_rotation_deg = 15.0;
  double max_scale_log = 0.22314355131;  // log(1.25)
  double max_translation = 8.0;          // pixels
  double max_perspective = 0.05;         // corner jitter, fraction of frame
  double brightness_range = 0.1;
  double contrast_range = 0.2;  // factor drawn from [1-c, 1+c]
  double noise_sigma = 0.01;
  std::uint64_t seed = 0;

  void validate() const;
};

struct TrainingPair {
  Tensor image1;
  Tensor image2;
  PlanarModel h;  // image1 -> image2
  std::vector<Correspondence> corrs;
  std::vector<std::uint8_t> valid_mask;  // per image2 pixel, row-major
};

// Seeded composition of rotation, log-uniform scale, translation and
// per-corner perspective jitter about the frame center.
PlanarModel random_homography(const WarpSpec& spec);

struct WarpedImage {
  Tensor image;
  std::vector<std::uint8_t> valid;  // row-major y * W + x
};

// Inverse warping with bilinear sampling; out-of-frame sources are zero
// and masked invalid.
WarpedImage warp_image(const Tensor& image, const PlanarModel& h);

// Full synthetic pair: warped + photometrically jittered second image and
// grid correspondences (margin 16) whose rounded projections stay valid.
TrainingPair make_pair(const Tensor& image, const WarpSpec& spec,
                       int grid_stride);

// Test image with two constant-intensity flat rectangles whose interiors
// are locally indistinguishable but carry different border textures.
Tensor flat_fixture(int size, std::uint64_t seed);

// Seeded smooth-ish random texture in [0,1], 3 channels.
Tensor random_texture(int height, int width, std::uint64_t seed);

}  // namespace rdn
