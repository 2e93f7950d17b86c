#pragma once

#include <string>
#include <vector>

#include "rdn/geometry.hpp"
#include "rdn/matching.hpp"
#include "rdn/tensor.hpp"
#include "rdn/trainer.hpp"

namespace rdn {

// Binary PGM (P5) / PPM (P6), maxval 255; intensities map to [0,1].
// Grayscale reads are replicated to 3 channels.
Tensor read_image(const std::string& path);
// Writes P6 for 3-channel tensors, P5 for single-channel.
void write_image(const Tensor& image, const std::string& path);

// Sparse descriptor file: magic "RDND", u32 version, u32 count, u32 dim,
// count records of (f32 x, f32 y, dim f32s), CRC32 trailer.
struct SparseDescriptors {
  std::vector<Keypoint> keypoints;
  std::vector<std::vector<double>> descriptors;
};

void write_descriptors(const SparseDescriptors& d, const std::string& path);
SparseDescriptors read_descriptors(const std::string& path);

// Text match file: idxA, idxB, x1, y1, x2, y2, distance per line,
// tab-separated, 6-decimal fixed point.
void write_matches(const std::vector<Match>& matches,
                   const std::vector<Keypoint>& kps_a,
                   const std::vector<Keypoint>& kps_b,
                   const std::string& path);

// Text model file: header line with the kind, then 3 rows of 3 reals.
void write_model(const PlanarModel& model, const std::string& path);
PlanarModel read_model(const std::string& path);

// Correspondence file: x1, y1, x2, y2 per line, tab-separated.
void write_correspondences(const std::vector<Correspondence>& corrs,
                           const std::string& path);
std::vector<Correspondence> read_correspondences(const std::string& path);

// Manifest: image1, image2, model, correspondences paths per line.
struct ManifestEntry {
  std::string image1;
  std::string image2;
  std::string model;
  std::string corrs;
};

void write_manifest(const std::vector<ManifestEntry>& entries,
                    const std::string& path);
std::vector<ManifestEntry> read_manifest(const std::string& path);

// Loss curve: "epoch<TAB>meanLoss<TAB>lr" per line.
void write_loss_curve(const std::vector<EpochStat>& curve,
                      const std::string& path);

}  // namespace rdn
