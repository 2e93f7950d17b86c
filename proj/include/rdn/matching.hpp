#pragma once

#include <vector>

#include "rdn/geometry.hpp"
#include "rdn/model.hpp"
#include "rdn/tensor.hpp"

namespace rdn {

// Keypoints on a regular grid: (margin + i*stride, margin + j*stride)
// staying strictly inside the margin band; row-major order.
std::vector<Keypoint> uniform_grid(int height, int width, int stride,
                                   int margin);

struct Match {
  int idx_a = 0;
  int idx_b = 0;
  double distance = 0.0;
  bool operator==(const Match&) const = default;
};

// Mutual nearest-neighbor matching under Euclidean distance, exhaustive
// scan, ties broken by lowest index. Output sorted by idx_a. With
// mutual=false keeps every A->B nearest neighbor (one-directional NN).
std::vector<Match> mutual_nn_match(
    const std::vector<std::vector<double>>& desc_a,
    const std::vector<std::vector<double>>& desc_b, bool mutual = true);

struct AccuracyReport {
  std::vector<double> thresholds;
  std::vector<double> accuracy;  // fraction correct per threshold
  int match_count = 0;
  bool empty = false;  // no matches: accuracies are 0 and flagged here
};

// Fraction of matches whose ground-truth reprojection error under the
// given homography is within each pixel threshold.
AccuracyReport matching_accuracy(const std::vector<Match>& matches,
                                 const std::vector<Keypoint>& kps_a,
                                 const std::vector<Keypoint>& kps_b,
                                 const PlanarModel& true_h,
                                 const std::vector<double>& thresholds);

// Optional Lowe-style filter: keeps a match only when its distance is at
// most max_ratio times the second-best distance for the same query.
std::vector<Match> ratio_filter(const std::vector<std::vector<double>>& desc_a,
                                const std::vector<std::vector<double>>& desc_b,
                                const std::vector<Match>& matches,
                                double max_ratio);

// Mean gradient magnitude of the grayscale image over the (2r+1)^2 window
// around a keypoint; the flat/textured stratification score.
double mean_gradient_magnitude(const Tensor& image, const Keypoint& k,
                               int radius = 4);

}  // namespace rdn
