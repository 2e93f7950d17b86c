#pragma once

#include <array>
#include <cstdint>
#include <vector>

namespace rdn {

// Row-major 3x3 matrix.
using Mat3 = std::array<double, 9>;

enum class ModelKind { kHomography, kFundamental };

// 3x3 projective model: a homography (invertible, Frobenius norm 1,
// largest-magnitude entry positive) or a fundamental matrix (rank 2,
// Frobenius norm 1).
struct PlanarModel {
  Mat3 m{};
  ModelKind kind = ModelKind::kHomography;
};

struct PointPair {
  double x1 = 0, y1 = 0;
  double x2 = 0, y2 = 0;
};

Mat3 mat3_identity();
Mat3 mat3_mul(const Mat3& a, const Mat3& b);
Mat3 mat3_inverse(const Mat3& m);
double mat3_det(const Mat3& m);

// Applies a homography to (x, y); throws on a vanishing homogeneous
// coordinate.
void project_point(const Mat3& h, double x, double y, double& out_x,
                   double& out_y);

// Hartley normalization: centroid to origin, mean distance sqrt(2).
// Returns the similarity transform applied.
Mat3 normalize_points(std::vector<double>& xs, std::vector<double>& ys);

// Normalized DLT from >= 4 pairs; smallest singular vector of the stacked
// system via a Jacobi eigensolver on the 9x9 normal matrix.
PlanarModel dlt_homography(const std::vector<PointPair>& pairs);

// Normalized eight-point algorithm with rank-2 enforcement.
PlanarModel eight_point_fundamental(const std::vector<PointPair>& pairs);

double sampson_distance(const PlanarModel& model, const PointPair& pair);

// Reprojection error ||H x1 - x2|| for homographies.
double reprojection_error(const PlanarModel& model, const PointPair& pair);

struct RansacResult {
  PlanarModel model;
  std::vector<int> inlier_indices;  // sorted
  int iterations_run = 0;
};

// Seeded deterministic RANSAC: iteration i draws its minimal sample from
// splitmix64(seed ^ mix(i)), so results are reproducible and independent
// of evaluation order. Adaptive exit at 99% confidence; final model refit
// on the full inlier set.
RansacResult ransac(const std::vector<PointPair>& pairs, ModelKind kind,
                    double threshold, int max_iterations, std::uint64_t seed);

}  // namespace rdn
