#include "rdn/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "rdn/errors.hpp"

namespace rdn {

Mat3 mat3_identity() { return {1, 0, 0, 0, 1, 0, 0, 0, 1}; }

Mat3 mat3_mul(const Mat3& a, const Mat3& b) {
  Mat3 r{};
  for (int i = 0; i < 3; ++i) {
    for (int j = 0; j < 3; ++j) {
      r[i * 3 + j] = a[i * 3] * b[j] + a[i * 3 + 1] * b[3 + j] +
                     a[i * 3 + 2] * b[6 + j];
    }
  }
  return r;
}

double mat3_det(const Mat3& m) {
  return m[0] * (m[4] * m[8] - m[5] * m[7]) -
         m[1] * (m[3] * m[8] - m[5] * m[6]) +
         m[2] * (m[3] * m[7] - m[4] * m[6]);
}

Mat3 mat3_inverse(const Mat3& m) {
  const double det = mat3_det(m);
  if (std::abs(det) < 1e-300) throw DegeneracyError("singular 3x3 matrix");
  const double inv = 1.0 / det;
  Mat3 r;
  r[0] = (m[4] * m[8] - m[5] * m[7]) * inv;
  r[1] = (m[2] * m[7] - m[1] * m[8]) * inv;
  r[2] = (m[1] * m[5] - m[2] * m[4]) * inv;
  r[3] = (m[5] * m[6] - m[3] * m[8]) * inv;
  r[4] = (m[0] * m[8] - m[2] * m[6]) * inv;
  r[5] = (m[2] * m[3] - m[0] * m[5]) * inv;
  r[6] = (m[3] * m[7] - m[4] * m[6]) * inv;
  r[7] = (m[1] * m[6] - m[0] * m[7]) * inv;
  r[8] = (m[0] * m[4] - m[1] * m[3]) * inv;
  return r;
}

void project_point(const Mat3& h, double x, double y, double& out_x,
                   double& out_y) {
  const double w = h[6] * x + h[7] * y + h[8];
  if (std::abs(w) < 1e-300) {
    throw DegeneracyError("point projects to infinity");
  }
  out_x = (h[0] * x + h[1] * y + h[2]) / w;
  out_y = (h[3] * x + h[4] * y + h[5]) / w;
}

namespace {

// Cyclic Jacobi eigensolver for a symmetric n x n matrix (n <= 9 here).
// On exit the diagonal of a holds the eigenvalues and the columns of v
// the corresponding eigenvectors.
void jacobi_eigen_sym(std::vector<double>& a, int n, std::vector<double>& v) {
  v.assign(static_cast<std::size_t>(n) * n, 0.0);
  for (int i = 0; i < n; ++i) v[i * n + i] = 1.0;
  double scale = 0.0;
  for (int i = 0; i < n; ++i) scale = std::max(scale, std::abs(a[i * n + i]));
  for (double x : a) scale = std::max(scale, std::abs(x));
  if (scale == 0.0) return;
  const double tol = 1e-14 * scale;

  for (int sweep = 0; sweep < 100; ++sweep) {
    double off = 0.0;
    for (int p = 0; p < n; ++p) {
      for (int q = p + 1; q < n; ++q) off += std::abs(a[p * n + q]);
    }
    if (off < tol) break;
    for (int p = 0; p < n; ++p) {
      for (int q = p + 1; q < n; ++q) {
        const double apq = a[p * n + q];
        if (std::abs(apq) < 1e-300) continue;
        const double theta = (a[q * n + q] - a[p * n + p]) / (2.0 * apq);
        const double t = (theta >= 0 ? 1.0 : -1.0) /
                         (std::abs(theta) + std::sqrt(theta * theta + 1.0));
        const double c = 1.0 / std::sqrt(t * t + 1.0);
        const double s = t * c;
        for (int k = 0; k < n; ++k) {
          const double akp = a[k * n + p];
          const double akq = a[k * n + q];
          a[k * n + p] = c * akp - s * akq;
          a[k * n + q] = s * akp + c * akq;
        }
        for (int k = 0; k < n; ++k) {
          const double apk = a[p * n + k];
          const double aqk = a[q * n + k];
          a[p * n + k] = c * apk - s * aqk;
          a[q * n + k] = s * apk + c * aqk;
        }
        for (int k = 0; k < n; ++k) {
          const double vkp = v[k * n + p];
          const double vkq = v[k * n + q];
          v[k * n + p] = c * vkp - s * vkq;
          v[k * n + q] = s * vkp + c * vkq;
        }
      }
    }
  }
}

// Smallest-eigenvalue eigenvector of A^T A built from the 2N x 9 (or
// N x 9) design matrix rows. Throws when the nullspace is not
// one-dimensional (degenerate configuration).
std::array<double, 9> smallest_singular_vector(
    const std::vector<std::array<double, 9>>& rows, bool check_rank) {
  std::vector<double> m(81, 0.0);
  for (const auto& r : rows) {
    for (int i = 0; i < 9; ++i) {
      for (int j = i; j < 9; ++j) m[i * 9 + j] += r[i] * r[j];
    }
  }
  for (int i = 0; i < 9; ++i) {
    for (int j = 0; j < i; ++j) m[i * 9 + j] = m[j * 9 + i];
  }
  std::vector<double> v;
  jacobi_eigen_sym(m, 9, v);
  int min_i = 0, next_i = -1;
  double max_ev = 0.0;
  for (int i = 0; i < 9; ++i) {
    const double ev = m[i * 9 + i];
    max_ev = std::max(max_ev, std::abs(ev));
    if (ev < m[min_i * 9 + min_i]) min_i = i;
  }
  for (int i = 0; i < 9; ++i) {
    if (i == min_i) continue;
    if (next_i < 0 || m[i * 9 + i] < m[next_i * 9 + next_i]) next_i = i;
  }
  if (check_rank && max_ev > 0.0 &&
      m[next_i * 9 + next_i] <= 1e-10 * max_ev) {
    throw DegeneracyError("rank-deficient point configuration");
  }
  std::array<double, 9> h;
  for (int i = 0; i < 9; ++i) h[i] = v[i * 9 + min_i];
  return h;
}

void frobenius_normalize(Mat3& m, bool fix_sign) {
  double norm = 0.0;
  for (double x : m) norm += x * x;
  norm = std::sqrt(norm);
  if (norm < 1e-300) throw DegeneracyError("zero model matrix");
  double sign = 1.0;
  if (fix_sign) {
    double best = 0.0;
    for (double x : m) {
      if (std::abs(x) > std::abs(best)) best = x;
    }
    if (best < 0.0) sign = -1.0;
  }
  for (double& x : m) x = x * sign / norm;
}

struct Normalization {
  std::vector<double> xs, ys;
  Mat3 transform;
};

Normalization hartley(const std::vector<double>& xs,
                      const std::vector<double>& ys) {
  Normalization n;
  n.xs = xs;
  n.ys = ys;
  n.transform = normalize_points(n.xs, n.ys);
  return n;
}

}  // namespace

Mat3 normalize_points(std::vector<double>& xs, std::vector<double>& ys) {
  if (xs.size() != ys.size() || xs.size() < 2) {
    throw ContractViolation("normalize_points requires >= 2 points");
  }
  const double n = static_cast<double>(xs.size());
  double cx = 0.0, cy = 0.0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    cx += xs[i];
    cy += ys[i];
  }
  cx /= n;
  cy /= n;
  double mean_dist = 0.0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    mean_dist += std::hypot(xs[i] - cx, ys[i] - cy);
  }
  mean_dist /= n;
  if (mean_dist < 1e-12) {
    throw DegeneracyError("all points are (nearly) identical");
  }
  const double s = std::sqrt(2.0) / mean_dist;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    xs[i] = (xs[i] - cx) * s;
    ys[i] = (ys[i] - cy) * s;
  }
  return {s, 0, -s * cx, 0, s, -s * cy, 0, 0, 1};
}

PlanarModel dlt_homography(const std::vector<PointPair>& pairs) {
  if (pairs.size() < 4) {
    throw ContractViolation("dlt_homography requires >= 4 point pairs");
  }
  std::vector<double> x1, y1, x2, y2;
  for (const PointPair& p : pairs) {
    x1.push_back(p.x1);
    y1.push_back(p.y1);
    x2.push_back(p.x2);
    y2.push_back(p.y2);
  }
  Normalization n1 = hartley(x1, y1);
  Normalization n2 = hartley(x2, y2);

  std::vector<std::array<double, 9>> rows;
  rows.reserve(pairs.size() * 2);
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    const double u = n1.xs[i], v = n1.ys[i];
    const double up = n2.xs[i], vp = n2.ys[i];
    rows.push_back({-u, -v, -1, 0, 0, 0, up * u, up * v, up});
    rows.push_back({0, 0, 0, -u, -v, -1, vp * u, vp * v, vp});
  }
  const std::array<double, 9> h = smallest_singular_vector(rows, true);
  Mat3 hn;
  std::copy(h.begin(), h.end(), hn.begin());
  Mat3 result = mat3_mul(mat3_inverse(n2.transform), mat3_mul(hn, n1.transform));
  frobenius_normalize(result, true);
  if (std::abs(mat3_det(result)) < 1e-12) {
    throw DegeneracyError("estimated homography is singular");
  }
  return {result, ModelKind::kHomography};
}

PlanarModel eight_point_fundamental(const std::vector<PointPair>& pairs) {
  if (pairs.size() < 8) {
    throw ContractViolation("eight_point_fundamental requires >= 8 point pairs");
  }
  std::vector<double> x1, y1, x2, y2;
  for (const PointPair& p : pairs) {
    x1.push_back(p.x1);
    y1.push_back(p.y1);
    x2.push_back(p.x2);
    y2.push_back(p.y2);
  }
  Normalization n1 = hartley(x1, y1);
  Normalization n2 = hartley(x2, y2);

  std::vector<std::array<double, 9>> rows;
  rows.reserve(pairs.size());
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    const double u = n1.xs[i], v = n1.ys[i];
    const double up = n2.xs[i], vp = n2.ys[i];
    rows.push_back({up * u, up * v, up, vp * u, vp * v, vp, u, v, 1.0});
  }
  const std::array<double, 9> f = smallest_singular_vector(rows, true);
  Mat3 fn;
  std::copy(f.begin(), f.end(), fn.begin());

  // Rank-2 enforcement: subtract the component along the smallest right
  // singular vector, F' = F (I - v3 v3^T).
  std::vector<double> ftf(9, 0.0);
  for (int i = 0; i < 3; ++i) {
    for (int j = 0; j < 3; ++j) {
      double s = 0.0;
      for (int k = 0; k < 3; ++k) s += fn[k * 3 + i] * fn[k * 3 + j];
      ftf[i * 3 + j] = s;
    }
  }
  std::vector<double> evec;
  jacobi_eigen_sym(ftf, 3, evec);
  int min_i = 0;
  for (int i = 1; i < 3; ++i) {
    if (ftf[i * 3 + i] < ftf[min_i * 3 + min_i]) min_i = i;
  }
  const double v3[3] = {evec[0 * 3 + min_i], evec[1 * 3 + min_i],
                        evec[2 * 3 + min_i]};
  double fv3[3];
  for (int i = 0; i < 3; ++i) {
    fv3[i] = fn[i * 3] * v3[0] + fn[i * 3 + 1] * v3[1] + fn[i * 3 + 2] * v3[2];
  }
  for (int i = 0; i < 3; ++i) {
    for (int j = 0; j < 3; ++j) fn[i * 3 + j] -= fv3[i] * v3[j];
  }

  Mat3 result = mat3_mul(
      // F = T2^T F_norm T1
      Mat3{n2.transform[0], n2.transform[3], n2.transform[6],
           n2.transform[1], n2.transform[4], n2.transform[7],
           n2.transform[2], n2.transform[5], n2.transform[8]},
      mat3_mul(fn, n1.transform));
  frobenius_normalize(result, false);
  return {result, ModelKind::kFundamental};
}

double sampson_distance(const PlanarModel& model, const PointPair& pair) {
  if (model.kind != ModelKind::kFundamental) {
    throw ContractViolation("sampson_distance requires a fundamental matrix");
  }
  const Mat3& f = model.m;
  const double fx1[3] = {f[0] * pair.x1 + f[1] * pair.y1 + f[2],
                         f[3] * pair.x1 + f[4] * pair.y1 + f[5],
                         f[6] * pair.x1 + f[7] * pair.y1 + f[8]};
  const double ftx2[3] = {f[0] * pair.x2 + f[3] * pair.y2 + f[6],
                          f[1] * pair.x2 + f[4] * pair.y2 + f[7],
                          f[2] * pair.x2 + f[5] * pair.y2 + f[8]};
  const double num = pair.x2 * fx1[0] + pair.y2 * fx1[1] + fx1[2];
  const double denom =
      fx1[0] * fx1[0] + fx1[1] * fx1[1] + ftx2[0] * ftx2[0] + ftx2[1] * ftx2[1];
  if (denom < 1e-300) throw DegeneracyError("degenerate pair for Sampson distance");
  return num * num / denom;
}

double reprojection_error(const PlanarModel& model, const PointPair& pair) {
  double px, py;
  project_point(model.m, pair.x1, pair.y1, px, py);
  return std::hypot(px - pair.x2, py - pair.y2);
}

namespace {

// splitmix64; each RANSAC iteration derives its own stream so results do
// not depend on evaluation order.
struct SplitMix64 {
  std::uint64_t state;
  std::uint64_t next() {
    std::uint64_t z = (state += 0x9E3779B97F4A7C15ULL);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
  }
  // Uniform in [0, bound) by rejection.
  std::uint64_t below(std::uint64_t bound) {
    const std::uint64_t limit = UINT64_MAX - UINT64_MAX % bound;
    std::uint64_t r;
    do {
      r = next();
    } while (r >= limit);
    return r % bound;
  }
};

double model_error(const PlanarModel& model, const PointPair& p) {
  return model.kind == ModelKind::kHomography ? reprojection_error(model, p)
                                              : sampson_distance(model, p);
}

std::vector<int> inliers_under(const PlanarModel& model,
                               const std::vector<PointPair>& pairs,
                               double threshold) {
  std::vector<int> idx;
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    double e;
    try {
      e = model_error(model, pairs[i]);
    } catch (const DegeneracyError&) {
      continue;
    }
    if (e <= threshold) idx.push_back(static_cast<int>(i));
  }
  return idx;
}

PlanarModel fit(const std::vector<PointPair>& pairs, ModelKind kind) {
  return kind == ModelKind::kHomography ? dlt_homography(pairs)
                                        : eight_point_fundamental(pairs);
}

}  // namespace

RansacResult ransac(const std::vector<PointPair>& pairs, ModelKind kind,
                    double threshold, int max_iterations, std::uint64_t seed) {
  const std::size_t sample_size = kind == ModelKind::kHomography ? 4 : 8;
  if (pairs.size() < sample_size) {
    throw ContractViolation("ransac needs at least " +
                            std::to_string(sample_size) + " matches, got " +
                            std::to_string(pairs.size()));
  }
  if (threshold <= 0.0) throw ContractViolation("threshold must be positive");
  if (max_iterations < 1) {
    throw ContractViolation("max_iterations must be >= 1");
  }

  std::vector<int> best_inliers;
  PlanarModel best_model;
  int iterations = 0;
  double required = static_cast<double>(max_iterations);

  for (int it = 0; it < max_iterations && it < required; ++it) {
    ++iterations;
    SplitMix64 rng{seed ^ (0xA24BAED4963EE407ULL * (static_cast<std::uint64_t>(it) + 1))};
    std::vector<std::size_t> sample;
    while (sample.size() < sample_size) {
      const std::size_t cand = rng.below(pairs.size());
      if (std::find(sample.begin(), sample.end(), cand) == sample.end()) {
        sample.push_back(cand);
      }
    }
    std::vector<PointPair> minimal;
    for (std::size_t s : sample) minimal.push_back(pairs[s]);

    PlanarModel model;
    try {
      model = fit(minimal, kind);
    } catch (const DegeneracyError&) {
      continue;
    }
    std::vector<int> inl = inliers_under(model, pairs, threshold);
    if (inl.size() > best_inliers.size()) {
      best_inliers = std::move(inl);
      best_model = model;
      // 99%-confidence adaptive iteration bound.
      const double w =
          static_cast<double>(best_inliers.size()) / pairs.size();
      const double p_all = std::pow(w, static_cast<double>(sample_size));
      if (p_all >= 1.0) {
        required = iterations;
      } else if (p_all > 0.0) {
        required = std::min(required,
                            std::log(0.01) / std::log(1.0 - p_all));
      }
    }
  }

  if (best_inliers.size() < sample_size + 1) {
    throw NoConsensusError("no model with enough inliers (best " +
                           std::to_string(best_inliers.size()) + ")");
  }

  std::vector<PointPair> support;
  for (int i : best_inliers) support.push_back(pairs[i]);
  PlanarModel refit = best_model;
  try {
    refit = fit(support, kind);
  } catch (const DegeneracyError&) {
    // keep the minimal-sample model
  }
  std::vector<int> final_inliers = inliers_under(refit, pairs, threshold);
  if (final_inliers.size() < best_inliers.size()) {
    // refit lost consensus; fall back to the sample model and its inliers
    refit = best_model;
    final_inliers = std::move(best_inliers);
  }
  return {refit, std::move(final_inliers), iterations};
}

}  // namespace rdn
