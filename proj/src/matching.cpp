#include "rdn/matching.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "rdn/kernels.hpp"

namespace rdn {

std::vector<Keypoint> uniform_grid(int height, int width, int stride,
                                   int margin) {
  if (stride < 1) throw ContractViolation("grid stride must be >= 1");
  if (margin < 0) throw ContractViolation("grid margin must be >= 0");
  std::vector<Keypoint> kps;
  for (int y = margin; y < height - margin; y += stride) {
    for (int x = margin; x < width - margin; x += stride) {
      kps.push_back({x, y});
    }
  }
  return kps;
}

namespace {

int nearest_index(const std::vector<double>& query,
                  const std::vector<std::vector<double>>& pool) {
  int best = 0;
  double best_d = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < pool.size(); ++i) {
    const double d = kernels::squared_distance(query.data(), pool[i].data(),
                                               query.size());
    if (d < best_d) {  // ties keep the lowest index
      best_d = d;
      best = static_cast<int>(i);
    }
  }
  return best;
}

}  // namespace

std::vector<Match> mutual_nn_match(
    const std::vector<std::vector<double>>& desc_a,
    const std::vector<std::vector<double>>& desc_b, bool mutual) {
  if (desc_a.empty() || desc_b.empty()) {
    throw ContractViolation("mutual_nn_match requires nonempty descriptor lists");
  }
  const std::size_t dim = desc_a.front().size();
  for (const auto& d : desc_a) {
    if (d.size() != dim) throw ContractViolation("descriptor dimension mismatch");
  }
  for (const auto& d : desc_b) {
    if (d.size() != dim) throw ContractViolation("descriptor dimension mismatch");
  }

  std::vector<int> nn_ab(desc_a.size());
  for (std::size_t a = 0; a < desc_a.size(); ++a) {
    nn_ab[a] = nearest_index(desc_a[a], desc_b);
  }
  std::vector<int> nn_ba;
  if (mutual) {
    nn_ba.resize(desc_b.size());
    for (std::size_t b = 0; b < desc_b.size(); ++b) {
      nn_ba[b] = nearest_index(desc_b[b], desc_a);
    }
  }

  std::vector<Match> matches;
  for (std::size_t a = 0; a < desc_a.size(); ++a) {
    const int b = nn_ab[a];
    if (mutual && nn_ba[b] != static_cast<int>(a)) continue;
    const double d = std::sqrt(kernels::squared_distance(
        desc_a[a].data(), desc_b[b].data(), dim));
    matches.push_back({static_cast<int>(a), b, d});
  }
  return matches;  // already sorted by idx_a
}

AccuracyReport matching_accuracy(const std::vector<Match>& matches,
                                 const std::vector<Keypoint>& kps_a,
                                 const std::vector<Keypoint>& kps_b,
                                 const PlanarModel& true_h,
                                 const std::vector<double>& thresholds) {
  if (std::abs(mat3_det(true_h.m)) < 1e-15) {
    throw ContractViolation("matching_accuracy requires an invertible model");
  }
  AccuracyReport report;
  report.thresholds = thresholds;
  report.accuracy.assign(thresholds.size(), 0.0);
  report.match_count = static_cast<int>(matches.size());
  if (matches.empty()) {
    report.empty = true;
    return report;
  }
  for (const Match& m : matches) {
    const Keypoint& ka = kps_a.at(m.idx_a);
    const Keypoint& kb = kps_b.at(m.idx_b);
    double px, py;
    project_point(true_h.m, ka.x, ka.y, px, py);
    const double err = std::hypot(px - kb.x, py - kb.y);
    for (std::size_t t = 0; t < thresholds.size(); ++t) {
      if (err <= thresholds[t]) report.accuracy[t] += 1.0;
    }
  }
  for (double& a : report.accuracy) a /= static_cast<double>(matches.size());
  return report;
}

std::vector<Match> ratio_filter(const std::vector<std::vector<double>>& desc_a,
                                const std::vector<std::vector<double>>& desc_b,
                                const std::vector<Match>& matches,
                                double max_ratio) {
  if (max_ratio <= 0.0) throw ContractViolation("ratio must be positive");
  std::vector<Match> kept;
  for (const Match& m : matches) {
    const std::vector<double>& q = desc_a.at(m.idx_a);
    double second = std::numeric_limits<double>::infinity();
    for (std::size_t b = 0; b < desc_b.size(); ++b) {
      if (static_cast<int>(b) == m.idx_b) continue;
      second = std::min(second, kernels::squared_distance(
                                    q.data(), desc_b[b].data(), q.size()));
    }
    second = std::sqrt(second);
    if (second == 0.0 || m.distance <= max_ratio * second) kept.push_back(m);
  }
  return kept;
}

double mean_gradient_magnitude(const Tensor& image, const Keypoint& k,
                               int radius) {
  auto gray = [&image](int y, int x) {
    double s = 0.0;
    for (int c = 0; c < image.channels; ++c) s += image.at(y, x, c);
    return s / image.channels;
  };
  double acc = 0.0;
  int n = 0;
  for (int y = std::max(1, k.y - radius);
       y <= std::min(image.height - 2, k.y + radius); ++y) {
    for (int x = std::max(1, k.x - radius);
         x <= std::min(image.width - 2, k.x + radius); ++x) {
      const double gx = (gray(y, x + 1) - gray(y, x - 1)) * 0.5;
      const double gy = (gray(y + 1, x) - gray(y - 1, x)) * 0.5;
      acc += std::hypot(gx, gy);
      ++n;
    }
  }
  return n > 0 ? acc / n : 0.0;
}

}  // namespace rdn
