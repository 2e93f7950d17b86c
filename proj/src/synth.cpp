#include "rdn/synth.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>

namespace rdn {

void WarpSpec::validate() const {
  if (frame_width < 2 || frame_height < 2) {
    throw ContractViolation("frame size must be at least 2x2");
  }
  if (max_rotation_deg < 0 || max_scale_log < 0 || max_translation < 0 ||
      max_perspective < 0 || brightness_range < 0 || contrast_range < 0 ||
      noise_sigma < 0) {
    throw ContractViolation("warp spec ranges must be non-negative");
  }
}

namespace {

PlanarModel draw_homography(const WarpSpec& spec, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> unit(-1.0, 1.0);
  const double theta =
      unit(rng) * spec.max_rotation_deg * std::numbers::pi / 180.0;
  const double scale = std::exp(unit(rng) * spec.max_scale_log);
  const double tx = unit(rng) * spec.max_translation;
  const double ty = unit(rng) * spec.max_translation;
  const double cx = (spec.frame_width - 1) / 2.0;
  const double cy = (spec.frame_height - 1) / 2.0;
  const double ca = std::cos(theta) * scale;
  const double sa = std::sin(theta) * scale;

  // Similarity about the frame center plus translation.
  auto apply = [&](double x, double y, double& ox, double& oy) {
    const double dx = x - cx;
    const double dy = y - cy;
    ox = ca * dx - sa * dy + cx + tx;
    oy = sa * dx + ca * dy + cy + ty;
  };

  const double corners[4][2] = {
      {0.0, 0.0},
      {static_cast<double>(spec.frame_width - 1), 0.0},
      {static_cast<double>(spec.frame_width - 1),
       static_cast<double>(spec.frame_height - 1)},
      {0.0, static_cast<double>(spec.frame_height - 1)}};
  std::vector<PointPair> pairs;
  for (const auto& c : corners) {
    PointPair p;
    p.x1 = c[0];
    p.y1 = c[1];
    apply(c[0], c[1], p.x2, p.y2);
    p.x2 += unit(rng) * spec.max_perspective * spec.frame_width;
    p.y2 += unit(rng) * spec.max_perspective * spec.frame_height;
    pairs.push_back(p);
  }
  return dlt_homography(pairs);
}

}  // namespace

PlanarModel random_homography(const WarpSpec& spec) {
  spec.validate();
  std::mt19937_64 rng(spec.seed);
  for (int attempt = 0; attempt < 16; ++attempt) {
    try {
      PlanarModel h = draw_homography(spec, rng);
      if (std::abs(mat3_det(h.m)) > 1e-9) return h;
    } catch (const DegeneracyError&) {
      // re-draw
    }
  }
  throw DegeneracyError("could not draw an invertible homography");
}

WarpedImage warp_image(const Tensor& image, const PlanarModel& h) {
  const Mat3 inv = mat3_inverse(h.m);  // throws on singular input
  WarpedImage out;
  out.image = Tensor(image.height, image.width, image.channels);
  out.valid.assign(static_cast<std::size_t>(image.height) * image.width, 0);
  for (int y = 0; y < image.height; ++y) {
    for (int x = 0; x < image.width; ++x) {
      double sx, sy;
      try {
        project_point(inv, x, y, sx, sy);
      } catch (const DegeneracyError&) {
        continue;
      }
      if (sx < 0.0 || sy < 0.0 || sx > image.width - 1 ||
          sy > image.height - 1) {
        continue;
      }
      const int x0 = static_cast<int>(std::floor(sx));
      const int y0 = static_cast<int>(std::floor(sy));
      const int x1 = std::min(x0 + 1, image.width - 1);
      const int y1 = std::min(y0 + 1, image.height - 1);
      const double fx = sx - x0;
      const double fy = sy - y0;
      for (int c = 0; c < image.channels; ++c) {
        const double v =
            (1 - fy) * ((1 - fx) * image.at(y0, x0, c) + fx * image.at(y0, x1, c)) +
            fy * ((1 - fx) * image.at(y1, x0, c) + fx * image.at(y1, x1, c));
        out.image.at(y, x, c) = v;
      }
      out.valid[static_cast<std::size_t>(y) * image.width + x] = 1;
    }
  }
  return out;
}

TrainingPair make_pair(const Tensor& image, const WarpSpec& spec,
                       int grid_stride) {
  if (grid_stride < 1) throw ContractViolation("grid stride must be >= 1");
  WarpSpec s = spec;
  s.frame_width = image.width;
  s.frame_height = image.height;
  s.validate();

  TrainingPair pair;
  pair.image1 = image;
  pair.h = random_homography(s);
  WarpedImage warped = warp_image(image, pair.h);
  pair.valid_mask = std::move(warped.valid);
  pair.image2 = std::move(warped.image);

  // Photometric jitter on image2 only; the generator continues past the
  // draws consumed by random_homography so jitter and warp decorrelate.
  std::mt19937_64 rng(s.seed ^ 0x706A6F74656A6974ULL);
  std::uniform_real_distribution<double> unit(-1.0, 1.0);
  const double contrast = 1.0 + unit(rng) * s.contrast_range;
  const double brightness = unit(rng) * s.brightness_range;
  std::normal_distribution<double> noise(0.0, s.noise_sigma);
  for (int y = 0; y < pair.image2.height; ++y) {
    for (int x = 0; x < pair.image2.width; ++x) {
      if (!pair.valid_mask[static_cast<std::size_t>(y) * pair.image2.width + x]) {
        continue;
      }
      for (int c = 0; c < pair.image2.channels; ++c) {
        double v = pair.image2.at(y, x, c);
        v = (v - 0.5) * contrast + 0.5 + brightness;
        if (s.noise_sigma > 0.0) v += noise(rng);
        pair.image2.at(y, x, c) = std::clamp(v, 0.0, 1.0);
      }
    }
  }

  constexpr int kMargin = 16;
  for (int y = kMargin; y < image.height - kMargin; y += grid_stride) {
    for (int x = kMargin; x < image.width - kMargin; x += grid_stride) {
      double px, py;
      project_point(pair.h.m, x, y, px, py);
      const int rx = static_cast<int>(std::lround(px));
      const int ry = static_cast<int>(std::lround(py));
      if (rx < 0 || ry < 0 || rx >= image.width || ry >= image.height) continue;
      if (!pair.valid_mask[static_cast<std::size_t>(ry) * image.width + rx]) {
        continue;
      }
      if (std::hypot(px - rx, py - ry) > 0.5) continue;
      pair.corrs.push_back({{x, y}, {rx, ry}});
    }
  }
  if (pair.corrs.empty()) {
    throw FixtureError("no valid correspondences survive the warp");
  }
  return pair;
}

Tensor random_texture(int height, int width, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  // Raw noise smoothed by a 3x3 box to give the texture some structure.
  std::vector<double> noise(static_cast<std::size_t>(height) * width);
  for (double& v : noise) v = unif(rng);
  Tensor out(height, width, 3);
  for (int y = 0; y < height; ++y) {
    for (int x = 0; x < width; ++x) {
      double acc = 0.0;
      int n = 0;
      for (int dy = -1; dy <= 1; ++dy) {
        for (int dx = -1; dx <= 1; ++dx) {
          const int yy = y + dy;
          const int xx = x + dx;
          if (yy < 0 || yy >= height || xx < 0 || xx >= width) continue;
          acc += noise[static_cast<std::size_t>(yy) * width + xx];
          ++n;
        }
      }
      const double v = acc / n;
      for (int c = 0; c < 3; ++c) out.at(y, x, c) = v;
    }
  }
  return out;
}

Tensor flat_fixture(int size, std::uint64_t seed) {
  if (size < 64) throw ContractViolation("flat_fixture needs size >= 64");
  Tensor img = random_texture(size, size, seed);

  const int rect = size / 4;
  const int border = 8;
  const double flat_value = 0.5;
  const int a0 = size / 8;
  const int b0 = size - size / 8 - rect;

  std::mt19937_64 rng(seed ^ 0x666C6174666978ULL);
  std::uniform_int_distribution<int> phase(0, 7);
  const int phase_a = phase(rng);
  const int phase_b = phase(rng);

  auto paint = [&](int oy, int ox, bool checker, int ph) {
    for (int y = std::max(0, oy - border); y < std::min(size, oy + rect + border); ++y) {
      for (int x = std::max(0, ox - border); x < std::min(size, ox + rect + border); ++x) {
        const bool inside = y >= oy && y < oy + rect && x >= ox && x < ox + rect;
        double v;
        if (inside) {
          v = flat_value;
        } else if (checker) {
          v = (((y + ph) / 2 + (x + ph) / 2) % 2 == 0) ? 0.2 : 0.8;
        } else {
          v = ((y + ph) % 3 == 0) ? 0.1 : 0.9;
        }
        for (int c = 0; c < 3; ++c) img.at(y, x, c) = v;
      }
    }
  };
  paint(a0, a0, true, phase_a);
  paint(b0, b0, false, phase_b);
  return img;
}

}  // namespace rdn
