#include <algorithm>
#include <cmath>
#include <random>

#include "ctxfeat/gridcore/random.h"
#include "ctxfeat/synthdata/synthdata.h"

namespace ctxfeat {
namespace {

// Value noise: random lattice of `cells` x `cells` knots, bilinearly
// interpolated to the full image.
void AddValueNoise(std::vector<double>& plane, int height, int width, int cells,
                   double amplitude, std::mt19937_64& rng) {
  std::vector<double> knots(static_cast<std::size_t>(cells + 1) * (cells + 1));
  for (double& k : knots) k = UniformSymmetric(rng, amplitude);
  for (int y = 0; y < height; ++y) {
    const double gy = static_cast<double>(y) * cells / std::max(height - 1, 1);
    const int y0 = std::min(static_cast<int>(gy), cells - 1);
    const double fy = gy - y0;
    for (int x = 0; x < width; ++x) {
      const double gx = static_cast<double>(x) * cells / std::max(width - 1, 1);
      const int x0 = std::min(static_cast<int>(gx), cells - 1);
      const double fx = gx - x0;
      const auto k = [&](int r, int c) { return knots[r * (cells + 1) + c]; };
      plane[y * width + x] += (1 - fy) * ((1 - fx) * k(y0, x0) + fx * k(y0, x0 + 1)) +
                              fy * ((1 - fx) * k(y0 + 1, x0) + fx * k(y0 + 1, x0 + 1));
    }
  }
}

bool InsideConvex(const std::vector<std::pair<double, double>>& poly, double x, double y) {
  bool positive = false, negative = false;
  for (std::size_t i = 0; i < poly.size(); ++i) {
    const auto [x0, y0] = poly[i];
    const auto [x1, y1] = poly[(i + 1) % poly.size()];
    const double cross = (x1 - x0) * (y - y0) - (y1 - y0) * (x - x0);
    positive |= cross > 0;
    negative |= cross < 0;
  }
  return !(positive && negative);
}

}  // namespace

Grid SynthTexture(std::uint64_t seed, int height, int width) {
  if (height < 16 || width < 16) {
    throw std::invalid_argument("synth_texture: H, W must be >= 16");
  }
  std::mt19937_64 rng(seed);
  const std::size_t plane = static_cast<std::size_t>(height) * width;
  std::vector<std::vector<double>> channels(3, std::vector<double>(plane, 0.5));
  for (auto& ch : channels) {
    for (int cells : {2, 4, 8, 16}) {
      AddValueNoise(ch, height, width, cells, 0.25 * 4.0 / cells + 0.05, rng);
    }
  }

  const int polygons = 6 + static_cast<int>(UniformIndex(rng, 7));
  for (int p = 0; p < polygons; ++p) {
    const double cx = Uniform01(rng) * width, cy = Uniform01(rng) * height;
    const double radius = (0.08 + 0.2 * Uniform01(rng)) * std::min(width, height);
    const int sides = 3 + static_cast<int>(UniformIndex(rng, 3));
    const double phase = Uniform01(rng) * 2.0 * std::numbers::pi;
    std::vector<std::pair<double, double>> poly;
    for (int s = 0; s < sides; ++s) {
      const double a = phase + 2.0 * std::numbers::pi * s / sides;
      poly.emplace_back(cx + radius * std::cos(a), cy + radius * std::sin(a));
    }
    double colour[3];
    for (double& c : colour) c = Uniform01(rng);
    const double opacity = 0.6 + 0.4 * Uniform01(rng);
    for (int y = 0; y < height; ++y) {
      for (int x = 0; x < width; ++x) {
        if (!InsideConvex(poly, x, y)) continue;
        for (int c = 0; c < 3; ++c) {
          double& v = channels[c][y * width + x];
          v = (1 - opacity) * v + opacity * colour[c];
        }
      }
    }
  }

  Grid image(Shape{3, height, width});
  auto out = image.mutable_data();
  for (int c = 0; c < 3; ++c) {
    for (std::size_t i = 0; i < plane; ++i) out[c * plane + i] = std::clamp(channels[c][i], 0.0, 1.0);
  }
  return image;
}

}  // namespace ctxfeat
