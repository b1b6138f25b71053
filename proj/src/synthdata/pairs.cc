#include <algorithm>
#include <cmath>
#include <random>

#include "ctxfeat/gridcore/random.h"
#include "ctxfeat/synthdata/synthdata.h"

namespace ctxfeat {

WarpedImage WarpImage(const Grid& source, const Homography& h) {
  if (source.rank() != 3) {
    throw ShapeError("warp_image: expected C x H x W, got " + ShapeString(source.shape()));
  }
  const int channels = source.channels(), height = source.height(), width = source.width();
  const Homography inverse = h.Inverse();
  WarpedImage out{Grid(source.shape()),
                  std::vector<std::uint8_t>(static_cast<std::size_t>(height) * width, 0)};
  auto dst = out.image.mutable_data();
  auto src = source.data();
  const std::size_t plane = static_cast<std::size_t>(height) * width;
  for (int y = 0; y < height; ++y) {
    for (int x = 0; x < width; ++x) {
      const Eigen::Vector2d p = inverse.Apply(x, y);
      if (!(p.x() >= 0.0 && p.y() >= 0.0 && p.x() <= width - 1 && p.y() <= height - 1)) {
        continue;
      }
      const int x0 = std::min(static_cast<int>(std::floor(p.x())), width - 1);
      const int y0 = std::min(static_cast<int>(std::floor(p.y())), height - 1);
      const int x1 = std::min(x0 + 1, width - 1), y1 = std::min(y0 + 1, height - 1);
      const double fx = p.x() - x0, fy = p.y() - y0;
      for (int c = 0; c < channels; ++c) {
        const double* s = src.data() + c * plane;
        dst[c * plane + y * width + x] =
            (1 - fx) * (1 - fy) * s[y0 * width + x0] + fx * (1 - fy) * s[y0 * width + x1] +
            (1 - fx) * fy * s[y1 * width + x0] + fx * fy * s[y1 * width + x1];
      }
      out.valid[y * width + x] = 1;
    }
  }
  return out;
}

ImagePair MakePair(const Grid& image, const Homography& h, const PhotometricJitter& jitter,
                   std::uint64_t seed) {
  if (image.rank() != 3 || image.channels() != 3) {
    throw ShapeError("make_pair: expected 3 x H x W image, got " + ShapeString(image.shape()));
  }
  const int height = image.height(), width = image.width();

  ImagePair pair;
  pair.image_a = image;
  pair.homography = h;
  pair.field.height = height;
  pair.field.width = width;
  pair.field.coords = Grid(Shape{height, width, 2});
  pair.field.valid.assign(static_cast<std::size_t>(height) * width, 0);
  auto coords = pair.field.coords.mutable_data();
  std::size_t valid_count = 0;
  for (int y = 0; y < height; ++y) {
    for (int x = 0; x < width; ++x) {
      const Eigen::Vector2d p = h.Apply(x, y);
      const std::size_t i = static_cast<std::size_t>(y) * width + x;
      coords[2 * i] = p.x();
      coords[2 * i + 1] = p.y();
      if (p.x() >= 0.0 && p.y() >= 0.0 && p.x() <= width - 1 && p.y() <= height - 1) {
        pair.field.valid[i] = 1;
        ++valid_count;
      }
    }
  }
  if (valid_count * 5 < static_cast<std::size_t>(height) * width) {
    throw PairGenerationError("make_pair: homography keeps only " +
                              std::to_string(valid_count) + " of " +
                              std::to_string(height * width) + " pixels in view");
  }

  WarpedImage warped = WarpImage(image, h);
  std::mt19937_64 rng(seed);
  const double offset = UniformSymmetric(rng, jitter.brightness);
  const double gain = UniformRange(rng, jitter.contrast_min, jitter.contrast_max);
  const double sigma = jitter.noise_sigma * Uniform01(rng);
  auto v = warped.image.mutable_data();
  const bool identity_jitter = offset == 0.0 && gain == 1.0 && sigma == 0.0;
  if (!identity_jitter) {
    for (double& value : v) {
      const double noise = sigma > 0.0 ? sigma * StandardNormal(rng) : 0.0;
      value = std::clamp((value - 0.5) * gain + 0.5 + offset + noise, 0.0, 1.0);
    }
  }
  pair.image_b = warped.image;
  return pair;
}

}  // namespace ctxfeat
