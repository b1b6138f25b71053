#pragma once

#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <vector>

#include "ctxfeat/gridcore/grid.h"
#include "ctxfeat/losses/repeatability.h"
#include "ctxfeat/synthdata/homography.h"

namespace ctxfeat {

struct PhotometricJitter {
  double brightness = 0.2;      // additive offset in [-b, b]
  double contrast_min = 0.8;    // gain about 0.5
  double contrast_max = 1.25;
  double noise_sigma = 0.02;    // per-pixel Gaussian noise, sigma <= this

  static PhotometricJitter None() { return {0.0, 1.0, 1.0, 0.0}; }
};

struct ImagePair {
  Grid image_a;                // 3 x H x W in [0, 1]
  Grid image_b;                // 3 x H x W in [0, 1]
  CorrespondenceField field;   // a -> b
  Homography homography;       // a -> b
};

class PairGenerationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct WarpedImage {
  Grid image;
  std::vector<std::uint8_t> valid;  // H x W: preimage inside the source
};

// output(p) = bilinear(source, h^-1(p)); pixels whose preimage falls outside
// the source read 0 and are flagged invalid.
WarpedImage WarpImage(const Grid& source, const Homography& h);

// image_b = jitter(warp(image, h)); U(x, y) = h(x, y). Throws
// PairGenerationError when fewer than 20% of the pixels stay valid.
ImagePair MakePair(const Grid& image, const Homography& h, const PhotometricJitter& jitter,
                   std::uint64_t seed);

// Smoothed multi-octave noise plus random filled polygons, clamped to [0, 1].
Grid SynthTexture(std::uint64_t seed, int height, int width);

class ImageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Binary 8-bit PPM (P6) <-> 3 x H x W grid with values in [0, 1].
Grid ReadPpm(const std::filesystem::path& path);
void WritePpm(const std::filesystem::path& path, const Grid& image);

}  // namespace ctxfeat
