#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "ctxfeat/synthdata/homography.h"
#include "ctxfeat/synthdata/synthdata.h"

namespace ctxfeat {

struct TrainConfig;

struct DatasetSpec {
  int count = 20;
  std::uint64_t seed = 0;
  int size = 64;
  // PPM directory; empty means synthetic textures.
  std::string corpus_dir;
  HomographyRanges homography = {20.0, 0.08, 0.15, 0.15};
  PhotometricJitter jitter;
  // Identity homography and no jitter: image_b == image_a.
  bool identity = false;

  static DatasetSpec FromTrainConfig(const TrainConfig& config);
};

// Pair i depends only on (seed, i); homographies that leave too few pixels in
// view are redrawn. Corpus images are cropped to size x size at a seeded
// offset and must be at least that large.
std::vector<ImagePair> BuildPairs(const DatasetSpec& spec);

// Sorted *.ppm paths under `dir`; throws ImageError when there are none.
std::vector<std::string> ListPpmFiles(const std::string& dir);

}  // namespace ctxfeat
