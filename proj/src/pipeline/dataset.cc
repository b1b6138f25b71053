#include "ctxfeat/pipeline/dataset.h"

#include <algorithm>
#include <filesystem>
#include <random>

#include "ctxfeat/gridcore/random.h"
#include "ctxfeat/pipeline/config.h"

namespace ctxfeat {
namespace {

constexpr int kMaxPairAttempts = 50;

Grid Crop(const Grid& image, int size, std::mt19937_64& rng) {
  if (image.height() < size || image.width() < size) {
    throw ImageError("corpus image " + ShapeString(image.shape()) + " is smaller than " +
                     std::to_string(size) + " x " + std::to_string(size));
  }
  const int y0 = static_cast<int>(UniformIndex(rng, image.height() - size + 1));
  const int x0 = static_cast<int>(UniformIndex(rng, image.width() - size + 1));
  Grid out(Shape{3, size, size});
  auto dst = out.mutable_data();
  for (int c = 0; c < 3; ++c) {
    for (int y = 0; y < size; ++y) {
      for (int x = 0; x < size; ++x) dst[(c * size + y) * size + x] = image.at(c, y0 + y, x0 + x);
    }
  }
  return out;
}

}  // namespace

DatasetSpec DatasetSpec::FromTrainConfig(const TrainConfig& config) {
  DatasetSpec spec;
  spec.count = config.synthetic_pairs;
  spec.seed = config.seed;
  spec.size = config.image_size;
  spec.corpus_dir = config.corpus_dir;
  spec.homography = config.homography;
  spec.jitter = config.jitter;
  return spec;
}

std::vector<std::string> ListPpmFiles(const std::string& dir) {
  std::vector<std::string> files;
  std::error_code ec;
  for (const auto& entry : std::filesystem::directory_iterator(dir, ec)) {
    if (entry.is_regular_file() && entry.path().extension() == ".ppm") {
      files.push_back(entry.path().string());
    }
  }
  if (ec) throw ImageError("cannot list directory " + dir + ": " + ec.message());
  if (files.empty()) throw ImageError("no .ppm images in " + dir);
  std::sort(files.begin(), files.end());
  return files;
}

std::vector<ImagePair> BuildPairs(const DatasetSpec& spec) {
  if (spec.count < 1) throw std::invalid_argument("dataset: count must be >= 1");
  std::vector<Grid> corpus;
  if (!spec.corpus_dir.empty()) {
    for (const std::string& file : ListPpmFiles(spec.corpus_dir)) corpus.push_back(ReadPpm(file));
  }

  std::vector<ImagePair> pairs;
  pairs.reserve(spec.count);
  for (int i = 0; i < spec.count; ++i) {
    const std::uint64_t pair_seed = MixSeed(spec.seed, static_cast<std::uint64_t>(i));
    Grid image;
    if (corpus.empty()) {
      image = SynthTexture(MixSeed(pair_seed, 0), spec.size, spec.size);
    } else {
      std::mt19937_64 crop_rng(MixSeed(pair_seed, 0));
      image = Crop(corpus[static_cast<std::size_t>(i) % corpus.size()], spec.size, crop_rng);
    }
    if (spec.identity) {
      pairs.push_back(MakePair(image, Homography(), PhotometricJitter::None(), 0));
      continue;
    }
    bool made = false;
    for (int attempt = 0; attempt < kMaxPairAttempts && !made; ++attempt) {
      const std::uint64_t h_seed = MixSeed(pair_seed, 1 + 2 * attempt);
      const Homography h = RandomHomography(h_seed, spec.homography, spec.size, spec.size);
      try {
        pairs.push_back(MakePair(image, h, spec.jitter, MixSeed(pair_seed, 2 + 2 * attempt)));
        made = true;
      } catch (const PairGenerationError&) {
      }
    }
    if (!made) {
      throw PairGenerationError("dataset: pair " + std::to_string(i) +
                                " kept too few pixels in view after " +
                                std::to_string(kMaxPairAttempts) + " homography draws");
    }
  }
  return pairs;
}

}  // namespace ctxfeat
