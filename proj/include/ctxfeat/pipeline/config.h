#pragma once

#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>

#include "ctxfeat/losses/average_precision.h"
#include "ctxfeat/losses/total.h"
#include "ctxfeat/netblocks/netblocks.h"
#include "ctxfeat/synthdata/homography.h"
#include "ctxfeat/synthdata/synthdata.h"

namespace ctxfeat {

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct TrainConfig {
  int epochs = 1;
  // When positive, overrides epochs: exactly this many optimizer steps.
  int steps = 0;
  int batch_size = 4;
  double learning_rate = 0.001;
  double weight_decay = 0.0005;
  std::uint64_t seed = 0;
  int log_every = 1;

  LossSettings loss;
  ApSamplingConfig ap;
  ModelConfig model;

  // Dataset: `synthetic_pairs` generated pairs, drawn from PPM images in
  // `corpus_dir` when it is set and from synthetic textures otherwise.
  int synthetic_pairs = 100;
  int image_size = 64;
  std::string corpus_dir;
  HomographyRanges homography = {20.0, 0.08, 0.15, 0.15};
  PhotometricJitter jitter;

  // Optional checkpoint whose parameters seed training.
  std::string init_checkpoint;

  void Validate() const;
};

// Flat `key = value` lines; '#' starts a comment. Unknown keys, malformed
// lines and unparsable values throw ConfigError with the line number.
TrainConfig ParseTrainConfig(const std::string& text);
TrainConfig LoadTrainConfig(const std::filesystem::path& path);

// Canonical text form; ParseTrainConfig(FormatTrainConfig(c)) == c.
std::string FormatTrainConfig(const TrainConfig& config);

}  // namespace ctxfeat
