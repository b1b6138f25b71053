#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "ctxfeat/gridcore/grid.h"
#include "ctxfeat/netblocks/parameters.h"

namespace ctxfeat {

struct ModelConfig {
  // Must equal backbone_channels.back().
  int descriptor_dim = 32;
  std::vector<int> backbone_channels = {16, 32, 32, 32};
  int semantic_channels = 16;
  int semantic_branches = 2;
  std::uint64_t seed = 0;
  // Cut the gradient path from the local-guided mask into the initial heads.
  bool detach_score_mask = false;

  // Throws std::invalid_argument on violated invariants.
  void Validate() const;
  bool operator==(const ModelConfig&) const = default;
};

// Dense per-pixel predictions for one image. `score` is filled in by the
// fusion stage.
struct FeatureOutputs {
  Grid descriptors;    // D x H x W, unit norm per pixel
  Grid reliability;    // 1 x H x W
  Grid repeatability;  // 1 x H x W
  Grid score;          // 1 x H x W
};

void AddBackboneParameters(Parameters& params, const ModelConfig& config,
                           std::mt19937_64& rng);
void AddHeadParameters(Parameters& params, const std::string& prefix, int dim,
                       std::mt19937_64& rng);
void AddSemanticParameters(Parameters& params, const ModelConfig& config,
                           std::mt19937_64& rng);

// Stack of 3x3 convolutions with shifted-softplus activations between layers;
// keeps the input resolution.
Grid BackboneForward(Tape& tape, const Grid& image, const Parameters& params,
                     const ModelConfig& config);

// Descriptor, reliability and repeatability heads under `prefix`.
FeatureOutputs HeadsForward(Tape& tape, const Grid& features, const Parameters& params,
                            const std::string& prefix);

// Multi-resolution semantic encoder: parallel branches at H/2^b, exchanged by
// average pooling / nearest upsampling, merged back to full resolution.
Grid SemanticForward(Tape& tape, const Grid& image, const Parameters& params,
                     const ModelConfig& config);

// Parameter-name helpers shared with the fusion stage and tests.
std::string BackboneLayerName(int layer);
inline constexpr const char* kInitialHeads = "head_initial";
inline constexpr const char* kFinalHeads = "head_final";

}  // namespace ctxfeat
