#pragma once

#include <random>

#include "ctxfeat/gridcore/grid.h"
#include "ctxfeat/netblocks/netblocks.h"
#include "ctxfeat/netblocks/parameters.h"

namespace ctxfeat {

// Weights of the aggregation and fusion stages, viewed out of Parameters.
struct FusionParams {
  Grid agg_conv1_w, agg_conv1_b;
  Grid agg_conv2_w, agg_conv2_b;
  Grid agg_conv3_w, agg_conv3_b;
  Grid channel_agg_w, channel_agg_b;  // (D + Cs) -> D, 1 x 1

  static FusionParams From(const Parameters& params);
};

// Ablation switches. With local_guided off the score mask is the constant 1;
// with multi_scale off the selective features go straight to fusion.
struct FusionToggles {
  bool local_guided = true;
  bool multi_scale = true;
};

// sigmoid(reliability * repeatability), per pixel.
Grid ScoreMap(Tape& tape, const Grid& reliability, const Grid& repeatability);

// Channel-broadcast product of semantic features with a 1 x H x W score map.
Grid LocalGuided(Tape& tape, const Grid& semantic, const Grid& score);

// Three 3x3 convolutions with additive skips between consecutive layers;
// receptive field 3x3, 5x5, 7x7.
Grid MultiScaleAggregate(Tape& tape, const Grid& selective, const FusionParams& params);

// low_level + conv1x1(concat(low_level, aggregated)).
Grid FuseRefine(Tape& tape, const Grid& low_level, const Grid& aggregated,
                const FusionParams& params);

struct ModelOutputs {
  FeatureOutputs initial;
  FeatureOutputs final;
  Grid backbone_features;
  Grid refined_features;
};

ModelOutputs FullForward(Tape& tape, const Grid& image, const Parameters& params,
                         const ModelConfig& config, const FusionToggles& toggles = {});

void AddFusionParameters(Parameters& params, const ModelConfig& config,
                         std::mt19937_64& rng);

// Every parameter of the model, seeded from config.seed. channel_agg starts
// at zero, so the final stage initially sees exactly the backbone features.
Parameters InitModelParameters(const ModelConfig& config);

inline constexpr const char* kChannelAgg = "fusion.channel_agg";

}  // namespace ctxfeat
