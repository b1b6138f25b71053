#include "ctxfeat/contextfuse/contextfuse.h"

#include "ctxfeat/gridcore/ops.h"

namespace ctxfeat {
namespace {

void RequireSameSpatial(const Grid& a, const Grid& b, const char* what) {
  if (a.rank() != 3 || b.rank() != 3 || a.height() != b.height() ||
      a.width() != b.width()) {
    throw ShapeError(std::string(what) + ": spatial mismatch " + ShapeString(a.shape()) +
                     " vs " + ShapeString(b.shape()));
  }
}

}  // namespace

FusionParams FusionParams::From(const Parameters& params) {
  FusionParams f;
  f.agg_conv1_w = params.get("fusion.aggregate1.weight");
  f.agg_conv1_b = params.get("fusion.aggregate1.bias");
  f.agg_conv2_w = params.get("fusion.aggregate2.weight");
  f.agg_conv2_b = params.get("fusion.aggregate2.bias");
  f.agg_conv3_w = params.get("fusion.aggregate3.weight");
  f.agg_conv3_b = params.get("fusion.aggregate3.bias");
  f.channel_agg_w = params.get(std::string(kChannelAgg) + ".weight");
  f.channel_agg_b = params.get(std::string(kChannelAgg) + ".bias");
  return f;
}

Grid ScoreMap(Tape& tape, const Grid& reliability, const Grid& repeatability) {
  if (reliability.shape() != repeatability.shape()) {
    throw ShapeError("score_map: reliability " + ShapeString(reliability.shape()) +
                     " vs repeatability " + ShapeString(repeatability.shape()));
  }
  return Sigmoid(tape, Multiply(tape, reliability, repeatability));
}

Grid LocalGuided(Tape& tape, const Grid& semantic, const Grid& score) {
  RequireSameSpatial(semantic, score, "local_guided");
  if (score.channels() != 1) {
    throw ShapeError("local_guided: score must be 1 x H x W, got " +
                     ShapeString(score.shape()));
  }
  return Multiply(tape, semantic, score);
}

Grid MultiScaleAggregate(Tape& tape, const Grid& selective, const FusionParams& p) {
  Grid y1 = ShiftedSoftplus(tape, Conv2d(tape, selective, p.agg_conv1_w, p.agg_conv1_b, 1));
  Grid y2 = Add(tape, ShiftedSoftplus(tape, Conv2d(tape, y1, p.agg_conv2_w, p.agg_conv2_b, 1)),
                y1);
  return Add(tape, ShiftedSoftplus(tape, Conv2d(tape, y2, p.agg_conv3_w, p.agg_conv3_b, 1)),
             y2);
}

Grid FuseRefine(Tape& tape, const Grid& low_level, const Grid& aggregated,
                const FusionParams& p) {
  RequireSameSpatial(low_level, aggregated, "fuse_refine");
  if (p.channel_agg_w.dim(0) != low_level.channels()) {
    throw ShapeError("fuse_refine: channel aggregation produces " +
                     std::to_string(p.channel_agg_w.dim(0)) + " channels, low-level has " +
                     std::to_string(low_level.channels()));
  }
  const Grid concat = ConcatChannels(tape, low_level, aggregated);
  return Add(tape, low_level, Conv2d(tape, concat, p.channel_agg_w, p.channel_agg_b, 0));
}

ModelOutputs FullForward(Tape& tape, const Grid& image, const Parameters& params,
                         const ModelConfig& config, const FusionToggles& toggles) {
  ModelOutputs out;
  out.backbone_features = BackboneForward(tape, image, params, config);
  out.initial = HeadsForward(tape, out.backbone_features, params, kInitialHeads);
  out.initial.score = ScoreMap(tape, out.initial.reliability, out.initial.repeatability);

  const FusionParams fusion = FusionParams::From(params);
  Grid selective = SemanticForward(tape, image, params, config);
  if (toggles.local_guided) {
    const Grid mask =
        config.detach_score_mask ? Detach(out.initial.score) : out.initial.score;
    selective = LocalGuided(tape, selective, mask);
  }
  const Grid aggregated =
      toggles.multi_scale ? MultiScaleAggregate(tape, selective, fusion) : selective;
  out.refined_features = FuseRefine(tape, out.backbone_features, aggregated, fusion);
  out.final = HeadsForward(tape, out.refined_features, params, kFinalHeads);
  out.final.score = ScoreMap(tape, out.final.reliability, out.final.repeatability);
  return out;
}

void AddFusionParameters(Parameters& params, const ModelConfig& config,
                         std::mt19937_64& rng) {
  const int cs = config.semantic_channels;
  for (const char* name : {"fusion.aggregate1", "fusion.aggregate2", "fusion.aggregate3"}) {
    AddConvParameters(params, name, cs, cs, 3, rng);
  }
  AddConvParameters(params, kChannelAgg, config.descriptor_dim, config.descriptor_dim + cs,
                    1, rng);
  ZeroConvParameters(params, kChannelAgg);
}

Parameters InitModelParameters(const ModelConfig& config) {
  config.Validate();
  std::mt19937_64 rng(config.seed);
  Parameters params;
  AddBackboneParameters(params, config, rng);
  AddHeadParameters(params, kInitialHeads, config.descriptor_dim, rng);
  AddSemanticParameters(params, config, rng);
  AddFusionParameters(params, config, rng);
  AddHeadParameters(params, kFinalHeads, config.descriptor_dim, rng);
  return params;
}

}  // namespace ctxfeat
