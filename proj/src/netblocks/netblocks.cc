#include "ctxfeat/netblocks/netblocks.h"

#include <stdexcept>

#include "ctxfeat/gridcore/ops.h"

namespace ctxfeat {
namespace {

std::string SemanticStageName(int stage, int branch) {
  return "semantic.stage" + std::to_string(stage) + ".branch" + std::to_string(branch);
}

constexpr int kSemanticStages = 2;

Grid ConvLayer(Tape& tape, const Grid& x, const Parameters& params, const std::string& name,
               int expected_out, int padding) {
  const Grid& w = params.get(name + ".weight");
  const Grid& b = params.get(name + ".bias");
  if (w.rank() != 4 || w.dim(0) != expected_out || w.dim(1) != x.channels()) {
    throw std::invalid_argument("layer '" + name + "': weights " + ShapeString(w.shape()) +
                                " do not fit input " + ShapeString(x.shape()) + " -> " +
                                std::to_string(expected_out) + " channels");
  }
  return Conv2d(tape, x, w, b, padding);
}

// Moves a branch map from resolution level `from` to level `to`.
Grid Resample(Tape& tape, Grid x, int from, int to) {
  for (; from < to; ++from) x = AvgPool2(tape, x);
  for (; from > to; --from) x = UpsampleNearest2(tape, x);
  return x;
}

}  // namespace

void ModelConfig::Validate() const {
  if (backbone_channels.size() < 3) {
    throw std::invalid_argument("backbone needs at least 3 layers");
  }
  for (int c : backbone_channels) {
    if (c < 1) throw std::invalid_argument("backbone channel counts must be >= 1");
  }
  if (descriptor_dim != backbone_channels.back()) {
    throw std::invalid_argument("descriptor_dim " + std::to_string(descriptor_dim) +
                                " != last backbone width " +
                                std::to_string(backbone_channels.back()));
  }
  if (semantic_channels < 1) throw std::invalid_argument("semantic_channels must be >= 1");
  if (semantic_branches < 2) throw std::invalid_argument("semantic_branches must be >= 2");
}

std::string BackboneLayerName(int layer) {
  return "backbone.conv" + std::to_string(layer);
}

void AddBackboneParameters(Parameters& params, const ModelConfig& config,
                           std::mt19937_64& rng) {
  int in = 3;
  for (std::size_t i = 0; i < config.backbone_channels.size(); ++i) {
    AddConvParameters(params, BackboneLayerName(static_cast<int>(i)),
                      config.backbone_channels[i], in, 3, rng);
    in = config.backbone_channels[i];
  }
}

void AddHeadParameters(Parameters& params, const std::string& prefix, int dim,
                       std::mt19937_64& rng) {
  AddConvParameters(params, prefix + ".descriptor", dim, dim, 1, rng);
  AddConvParameters(params, prefix + ".reliability", 2, dim, 1, rng);
  AddConvParameters(params, prefix + ".repeatability", 2, dim, 1, rng);
}

void AddSemanticParameters(Parameters& params, const ModelConfig& config,
                           std::mt19937_64& rng) {
  const int cs = config.semantic_channels;
  AddConvParameters(params, "semantic.stem", cs, 3, 3, rng);
  for (int s = 0; s < kSemanticStages; ++s) {
    for (int b = 0; b < config.semantic_branches; ++b) {
      AddConvParameters(params, SemanticStageName(s, b), cs, cs, 3, rng);
    }
  }
  AddConvParameters(params, "semantic.out", cs, cs, 3, rng);
}

Grid BackboneForward(Tape& tape, const Grid& image, const Parameters& params,
                     const ModelConfig& config) {
  if (image.rank() != 3 || image.channels() != 3) {
    throw ShapeError("backbone expects a 3 x H x W image, got " + ShapeString(image.shape()));
  }
  if (image.height() < 16 || image.width() < 16) {
    throw ShapeError("backbone needs H, W >= 16, got " + ShapeString(image.shape()));
  }
  Grid x = image;
  const std::size_t layers = config.backbone_channels.size();
  for (std::size_t i = 0; i < layers; ++i) {
    x = ConvLayer(tape, x, params, BackboneLayerName(static_cast<int>(i)),
                  config.backbone_channels[i], 1);
    if (i + 1 < layers) x = ShiftedSoftplus(tape, x);
  }
  return x;
}

FeatureOutputs HeadsForward(Tape& tape, const Grid& features, const Parameters& params,
                            const std::string& prefix) {
  const int dim = features.channels();
  FeatureOutputs out;
  out.descriptors = L2NormalizeChannels(
      tape, ConvLayer(tape, features, params, prefix + ".descriptor", dim, 0));
  const Grid squared = Square(tape, features);
  out.reliability = SoftmaxChannels(
      tape, ConvLayer(tape, squared, params, prefix + ".reliability", 2, 0));
  out.repeatability = SoftmaxChannels(
      tape, ConvLayer(tape, squared, params, prefix + ".repeatability", 2, 0));
  return out;
}

Grid SemanticForward(Tape& tape, const Grid& image, const Parameters& params,
                     const ModelConfig& config) {
  const int levels = config.semantic_branches;
  const int factor = 1 << (levels - 1);
  if (image.rank() != 3 || image.channels() != 3) {
    throw ShapeError("semantic encoder expects a 3 x H x W image, got " +
                     ShapeString(image.shape()));
  }
  if (image.height() % factor != 0 || image.width() % factor != 0) {
    throw ShapeError("semantic encoder with " + std::to_string(levels) +
                     " branches needs H, W divisible by " + std::to_string(factor) +
                     ", got " + ShapeString(image.shape()));
  }
  const int cs = config.semantic_channels;
  const Grid stem = ShiftedSoftplus(tape, ConvLayer(tape, image, params, "semantic.stem", cs, 1));

  std::vector<Grid> branches(levels);
  branches[0] = stem;
  for (int b = 1; b < levels; ++b) branches[b] = AvgPool2(tape, branches[b - 1]);

  for (int s = 0; s < kSemanticStages; ++s) {
    std::vector<Grid> y(levels);
    for (int b = 0; b < levels; ++b) {
      y[b] = ShiftedSoftplus(tape, ConvLayer(tape, branches[b], params,
                                             SemanticStageName(s, b), cs, 1));
    }
    if (s + 1 == kSemanticStages) {
      branches = std::move(y);
      break;
    }
    for (int b = 0; b < levels; ++b) {
      Grid fused = y[b];
      for (int j = 0; j < levels; ++j) {
        if (j != b) fused = Add(tape, fused, Resample(tape, y[j], j, b));
      }
      branches[b] = fused;
    }
  }

  Grid merged = branches[0];
  for (int b = 1; b < levels; ++b) merged = Add(tape, merged, Resample(tape, branches[b], b, 0));
  return ConvLayer(tape, merged, params, "semantic.out", cs, 1);
}

}  // namespace ctxfeat
