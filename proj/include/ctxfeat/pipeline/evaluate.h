#pragma once

#include <array>
#include <optional>
#include <string>
#include <vector>

#include "ctxfeat/contextfuse/contextfuse.h"
#include "ctxfeat/detectmatch/detectmatch.h"
#include "ctxfeat/detectmatch/geometry.h"
#include "ctxfeat/pipeline/checkpoint.h"
#include "ctxfeat/pipeline/dataset.h"

namespace ctxfeat {

struct DetectSettings {
  int k = 64;
  int nms_radius = 3;
  int border = 4;
  // Keypoints need at least this much intensity range in the image window
  // of radius nms_radius around them; flat regions cannot be localized.
  double min_contrast = 1e-6;
};

// Final-stage score map -> Detect -> SampleDescriptors.
FeatureSet ExtractFeatures(const Parameters& params, const ModelConfig& model, const Grid& image,
                           const DetectSettings& settings, const FusionToggles& toggles = {});

struct EvalSettings {
  DetectSettings detect;
  double tolerance_px = 3.0;
};

struct PairMetrics {
  double repeatability = 0.0;
  double matching_score = 0.0;
  // Mean descriptor distance over mutual-NN matches; 0 without matches.
  double mean_match_distance = 0.0;
  std::size_t matches = 0;
  FeatureSet features_a;
  FeatureSet features_b;
};

PairMetrics EvaluatePair(const Parameters& params, const ModelConfig& model,
                         const ImagePair& pair, const EvalSettings& settings,
                         const FusionToggles& toggles = {});

struct MetricsRow {
  std::string label;
  FusionToggles toggles;
  double repeatability = 0.0;
  double matching_score = 0.0;
  double mean_match_distance = 0.0;
};

struct MetricsReport {
  std::string scenes;
  std::size_t pairs = 0;
  bool ablation = false;
  std::vector<MetricsRow> rows;
  std::optional<std::array<double, 3>> pose_buckets;
  std::size_t pose_count = 0;
};

// Row labels of the ablation table, in order.
inline constexpr std::array<const char*, 3> kAblationLabels = {
    "R2D2 (baseline)", "R2D2 + LG", "R2D2 + LG + MA"};
std::array<FusionToggles, 3> AblationToggles();

// Averages EvaluatePair over `pairs`; one row for the full model, or the
// three ablation rows computed from the same parameters.
MetricsReport EvaluateScenes(const Checkpoint& checkpoint, const std::vector<ImagePair>& pairs,
                             const std::string& scenes, const EvalSettings& settings,
                             bool ablation);

// Position/orientation errors of aligned estimate and ground-truth lists.
std::vector<PoseError> PoseErrors(const std::vector<Pose>& estimates,
                                  const std::vector<Pose>& ground_truth);

// UTF-8 table followed by `key = value` metric lines.
std::string RenderReport(const MetricsReport& report, const EvalSettings& settings);

// "synthetic:count=20,seed=1,size=64[,identity=1][,rotation=..]" or
// "dir:<path>[,count=..,seed=..,size=..]" or a bare directory path.
// Throws std::invalid_argument on malformed specs.
DatasetSpec ParseSceneSpec(const std::string& spec);

}  // namespace ctxfeat
