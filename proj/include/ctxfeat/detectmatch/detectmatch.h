#pragma once

#include <vector>

#include "ctxfeat/gridcore/grid.h"
#include "ctxfeat/synthdata/homography.h"

namespace ctxfeat {

struct Keypoint {
  double x = 0.0;
  double y = 0.0;
  double score = 0.0;
};

// Keypoints in non-increasing score order with aligned unit descriptors.
struct FeatureSet {
  int width = 0;
  int height = 0;
  std::vector<Keypoint> keypoints;
  std::vector<std::vector<double>> descriptors;

  std::size_t size() const { return keypoints.size(); }
};

struct Match {
  int index_a = 0;
  int index_b = 0;
  double distance = 0.0;
};

// Strict local maxima of a 1 x H x W score map within a
// (2 * nms_radius + 1)^2 window, outside a `border` margin, best `k` first.
// Equal values inside a window are won by the smaller row-major index; a
// pixel that is not above any of its neighbours is never a maximum.
std::vector<Keypoint> Detect(const Grid& score, int k, int nms_radius, int border);

// Bilinear lookup in a D x H x W descriptor map, renormalized to unit length.
std::vector<std::vector<double>> SampleDescriptors(const Grid& descriptors,
                                                   const std::vector<Keypoint>& keypoints);

// Pairs that are each other's nearest neighbour (Euclidean); ties go to the
// smaller index. Output sorted by index_a.
std::vector<Match> MutualNnMatch(const FeatureSet& a, const FeatureSet& b);

// Greedy one-to-one count of keypoints of A landing within tol_px of a
// keypoint of B under h (closest pairs first), over
// min(|A in view of B|, |B in view of A|).
double RepeatabilityMetric(const std::vector<Keypoint>& a, const std::vector<Keypoint>& b,
                           const Homography& h, double tol_px, int width_a, int height_a,
                           int width_b, int height_b);

// Fraction of matches whose A keypoint projects within tol_px of its B
// keypoint under h. Zero when there is no match.
double MatchingScore(const FeatureSet& a, const FeatureSet& b,
                     const std::vector<Match>& matches, const Homography& h, double tol_px);

}  // namespace ctxfeat
