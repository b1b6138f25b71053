#include <algorithm>
#include <stdexcept>
#include <tuple>

#include "ctxfeat/detectmatch/detectmatch.h"

namespace ctxfeat {
namespace {

bool InView(const Eigen::Vector2d& p, int width, int height) {
  return p.x() >= 0.0 && p.y() >= 0.0 && p.x() <= width - 1 && p.y() <= height - 1;
}

}  // namespace

double RepeatabilityMetric(const std::vector<Keypoint>& a, const std::vector<Keypoint>& b,
                           const Homography& h, double tol_px, int width_a, int height_a,
                           int width_b, int height_b) {
  if (a.empty() || b.empty()) throw std::invalid_argument("repeatability: empty keypoint list");
  const Homography inverse = h.Inverse();
  std::vector<Eigen::Vector2d> projected;
  for (const Keypoint& kp : a) {
    const Eigen::Vector2d p = h.Apply(kp.x, kp.y);
    if (InView(p, width_b, height_b)) projected.push_back(p);
  }
  std::vector<Eigen::Vector2d> targets;
  for (const Keypoint& kp : b) {
    if (InView(inverse.Apply(kp.x, kp.y), width_a, height_a)) targets.emplace_back(kp.x, kp.y);
  }
  const std::size_t denominator = std::min(projected.size(), targets.size());
  if (denominator == 0) return 0.0;

  std::vector<std::tuple<double, std::size_t, std::size_t>> candidates;
  for (std::size_t i = 0; i < projected.size(); ++i) {
    for (std::size_t j = 0; j < targets.size(); ++j) {
      const double d = (projected[i] - targets[j]).norm();
      if (d <= tol_px) candidates.emplace_back(d, i, j);
    }
  }
  std::sort(candidates.begin(), candidates.end());
  std::vector<bool> used_a(projected.size(), false), used_b(targets.size(), false);
  std::size_t hits = 0;
  for (const auto& [d, i, j] : candidates) {
    if (used_a[i] || used_b[j]) continue;
    used_a[i] = used_b[j] = true;
    ++hits;
  }
  return static_cast<double>(hits) / static_cast<double>(denominator);
}

double MatchingScore(const FeatureSet& a, const FeatureSet& b,
                     const std::vector<Match>& matches, const Homography& h, double tol_px) {
  if (matches.empty()) return 0.0;
  std::size_t inliers = 0;
  for (const Match& m : matches) {
    const Keypoint& ka = a.keypoints.at(m.index_a);
    const Keypoint& kb = b.keypoints.at(m.index_b);
    if ((h.Apply(ka.x, ka.y) - Eigen::Vector2d(kb.x, kb.y)).norm() <= tol_px) ++inliers;
  }
  return static_cast<double>(inliers) / static_cast<double>(matches.size());
}

}  // namespace ctxfeat
