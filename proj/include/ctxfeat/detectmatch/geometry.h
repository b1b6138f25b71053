#pragma once

#include <Eigen/Core>
#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "ctxfeat/synthdata/homography.h"

namespace ctxfeat {

struct Pose {
  Eigen::Matrix3d rotation = Eigen::Matrix3d::Identity();
  Eigen::Vector3d position = Eigen::Vector3d::Zero();

  // (w, x, y, z) is normalized before conversion.
  static Pose FromQuaternion(double w, double x, double y, double z,
                             const Eigen::Vector3d& position);
};

struct PoseError {
  double position_m = 0.0;
  double orientation_deg = 0.0;
};

// Throws std::invalid_argument if either rotation is not orthonormal with
// det +1 (to 1e-9).
PoseError ComputePoseError(const Pose& estimate, const Pose& ground_truth);

struct PoseTolerance {
  double position_m;
  double orientation_deg;
};

inline constexpr std::array<PoseTolerance, 3> kPoseBuckets = {
    PoseTolerance{0.5, 2.0}, PoseTolerance{1.0, 5.0}, PoseTolerance{5.0, 10.0}};

// Percentage of errors inside each of kPoseBuckets.
std::array<double, 3> BucketRates(const std::vector<PoseError>& errors);

// "48.0 / 65.3 / 88.8"
std::string FormatBucketRates(const std::array<double, 3>& rates);

struct PointMatch {
  Eigen::Vector2d a;
  Eigen::Vector2d b;
};

// Least-squares DLT with Hartley normalization; exact for 4 points in
// general position. Throws std::invalid_argument on degenerate input.
Homography FitHomography(const std::vector<PointMatch>& matches);

struct RansacResult {
  Homography homography;
  std::vector<bool> inliers;
  std::size_t inlier_count = 0;
};

RansacResult RansacHomography(const std::vector<PointMatch>& matches, int iterations,
                              double inlier_px, std::uint64_t seed);

}  // namespace ctxfeat
