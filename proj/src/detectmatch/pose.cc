#include <Eigen/Geometry>
#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numbers>
#include <stdexcept>

#include "ctxfeat/detectmatch/geometry.h"

namespace ctxfeat {
namespace {

void CheckRotation(const Eigen::Matrix3d& r, const char* which) {
  const double orth = (r.transpose() * r - Eigen::Matrix3d::Identity()).cwiseAbs().maxCoeff();
  if (orth > 1e-9 || std::abs(r.determinant() - 1.0) > 1e-9) {
    throw std::invalid_argument(std::string("pose_error: ") + which +
                                " rotation is not orthonormal with det +1");
  }
}

}  // namespace

Pose Pose::FromQuaternion(double w, double x, double y, double z,
                          const Eigen::Vector3d& position) {
  Eigen::Quaterniond q(w, x, y, z);
  if (!(q.norm() > 0.0)) throw std::invalid_argument("zero quaternion");
  q.normalize();
  return Pose{q.toRotationMatrix(), position};
}

PoseError ComputePoseError(const Pose& estimate, const Pose& ground_truth) {
  CheckRotation(estimate.rotation, "estimated");
  CheckRotation(ground_truth.rotation, "ground-truth");
  const double trace = (estimate.rotation * ground_truth.rotation.transpose()).trace();
  const double cosine = std::clamp((trace - 1.0) / 2.0, -1.0, 1.0);
  return PoseError{(estimate.position - ground_truth.position).norm(),
                   std::acos(cosine) * 180.0 / std::numbers::pi};
}

std::array<double, 3> BucketRates(const std::vector<PoseError>& errors) {
  if (errors.empty()) throw std::invalid_argument("bucket_rates: empty error list");
  std::array<double, 3> rates{};
  for (std::size_t b = 0; b < kPoseBuckets.size(); ++b) {
    std::size_t hits = 0;
    for (const PoseError& e : errors) {
      if (e.position_m <= kPoseBuckets[b].position_m &&
          e.orientation_deg <= kPoseBuckets[b].orientation_deg) {
        ++hits;
      }
    }
    rates[b] = 100.0 * static_cast<double>(hits) / static_cast<double>(errors.size());
  }
  return rates;
}

std::string FormatBucketRates(const std::array<double, 3>& rates) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.1f / %.1f / %.1f", rates[0], rates[1], rates[2]);
  return buf;
}

}  // namespace ctxfeat
