#pragma once

#include <Eigen/Core>
#include <cstdint>

namespace ctxfeat {

// Planar projective map in pixel coordinates (x right, y down).
class Homography {
 public:
  Homography() : matrix_(Eigen::Matrix3d::Identity()) {}
  // Normalizes so that (2,2) == 1 when it is nonzero; throws
  // std::invalid_argument when |det| <= 1e-9.
  explicit Homography(const Eigen::Matrix3d& matrix);

  const Eigen::Matrix3d& matrix() const { return matrix_; }
  Eigen::Vector2d Apply(double x, double y) const;
  Eigen::Vector2d Apply(const Eigen::Vector2d& p) const { return Apply(p.x(), p.y()); }
  Homography Inverse() const;

 private:
  Eigen::Matrix3d matrix_;
};

struct HomographyRanges {
  double max_rotation_deg = 0.0;
  double max_translation_frac = 0.0;  // of image width / height
  double max_perspective = 0.0;       // in units of 1 / max(width, height)
  double max_scale_delta = 0.0;       // scale in [1 - d, 1 + d]
};

// Rotation, isotropic scale and perspective about the image centre, then a
// translation; each drawn uniformly from its range. Deterministic in `seed`.
Homography RandomHomography(std::uint64_t seed, const HomographyRanges& ranges, int width,
                            int height);

}  // namespace ctxfeat
