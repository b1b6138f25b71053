#include "ctxfeat/synthdata/homography.h"

#include <Eigen/LU>
#include <cmath>
#include <numbers>
#include <random>
#include <stdexcept>

#include "ctxfeat/gridcore/random.h"

namespace ctxfeat {

namespace {
constexpr double kMinDeterminant = 1e-9;
}  // namespace

Homography::Homography(const Eigen::Matrix3d& matrix) : matrix_(matrix) {
  if (matrix_(2, 2) != 0.0) matrix_ /= matrix_(2, 2);
  if (!(std::abs(matrix_.determinant()) > kMinDeterminant)) {
    throw std::invalid_argument("degenerate homography (|det| <= 1e-9)");
  }
}

Eigen::Vector2d Homography::Apply(double x, double y) const {
  const Eigen::Vector3d p = matrix_ * Eigen::Vector3d(x, y, 1.0);
  return {p.x() / p.z(), p.y() / p.z()};
}

Homography Homography::Inverse() const { return Homography(matrix_.inverse()); }

Homography RandomHomography(std::uint64_t seed, const HomographyRanges& ranges, int width,
                            int height) {
  if (ranges.max_rotation_deg < 0 || ranges.max_translation_frac < 0 ||
      ranges.max_perspective < 0 || ranges.max_scale_delta < 0) {
    throw std::invalid_argument("homography ranges must be non-negative");
  }
  std::mt19937_64 rng(seed);
  const double cx = 0.5 * (width - 1), cy = 0.5 * (height - 1);
  const double extent = std::max(width, height);
  for (int attempt = 0; attempt < 100; ++attempt) {
    const double angle = UniformSymmetric(rng, ranges.max_rotation_deg) * std::numbers::pi / 180.0;
    const double scale = 1.0 + UniformSymmetric(rng, ranges.max_scale_delta);
    const double tx = UniformSymmetric(rng, ranges.max_translation_frac) * width;
    const double ty = UniformSymmetric(rng, ranges.max_translation_frac) * height;
    const double px = UniformSymmetric(rng, ranges.max_perspective) / extent;
    const double py = UniformSymmetric(rng, ranges.max_perspective) / extent;

    Eigen::Matrix3d to_centre = Eigen::Matrix3d::Identity();
    to_centre(0, 2) = -cx;
    to_centre(1, 2) = -cy;
    Eigen::Matrix3d from_centre = Eigen::Matrix3d::Identity();
    from_centre(0, 2) = cx + tx;
    from_centre(1, 2) = cy + ty;
    Eigen::Matrix3d warp = Eigen::Matrix3d::Identity();
    warp(0, 0) = scale * std::cos(angle);
    warp(0, 1) = -scale * std::sin(angle);
    warp(1, 0) = scale * std::sin(angle);
    warp(1, 1) = scale * std::cos(angle);
    warp(2, 0) = px;
    warp(2, 1) = py;
    const Eigen::Matrix3d m = from_centre * warp * to_centre;
    if (std::abs(m(2, 2)) > kMinDeterminant && std::abs(m.determinant()) > kMinDeterminant) {
      return Homography(m);
    }
  }
  throw std::runtime_error("random_homography: 100 degenerate samples in a row");
}

}  // namespace ctxfeat
