#include <Eigen/Dense>
#include <cmath>
#include <limits>
#include <random>
#include <stdexcept>

#include "ctxfeat/detectmatch/geometry.h"
#include "ctxfeat/gridcore/random.h"

namespace ctxfeat {
namespace {

// Similarity taking the points to zero mean and mean distance sqrt(2).
Eigen::Matrix3d NormalizingTransform(const std::vector<Eigen::Vector2d>& pts) {
  Eigen::Vector2d mean = Eigen::Vector2d::Zero();
  for (const auto& p : pts) mean += p;
  mean /= static_cast<double>(pts.size());
  double spread = 0.0;
  for (const auto& p : pts) spread += (p - mean).norm();
  spread /= static_cast<double>(pts.size());
  if (!(spread > 0.0)) throw std::invalid_argument("fit_homography: coincident points");
  const double s = std::sqrt(2.0) / spread;
  Eigen::Matrix3d t = Eigen::Matrix3d::Identity();
  t(0, 0) = t(1, 1) = s;
  t(0, 2) = -s * mean.x();
  t(1, 2) = -s * mean.y();
  return t;
}

double ReprojectionError(const Homography& h, const PointMatch& m) {
  const Eigen::Vector2d p = h.Apply(m.a);
  if (!p.allFinite()) return std::numeric_limits<double>::infinity();
  return (p - m.b).norm();
}

}  // namespace

Homography FitHomography(const std::vector<PointMatch>& matches) {
  if (matches.size() < 4) throw std::invalid_argument("fit_homography: need >= 4 matches");
  std::vector<Eigen::Vector2d> src, dst;
  for (const auto& m : matches) {
    src.push_back(m.a);
    dst.push_back(m.b);
  }
  const Eigen::Matrix3d ts = NormalizingTransform(src);
  const Eigen::Matrix3d td = NormalizingTransform(dst);

  Eigen::MatrixXd a(2 * matches.size(), 9);
  for (std::size_t i = 0; i < matches.size(); ++i) {
    const Eigen::Vector3d p = ts * src[i].homogeneous();
    const Eigen::Vector3d q = td * dst[i].homogeneous();
    const double x = p.x() / p.z(), y = p.y() / p.z();
    const double u = q.x() / q.z(), v = q.y() / q.z();
    a.row(2 * i) << -x, -y, -1, 0, 0, 0, u * x, u * y, u;
    a.row(2 * i + 1) << 0, 0, 0, -x, -y, -1, v * x, v * y, v;
  }
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(a, Eigen::ComputeFullV);
  const Eigen::VectorXd h = svd.matrixV().col(8);
  Eigen::Matrix3d hn;
  hn << h(0), h(1), h(2), h(3), h(4), h(5), h(6), h(7), h(8);
  return Homography(td.inverse() * hn * ts);
}

RansacResult RansacHomography(const std::vector<PointMatch>& matches, int iterations,
                              double inlier_px, std::uint64_t seed) {
  const std::size_t n = matches.size();
  if (n < 4) throw std::invalid_argument("ransac_homography: need >= 4 matches");
  if (iterations < 1) throw std::invalid_argument("ransac_homography: iterations must be >= 1");

  auto score = [&](const Homography& h, std::vector<bool>& mask, double& rms) {
    mask.assign(n, false);
    std::size_t count = 0;
    double sq = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const double e = ReprojectionError(h, matches[i]);
      if (e <= inlier_px) {
        mask[i] = true;
        ++count;
        sq += e * e;
      }
    }
    rms = count > 0 ? std::sqrt(sq / count) : std::numeric_limits<double>::infinity();
    return count;
  };

  std::mt19937_64 rng(seed);
  bool found = false;
  RansacResult best;
  double best_rms = std::numeric_limits<double>::infinity();
  std::vector<bool> mask;
  for (int it = 0; it < iterations; ++it) {
    std::size_t idx[4];
    for (int k = 0; k < 4; ++k) {
      bool fresh;
      do {
        idx[k] = UniformIndex(rng, n);
        fresh = true;
        for (int j = 0; j < k; ++j) fresh = fresh && idx[j] != idx[k];
      } while (!fresh);
    }
    Homography h;
    try {
      h = FitHomography({matches[idx[0]], matches[idx[1]], matches[idx[2]], matches[idx[3]]});
    } catch (const std::invalid_argument&) {
      continue;
    }
    double rms;
    const std::size_t count = score(h, mask, rms);
    if (!found || count > best.inlier_count || (count == best.inlier_count && rms < best_rms)) {
      found = true;
      best = RansacResult{h, mask, count};
      best_rms = rms;
    }
  }
  if (!found) throw std::runtime_error("ransac_homography: every sample was degenerate");

  if (best.inlier_count >= 4) {
    std::vector<PointMatch> inliers;
    for (std::size_t i = 0; i < n; ++i) {
      if (best.inliers[i]) inliers.push_back(matches[i]);
    }
    try {
      const Homography refit = FitHomography(inliers);
      double rms;
      const std::size_t count = score(refit, mask, rms);
      if (count >= best.inlier_count) best = RansacResult{refit, mask, count};
    } catch (const std::invalid_argument&) {
    }
  }
  return best;
}

}  // namespace ctxfeat
