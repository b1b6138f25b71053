#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "ctxfeat/detectmatch/detectmatch.h"

namespace ctxfeat {

std::vector<Keypoint> Detect(const Grid& score, int k, int nms_radius, int border) {
  if (score.rank() != 3 || score.channels() != 1) {
    throw ShapeError("detect: score map must be 1 x H x W, got " + ShapeString(score.shape()));
  }
  if (k < 1) throw std::invalid_argument("detect: k must be >= 1");
  if (nms_radius < 1) throw std::invalid_argument("detect: nms_radius must be >= 1");
  if (border < 0) throw std::invalid_argument("detect: negative border");
  const int height = score.height(), width = score.width();
  auto s = score.data();

  std::vector<Keypoint> found;
  for (int y = border; y < height - border; ++y) {
    for (int x = border; x < width - border; ++x) {
      const int self = y * width + x;
      const double v = s[self];
      bool is_max = true, above_some = false;
      for (int dy = -nms_radius; dy <= nms_radius && is_max; ++dy) {
        const int yy = y + dy;
        if (yy < 0 || yy >= height) continue;
        for (int dx = -nms_radius; dx <= nms_radius; ++dx) {
          const int xx = x + dx;
          if (xx < 0 || xx >= width || (dx == 0 && dy == 0)) continue;
          const int other = yy * width + xx;
          const double w = s[other];
          if (w > v || (w == v && other < self)) {
            is_max = false;
            break;
          }
          above_some |= v > w;
        }
      }
      if (is_max && above_some) found.push_back({static_cast<double>(x), static_cast<double>(y), v});
    }
  }
  std::stable_sort(found.begin(), found.end(),
                   [](const Keypoint& a, const Keypoint& b) { return a.score > b.score; });
  if (found.size() > static_cast<std::size_t>(k)) found.resize(k);
  return found;
}

std::vector<std::vector<double>> SampleDescriptors(const Grid& descriptors,
                                                   const std::vector<Keypoint>& keypoints) {
  if (descriptors.rank() != 3) {
    throw ShapeError("sample_descriptors: expected D x H x W, got " +
                     ShapeString(descriptors.shape()));
  }
  const int depth = descriptors.channels(), height = descriptors.height(),
            width = descriptors.width();
  const std::size_t plane = static_cast<std::size_t>(height) * width;
  auto d = descriptors.data();
  std::vector<std::vector<double>> out;
  out.reserve(keypoints.size());
  for (const Keypoint& kp : keypoints) {
    if (!(kp.x >= 0.0 && kp.y >= 0.0 && kp.x <= width - 1 && kp.y <= height - 1)) {
      throw std::out_of_range("sample_descriptors: keypoint (" + std::to_string(kp.x) + ", " +
                              std::to_string(kp.y) + ") outside the map");
    }
    const int x0 = std::min(static_cast<int>(std::floor(kp.x)), width - 1);
    const int y0 = std::min(static_cast<int>(std::floor(kp.y)), height - 1);
    const int x1 = std::min(x0 + 1, width - 1), y1 = std::min(y0 + 1, height - 1);
    const double fx = kp.x - x0, fy = kp.y - y0;
    std::vector<double> v(depth);
    double norm = 0.0;
    for (int c = 0; c < depth; ++c) {
      const double* p = d.data() + c * plane;
      v[c] = (1 - fx) * (1 - fy) * p[y0 * width + x0] + fx * (1 - fy) * p[y0 * width + x1] +
             (1 - fx) * fy * p[y1 * width + x0] + fx * fy * p[y1 * width + x1];
      norm += v[c] * v[c];
    }
    norm = std::sqrt(norm);
    if (norm > 0.0) {
      for (double& x : v) x /= norm;
    }
    out.push_back(std::move(v));
  }
  return out;
}

}  // namespace ctxfeat
