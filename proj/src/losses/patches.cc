#include <cmath>

#include "ctxfeat/losses/repeatability.h"

namespace ctxfeat {

PatchGrid PatchGrid::Make(int height, int width, int patch_size, int stride) {
  if (patch_size < 1 || stride < 1) {
    throw std::invalid_argument("patch size and stride must be positive");
  }
  if (patch_size > height || patch_size > width) {
    throw std::invalid_argument("patch size " + std::to_string(patch_size) +
                                " exceeds map " + std::to_string(height) + "x" +
                                std::to_string(width));
  }
  auto starts = [&](int extent) {
    std::vector<int> s;
    for (int v = 0; v + patch_size <= extent; v += stride) s.push_back(v);
    if (s.back() + patch_size < extent) s.push_back(extent - patch_size);
    return s;
  };
  PatchGrid grid{patch_size, stride, height, width, {}};
  for (int r : starts(height)) {
    for (int c : starts(width)) grid.origins.emplace_back(r, c);
  }
  return grid;
}

CorrespondenceField CorrespondenceField::Identity(int height, int width) {
  CorrespondenceField f;
  f.height = height;
  f.width = width;
  f.coords = Grid(Shape{height, width, 2});
  auto d = f.coords.mutable_data();
  for (int r = 0; r < height; ++r) {
    for (int c = 0; c < width; ++c) {
      d[(r * width + c) * 2] = c;
      d[(r * width + c) * 2 + 1] = r;
    }
  }
  f.valid.assign(static_cast<std::size_t>(height) * width, 1);
  return f;
}

WarpedMap WarpHeatmap(Tape& tape, const Grid& source, const CorrespondenceField& field) {
  if (source.rank() != 3 || source.channels() != 1) {
    throw ShapeError("warp_heatmap: source must be 1 x H x W, got " +
                     ShapeString(source.shape()));
  }
  const int sh = source.height(), sw = source.width();
  const int h = field.height, w = field.width;

  struct Tap {
    int index[4];
    double weight[4];
  };
  std::vector<Tap> taps(static_cast<std::size_t>(h) * w);
  WarpedMap out{Grid(Shape{1, h, w}), std::vector<std::uint8_t>(taps.size(), 0)};
  auto y = out.map.mutable_data();
  auto s = source.data();
  for (int r = 0; r < h; ++r) {
    for (int c = 0; c < w; ++c) {
      const std::size_t p = static_cast<std::size_t>(r) * w + c;
      const double tx = field.x(r, c), ty = field.y(r, c);
      if (!field.is_valid(r, c) || !std::isfinite(tx) || !std::isfinite(ty) || tx < 0.0 ||
          ty < 0.0 || tx > sw - 1 || ty > sh - 1) {
        continue;
      }
      const int x0 = std::min(static_cast<int>(std::floor(tx)), sw - 1);
      const int y0 = std::min(static_cast<int>(std::floor(ty)), sh - 1);
      const int x1 = std::min(x0 + 1, sw - 1), y1 = std::min(y0 + 1, sh - 1);
      const double fx = tx - x0, fy = ty - y0;
      Tap& t = taps[p];
      t = Tap{{y0 * sw + x0, y0 * sw + x1, y1 * sw + x0, y1 * sw + x1},
              {(1 - fx) * (1 - fy), fx * (1 - fy), (1 - fx) * fy, fx * fy}};
      double v = 0.0;
      for (int k = 0; k < 4; ++k) v += t.weight[k] * s[t.index[k]];
      y[p] = v;
      out.mask[p] = 1;
    }
  }
  if (!source.requires_grad()) return out;
  tape.record({source}, out.map, [source, map = out.map, taps = std::move(taps),
                                  mask = out.mask]() mutable {
    auto gy = map.grad();
    auto gs = source.grad();
    for (std::size_t p = 0; p < taps.size(); ++p) {
      if (!mask[p]) continue;
      for (int k = 0; k < 4; ++k) gs[taps[p].index[k]] += taps[p].weight[k] * gy[p];
    }
  });
  return out;
}

}  // namespace ctxfeat
