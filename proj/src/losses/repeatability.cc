#include <cmath>

#include "ctxfeat/gridcore/ops.h"
#include "ctxfeat/losses/repeatability.h"

namespace ctxfeat {
namespace {

constexpr double kMinPatchNorm = 1e-8;

void CheckMap(const Grid& map, const PatchGrid& grid, const char* what) {
  if (map.rank() != 3 || map.channels() != 1 || map.height() != grid.height ||
      map.width() != grid.width) {
    throw ShapeError(std::string(what) + ": map " + ShapeString(map.shape()) +
                     " does not match patch grid " + std::to_string(grid.height) + "x" +
                     std::to_string(grid.width));
  }
}

// Flat pixel indices of one patch, row-major.
std::vector<int> PatchPixels(const PatchGrid& grid, std::pair<int, int> origin) {
  std::vector<int> idx;
  idx.reserve(static_cast<std::size_t>(grid.patch_size) * grid.patch_size);
  for (int r = 0; r < grid.patch_size; ++r) {
    for (int c = 0; c < grid.patch_size; ++c) {
      idx.push_back((origin.first + r) * grid.width + origin.second + c);
    }
  }
  return idx;
}

}  // namespace

Grid CosineLoss(Tape& tape, const Grid& map, const Grid& warped, const PatchGrid& grid,
                const std::vector<std::uint8_t>& mask) {
  CheckMap(map, grid, "cosine_loss");
  CheckMap(warped, grid, "cosine_loss");
  if (mask.size() != map.size()) throw ShapeError("cosine_loss: mask size mismatch");

  struct PatchTerm {
    std::vector<int> pixels;
    double norm_a, norm_b, cosine;
  };
  std::vector<PatchTerm> terms;
  auto a = map.data();
  auto b = warped.data();
  for (const auto& origin : grid.origins) {
    std::vector<int> pixels = PatchPixels(grid, origin);
    bool usable = true;
    for (int p : pixels) usable = usable && mask[p];
    if (!usable) continue;
    double dot = 0.0, na = 0.0, nb = 0.0;
    for (int p : pixels) {
      dot += a[p] * b[p];
      na += a[p] * a[p];
      nb += b[p] * b[p];
    }
    const double denom = std::sqrt(na * nb);
    na = std::sqrt(na);
    nb = std::sqrt(nb);
    const double cosine = (na < kMinPatchNorm || nb < kMinPatchNorm) ? 0.0 : dot / denom;
    terms.push_back({std::move(pixels), na, nb, cosine});
  }
  if (terms.empty()) throw UnusablePairError("cosine_loss: no fully valid patch");

  double mean = 0.0;
  for (const PatchTerm& t : terms) mean += t.cosine;
  mean /= static_cast<double>(terms.size());
  Grid out = Grid::Scalar(1.0 - mean);
  if (!map.requires_grad() && !warped.requires_grad()) return out;
  tape.record({map, warped}, out, [map, warped, out, terms = std::move(terms)]() mutable {
    const double g = -out.grad()[0] / static_cast<double>(terms.size());
    auto a = map.data();
    auto b = warped.data();
    for (const PatchTerm& t : terms) {
      if (t.norm_a < kMinPatchNorm || t.norm_b < kMinPatchNorm) continue;
      const double inv = 1.0 / (t.norm_a * t.norm_b);
      if (map.requires_grad()) {
        auto ga = map.grad();
        const double self = t.cosine / (t.norm_a * t.norm_a);
        for (int p : t.pixels) ga[p] += g * (b[p] * inv - self * a[p]);
      }
      if (warped.requires_grad()) {
        auto gb = warped.grad();
        const double self = t.cosine / (t.norm_b * t.norm_b);
        for (int p : t.pixels) gb[p] += g * (a[p] * inv - self * b[p]);
      }
    }
  });
  return out;
}

Grid PeakinessLoss(Tape& tape, const Grid& map, const PatchGrid& grid) {
  CheckMap(map, grid, "peakiness_loss");
  if (grid.origins.empty()) throw std::invalid_argument("peakiness_loss: empty patch grid");
  auto s = map.data();
  std::vector<int> argmax;
  argmax.reserve(grid.origins.size());
  double total = 0.0;
  for (const auto& origin : grid.origins) {
    const std::vector<int> pixels = PatchPixels(grid, origin);
    int best = pixels.front();
    for (int p : pixels) {
      if (s[p] > s[best]) best = p;
    }
    double gap = 0.0;
    for (int p : pixels) gap += s[best] - s[p];
    total += gap / static_cast<double>(pixels.size());
    argmax.push_back(best);
  }
  const double count = static_cast<double>(grid.origins.size());
  Grid out = Grid::Scalar(1.0 - total / count);
  if (!map.requires_grad()) return out;
  tape.record({map}, out, [map, out, grid, argmax = std::move(argmax), count]() mutable {
    const double g = -out.grad()[0] / count;
    const double spread = g / (static_cast<double>(grid.patch_size) * grid.patch_size);
    auto gs = map.grad();
    for (std::size_t i = 0; i < grid.origins.size(); ++i) {
      gs[argmax[i]] += g;
      for (int p : PatchPixels(grid, grid.origins[i])) gs[p] -= spread;
    }
  });
  return out;
}

RepeatabilityTerms RepeatabilityLoss(Tape& tape, const Grid& repeatability_a,
                                     const Grid& repeatability_b,
                                     const CorrespondenceField& field, const PatchGrid& grid) {
  RepeatabilityTerms t;
  const WarpedMap warped = WarpHeatmap(tape, repeatability_b, field);
  t.cosine = CosineLoss(tape, repeatability_a, warped.map, grid, warped.mask);
  t.peaky_a = PeakinessLoss(tape, repeatability_a, grid);
  const PatchGrid grid_b = (repeatability_b.height() == grid.height &&
                            repeatability_b.width() == grid.width)
                               ? grid
                               : PatchGrid::Make(repeatability_b.height(),
                                                 repeatability_b.width(), grid.patch_size,
                                                 grid.stride);
  t.peaky_b = PeakinessLoss(tape, repeatability_b, grid_b);
  t.total = Add(tape, Add(tape, t.cosine, t.peaky_a), t.peaky_b);
  return t;
}

}  // namespace ctxfeat
