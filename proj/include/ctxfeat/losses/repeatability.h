#pragma once

#include <cstdint>
#include <stdexcept>
#include <utility>
#include <vector>

#include "ctxfeat/gridcore/grid.h"

namespace ctxfeat {

// Raised when a pair leaves no fully valid patch to compare.
class UnusablePairError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Overlapping N x N windows over an H x W map. Origins step by `stride`; the
// last row/column of windows is snapped to the border so every pixel is
// covered when stride <= N.
struct PatchGrid {
  int patch_size = 0;
  int stride = 0;
  int height = 0;
  int width = 0;
  std::vector<std::pair<int, int>> origins;  // (row0, col0)

  static PatchGrid Make(int height, int width, int patch_size, int stride);
};

// Ground-truth mapping from pixels of image I into image I'.
struct CorrespondenceField {
  int height = 0;
  int width = 0;
  Grid coords;                       // H x W x 2, (x', y') per pixel
  std::vector<std::uint8_t> valid;   // H x W

  double x(int row, int col) const { return coords[(row * width + col) * 2]; }
  double y(int row, int col) const { return coords[(row * width + col) * 2 + 1]; }
  bool is_valid(int row, int col) const { return valid[row * width + col] != 0; }

  static CorrespondenceField Identity(int height, int width);
};

struct WarpedMap {
  Grid map;                         // 1 x H x W
  std::vector<std::uint8_t> mask;   // H x W
};

// Bilinear lookup of `source` (1 x H' x W') at U(i, j); invalid pixels, and
// targets outside the source, read 0 and are masked out.
WarpedMap WarpHeatmap(Tape& tape, const Grid& source, const CorrespondenceField& field);

// 1 - mean cosine similarity over the patches whose pixels are all valid.
Grid CosineLoss(Tape& tape, const Grid& map, const Grid& warped, const PatchGrid& grid,
                const std::vector<std::uint8_t>& mask);

// 1 - mean over patches of (max - mean).
Grid PeakinessLoss(Tape& tape, const Grid& map, const PatchGrid& grid);

struct RepeatabilityTerms {
  Grid cosine;
  Grid peaky_a;
  Grid peaky_b;
  Grid total;
};

// L_cos(I, I', U) + L_peaky(I) + L_peaky(I').
RepeatabilityTerms RepeatabilityLoss(Tape& tape, const Grid& repeatability_a,
                                     const Grid& repeatability_b,
                                     const CorrespondenceField& field, const PatchGrid& grid);

}  // namespace ctxfeat
