#pragma once

#include <random>
#include <span>
#include <vector>

#include "ctxfeat/gridcore/grid.h"
#include "ctxfeat/losses/repeatability.h"

namespace ctxfeat {

// Reference AP over a ranking by ascending distance (stable for ties).
// Throws std::invalid_argument when there is no positive.
double ExactAp(std::span<const double> distances, const std::vector<bool>& labels);

// One ranking problem inside a flat distance vector.
struct ApGroup {
  std::size_t offset = 0;
  std::size_t count = 0;
  std::vector<bool> labels;  // size == count
};

// Differentiable histogram AP over distances in [0, 2]. Distances are
// softly assigned to `bins` equally spaced centres with triangular weights;
// cumulative per-bin counts give each positive a soft rank, with mass that
// shares a bin split evenly between the two orders. Returns one AP per group.
Grid SoftApGroups(Tape& tape, const Grid& distances, const std::vector<ApGroup>& groups,
                  int bins);

Grid SoftAp(Tape& tape, const Grid& distances, const std::vector<bool>& labels, int bins);

struct ApSamplingConfig {
  int queries = 64;
  int candidates = 128;
  double positive_radius = 3.0;
};

struct ApQuery {
  int pixel_a = 0;                // flat index in image A
  std::vector<int> pixels_b;      // flat indices in image B
  std::vector<bool> labels;       // within positive_radius of U(pixel_a)
};

struct ApPlan {
  std::vector<ApQuery> queries;
};

// Samples query pixels uniformly over the valid pixels of A; each query is
// ranked against the pixels of B within the positive radius of its ground
// truth target plus a shared set of uniformly sampled negatives.
ApPlan SampleApPlan(const CorrespondenceField& field, int height_b, int width_b,
                    const ApSamplingConfig& config, std::mt19937_64& rng);

// Euclidean descriptor distances for every (query, candidate) of the plan,
// flattened in plan order. Also returns the matching groups when groups is
// non-null.
Grid PlanDistances(Tape& tape, const Grid& descriptors_a, const Grid& descriptors_b,
                   const ApPlan& plan, std::vector<ApGroup>* groups);

// Values of a 1 x H x W map at flat pixel indices.
Grid GatherPixels(Tape& tape, const Grid& map, const std::vector<int>& pixels);

// mean_i 1 - [AP_i R_i + kappa (1 - R_i)].
Grid ApLoss(Tape& tape, const Grid& ap, const Grid& reliability, double kappa);

}  // namespace ctxfeat
