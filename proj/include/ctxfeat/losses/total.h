#pragma once

#include <string>
#include <vector>

#include "ctxfeat/contextfuse/contextfuse.h"
#include "ctxfeat/losses/average_precision.h"
#include "ctxfeat/losses/repeatability.h"

namespace ctxfeat {

struct LossSettings {
  double lambda = 1.0;
  double kappa = 0.5;
  int patch_size = 16;
  int patch_stride = 8;
  int ap_bins = 25;
};

// Repeatability terms plus the AP term for one prediction stage.
struct StageLoss {
  RepeatabilityTerms repeatability;
  Grid ap;
  Grid total;
};

StageLoss ComputeStageLoss(Tape& tape, const FeatureOutputs& a, const FeatureOutputs& b,
                           const CorrespondenceField& field, const PatchGrid& grid,
                           const ApPlan& plan, const LossSettings& settings);

// initial + lambda * final.
Grid CombineStages(Tape& tape, const Grid& initial, const Grid& final, double lambda);

struct LossTerms {
  StageLoss initial;
  StageLoss final;
  Grid total;

  // (name, value) for every scalar term, for logging and finiteness checks.
  std::vector<std::pair<std::string, double>> Named() const;
};

LossTerms TotalLoss(Tape& tape, const ModelOutputs& a, const ModelOutputs& b,
                    const CorrespondenceField& field, const ApPlan& plan,
                    const LossSettings& settings);

}  // namespace ctxfeat
