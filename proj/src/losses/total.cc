#include "ctxfeat/losses/total.h"

#include "ctxfeat/gridcore/ops.h"

namespace ctxfeat {

StageLoss ComputeStageLoss(Tape& tape, const FeatureOutputs& a, const FeatureOutputs& b,
                           const CorrespondenceField& field, const PatchGrid& grid,
                           const ApPlan& plan, const LossSettings& settings) {
  StageLoss s;
  s.repeatability = RepeatabilityLoss(tape, a.repeatability, b.repeatability, field, grid);

  std::vector<ApGroup> groups;
  const Grid distances = PlanDistances(tape, a.descriptors, b.descriptors, plan, &groups);
  const Grid ap = SoftApGroups(tape, distances, groups, settings.ap_bins);
  std::vector<int> query_pixels;
  query_pixels.reserve(plan.queries.size());
  for (const ApQuery& q : plan.queries) query_pixels.push_back(q.pixel_a);
  const Grid reliability = GatherPixels(tape, a.reliability, query_pixels);
  s.ap = ApLoss(tape, ap, reliability, settings.kappa);
  s.total = Add(tape, s.repeatability.total, s.ap);
  return s;
}

Grid CombineStages(Tape& tape, const Grid& initial, const Grid& final, double lambda) {
  if (lambda < 0.0) throw std::invalid_argument("lambda must be >= 0");
  return Add(tape, initial, Scale(tape, final, lambda));
}

std::vector<std::pair<std::string, double>> LossTerms::Named() const {
  std::vector<std::pair<std::string, double>> out;
  for (const auto& [prefix, stage] :
       {std::pair<const char*, const StageLoss*>{"initial", &initial}, {"final", &final}}) {
    const std::string p(prefix);
    out.emplace_back(p + ".cosine", stage->repeatability.cosine.item());
    out.emplace_back(p + ".peaky_a", stage->repeatability.peaky_a.item());
    out.emplace_back(p + ".peaky_b", stage->repeatability.peaky_b.item());
    out.emplace_back(p + ".ap", stage->ap.item());
  }
  out.emplace_back("total", total.item());
  return out;
}

LossTerms TotalLoss(Tape& tape, const ModelOutputs& a, const ModelOutputs& b,
                    const CorrespondenceField& field, const ApPlan& plan,
                    const LossSettings& settings) {
  const Grid& rep = a.initial.repeatability;
  const PatchGrid grid =
      PatchGrid::Make(rep.height(), rep.width(), settings.patch_size, settings.patch_stride);
  LossTerms t;
  t.initial = ComputeStageLoss(tape, a.initial, b.initial, field, grid, plan, settings);
  t.final = ComputeStageLoss(tape, a.final, b.final, field, grid, plan, settings);
  t.total = CombineStages(tape, t.initial.total, t.final.total, settings.lambda);
  return t;
}

}  // namespace ctxfeat
