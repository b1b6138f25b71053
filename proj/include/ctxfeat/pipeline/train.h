#pragma once

#include <cstdint>
#include <functional>
#include <random>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "ctxfeat/contextfuse/contextfuse.h"
#include "ctxfeat/losses/total.h"
#include "ctxfeat/pipeline/checkpoint.h"
#include "ctxfeat/pipeline/config.h"
#include "ctxfeat/synthdata/synthdata.h"

namespace ctxfeat {

class NonFiniteLossError : public std::runtime_error {
 public:
  NonFiniteLossError(std::uint64_t step, std::string term, const std::string& message)
      : std::runtime_error(message), step(step), term(std::move(term)) {}
  std::uint64_t step;
  std::string term;
};

struct StepLog {
  std::uint64_t step = 0;  // 1-based
  // Batch means of every loss term, "total" last.
  std::vector<std::pair<std::string, double>> terms;
  double total() const { return terms.back().second; }
};

struct TrainResult {
  Checkpoint checkpoint;
  std::vector<StepLog> history;
};

struct AdamSettings {
  double learning_rate = 0.001;
  double weight_decay = 0.0005;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

// One AdamW update from the gradients currently held by `params`; weight
// decay is decoupled from the moment estimates. Increments `step`.
void AdamWStep(Parameters& params, std::vector<std::vector<double>>& m,
               std::vector<std::vector<double>>& v, std::uint64_t& step,
               const AdamSettings& settings);

// Forward both images of a pair and build the two-stage loss on `tape`.
LossTerms PairLoss(Tape& tape, const Parameters& params, const ModelConfig& model,
                   const ImagePair& pair, const ApPlan& plan, const LossSettings& settings,
                   const FusionToggles& toggles = {});

// Mean total loss over `pairs`, with AP sampling drawn from `seed` so that
// repeated calls see the same queries.
double EvaluateLoss(const Parameters& params, const ModelConfig& model,
                    const std::vector<ImagePair>& pairs, const LossSettings& settings,
                    const ApSamplingConfig& ap, std::uint64_t seed);

using StepCallback = std::function<void(const StepLog&)>;

// Trains on `pairs`: batches are drawn from a seeded per-epoch shuffle, the
// pairs of a batch are differentiated concurrently and their gradients summed
// in batch order, so the result is a pure function of (config, pairs).
// Throws NonFiniteLossError naming the step and offending term.
TrainResult Train(const TrainConfig& config, const std::vector<ImagePair>& pairs,
                  const StepCallback& on_step = {});

// Builds the dataset described by the config, then trains.
TrainResult Train(const TrainConfig& config, const StepCallback& on_step = {});

// Number of optimizer steps the config asks for on a dataset of `pairs`.
std::uint64_t PlannedSteps(const TrainConfig& config, std::size_t pairs);

}  // namespace ctxfeat
