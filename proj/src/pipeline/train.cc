#include "ctxfeat/pipeline/train.h"

#include <algorithm>
#include <cmath>
#include <exception>
#include <sstream>
#include <thread>

#include "ctxfeat/gridcore/ops.h"
#include "ctxfeat/gridcore/random.h"
#include "ctxfeat/pipeline/dataset.h"

namespace ctxfeat {
namespace {

void CheckFinite(const LossTerms& terms, std::uint64_t step, std::size_t pair) {
  for (const auto& [name, value] : terms.Named()) {
    if (!std::isfinite(value)) {
      throw NonFiniteLossError(step, name,
                               "step " + std::to_string(step) + ": loss term '" + name +
                                   "' is not finite (" + std::to_string(value) +
                                   ") on batch item " + std::to_string(pair));
    }
  }
}

Checkpoint StartingPoint(const TrainConfig& config) {
  if (config.init_checkpoint.empty()) {
    Checkpoint ckpt;
    ckpt.model = config.model;
    ckpt.params = InitModelParameters(config.model);
    return ckpt;
  }
  Checkpoint ckpt = LoadCheckpoint(config.init_checkpoint);
  if (!(ckpt.model == config.model)) {
    throw ConfigError("init_checkpoint " + config.init_checkpoint +
                      " was trained with a different model configuration");
  }
  for (const auto& [name, grid] : ckpt.params) grid.clear_grad();
  return ckpt;
}

}  // namespace

void AdamWStep(Parameters& params, std::vector<std::vector<double>>& m,
               std::vector<std::vector<double>>& v, std::uint64_t& step,
               const AdamSettings& s) {
  if (m.empty()) {
    for (const auto& [name, grid] : params) {
      m.emplace_back(grid.size(), 0.0);
      v.emplace_back(grid.size(), 0.0);
    }
  }
  ++step;
  const double c1 = 1.0 - std::pow(s.beta1, static_cast<double>(step));
  const double c2 = 1.0 - std::pow(s.beta2, static_cast<double>(step));
  std::size_t i = 0;
  for (auto& [name, grid] : params) {
    auto data = grid.mutable_data();
    const bool has = grid.has_grad();
    const auto g = grid.grad_view();
    for (std::size_t k = 0; k < data.size(); ++k) {
      const double gk = has ? g[k] : 0.0;
      m[i][k] = s.beta1 * m[i][k] + (1.0 - s.beta1) * gk;
      v[i][k] = s.beta2 * v[i][k] + (1.0 - s.beta2) * gk * gk;
      const double update = (m[i][k] / c1) / (std::sqrt(v[i][k] / c2) + s.eps);
      data[k] -= s.learning_rate * (update + s.weight_decay * data[k]);
    }
    ++i;
  }
}

LossTerms PairLoss(Tape& tape, const Parameters& params, const ModelConfig& model,
                   const ImagePair& pair, const ApPlan& plan, const LossSettings& settings,
                   const FusionToggles& toggles) {
  const ModelOutputs a = FullForward(tape, pair.image_a, params, model, toggles);
  const ModelOutputs b = FullForward(tape, pair.image_b, params, model, toggles);
  return TotalLoss(tape, a, b, pair.field, plan, settings);
}

double EvaluateLoss(const Parameters& params, const ModelConfig& model,
                    const std::vector<ImagePair>& pairs, const LossSettings& settings,
                    const ApSamplingConfig& ap, std::uint64_t seed) {
  if (pairs.empty()) throw std::invalid_argument("evaluate_loss: no pairs");
  double sum = 0.0;
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    std::mt19937_64 rng(MixSeed(seed, i));
    const ImagePair& p = pairs[i];
    const ApPlan plan = SampleApPlan(p.field, p.image_b.height(), p.image_b.width(), ap, rng);
    Tape tape;
    sum += PairLoss(tape, params, model, p, plan, settings).total.item();
  }
  return sum / static_cast<double>(pairs.size());
}

std::uint64_t PlannedSteps(const TrainConfig& config, std::size_t pairs) {
  if (config.steps > 0) return static_cast<std::uint64_t>(config.steps);
  const std::uint64_t per_epoch = (pairs + config.batch_size - 1) / config.batch_size;
  return per_epoch * static_cast<std::uint64_t>(config.epochs);
}

TrainResult Train(const TrainConfig& config, const std::vector<ImagePair>& pairs,
                  const StepCallback& on_step) {
  config.Validate();
  if (pairs.empty()) throw std::invalid_argument("train: empty dataset");

  TrainResult result;
  Checkpoint& ckpt = result.checkpoint;
  ckpt = StartingPoint(config);
  const AdamSettings adam{config.learning_rate, config.weight_decay};
  std::mt19937_64 rng(MixSeed(config.seed, 0x7261696e));

  std::vector<std::size_t> order(pairs.size());
  std::size_t cursor = order.size();
  auto next_pair = [&]() {
    if (cursor == order.size()) {
      for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
      for (std::size_t i = order.size(); i > 1; --i) {
        std::swap(order[i - 1], order[UniformIndex(rng, i)]);
      }
      cursor = 0;
    }
    return order[cursor++];
  };

  const std::uint64_t total_steps = PlannedSteps(config, pairs.size());
  const std::size_t batch = static_cast<std::size_t>(config.batch_size);
  for (std::uint64_t s = 0; s < total_steps; ++s) {
    const std::uint64_t step_number = s + 1;
    std::vector<std::size_t> items(batch);
    std::vector<ApPlan> plans(batch);
    for (std::size_t b = 0; b < batch; ++b) {
      items[b] = next_pair();
      const ImagePair& p = pairs[items[b]];
      plans[b] = SampleApPlan(p.field, p.image_b.height(), p.image_b.width(), config.ap, rng);
    }

    std::vector<Parameters> workspaces(batch);
    std::vector<std::vector<std::pair<std::string, double>>> named(batch);
    std::vector<std::exception_ptr> errors(batch);
    auto work = [&](std::size_t b) {
      try {
        workspaces[b] = ckpt.params.clone();
        Tape tape;
        const LossTerms terms =
            PairLoss(tape, workspaces[b], ckpt.model, pairs[items[b]], plans[b], config.loss);
        CheckFinite(terms, step_number, b);
        named[b] = terms.Named();
        tape.backward(Scale(tape, terms.total, 1.0 / static_cast<double>(batch)));
      } catch (...) {
        errors[b] = std::current_exception();
      }
    };
    std::vector<std::thread> threads;
    for (std::size_t b = 1; b < batch; ++b) threads.emplace_back(work, b);
    work(0);
    for (auto& t : threads) t.join();
    for (const auto& e : errors) {
      if (e) std::rethrow_exception(e);
    }

    ckpt.params.zero_grad();
    for (std::size_t b = 0; b < batch; ++b) {
      auto src = workspaces[b].begin();
      for (auto& [name, grid] : ckpt.params) {
        auto g = grid.grad();
        if (src->second.has_grad()) {
          const auto sg = src->second.grad_view();
          for (std::size_t k = 0; k < g.size(); ++k) g[k] += sg[k];
        }
        ++src;
      }
    }
    AdamWStep(ckpt.params, ckpt.adam_m, ckpt.adam_v, ckpt.step, adam);

    StepLog log;
    log.step = step_number;
    for (std::size_t t = 0; t < named[0].size(); ++t) {
      double sum = 0.0;
      for (std::size_t b = 0; b < batch; ++b) sum += named[b][t].second;
      log.terms.emplace_back(named[0][t].first, sum / static_cast<double>(batch));
    }
    if (on_step) on_step(log);
    result.history.push_back(std::move(log));
  }

  for (const auto& [name, grid] : ckpt.params) grid.clear_grad();
  std::ostringstream state;
  state << rng;
  ckpt.rng_state = state.str();
  return result;
}

TrainResult Train(const TrainConfig& config, const StepCallback& on_step) {
  config.Validate();
  return Train(config, BuildPairs(DatasetSpec::FromTrainConfig(config)), on_step);
}

}  // namespace ctxfeat
