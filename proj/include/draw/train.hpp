#pragma once
// Two-stage adversarial training plus the ablation baselines.  Each step runs
// one critic update then one generator update, both as per-sample graphs whose
// backward pass accumulates batch-mean gradients.  Stage 2 never binds G1, G2,
// or D_V into a graph, so stage-1 weights are frozen by construction.

#include <iosfwd>
#include <stdexcept>
#include <string>

#include "draw/dataset.hpp"
#include "draw/losses.hpp"
#include "draw/models.hpp"
#include "draw/params.hpp"

namespace draw {

struct TrainConfig {
  long steps = 5000;
  int batch_size = 8;
  Adam::Config opt;
  uint64_t seed = 1;
  LossWeights weights;
  bool include_xp = true;  // x_p supervision; standalone identity recovery only
  int log_every = 25;

  void validate() const {
    if (steps <= 0) throw std::invalid_argument("train: steps must be > 0");
    if (batch_size <= 0) throw std::invalid_argument("train: batch_size must be > 0");
    if (log_every <= 0) throw std::invalid_argument("train: log_every must be > 0");
  }
};

// A non-finite loss; the diagnostic dump has already been written to the log.
struct TrainingFault : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct TrainResult {
  long steps = 0;
  double first_gen_loss = 0;  // generator batch mean at the first step
  double final_gen_loss = 0;  // ... and at the last
};

// Log lines are `{"loss_name":..,"stage":..,"step":..,"value":..}` JSONL;
// pass nullptr to discard.
TrainResult train_stage1(ModelSet& m, const Dataset& data, const TrainConfig& cfg,
                         std::ostream* log);
TrainResult train_stage2(ModelSet& m, const Dataset& data, const TrainConfig& cfg,
                         std::ostream* log);
TrainResult train_ir_standalone(ModelSet& m, const Dataset& data, const TrainConfig& cfg,
                                std::ostream* log);
TrainResult train_baseline(BaselineSet& b, BaselineKind kind, const Dataset& data,
                           const TrainConfig& cfg, std::ostream* log);

}  // namespace draw
