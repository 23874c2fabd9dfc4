#pragma once
// Schema-versioned run configuration: one JSON document with sections for
// data generation, the model, each training stage, and evaluation.  Missing
// keys keep their defaults, unknown keys are rejected at every level, and the
// canonical serialization's hash is embedded in every command's outputs.
// Precedence is flag > file > default; flags are applied by the CLI after the
// file is parsed.

#include <cstdint>
#include <string>

#include "draw/models.hpp"
#include "draw/synthdata.hpp"
#include "draw/train.hpp"

namespace draw {

struct TrainSection {
  long steps = 5000;
  int batch_size = 8;
  uint64_t seed = 1;
  int log_every = 25;
  double lr = 2e-4;
  double beta1 = 0.5;
  double beta2 = 0.999;
  double eps = 1e-8;
  LossWeights weights;
  bool include_xp = true;  // consumed by the standalone identity-recovery runs

  TrainConfig to_train_config() const;
};

struct EvalSection {
  uint64_t probe_shape_seed = 200;  // first test object under default datagen
  uint64_t probe_app_seed_a = 1;
  uint64_t probe_app_seed_b = 2;
  int probe_view = 2;
};

struct RunConfig {
  int schema_version = 1;
  DatasetConfig datagen;
  ModelConfig model;
  TrainSection stage1, stage2, baseline;
  EvalSection eval;

  RunConfig() { baseline.steps = 3000; }  // ablation runs get a shorter equal budget
};

// Canonical serialization (every key present, sorted); its FNV-1a hash is the
// run's config hash.
std::string run_config_json(const RunConfig& cfg);
std::string run_config_hash(const RunConfig& cfg);

// Throws std::invalid_argument on unknown keys, a bad schema_version, or
// malformed values; absent keys keep their defaults.
RunConfig run_config_from_json(const std::string& text);
RunConfig load_run_config(const std::string& path);

}  // namespace draw
