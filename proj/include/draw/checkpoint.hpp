#pragma once
// Checkpoints are directories: manifest.json (stage tag, model config and its
// hash, and per-parameter name/shape/dtype/offset) next to params.bin, the
// concatenated row-major little-endian float32 values in manifest order.
// Loading verifies the config hash, the stage tag, and that the destination
// parameter list matches the manifest name-for-name and shape-for-shape.

#include <cstdint>
#include <string>

#include "draw/models.hpp"
#include "draw/params.hpp"

namespace draw {

struct CheckpointMeta {
  int format_version = 1;
  std::string stage;  // "stage1" | "stage2" | "hal" | "wir" | "ir_standalone"
  ModelConfig config;
  std::string config_hash;
  bool include_xp = false;  // recorded for ir_standalone runs
};

std::string model_config_json(const ModelConfig& cfg);  // canonical form
ModelConfig model_config_from_json(const std::string& text);
std::string model_config_hash(const ModelConfig& cfg);

void save_checkpoint(const std::string& dir, const CheckpointMeta& meta,
                     const ParamList& params);

CheckpointMeta read_checkpoint_meta(const std::string& dir);

// Fills `params` (typically ModelSet::params(...) for the stage's groups)
// from the checkpoint; throws if names, shapes, or the config hash disagree.
CheckpointMeta load_checkpoint(const std::string& dir, const ParamList& params);

}  // namespace draw
