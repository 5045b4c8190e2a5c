#pragma once

#include <cstdint>
#include <filesystem>
#include <string>

#include "ptlab/model.hpp"

namespace ptlab {

struct CheckpointMeta {
  uint64_t tokens_seen = 0;
  int64_t step = 0;
  uint64_t seed = 0;
};

struct LoadedCheckpoint {
  ModelParams params;
  CheckpointMeta meta;
};

// Checkpoint directory layout:
//   manifest.json  config, parameter name/shape/byte-offset list, tokens_seen, step, seed
//   params.bin     raw little-endian float32 values, ordered per manifest
void save_checkpoint(const std::filesystem::path& dir, const ModelParams& params, const CheckpointMeta& meta);
LoadedCheckpoint load_checkpoint(const std::filesystem::path& dir);

ModelConfig model_config_from_json(const std::string& json_text);
std::string model_config_to_json(const ModelConfig& config);

}  // namespace ptlab
