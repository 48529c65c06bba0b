#pragma once

#include <filesystem>
#include <memory>
#include <optional>

#include "phenom/model.hpp"
#include "phenom/optimizer.hpp"

namespace phenom {

// Training progress carried inside a checkpoint so runs can resume.
struct TrainProgressInfo {
  int epoch = 0;
  long long step = 0;
};

// Single-archive checkpoint: magic, JSON block (schema string, model config,
// tensor directory), then a float32 little-endian blob. Layout documented in
// docs/FORMATS.md.
void save_checkpoint(const Model<float>& model, const std::filesystem::path& path,
                     const OptimizerState<float>* opt = nullptr,
                     const TrainProgressInfo* progress = nullptr);

struct LoadedCheckpoint {
  std::unique_ptr<Model<float>> model;
  std::optional<OptimizerState<float>> opt;
  std::optional<TrainProgressInfo> progress;
};

LoadedCheckpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace phenom
