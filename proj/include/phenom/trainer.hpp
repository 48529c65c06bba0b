#pragma once

#include <filesystem>
#include <optional>

#include "phenom/ca_mae.hpp"
#include "phenom/checkpoint.hpp"
#include "phenom/io.hpp"
#include "phenom/model.hpp"
#include "phenom/optimizer.hpp"

namespace phenom {

enum class Objective { MAE, CA_MAE, WSL };

inline Objective objective_from_string(const std::string& s) {
  if (s == "mae") return Objective::MAE;
  if (s == "ca_mae") return Objective::CA_MAE;
  if (s == "wsl") return Objective::WSL;
  throw std::invalid_argument("unknown objective: " + s);
}

inline const char* to_string(Objective o) {
  switch (o) {
    case Objective::MAE: return "mae";
    case Objective::CA_MAE: return "ca_mae";
    case Objective::WSL: return "wsl";
  }
  return "?";
}

struct TrainConfig {
  Objective objective = Objective::MAE;
  int batch_size = 32;
  double max_lr = 1e-3;
  std::string schedule = "one_cycle_cosine";
  double warmup_fraction = 0.1;
  OptimizerType optimizer = OptimizerType::LION;
  double beta1 = 0.9;
  double beta2 = 0.95;
  double weight_decay = 0.05;
  int epochs = 10;
  double alpha = 0.01;  // loss.alpha, Fourier term weight
  double mask_ratio = 0.75;
  uint64_t seed = 0;
  bool augment = true;
  bool weighted_sampling = false;  // WSL option: label-balanced, with replacement

  void validate() const {
    if (batch_size < 1) throw std::invalid_argument("TrainConfig: batch_size >= 1 required");
    if (warmup_fraction < 0.0 || warmup_fraction >= 1.0)
      throw std::invalid_argument("TrainConfig: warmup_fraction must be in [0, 1)");
    if (epochs < 1) throw std::invalid_argument("TrainConfig: epochs >= 1 required");
    if (alpha <= 0.0 || alpha >= 1.0)
      throw std::invalid_argument("TrainConfig: alpha must be in (0, 1)");
    if (mask_ratio < 0.0 || mask_ratio >= 1.0)
      throw std::invalid_argument("TrainConfig: mask_ratio must be in [0, 1)");
    if (max_lr <= 0.0) throw std::invalid_argument("TrainConfig: max_lr must be positive");
    if (schedule != "one_cycle_cosine")
      throw std::invalid_argument("TrainConfig: unknown schedule " + schedule);
  }
};

// One-cycle schedule: linear ramp 0 -> max_lr over warmup_fraction of the
// run, then cosine decay to 0.
double lr_at(long long step, long long total_steps, const TrainConfig& cfg);

// Crops are expected standardized; labels are required for WSL only.
struct TrainDataset {
  std::vector<Crop> crops;
  std::vector<int> labels;
};

struct FitResult {
  std::vector<io::LossPoint> curve;
  long long final_step = 0;
};

// Runs the training loop. Deterministic given (config.seed, dataset order,
// thread-count independent). When checkpoint_path is set, a rolling
// checkpoint (with optimizer state and progress) is written at every epoch
// boundary. start_progress resumes a run mid-way; the caller supplies the
// optimizer state loaded from the checkpoint. stop_after_epochs > 0 stops
// the invocation early (the schedule still spans cfg.epochs), which models
// an interrupted run that a later call resumes.
FitResult fit(Model<float>& model, const TrainDataset& data, const TrainConfig& cfg,
              const std::filesystem::path* checkpoint_path = nullptr,
              OptimizerState<float>* resumed_opt = nullptr,
              const TrainProgressInfo* start_progress = nullptr,
              const TrainDataset* val_data = nullptr, Exec ex = Exec::parallel,
              int stop_after_epochs = 0);

}  // namespace phenom
