#include "phenom/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <random>

namespace phenom {

double lr_at(long long step, long long total_steps, const TrainConfig& cfg) {
  if (step < 0 || step > total_steps)
    throw std::invalid_argument("lr_at: step out of [0, total_steps]");
  if (total_steps <= 0) throw std::invalid_argument("lr_at: total_steps must be positive");
  const double w = cfg.warmup_fraction * static_cast<double>(total_steps);
  if (w > 0.0 && static_cast<double>(step) < w)
    return cfg.max_lr * static_cast<double>(step) / w;
  const double span = static_cast<double>(total_steps) - w;
  if (span <= 0.0) return 0.0;
  const double phase = (static_cast<double>(step) - w) / span;
  return cfg.max_lr * 0.5 * (1.0 + std::cos(phase * 3.14159265358979323846));
}

namespace {

constexpr uint64_t kAugTag = 0x41554746ULL;
constexpr uint64_t kMaskTag = 0x4d41534bULL;
constexpr uint64_t kDropTag = 0x44524f50ULL;
constexpr uint64_t kEpochTag = 0x45504f43ULL;
constexpr uint64_t kValTag = 0x56414c44ULL;

// One sample's forward + backward. Gradients go into `gs` scaled by
// upstream = 1 / batch_size; returns the sample loss.
double train_sample(Model<float>& model, const TrainConfig& cfg, const Crop& crop_in, int label,
                    uint64_t step_key, float upstream, Grads<float>& gs) {
  Crop crop = cfg.augment ? augment_flips(crop_in, mix_seed(cfg.seed, kAugTag, step_key))
                          : crop_in;
  const uint64_t droppath_seed = mix_seed(cfg.seed, kDropTag, step_key);
  switch (cfg.objective) {
    case Objective::MAE: {
      MaskSpec mask = sample_mask(model.n_patches(), cfg.mask_ratio,
                                  mix_seed(cfg.seed, kMaskTag, step_key));
      MaeCache<float> cache;
      Reconstruction<float> rec =
          mae_forward(model, crop, mask, true, droppath_seed, cache, Exec::serial);
      double loss = loss_combined(rec, cfg.alpha);
      Matrix<float> d = loss_combined_backward(rec, cfg.alpha, upstream);
      mae_backward(model, cache, d, gs, Exec::serial);
      return loss;
    }
    case Objective::CA_MAE: {
      ChannelMaskSpec masks = sample_channel_masks(crop.channels, model.n_patches(),
                                                   cfg.mask_ratio,
                                                   mix_seed(cfg.seed, kMaskTag, step_key));
      CaCache<float> cache;
      auto recs = ca_forward(model, crop, masks, true, droppath_seed, cache, Exec::serial);
      const int c = static_cast<int>(recs.size());
      double loss = 0.0;
      std::vector<Matrix<float>> dpreds(c);
      for (int ch = 0; ch < c; ++ch) {
        loss += loss_combined(recs[ch], cfg.alpha);
        dpreds[ch] = loss_combined_backward(recs[ch], cfg.alpha,
                                            static_cast<float>(upstream / c));
      }
      ca_backward(model, cache, dpreds, gs, Exec::serial);
      return loss / c;
    }
    case Objective::WSL: {
      WslCache<float> cache;
      auto out = wsl_forward(model, crop, true, droppath_seed, cache, Exec::serial);
      double loss = wsl_cross_entropy(model, cache, out.logits, label);
      wsl_backward(model, cache, label, gs, upstream, Exec::serial);
      return loss;
    }
  }
  throw std::logic_error("train_sample: unreachable");
}

double eval_sample(Model<float>& model, const TrainConfig& cfg, const Crop& crop, int label,
                   uint64_t key) {
  switch (cfg.objective) {
    case Objective::MAE: {
      MaskSpec mask =
          sample_mask(model.n_patches(), cfg.mask_ratio, mix_seed(cfg.seed, kValTag, key));
      MaeCache<float> cache;
      auto rec = mae_forward(model, crop, mask, false, 0, cache, Exec::serial);
      return loss_combined(rec, cfg.alpha);
    }
    case Objective::CA_MAE: {
      ChannelMaskSpec masks = sample_channel_masks(crop.channels, model.n_patches(),
                                                   cfg.mask_ratio, mix_seed(cfg.seed, kValTag, key));
      CaCache<float> cache;
      auto recs = ca_forward(model, crop, masks, false, 0, cache, Exec::serial);
      double loss = 0.0;
      for (auto& r : recs) loss += loss_combined(r, cfg.alpha);
      return loss / static_cast<double>(recs.size());
    }
    case Objective::WSL: {
      WslCache<float> cache;
      auto out = wsl_forward(model, crop, false, 0, cache, Exec::serial);
      return wsl_cross_entropy(model, cache, out.logits, label);
    }
  }
  throw std::logic_error("eval_sample: unreachable");
}

std::vector<int> epoch_order(const TrainConfig& cfg, int n, const std::vector<int>& labels,
                             int epoch) {
  auto rng = make_rng(mix_seed(cfg.seed, kEpochTag, static_cast<uint64_t>(epoch)));
  std::vector<int> order(n);
  if (cfg.weighted_sampling && cfg.objective == Objective::WSL) {
    // label-balanced sampling with replacement
    std::vector<double> weights(n, 1.0);
    std::vector<int> counts;
    for (int i = 0; i < n; ++i) {
      if (labels[i] >= static_cast<int>(counts.size())) counts.resize(labels[i] + 1, 0);
      counts[labels[i]]++;
    }
    for (int i = 0; i < n; ++i) weights[i] = 1.0 / counts[labels[i]];
    std::discrete_distribution<int> d(weights.begin(), weights.end());
    for (int i = 0; i < n; ++i) order[i] = d(rng);
  } else {
    // without replacement: a fresh permutation per epoch
    for (int i = 0; i < n; ++i) order[i] = i;
    std::shuffle(order.begin(), order.end(), rng);
  }
  return order;
}

}  // namespace

FitResult fit(Model<float>& model, const TrainDataset& data, const TrainConfig& cfg,
              const std::filesystem::path* checkpoint_path, OptimizerState<float>* resumed_opt,
              const TrainProgressInfo* start_progress, const TrainDataset* val_data, Exec ex,
              int stop_after_epochs) {
  cfg.validate();
  const int n = static_cast<int>(data.crops.size());
  if (n == 0) throw std::invalid_argument("fit: empty dataset");
  if (cfg.objective == Objective::WSL && data.labels.size() != data.crops.size())
    throw std::invalid_argument("fit: WSL requires one label per crop");

  const long long steps_per_epoch = (n + cfg.batch_size - 1) / cfg.batch_size;
  const long long total_steps = steps_per_epoch * cfg.epochs;

  OptimizerState<float> local_opt;
  OptimizerState<float>* opt = resumed_opt;
  if (!opt) {
    local_opt.type = cfg.optimizer;
    local_opt.beta1 = cfg.beta1;
    local_opt.beta2 = cfg.beta2;
    local_opt.weight_decay = cfg.weight_decay;
    local_opt.init(model.registry);
    opt = &local_opt;
  }

  const int start_epoch = start_progress ? start_progress->epoch : 0;
  long long gstep = start_progress ? start_progress->step : 0;

  // One gradient buffer per batch slot: the reduction is in slot order, so
  // results do not depend on the thread count.
  std::vector<Grads<float>> slot_grads(cfg.batch_size);
  for (auto& g : slot_grads) g.init(model.registry);
  Grads<float> total;
  total.init(model.registry);

  FitResult result;
  int last_epoch = cfg.epochs;
  if (stop_after_epochs > 0)
    last_epoch = std::min(cfg.epochs, start_epoch + stop_after_epochs);
  for (int epoch = start_epoch; epoch < last_epoch; ++epoch) {
    std::vector<int> order = epoch_order(cfg, n, data.labels, epoch);
    for (long long bstart = 0; bstart < n; bstart += cfg.batch_size) {
      const int bn = static_cast<int>(std::min<long long>(cfg.batch_size, n - bstart));
      const float upstream = 1.0f / static_cast<float>(bn);
      std::vector<double> slot_loss(bn, 0.0);

#pragma omp parallel for schedule(dynamic) if (ex == Exec::parallel)
      for (int slot = 0; slot < bn; ++slot) {
        slot_grads[slot].zero();
        const int idx = order[bstart + slot];
        const uint64_t step_key = mix_seed(static_cast<uint64_t>(gstep),
                                           static_cast<uint64_t>(slot));
        slot_loss[slot] =
            train_sample(model, cfg, data.crops[idx],
                         data.labels.empty() ? 0 : data.labels[idx], step_key, upstream,
                         slot_grads[slot]);
      }

      double batch_loss = 0.0;
      for (int slot = 0; slot < bn; ++slot) batch_loss += slot_loss[slot];
      batch_loss /= bn;
      if (!std::isfinite(batch_loss))
        throw std::runtime_error("fit: non-finite loss at step " + std::to_string(gstep) +
                                 " (epoch " + std::to_string(epoch) + ")");

      const int n_params = static_cast<int>(total.g.size());
#pragma omp parallel for schedule(static) if (ex == Exec::parallel)
      for (int pi = 0; pi < n_params; ++pi) {
        auto& dst = total.g[pi];
        std::fill(dst.begin(), dst.end(), 0.0f);
        for (int slot = 0; slot < bn; ++slot) {
          const auto& src = slot_grads[slot].g[pi];
          for (size_t j = 0; j < dst.size(); ++j) dst[j] += src[j];
        }
      }

      const double lr = lr_at(gstep, total_steps, cfg);
      result.curve.push_back({gstep, batch_loss, lr});  // logged before the update
      optimizer_step(model.registry, total, *opt, lr);
      ++gstep;
    }

    if (val_data && !val_data->crops.empty()) {
      const int vn = static_cast<int>(val_data->crops.size());
      std::vector<double> vloss(vn, 0.0);
#pragma omp parallel for schedule(dynamic) if (ex == Exec::parallel)
      for (int i = 0; i < vn; ++i)
        vloss[i] = eval_sample(model, cfg, val_data->crops[i],
                               val_data->labels.empty() ? 0 : val_data->labels[i],
                               mix_seed(static_cast<uint64_t>(epoch), static_cast<uint64_t>(i)));
      double v = 0.0;
      for (double x : vloss) v += x;
      result.curve.back().val_loss = v / vn;
    }

    if (checkpoint_path) {
      TrainProgressInfo prog{epoch + 1, gstep};
      save_checkpoint(model, *checkpoint_path, opt, &prog);
    }
  }
  result.final_step = gstep;
  return result;
}

}  // namespace phenom
