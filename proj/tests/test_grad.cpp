// Central-difference gradient checks (64-bit) through the full model for
// every objective and for the optional architecture flags.
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <functional>
#include <random>

#include "phenom/ca_mae.hpp"
#include "phenom/model.hpp"
#include "test_util.hpp"

using namespace phenom;
using testutil::random_crop_data;
using testutil::tiny_config;

namespace {

struct SampledParam {
  int pid;
  size_t elem;
};

std::vector<SampledParam> sample_params(const ParamRegistry<double>& reg, int count,
                                        uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::vector<SampledParam> out;
  const auto& params = reg.all();
  for (int i = 0; i < count; ++i) {
    int pid = static_cast<int>(rng() % params.size());
    size_t elem = rng() % params[pid]->size();
    out.push_back({pid, elem});
  }
  return out;
}

double rel_err(double a, double b) {
  return std::abs(a - b) / std::max({std::abs(a), std::abs(b), 1e-6});
}

// Checks analytic gradients against central differences on >= 20 sampled
// parameters; returns the max relative error.
double grad_check(Model<double>& model, const std::function<double()>& loss_eval,
                  const std::function<void(Grads<double>&)>& backward, uint64_t seed,
                  int n_samples = 24) {
  Grads<double> gs;
  gs.init(model.registry);
  backward(gs);
  auto samples = sample_params(model.registry, n_samples, seed);
  double max_err = 0.0;
  const double h = 1e-4;
  for (const auto& s : samples) {
    double* w = &model.registry.all()[s.pid]->w[s.elem];
    const double orig = *w;
    *w = orig + h;
    double lp = loss_eval();
    *w = orig - h;
    double lm = loss_eval();
    *w = orig;
    double numeric = (lp - lm) / (2 * h);
    double analytic = gs.g[s.pid][s.elem];
    max_err = std::max(max_err, rel_err(analytic, numeric));
  }
  return max_err;
}

}  // namespace

TEST_CASE("MAE gradients: loss_mae, loss_ft, loss_combined vs finite differences") {
  auto model = Model<double>::create(ModelKind::MAE, tiny_config(), 2, 64, 0, 101);
  Crop crop = random_crop_data(64, 2, 55);
  MaskSpec mask = sample_mask(model->n_patches(), 0.75, 7);

  auto forward_loss = [&](auto&& loss_fn) {
    MaeCache<double> cache;
    auto rec = mae_forward(*model, crop, mask, false, 0, cache);
    return loss_fn(rec);
  };

  SUBCASE("loss_mae") {
    auto eval = [&] { return forward_loss([](const auto& r) { return loss_mae(r); }); };
    auto backward = [&](Grads<double>& gs) {
      MaeCache<double> cache;
      auto rec = mae_forward(*model, crop, mask, false, 0, cache);
      auto d = loss_mae_backward(rec);
      mae_backward(*model, cache, d, gs);
    };
    CHECK(grad_check(*model, eval, backward, 1) < 1e-4);
  }
  SUBCASE("loss_ft") {
    auto eval = [&] { return forward_loss([](const auto& r) { return loss_ft(r); }); };
    auto backward = [&](Grads<double>& gs) {
      MaeCache<double> cache;
      auto rec = mae_forward(*model, crop, mask, false, 0, cache);
      auto d = loss_ft_backward(rec);
      mae_backward(*model, cache, d, gs);
    };
    CHECK(grad_check(*model, eval, backward, 2) < 1e-4);
  }
  SUBCASE("loss_combined at alpha=0.01") {
    auto eval = [&] {
      return forward_loss([](const auto& r) { return loss_combined(r, 0.01); });
    };
    auto backward = [&](Grads<double>& gs) {
      MaeCache<double> cache;
      auto rec = mae_forward(*model, crop, mask, false, 0, cache);
      auto d = loss_combined_backward(rec, 0.01);
      mae_backward(*model, cache, d, gs);
    };
    CHECK(grad_check(*model, eval, backward, 3) < 1e-4);
  }
}

TEST_CASE("combined-loss gradient is the weighted sum of the two loss gradients") {
  auto model = Model<double>::create(ModelKind::MAE, tiny_config(), 2, 64, 0, 103);
  Crop crop = random_crop_data(64, 2, 56);
  MaskSpec mask = sample_mask(model->n_patches(), 0.5, 9);
  const double alpha = 0.01;

  auto run = [&](int which, Grads<double>& gs) {
    MaeCache<double> cache;
    auto rec = mae_forward(*model, crop, mask, false, 0, cache);
    Matrix<double> d;
    if (which == 0)
      d = loss_mae_backward(rec);
    else if (which == 1)
      d = loss_ft_backward(rec);
    else
      d = loss_combined_backward(rec, alpha);
    mae_backward(*model, cache, d, gs);
  };
  Grads<double> g_mae, g_ft, g_comb;
  g_mae.init(model->registry);
  g_ft.init(model->registry);
  g_comb.init(model->registry);
  run(0, g_mae);
  run(1, g_ft);
  run(2, g_comb);
  for (size_t pi = 0; pi < g_comb.g.size(); ++pi)
    for (size_t j = 0; j < g_comb.g[pi].size(); ++j) {
      double expect = (1 - alpha) * g_mae.g[pi][j] + alpha * g_ft.g[pi][j];
      CHECK(std::abs(g_comb.g[pi][j] - expect) < 1e-6);
    }
}

TEST_CASE("gradients with the scaling-stability flags enabled") {
  ViTConfig cfg = tiny_config();
  cfg.parallel_blocks = true;
  cfg.qk_norm = true;
  cfg.qk_bias = false;
  cfg.layer_scale = true;
  cfg.layer_scale_init = 0.5;  // large enough to give the branch real gradient
  cfg.stochastic_depth_rate = 0.3;
  auto model = Model<double>::create(ModelKind::MAE, cfg, 2, 64, 0, 107);
  Crop crop = random_crop_data(64, 2, 57);
  MaskSpec mask = sample_mask(model->n_patches(), 0.5, 11);
  const uint64_t droppath_seed = 2024;  // training mode with a fixed seed

  auto eval = [&] {
    MaeCache<double> cache;
    auto rec = mae_forward(*model, crop, mask, true, droppath_seed, cache);
    return static_cast<double>(loss_mae(rec));
  };
  auto backward = [&](Grads<double>& gs) {
    MaeCache<double> cache;
    auto rec = mae_forward(*model, crop, mask, true, droppath_seed, cache);
    auto d = loss_mae_backward(rec);
    mae_backward(*model, cache, d, gs);
  };
  CHECK(grad_check(*model, eval, backward, 4, 30) < 1e-4);
}

TEST_CASE("CA-MAE gradients through shared tokenizer and per-channel decoders") {
  ViTConfig cfg = tiny_config();
  auto model = Model<double>::create(ModelKind::CA_MAE, cfg, 3, 64, 0, 109);
  Crop crop = random_crop_data(64, 3, 58);
  ChannelMaskSpec masks = sample_channel_masks(3, model->n_patches(), 0.75, 13);

  auto eval = [&] {
    CaCache<double> cache;
    auto recs = ca_forward(*model, crop, masks, false, 0, cache);
    double loss = 0.0;
    for (auto& r : recs) loss += loss_combined(r, 0.01);
    return loss / recs.size();
  };
  auto backward = [&](Grads<double>& gs) {
    CaCache<double> cache;
    auto recs = ca_forward(*model, crop, masks, false, 0, cache);
    std::vector<Matrix<double>> d(recs.size());
    for (size_t ch = 0; ch < recs.size(); ++ch)
      d[ch] = loss_combined_backward(recs[ch], 0.01, 1.0 / recs.size());
    ca_backward(*model, cache, d, gs);
  };
  CHECK(grad_check(*model, eval, backward, 5, 30) < 1e-4);
}

TEST_CASE("WSL gradients through class token and cross-entropy") {
  auto model = Model<double>::create(ModelKind::WSL, tiny_config(), 2, 64, 5, 113);
  Crop crop = random_crop_data(64, 2, 59);
  const int label = 3;

  auto eval = [&] {
    WslCache<double> cache;
    auto out = wsl_forward(*model, crop, false, 0, cache);
    return static_cast<double>(wsl_cross_entropy(*model, cache, out.logits, label));
  };
  auto backward = [&](Grads<double>& gs) {
    WslCache<double> cache;
    auto out = wsl_forward(*model, crop, false, 0, cache);
    wsl_cross_entropy(*model, cache, out.logits, label);
    wsl_backward(*model, cache, label, gs, 1.0);
  };
  CHECK(grad_check(*model, eval, backward, 6) < 1e-4);
}
