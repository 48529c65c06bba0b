#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>

#include "phenom/ca_mae.hpp"
#include "phenom/checkpoint.hpp"
#include "test_util.hpp"

using namespace phenom;
using testutil::random_crop_data;
using testutil::tiny_config;

namespace {

Crop permute_channels(const Crop& crop, const std::vector<int>& perm) {
  Crop out = crop;
  for (int y = 0; y < crop.size; ++y)
    for (int x = 0; x < crop.size; ++x)
      for (size_t c = 0; c < perm.size(); ++c) out.at(y, x, static_cast<int>(c)) = crop.at(y, x, perm[c]);
  return out;
}

}  // namespace

TEST_CASE("tokenize_channels: C x N token counts from the paper's arithmetic") {
  ViTConfig cfg = tiny_config();  // width 64, patch 8
  auto model = Model<float>::create(ModelKind::CA_MAE, cfg, 6, 256, 0, 31);

  SUBCASE("6 channels x 256 crop x P8 -> 6144 tokens") {
    Crop crop = random_crop_data(256, 6, 61);
    auto batch = tokenize_channels(*model, crop);
    CHECK(batch.tokens.rows() == 6144);
    CHECK(batch.n_patches == 1024);
    CHECK(batch.channel_of_token.size() == 6144);
    CHECK(batch.channel_of_token[0] == 0);
    CHECK(batch.channel_of_token[1024] == 1);
  }
  SUBCASE("P16 halves the grid twice: 6 x 256 = 1536 tokens") {
    ViTConfig cfg16 = tiny_config();
    cfg16.patch_size = 16;
    auto m16 = Model<float>::create(ModelKind::CA_MAE, cfg16, 6, 256, 0, 32);
    Crop crop = random_crop_data(256, 6, 62);
    auto batch = tokenize_channels(*m16, crop);
    CHECK(batch.tokens.rows() == 1536);
  }
  SUBCASE("C=1 degenerates to single-channel tokenization") {
    Crop crop = random_crop_data(256, 1, 63);
    auto batch = tokenize_channels(*model, crop);
    CHECK(batch.tokens.rows() == 1024);
    CHECK(batch.n_channels == 1);
  }
}

TEST_CASE("sample_channel_masks: independent per-channel masks") {
  SUBCASE("85% ratio masks round(0.85*N) per channel") {
    ChannelMaskSpec masks = sample_channel_masks(6, 256, 0.85, 5);
    for (const auto& m : masks.per_channel) CHECK(m.n_masked() == 218);  // round(217.6)
  }
  SUBCASE("channels get different masks with the same seed") {
    ChannelMaskSpec masks = sample_channel_masks(2, 64, 0.5, 9);
    CHECK(masks.per_channel[0].mask != masks.per_channel[1].mask);
    // determinism across calls
    ChannelMaskSpec again = sample_channel_masks(2, 64, 0.5, 9);
    CHECK(masks.per_channel[0].mask == again.per_channel[0].mask);
  }
  SUBCASE("ratio 0 leaves everything visible") {
    ChannelMaskSpec masks = sample_channel_masks(3, 64, 0.0, 2);
    for (const auto& m : masks.per_channel) CHECK(m.n_masked() == 0);
  }
}

TEST_CASE("ca_forward: per-channel reconstructions and mask independence") {
  auto model = Model<float>::create(ModelKind::CA_MAE, tiny_config(), 6, 64, 0, 37);
  Crop crop = random_crop_data(64, 6, 64);
  ChannelMaskSpec masks = sample_channel_masks(6, model->n_patches(), 0.75, 11);
  CaCache<float> cache;
  auto recs = ca_forward(*model, crop, masks, false, 0, cache);

  SUBCASE("six reconstructions, each N patches of dimension P*P*1") {
    CHECK(recs.size() == 6);
    for (const auto& r : recs) {
      CHECK(r.pred.rows() == 64);
      CHECK(r.pred.cols() == 64);  // 8*8*1
      CHECK(r.channels == 1);
    }
  }
  SUBCASE("masking a token in channel 0 does not hide channel 1's token there") {
    int pos = -1;
    for (int i = 0; i < model->n_patches(); ++i)
      if (masks.per_channel[0].mask[i] && !masks.per_channel[1].mask[i]) {
        pos = i;
        break;
      }
    REQUIRE(pos >= 0);
    const auto& vis1 = cache.visible[1];
    CHECK(std::find(vis1.begin(), vis1.end(), pos) != vis1.end());
    const auto& vis0 = cache.visible[0];
    CHECK(std::find(vis0.begin(), vis0.end(), pos) == vis0.end());
  }
  SUBCASE("training loss is the channel mean of per-channel combined losses") {
    double total = 0.0;
    for (const auto& r : recs) total += loss_combined(r, 0.01);
    total /= recs.size();
    CHECK(total > 0.0);  // definitionally the mean; sanity only
  }
  SUBCASE("channel count above the decoder count is rejected") {
    Crop crop8 = random_crop_data(64, 8, 65);
    ChannelMaskSpec m8 = sample_channel_masks(8, model->n_patches(), 0.5, 12);
    CaCache<float> c8;
    CHECK_THROWS_AS(ca_forward(*model, crop8, m8, false, 0, c8), std::invalid_argument);
  }
}

TEST_CASE("ca_embed: channel-count flexibility on a 6-channel-trained model") {
  auto model = Model<float>::create(ModelKind::CA_MAE, tiny_config(), 6, 64, 0, 41);
  for (int c = 1; c <= 8; ++c) {
    Crop crop = random_crop_data(64, c, 70 + c);
    auto mean_all = ca_embed(*model, crop, EmbedMode::MEAN_ALL);
    CHECK(mean_all.size() == 64);
    auto cls = ca_embed(*model, crop, EmbedMode::CLASS_TOKEN);
    CHECK(cls.size() == 64);
    auto concat = ca_embed(*model, crop, EmbedMode::CONCAT_CHANNEL_MEANS);
    CHECK(concat.size() == static_cast<size_t>(c) * 64);
  }
}

TEST_CASE("ca_embed: channel-permutation invariance and block equivariance") {
  auto model = Model<float>::create(ModelKind::CA_MAE, tiny_config(), 6, 64, 0, 43);
  Crop crop = random_crop_data(64, 6, 80);
  auto mean_base = ca_embed(*model, crop, EmbedMode::MEAN_ALL);
  auto cls_base = ca_embed(*model, crop, EmbedMode::CLASS_TOKEN);
  auto concat_base = ca_embed(*model, crop, EmbedMode::CONCAT_CHANNEL_MEANS);

  for (int shift = 1; shift < 6; ++shift) {
    std::vector<int> perm(6);
    for (int c = 0; c < 6; ++c) perm[c] = (c + shift) % 6;
    Crop permuted = permute_channels(crop, perm);
    auto mean_p = ca_embed(*model, permuted, EmbedMode::MEAN_ALL);
    auto cls_p = ca_embed(*model, permuted, EmbedMode::CLASS_TOKEN);
    auto concat_p = ca_embed(*model, permuted, EmbedMode::CONCAT_CHANNEL_MEANS);
    for (int j = 0; j < 64; ++j) {
      CHECK(std::abs(mean_p[j] - mean_base[j]) < 1e-5);
      CHECK(std::abs(cls_p[j] - cls_base[j]) < 1e-5);
    }
    // block c of the permuted output is block perm[c] of the original
    for (int c = 0; c < 6; ++c)
      for (int j = 0; j < 64; ++j)
        CHECK(std::abs(concat_p[c * 64 + j] - concat_base[perm[c] * 64 + j]) < 1e-5);
  }
}

TEST_CASE("gradient reaches the shared tokenizer from every channel's loss") {
  auto model = Model<double>::create(ModelKind::CA_MAE, tiny_config(), 3, 64, 0, 47);
  Crop crop = random_crop_data(64, 3, 81);
  ChannelMaskSpec masks = sample_channel_masks(3, model->n_patches(), 0.5, 13);
  for (int active = 0; active < 3; ++active) {
    CaCache<double> cache;
    auto recs = ca_forward(*model, crop, masks, false, 0, cache);
    std::vector<Matrix<double>> d(3);
    d[active] = loss_combined_backward(recs[active], 0.01);
    Grads<double> gs;
    gs.init(model->registry);
    ca_backward(*model, cache, d, gs);
    double norm = 0.0;
    for (double g : gs.g[model->encoder.proj_w.pid]) norm += g * g;
    CHECK(norm > 0.0);
  }
}

TEST_CASE("CA checkpoint: per-channel decoder groups and channel_agnostic flag") {
  namespace fs = std::filesystem;
  auto model = Model<float>::create(ModelKind::CA_MAE, tiny_config(), 4, 64, 0, 53);
  fs::path tmp = fs::temp_directory_path() / "phenom_test_ca_ckpt.phnn";
  save_checkpoint(*model, tmp);
  auto loaded = load_checkpoint(tmp);
  CHECK(loaded.model->kind == ModelKind::CA_MAE);
  CHECK(loaded.model->decoders.size() == 4);
  Crop crop = random_crop_data(64, 7, 82);
  auto a = ca_embed(*model, crop, EmbedMode::MEAN_ALL);
  auto b = ca_embed(*loaded.model, crop, EmbedMode::MEAN_ALL);
  for (size_t i = 0; i < a.size(); ++i) CHECK(a[i] == b[i]);
  fs::remove(tmp);
}
