#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>
#include <numeric>

#include "phenom/checkpoint.hpp"
#include "phenom/model.hpp"
#include "test_util.hpp"

using namespace phenom;
using testutil::random_crop_data;
using testutil::tiny_config;

TEST_CASE("patchify token counts: 256/P8 -> 1024, 256/P16 -> 256") {
  Crop c = random_crop_data(256, 6, 1);
  auto t8 = patchify<float>(c, 8);
  CHECK(t8.rows() == 1024);
  CHECK(t8.cols() == 8 * 8 * 6);
  auto t16 = patchify<float>(c, 16);
  CHECK(t16.rows() == 256);
  CHECK(t16.cols() == 16 * 16 * 6);
  CHECK_THROWS_AS(patchify<float>(c, 7), std::invalid_argument);
}

TEST_CASE("unpatchify is the exact inverse of patchify") {
  Crop c = random_crop_data(64, 3, 2);
  auto tokens = patchify<float>(c, 8);
  auto restored = unpatchify(tokens, 8, 3, 64);
  REQUIRE(restored.size() == c.pixels.size());
  for (size_t i = 0; i < restored.size(); ++i) CHECK(restored[i] == c.pixels[i]);
}

TEST_CASE("sample_mask: counts, determinism, frequency") {
  SUBCASE("1024 tokens at 75% -> 768 masked, 256 visible") {
    MaskSpec m = sample_mask(1024, 0.75, 3);
    CHECK(m.n_masked() == 768);
    CHECK(m.n_tokens() - m.n_masked() == 256);
  }
  SUBCASE("ratio 0 masks nothing") {
    MaskSpec m = sample_mask(64, 0.0, 4);
    CHECK(m.n_masked() == 0);
  }
  SUBCASE("round-half-to-even tie break") {
    CHECK(sample_mask(2, 0.25, 0).n_masked() == 0);   // 0.5 -> 0
    CHECK(sample_mask(6, 0.25, 0).n_masked() == 2);   // 1.5 -> 2
    CHECK(sample_mask(10, 0.25, 0).n_masked() == 2);  // 2.5 -> 2
    CHECK(sample_mask(14, 0.25, 0).n_masked() == 4);  // 3.5 -> 4
  }
  SUBCASE("deterministic in (n_tokens, ratio, seed)") {
    MaskSpec a = sample_mask(128, 0.5, 77), b = sample_mask(128, 0.5, 77);
    CHECK(a.mask == b.mask);
    MaskSpec c = sample_mask(128, 0.5, 78);
    CHECK(a.mask != c.mask);
  }
  SUBCASE("each token masked about 75% of the time over 10k seeds") {
    const int n = 64, draws = 10000;
    std::vector<int> counts(n, 0);
    for (int s = 0; s < draws; ++s) {
      MaskSpec m = sample_mask(n, 0.75, 9000 + s);
      for (int i = 0; i < n; ++i) counts[i] += m.mask[i];
    }
    for (int i = 0; i < n; ++i) CHECK(std::abs(counts[i] / double(draws) - 0.75) < 0.02);
  }
  SUBCASE("ratio out of range rejected") {
    CHECK_THROWS_AS(sample_mask(16, 1.0, 0), std::invalid_argument);
    CHECK_THROWS_AS(sample_mask(16, -0.1, 0), std::invalid_argument);
  }
}

TEST_CASE("mae_forward: shape contract and determinism in eval mode") {
  auto model = Model<float>::create(ModelKind::MAE, tiny_config(), 3, 64, 0, 11);
  Crop crop = random_crop_data(64, 3, 5);

  SUBCASE("ratio 0: encoder sees all tokens, outputs cover all N positions") {
    MaskSpec none = sample_mask(model->n_patches(), 0.0, 1);
    MaeCache<float> cache;
    auto rec = mae_forward(*model, crop, none, false, 0, cache);
    CHECK(static_cast<int>(cache.visible.size()) == model->n_patches());
    CHECK(rec.pred.rows() == model->n_patches());
    CHECK(rec.pred.cols() == 8 * 8 * 3);
    CHECK(rec.target.rows() == model->n_patches());
  }

  SUBCASE("two eval-mode passes are bitwise identical") {
    MaskSpec m = sample_mask(model->n_patches(), 0.75, 2);
    MaeCache<float> c1, c2;
    auto r1 = mae_forward(*model, crop, m, false, 0, c1);
    auto r2 = mae_forward(*model, crop, m, false, 0, c2);
    for (size_t i = 0; i < r1.pred.size(); ++i) CHECK(r1.pred.data()[i] == r2.pred.data()[i]);
  }

  SUBCASE("mask length mismatch rejected") {
    MaskSpec bad = sample_mask(16, 0.5, 3);
    MaeCache<float> cache;
    CHECK_THROWS_AS(mae_forward(*model, crop, bad, false, 0, cache), std::invalid_argument);
  }
}

TEST_CASE("permuting visible token order changes predictions by < 1e-5") {
  auto model = Model<float>::create(ModelKind::MAE, tiny_config(), 2, 64, 0, 13);
  Crop crop = random_crop_data(64, 2, 6);
  const int n = model->n_patches();
  MaskSpec mask = sample_mask(n, 0.75, 21);

  Matrix<float> tokens = patchify<float>(crop, 8);
  std::vector<int> visible;
  for (int i = 0; i < n; ++i)
    if (!mask.mask[i]) visible.push_back(i);

  auto run = [&](const std::vector<int>& order) {
    Matrix<float> vis(static_cast<int>(order.size()), tokens.cols());
    for (size_t i = 0; i < order.size(); ++i)
      std::copy(tokens.row(order[i]), tokens.row(order[i]) + tokens.cols(),
                vis.row(static_cast<int>(i)));
    EncoderCache<float> ec;
    Matrix<float> enc = encoder_forward(model->encoder, vis, order, model->enc_pos, false, 0, ec);
    DecoderCache<float> dc;
    return decoder_forward(model->decoders[0], enc, order, n, model->dec_pos, dc);
  };

  Matrix<float> base = run(visible);
  std::vector<int> shuffled = visible;
  std::mt19937_64 rng(7);
  std::shuffle(shuffled.begin(), shuffled.end(), rng);
  Matrix<float> perm = run(shuffled);
  for (size_t i = 0; i < base.size(); ++i)
    CHECK(std::abs(base.data()[i] - perm.data()[i]) < 1e-5);
}

TEST_CASE("loss_mae: exact examples and masked-only support") {
  const int n = 4, p = 2, c = 1;
  Reconstruction<float> r;
  r.patch_size = p;
  r.channels = c;
  r.pred = Matrix<float>(n, p * p * c, 0.f);
  r.target = Matrix<float>(n, p * p * c, 0.f);
  r.mask = sample_mask(n, 0.0, 0);

  SUBCASE("perfect reconstruction gives zero") {
    r.mask.mask = {1, 1, 0, 0};
    for (size_t i = 0; i < r.pred.size(); ++i) r.pred.data()[i] = r.target.data()[i] = 0.7f;
    CHECK(loss_mae(r) == 0.f);
  }
  SUBCASE("single masked patch, target ones, prediction zeros -> 1.0") {
    r.mask.mask = {0, 1, 0, 0};
    for (int j = 0; j < p * p; ++j) r.target(1, j) = 1.f;
    CHECK(loss_mae(r) == doctest::Approx(1.0));
  }
  SUBCASE("perturbing a visible patch's target changes nothing, exactly") {
    r.mask.mask = {1, 0, 1, 0};
    std::mt19937_64 rng(3);
    std::normal_distribution<float> g(0.f, 1.f);
    for (size_t i = 0; i < r.pred.size(); ++i) {
      r.pred.data()[i] = g(rng);
      r.target.data()[i] = g(rng);
    }
    float before = loss_mae(r);
    r.target(1, 0) += 100.f;  // visible patch
    r.target(3, 2) += 100.f;  // visible patch
    CHECK(loss_mae(r) == before);
  }
  SUBCASE("zero masked patches is an error") {
    r.mask.mask = {0, 0, 0, 0};
    CHECK_THROWS_AS(loss_mae(r), std::invalid_argument);
    CHECK_THROWS_AS(loss_mae_backward(r), std::invalid_argument);
  }
}

TEST_CASE("extract_embedding: paper widths, duplicates identical, flips differ") {
  SUBCASE("paper variants expose 384/768/1024-dim embeddings") {
    CHECK(ViTConfig::preset("S").width == 384);
    CHECK(ViTConfig::preset("B").width == 768);
    CHECK(ViTConfig::preset("L").width == 1024);
  }
  SUBCASE("embedding length equals encoder width (384-wide single block)") {
    ViTConfig cfg = tiny_config();
    cfg.width = 384;
    cfg.heads = 6;
    cfg.depth = 1;
    cfg.decoder_depth = 1;
    auto model = Model<float>::create(ModelKind::MAE, cfg, 2, 64, 0, 15);
    Crop crop = random_crop_data(64, 2, 8);
    auto emb = extract_embedding(*model, crop);
    CHECK(emb.size() == 384);
  }
  SUBCASE("identical crops produce identical embeddings; flipped crops differ") {
    auto model = Model<float>::create(ModelKind::MAE, tiny_config(), 2, 64, 0, 16);
    Crop crop = random_crop_data(64, 2, 9);
    auto a = extract_embedding(*model, crop);
    auto b = extract_embedding(*model, crop);
    CHECK(a == b);
    auto flipped = extract_embedding(*model, flip_horizontal(crop));
    CHECK(a != flipped);
  }
  SUBCASE("channel mismatch rejected") {
    auto model = Model<float>::create(ModelKind::MAE, tiny_config(), 2, 64, 0, 17);
    Crop crop = random_crop_data(64, 3, 10);
    CHECK_THROWS_AS(extract_embedding(*model, crop), std::invalid_argument);
  }
}

TEST_CASE("wsl_forward: logits shape, softmax normalization, label validation") {
  ViTConfig cfg = tiny_config();
  auto model = Model<float>::create(ModelKind::WSL, cfg, 2, 64, 1108, 19);
  Crop crop = random_crop_data(64, 2, 12);
  WslCache<float> cache;
  auto out = wsl_forward(*model, crop, false, 0, cache);
  CHECK(out.logits.size() == 1108);  // RxRx1-scale label space
  CHECK(out.class_embedding.size() == 64);

  double loss = wsl_cross_entropy(*model, cache, out.logits, 42);
  CHECK(loss > 0.0);
  double sum = 0.0;
  for (float p : cache.probs) sum += p;
  CHECK(std::abs(sum - 1.0) < 1e-6);

  CHECK_THROWS_AS(wsl_cross_entropy(*model, cache, out.logits, 1108), std::invalid_argument);
  CHECK_THROWS_AS(wsl_cross_entropy(*model, cache, out.logits, -1), std::invalid_argument);
}

TEST_CASE("checkpoint round-trip reproduces forward outputs bitwise") {
  namespace fs = std::filesystem;
  auto model = Model<float>::create(ModelKind::MAE, tiny_config(), 3, 64, 0, 23);
  Crop crop = random_crop_data(64, 3, 14);
  auto before = extract_embedding(*model, crop);

  fs::path tmp = fs::temp_directory_path() / "phenom_test_ckpt.phnn";
  save_checkpoint(*model, tmp);
  auto loaded = load_checkpoint(tmp);
  auto after = extract_embedding(*loaded.model, crop);
  REQUIRE(before.size() == after.size());
  for (size_t i = 0; i < before.size(); ++i) CHECK(before[i] == after[i]);
  fs::remove(tmp);
}

TEST_CASE("stochastic depth: deterministic given seed, off in eval mode") {
  ViTConfig cfg = tiny_config();
  cfg.stochastic_depth_rate = 0.5;
  auto model = Model<float>::create(ModelKind::MAE, cfg, 2, 64, 0, 29);
  Crop crop = random_crop_data(64, 2, 15);
  MaskSpec mask = sample_mask(model->n_patches(), 0.5, 3);

  MaeCache<float> c1, c2, c3;
  auto r1 = mae_forward(*model, crop, mask, true, 1234, c1);
  auto r2 = mae_forward(*model, crop, mask, true, 1234, c2);
  for (size_t i = 0; i < r1.pred.size(); ++i) CHECK(r1.pred.data()[i] == r2.pred.data()[i]);

  // different seeds eventually give different branch decisions
  bool any_diff = false;
  for (uint64_t s = 0; s < 8 && !any_diff; ++s) {
    MaeCache<float> cc;
    auto rr = mae_forward(*model, crop, mask, true, 5000 + s, cc);
    for (size_t i = 0; i < r1.pred.size(); ++i)
      if (rr.pred.data()[i] != r1.pred.data()[i]) {
        any_diff = true;
        break;
      }
  }
  CHECK(any_diff);
}
