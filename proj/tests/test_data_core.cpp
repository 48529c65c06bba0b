#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <random>

#include "phenom/image.hpp"
#include "phenom/synth.hpp"

using namespace phenom;

namespace {

Crop make_crop(int size, int channels, float fill = 0.f) {
  Crop c;
  c.size = size;
  c.channels = channels;
  c.pixels.assign(static_cast<size_t>(size) * size * channels, fill);
  return c;
}

WellImage make_image(int h, int w, int channels, uint64_t seed) {
  WellImage img;
  img.height = h;
  img.width = w;
  img.channels = channels;
  img.pixels.resize(static_cast<size_t>(h) * w * channels);
  img.channel_names.resize(channels);
  for (int c = 0; c < channels; ++c) img.channel_names[c] = "ch" + std::to_string(c);
  img.well_id = "w0";
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<float> u(0.f, 10.f);
  for (auto& p : img.pixels) p = u(rng);
  return img;
}

double channel_mean(const Crop& c, int ch) {
  double m = 0.0;
  for (int y = 0; y < c.size; ++y)
    for (int x = 0; x < c.size; ++x) m += c.at(y, x, ch);
  return m / (static_cast<double>(c.size) * c.size);
}

double channel_std(const Crop& c, int ch) {
  double m = channel_mean(c, ch);
  double v = 0.0;
  for (int y = 0; y < c.size; ++y)
    for (int x = 0; x < c.size; ++x) {
      double d = c.at(y, x, ch) - m;
      v += d * d;
    }
  return std::sqrt(v / (static_cast<double>(c.size) * c.size));
}

}  // namespace

TEST_CASE("self_standardize: constant channel maps to zeros") {
  Crop c = make_crop(16, 2, 5.0f);
  Crop s = self_standardize(c);
  CHECK(s.standardized);
  for (float v : s.pixels) CHECK(v == 0.0f);
}

TEST_CASE("self_standardize: two-point channel {0,2} becomes {-1,+1}") {
  Crop c = make_crop(8, 1);
  for (int y = 0; y < 8; ++y)
    for (int x = 0; x < 8; ++x) c.at(y, x, 0) = ((y * 8 + x) % 2 == 0) ? 0.f : 2.f;
  Crop s = self_standardize(c);
  for (int y = 0; y < 8; ++y)
    for (int x = 0; x < 8; ++x) {
      float expect = ((y * 8 + x) % 2 == 0) ? -1.f : 1.f;
      CHECK(s.at(y, x, 0) == doctest::Approx(expect).epsilon(1e-5));
    }
}

TEST_CASE("self_standardize: random channel ends with near-zero mean and unit std") {
  Crop c = make_crop(64, 3);
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<float> u(2.f, 9.f);
  for (auto& v : c.pixels) v = u(rng);
  Crop s = self_standardize(c);
  for (int ch = 0; ch < 3; ++ch) {
    CHECK(std::abs(channel_mean(s, ch)) < 1e-5);
    CHECK(std::abs(channel_std(s, ch) - 1.0) < 1e-3);
  }
}

TEST_CASE("self_standardize: rejects already-standardized input, re-run is stable") {
  Crop c = make_crop(16, 1);
  std::mt19937_64 rng(13);
  std::normal_distribution<float> g(4.f, 2.f);
  for (auto& v : c.pixels) v = g(rng);
  Crop s = self_standardize(c);
  CHECK_THROWS_AS(self_standardize(s), std::invalid_argument);
  // idempotence up to the eps guard: clearing the flag and re-running is a no-op
  Crop s2 = s;
  s2.standardized = false;
  Crop s3 = self_standardize(s2);
  for (size_t i = 0; i < s.pixels.size(); ++i)
    CHECK(s3.pixels[i] == doctest::Approx(s.pixels[i]).epsilon(2e-3));
}

TEST_CASE("tile_image: 2048x2048x6 yields 64 standardized crops") {
  WellImage img = make_image(2048, 2048, 6, 21);
  auto crops = tile_image(img, 256, Exec::parallel);
  CHECK(crops.size() == 64);
  CHECK(crops[0].size == 256);
  CHECK(crops[0].standardized);
  // row-major order: crop k covers offsets (256*(k/8), 256*(k%8))
  CHECK(crops[9].row_offset == 256);
  CHECK(crops[9].col_offset == 256);
}

TEST_CASE("tile_image: identity tiling for matching sizes") {
  WellImage img = make_image(256, 256, 2, 22);
  auto crops = tile_image(img, 256);
  REQUIRE(crops.size() == 1);
  Crop direct = self_standardize(extract_crop(img, 0, 0, 256));
  for (size_t i = 0; i < direct.pixels.size(); ++i)
    CHECK(crops[0].pixels[i] == direct.pixels[i]);
}

TEST_CASE("tile_image: 512 -> 4 raw tiles reassemble the original exactly") {
  WellImage img = make_image(512, 512, 3, 23);
  // oracle on the raw (pre-standardization) tiles
  WellImage restored = img;
  std::fill(restored.pixels.begin(), restored.pixels.end(), -1.f);
  for (int r = 0; r < 2; ++r)
    for (int cc = 0; cc < 2; ++cc) {
      Crop t = extract_crop(img, r * 256, cc * 256, 256);
      for (int y = 0; y < 256; ++y)
        for (int x = 0; x < 256; ++x)
          for (int ch = 0; ch < 3; ++ch)
            restored.at(r * 256 + y, cc * 256 + x, ch) = t.at(y, x, ch);
    }
  for (size_t i = 0; i < img.pixels.size(); ++i) CHECK(restored.pixels[i] == img.pixels[i]);
  // and the standardized tiles match standardizing each raw tile
  auto crops = tile_image(img, 256);
  CHECK(crops.size() == 4);
  for (int k = 0; k < 4; ++k) {
    Crop expect = self_standardize(extract_crop(img, (k / 2) * 256, (k % 2) * 256, 256));
    for (size_t i = 0; i < expect.pixels.size(); ++i)
      CHECK(crops[k].pixels[i] == expect.pixels[i]);
  }
}

TEST_CASE("tile_image: rejects non-divisible dimensions") {
  WellImage img = make_image(300, 300, 1, 24);
  CHECK_THROWS_AS(tile_image(img, 256), std::invalid_argument);
}

TEST_CASE("random_crop: full-size crop pins offsets to (0,0), same seed repeats") {
  WellImage img = make_image(128, 128, 2, 25);
  Crop a = random_crop(img, 128, 77);
  CHECK(a.row_offset == 0);
  CHECK(a.col_offset == 0);
  Crop b = random_crop(img, 64, 123), c = random_crop(img, 64, 123);
  CHECK(b.row_offset == c.row_offset);
  CHECK(b.col_offset == c.col_offset);
  for (size_t i = 0; i < b.pixels.size(); ++i) CHECK(b.pixels[i] == c.pixels[i]);
  CHECK_THROWS_AS(random_crop(img, 256, 1), std::invalid_argument);
}

TEST_CASE("random_crop: offsets are uniform (binned within 3 sigma over 10k draws)") {
  WellImage img = make_image(512, 512, 1, 26);
  const int draws = 10000, bins = 8;
  std::vector<int> row_hist(bins, 0), col_hist(bins, 0);
  const int range = 512 - 256 + 1;  // 257 possible offsets
  for (int i = 0; i < draws; ++i) {
    Crop c = random_crop(img, 256, 1000 + i);
    row_hist[c.row_offset * bins / range]++;
    col_hist[c.col_offset * bins / range]++;
  }
  // bins are near-equal width; compare against each bin's exact multinomial expectation
  for (int b = 0; b < bins; ++b) {
    int lo = (b * range + bins - 1) / bins;  // first offset mapping to bin b
    int hi = ((b + 1) * range - 1) / bins;   // last offset mapping to bin b
    double p = static_cast<double>(hi - lo + 1) / range;
    double expect = draws * p;
    double sigma = std::sqrt(draws * p * (1 - p));
    CHECK(std::abs(row_hist[b] - expect) <= 3 * sigma);
    CHECK(std::abs(col_hist[b] - expect) <= 3 * sigma);
  }
}

TEST_CASE("augment_flips: flips are involutions and leave the channel axis alone") {
  Crop c = make_crop(8, 2);
  std::mt19937_64 rng(31);
  std::normal_distribution<float> g(0.f, 1.f);
  for (auto& v : c.pixels) v = g(rng);
  Crop hh = flip_horizontal(flip_horizontal(c));
  Crop vv = flip_vertical(flip_vertical(c));
  for (size_t i = 0; i < c.pixels.size(); ++i) {
    CHECK(hh.pixels[i] == c.pixels[i]);
    CHECK(vv.pixels[i] == c.pixels[i]);
  }
  // asymmetric marker: pixel at (0,0) lands at (S-1,0) under a vertical flip
  Crop m = make_crop(8, 1, 0.f);
  m.at(0, 0, 0) = 1.f;
  Crop fv = flip_vertical(m);
  CHECK(fv.at(7, 0, 0) == 1.f);
  CHECK(fv.at(0, 0, 0) == 0.f);
  Crop fh = flip_horizontal(m);
  CHECK(fh.at(0, 7, 0) == 1.f);
}

TEST_CASE("augment_flips: all four outcomes near 25% over 10k seeds") {
  Crop c = make_crop(4, 1);
  for (int i = 0; i < 16; ++i) c.pixels[i] = static_cast<float>(i);
  Crop fh = flip_horizontal(c), fv = flip_vertical(c), fhv = flip_vertical(fh);
  int counts[4] = {0, 0, 0, 0};
  const int n = 10000;
  for (int s = 0; s < n; ++s) {
    Crop out = augment_flips(c, 555 + s);
    if (std::equal(out.pixels.begin(), out.pixels.end(), c.pixels.begin()))
      counts[0]++;
    else if (std::equal(out.pixels.begin(), out.pixels.end(), fh.pixels.begin()))
      counts[1]++;
    else if (std::equal(out.pixels.begin(), out.pixels.end(), fv.pixels.begin()))
      counts[2]++;
    else if (std::equal(out.pixels.begin(), out.pixels.end(), fhv.pixels.begin()))
      counts[3]++;
  }
  CHECK(counts[0] + counts[1] + counts[2] + counts[3] == n);
  for (int k = 0; k < 4; ++k) CHECK(std::abs(counts[k] / double(n) - 0.25) < 0.02);
}

TEST_CASE("augment_flips is deterministic given the seed") {
  Crop c = make_crop(8, 3);
  std::mt19937_64 rng(41);
  std::normal_distribution<float> g(0.f, 1.f);
  for (auto& v : c.pixels) v = g(rng);
  Crop a = augment_flips(c, 99), b = augment_flips(c, 99);
  for (size_t i = 0; i < a.pixels.size(); ++i) CHECK(a.pixels[i] == b.pixels[i]);
}

TEST_CASE("WellImage validation catches bad channel metadata") {
  WellImage img = make_image(32, 32, 2, 51);
  CHECK_NOTHROW(img.validate());
  img.channel_names[1] = img.channel_names[0];
  CHECK_THROWS_AS(img.validate(), std::invalid_argument);
  img.channel_names.pop_back();
  CHECK_THROWS_AS(img.validate(), std::invalid_argument);
}

// --- synthetic generator ---------------------------------------------------

TEST_CASE("generate_synthetic_dataset: deterministic rendering, block pair DB") {
  SynthConfig cfg;
  cfg.n_genes = 4;
  cfg.n_replicates_per_gene = 2;
  cfg.n_plates = 2;
  cfg.n_experiments = 1;
  cfg.image_size = 64;
  cfg.n_channels = 3;
  cfg.relationship_blocks = {{0, 1, 2}};
  cfg.seed = 5;

  SUBCASE("same latent and well seed render pixel-identical images") {
    cfg.batch_effect_scale = 0.0;
    SynthModel model(cfg);
    WellImage a = model.render_well(model.gene_latent(1), 42, 0, 0);
    WellImage b = model.render_well(model.gene_latent(1), 42, 0, 0);
    for (size_t i = 0; i < a.pixels.size(); ++i) CHECK(a.pixels[i] == b.pixels[i]);
    WellImage c = model.render_well(model.gene_latent(1), 43, 0, 0);
    bool differs = false;
    for (size_t i = 0; i < a.pixels.size(); ++i)
      if (a.pixels[i] != c.pixels[i]) differs = true;
    CHECK(differs);
  }

  SUBCASE("relationship DB is exactly the within-block pairs") {
    SynthModel model(cfg);
    RelationshipDB db = model.relationship_db();
    CHECK(db.pairs.size() == 3);
    CHECK(db.contains("g0000", "g0001"));
    CHECK(db.contains("g0000", "g0002"));
    CHECK(db.contains("g0001", "g0002"));
    CHECK(!db.contains("g0000", "g0003"));
  }

  SUBCASE("empty block list gives empty DB") {
    cfg.relationship_blocks.clear();
    SynthModel model(cfg);
    CHECK(model.relationship_db().pairs.empty());
  }

  SUBCASE("full dataset is deterministic and well-formed") {
    auto [wells_a, db_a] = generate_synthetic_dataset(cfg, Exec::parallel);
    auto [wells_b, db_b] = generate_synthetic_dataset(cfg, Exec::serial);
    REQUIRE(wells_a.size() == wells_b.size());
    // 2 plates x 8 controls + 4 genes x 2 replicates
    CHECK(wells_a.size() == 2 * 8 + 8);
    for (size_t w = 0; w < wells_a.size(); ++w) {
      CHECK(wells_a[w].well_id == wells_b[w].well_id);
      for (size_t i = 0; i < wells_a[w].pixels.size(); ++i)
        CHECK(wells_a[w].pixels[i] == wells_b[w].pixels[i]);
      CHECK_NOTHROW(wells_a[w].validate());
      for (float v : wells_a[w].pixels) CHECK(v >= 0.f);  // non-negative intensities
    }
  }
}

TEST_CASE("generate_synthetic_dataset: invalid configs are rejected") {
  SynthConfig cfg;
  cfg.n_genes = 0;
  CHECK_THROWS_AS(generate_synthetic_dataset(cfg), std::invalid_argument);
  cfg = SynthConfig{};
  cfg.relationship_blocks = {{0, 1}, {1, 2}};  // gene 1 in two blocks
  CHECK_THROWS_AS(generate_synthetic_dataset(cfg), std::invalid_argument);
  cfg = SynthConfig{};
  cfg.relationship_blocks = {{0, 99}};
  CHECK_THROWS_AS(generate_synthetic_dataset(cfg), std::invalid_argument);
  cfg = SynthConfig{};
  cfg.batch_effect_scale = -1.0;
  CHECK_THROWS_AS(generate_synthetic_dataset(cfg), std::invalid_argument);
}

TEST_CASE("same-block genes correlate more in pixel space than cross-block genes") {
  SynthConfig cfg;
  cfg.n_genes = 24;
  cfg.n_replicates_per_gene = 3;
  cfg.n_plates = 1;
  cfg.n_experiments = 1;
  cfg.image_size = 64;
  cfg.n_channels = 3;
  cfg.blobs_per_well = 8;
  cfg.batch_effect_scale = 0.0;
  cfg.seed = 17;
  for (int b = 0; b < 12; ++b) cfg.relationship_blocks.push_back({2 * b, 2 * b + 1});

  SynthModel model(cfg);
  auto render = [&](int gene, int rep) {
    return model.render_well(model.gene_latent(gene), 1000 + gene * 10 + rep, 0, 0);
  };
  auto correlation = [](const WellImage& a, const WellImage& b) {
    double ma = 0, mb = 0;
    const size_t n = a.pixels.size();
    for (size_t i = 0; i < n; ++i) {
      ma += a.pixels[i];
      mb += b.pixels[i];
    }
    ma /= n;
    mb /= n;
    double num = 0, va = 0, vb = 0;
    for (size_t i = 0; i < n; ++i) {
      double da = a.pixels[i] - ma, db = b.pixels[i] - mb;
      num += da * db;
      va += da * da;
      vb += db * db;
    }
    return num / std::sqrt(va * vb);
  };

  std::vector<WellImage> imgs[24];
  for (int gene = 0; gene < 24; ++gene)
    for (int rep = 0; rep < 3; ++rep) imgs[gene].push_back(render(gene, rep));

  double same_sum = 0;
  int same_n = 0;
  for (int b = 0; b < 12; ++b)
    for (int r1 = 0; r1 < 3; ++r1)
      for (int r2 = 0; r2 < 3; ++r2) {
        same_sum += correlation(imgs[2 * b][r1], imgs[2 * b + 1][r2]);
        ++same_n;
      }
  CHECK(same_n == 108);  // >= 100 Monte Carlo pairs

  std::mt19937_64 rng(3);
  double cross_sum = 0;
  int cross_n = 0;
  while (cross_n < 108) {
    int g1 = static_cast<int>(rng() % 24), g2 = static_cast<int>(rng() % 24);
    if (g1 / 2 == g2 / 2) continue;  // same block
    cross_sum += correlation(imgs[g1][rng() % 3], imgs[g2][rng() % 3]);
    ++cross_n;
  }
  CHECK(same_sum / same_n > cross_sum / cross_n);
}
