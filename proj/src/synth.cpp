#include "phenom/synth.hpp"

#include <cmath>
#include <random>
#include <set>
#include <stdexcept>

#include "phenom/rng.hpp"

namespace phenom {

namespace {

constexpr double kTwoPi = 2.0 * 3.14159265358979323846;

double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }
double softplus(double x) { return x > 30.0 ? x : std::log1p(std::exp(x)); }

std::vector<double> draw_vec(std::mt19937_64& rng, int n, double scale) {
  std::normal_distribution<double> g(0.0, scale);
  std::vector<double> v(n);
  for (auto& x : v) x = g(rng);
  return v;
}

}  // namespace

void SynthConfig::validate() const {
  if (n_genes <= 0 || n_replicates_per_gene <= 0 || n_plates <= 0 || n_experiments <= 0)
    throw std::invalid_argument("SynthConfig: counts must be positive");
  if (phenotype_dim <= 0) throw std::invalid_argument("SynthConfig: phenotype_dim must be positive");
  if (batch_effect_scale < 0) throw std::invalid_argument("SynthConfig: batch_effect_scale < 0");
  if (image_size <= 0 || n_channels <= 0 || n_channels > 64 || blobs_per_well <= 0)
    throw std::invalid_argument("SynthConfig: invalid rendering parameters");
  std::set<int> seen;
  for (const auto& block : relationship_blocks)
    for (int g : block) {
      if (g < 0 || g >= n_genes)
        throw std::invalid_argument("SynthConfig: block gene index out of range");
      if (!seen.insert(g).second)
        throw std::invalid_argument("SynthConfig: gene appears in more than one block");
    }
}

std::string SynthModel::gene_id(int gene) {
  char buf[16];
  std::snprintf(buf, sizeof(buf), "g%04d", gene);
  return buf;
}

SynthModel::SynthModel(const SynthConfig& config) : cfg_(config) {
  cfg_.validate();
  const int d = cfg_.phenotype_dim;
  const double proj_scale = 1.0 / std::sqrt(static_cast<double>(d));

  // Block latents then per-gene latents, in fixed order.
  auto rng_lat = make_rng(mix_seed(cfg_.seed, 0x4c41544eULL));
  std::vector<int> gene_block(cfg_.n_genes, -1);
  std::vector<std::vector<double>> block_latents;
  for (size_t b = 0; b < cfg_.relationship_blocks.size(); ++b) {
    block_latents.push_back(draw_vec(rng_lat, d, 1.0));
    for (int g : cfg_.relationship_blocks[b]) gene_block[g] = static_cast<int>(b);
  }
  gene_latents_.resize(cfg_.n_genes);
  for (int g = 0; g < cfg_.n_genes; ++g) {
    if (gene_block[g] >= 0) {
      gene_latents_[g] = block_latents[gene_block[g]];
      auto noise = draw_vec(rng_lat, d, cfg_.block_latent_noise);
      for (int i = 0; i < d; ++i) gene_latents_[g][i] += noise[i];
    } else {
      gene_latents_[g] = draw_vec(rng_lat, d, 1.0);
    }
  }

  auto rng_proj = make_rng(mix_seed(cfg_.seed, 0x50524f4aULL));
  const int kb = cfg_.blobs_per_well;
  const int c = cfg_.n_channels;
  pos_x_.resize(kb);
  pos_y_.resize(kb);
  sigma_.resize(kb);
  amp_.resize(kb);
  amp_b_.resize(kb);
  pos_x_b_ = draw_vec(rng_proj, kb, 1.0);
  pos_y_b_ = draw_vec(rng_proj, kb, 1.0);
  sigma_b_ = draw_vec(rng_proj, kb, 1.0);
  for (int k = 0; k < kb; ++k) {
    pos_x_[k] = draw_vec(rng_proj, d, proj_scale);
    pos_y_[k] = draw_vec(rng_proj, d, proj_scale);
    sigma_[k] = draw_vec(rng_proj, d, proj_scale);
    amp_[k].resize(c);
    amp_b_[k] = draw_vec(rng_proj, c, 0.5);
    for (int ch = 0; ch < c; ++ch) amp_[k][ch] = draw_vec(rng_proj, d, proj_scale);
  }
  freq_.resize(c);
  freq_b_ = draw_vec(rng_proj, c, 1.0);
  orient_.resize(c);
  std::uniform_real_distribution<double> u(0.0, kTwoPi);
  for (int ch = 0; ch < c; ++ch) {
    freq_[ch] = draw_vec(rng_proj, d, proj_scale);
    orient_[ch] = u(rng_proj);
  }
}

WellImage SynthModel::render_well(const std::vector<double>& latent, uint64_t well_seed,
                                  int experiment_index, int plate_index) const {
  const int s = cfg_.image_size;
  const int c = cfg_.n_channels;
  const int kb = cfg_.blobs_per_well;
  const int d = cfg_.phenotype_dim;

  auto dot = [&](const std::vector<double>& w) {
    double acc = 0.0;
    for (int i = 0; i < d; ++i) acc += w[i] * latent[i];
    return acc;
  };

  // Blob geometry from the latent.
  std::vector<double> cx(kb), cy(kb), sg(kb);
  std::vector<std::vector<double>> amp(kb, std::vector<double>(c));
  auto rng_well = make_rng(mix_seed(cfg_.seed, 0x57454c4cULL, well_seed));
  std::normal_distribution<double> jitter(0.0, cfg_.position_jitter);
  for (int k = 0; k < kb; ++k) {
    cx[k] = s * (0.5 + 0.42 * std::tanh(dot(pos_x_[k]) + pos_x_b_[k]) + jitter(rng_well));
    cy[k] = s * (0.5 + 0.42 * std::tanh(dot(pos_y_[k]) + pos_y_b_[k]) + jitter(rng_well));
    sg[k] = s * (cfg_.blob_sigma_min +
                 (cfg_.blob_sigma_max - cfg_.blob_sigma_min) * sigmoid(dot(sigma_[k]) + sigma_b_[k]));
    for (int ch = 0; ch < c; ++ch) amp[k][ch] = softplus(dot(amp_[k][ch]) + amp_b_[k][ch]);
  }
  std::vector<double> freq(c), coso(c), sino(c);
  for (int ch = 0; ch < c; ++ch) {
    freq[ch] = 1.0 + 3.0 * sigmoid(dot(freq_[ch]) + freq_b_[ch]);
    coso[ch] = std::cos(orient_[ch]);
    sino[ch] = std::sin(orient_[ch]);
  }

  // Additive batch-effect offset fields. Constant per-channel shifts would be
  // erased by self-standardization, so the fields vary across the image:
  // linear gradients plus a sinusoidal ripple, per plate and per experiment.
  struct Field {
    double g1, g2, g3, phase;
  };
  auto draw_fields = [&](uint64_t key, int index) {
    std::vector<Field> f(c);
    auto rng = make_rng(mix_seed(cfg_.seed, key, static_cast<uint64_t>(index)));
    std::normal_distribution<double> g(0.0, 1.0);
    std::uniform_real_distribution<double> ph(0.0, kTwoPi);
    for (int ch = 0; ch < c; ++ch) f[ch] = {g(rng), g(rng), g(rng), ph(rng)};
    return f;
  };
  // plate fields are keyed by the global plate slot
  auto plate_fields = draw_fields(0x504c4154ULL, experiment_index * cfg_.n_plates + plate_index);
  auto exp_fields = draw_fields(0x45585054ULL, experiment_index);

  WellImage img;
  img.height = s;
  img.width = s;
  img.channels = c;
  img.pixels.assign(static_cast<size_t>(s) * s * c, 0.0f);
  img.channel_names.resize(c);
  for (int ch = 0; ch < c; ++ch) img.channel_names[ch] = "ch" + std::to_string(ch);

  std::normal_distribution<double> pixel_noise(0.0, cfg_.well_noise);
  const double bes = cfg_.batch_effect_scale;
  for (int y = 0; y < s; ++y) {
    for (int x = 0; x < s; ++x) {
      double blob[64];  // per-channel accumulator; channels capped below
      for (int ch = 0; ch < c; ++ch) blob[ch] = 0.0;
      for (int k = 0; k < kb; ++k) {
        double dx = x - cx[k], dy = y - cy[k];
        double r2 = (dx * dx + dy * dy) / (2.0 * sg[k] * sg[k]);
        if (r2 > 12.0) continue;
        double e = std::exp(-r2);
        for (int ch = 0; ch < c; ++ch) blob[ch] += amp[k][ch] * e;
      }
      for (int ch = 0; ch < c; ++ch) {
        double texture = 1.0 + 0.3 * std::sin(kTwoPi * freq[ch] * (x * coso[ch] + y * sino[ch]) / s);
        double xf = static_cast<double>(x) / s - 0.5;
        double yf = static_cast<double>(y) / s - 0.5;
        const Field& pf = plate_fields[ch];
        const Field& ef = exp_fields[ch];
        double offset = bes * (pf.g1 * xf + pf.g2 * yf +
                               0.5 * pf.g3 * std::sin(kTwoPi * (x + y) / s + pf.phase)) +
                        0.5 * bes * (ef.g1 * xf + ef.g2 * yf +
                                     0.5 * ef.g3 * std::sin(kTwoPi * (x + y) / s + ef.phase));
        double v = 0.2 + blob[ch] * texture + offset + pixel_noise(rng_well);
        img.at(y, x, ch) = static_cast<float>(std::max(0.0, v));
      }
    }
  }
  return img;
}

RelationshipDB SynthModel::relationship_db() const {
  RelationshipDB db;
  db.name = "synthetic-blocks";
  for (const auto& block : cfg_.relationship_blocks)
    for (size_t i = 0; i < block.size(); ++i)
      for (size_t j = i + 1; j < block.size(); ++j)
        db.add(gene_id(block[i]), gene_id(block[j]));
  return db;
}

std::pair<std::vector<WellImage>, RelationshipDB> generate_synthetic_dataset(
    const SynthConfig& config, Exec ex) {
  SynthModel model(config);
  const SynthConfig& cfg = model.config();
  const int total_plates = cfg.n_experiments * cfg.n_plates;
  const std::vector<double> zero_latent(cfg.phenotype_dim, 0.0);

  struct WellPlan {
    int gene;  // -1 for NEG_CONTROL
    int experiment, plate;
    std::string well_id;
  };
  std::vector<WellPlan> plan;
  auto slot_name = [&](int e, int p, int w) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "exp%02d_plate%02d_w%03d", e, p, w);
    return std::string(buf);
  };
  std::vector<int> next_well_in_plate(total_plates, 0);
  for (int e = 0; e < cfg.n_experiments; ++e)
    for (int p = 0; p < cfg.n_plates; ++p)
      for (int w = 0; w < cfg.n_controls_per_plate; ++w) {
        int slot = e * cfg.n_plates + p;
        plan.push_back({-1, e, p, slot_name(e, p, next_well_in_plate[slot]++)});
      }
  for (int g = 0; g < cfg.n_genes; ++g)
    for (int r = 0; r < cfg.n_replicates_per_gene; ++r) {
      int slot = (g * cfg.n_replicates_per_gene + r) % total_plates;
      int e = slot / cfg.n_plates, p = slot % cfg.n_plates;
      plan.push_back({g, e, p, slot_name(e, p, next_well_in_plate[slot]++)});
    }

  std::vector<WellImage> wells(plan.size());
#pragma omp parallel for schedule(dynamic) if (ex == Exec::parallel)
  for (int i = 0; i < static_cast<int>(plan.size()); ++i) {
    const auto& wp = plan[i];
    const auto& latent = wp.gene >= 0 ? model.gene_latent(wp.gene) : zero_latent;
    WellImage img = model.render_well(latent, static_cast<uint64_t>(i), wp.experiment, wp.plate);
    img.well_id = wp.well_id;
    char plate_buf[32], exp_buf[32];
    std::snprintf(exp_buf, sizeof(exp_buf), "exp%02d", wp.experiment);
    std::snprintf(plate_buf, sizeof(plate_buf), "exp%02d_plate%02d", wp.experiment, wp.plate);
    img.experiment_id = exp_buf;
    img.plate_id = plate_buf;
    img.perturbation_id = wp.gene >= 0 ? SynthModel::gene_id(wp.gene) : kNegControl;
    wells[i] = std::move(img);
  }
  return {std::move(wells), model.relationship_db()};
}

}  // namespace phenom
