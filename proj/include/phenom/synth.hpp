#pragma once

#include <cstdint>
#include <vector>

#include "phenom/image.hpp"
#include "phenom/parallel.hpp"
#include "phenom/relationships.hpp"

namespace phenom {

// Configuration of the synthetic HCS plate generator. Each gene carries a
// latent phenotype vector; genes inside a relationship block share a latent
// up to small noise. Wells render Gaussian blobs whose positions, sizes,
// per-channel amplitudes and texture frequencies are smooth functions of the
// latent, plus per-plate / per-experiment additive intensity offset fields
// scaled by batch_effect_scale. Negative controls use the zero latent.
struct SynthConfig {
  int n_genes = 24;
  int n_replicates_per_gene = 6;
  int n_plates = 3;  // plates per experiment
  int n_experiments = 2;
  std::vector<std::vector<int>> relationship_blocks;
  int phenotype_dim = 8;
  double batch_effect_scale = 0.0;
  uint64_t seed = 0;

  // Blob rendering model (fixed, documented defaults).
  int image_size = 128;
  int n_channels = 6;
  int blobs_per_well = 12;
  double blob_sigma_min = 0.03;     // fraction of image size
  double blob_sigma_max = 0.09;     // fraction of image size
  double well_noise = 0.05;         // per-pixel Gaussian noise std
  double block_latent_noise = 0.15; // within-block latent jitter
  double position_jitter = 0.01;    // per-well blob center jitter (fraction)
  int n_controls_per_plate = 8;

  void validate() const;
};

// Deterministic rendering model derived from a SynthConfig: gene latents and
// the fixed random projections mapping latents to blob geometry.
class SynthModel {
 public:
  explicit SynthModel(const SynthConfig& config);

  const SynthConfig& config() const { return cfg_; }
  const std::vector<double>& gene_latent(int gene) const { return gene_latents_[gene]; }

  // Renders one well for the given latent. plate_key / experiment_key select
  // the batch-effect offset fields; well_seed drives per-well noise and
  // jitter. Identical arguments give bit-identical pixels.
  WellImage render_well(const std::vector<double>& latent, uint64_t well_seed,
                        int experiment_index, int plate_index) const;

  RelationshipDB relationship_db() const;

  static std::string gene_id(int gene);

 private:
  SynthConfig cfg_;
  std::vector<std::vector<double>> gene_latents_;
  // projections, one row per blob slot
  std::vector<std::vector<double>> pos_x_, pos_y_, sigma_;
  std::vector<double> pos_x_b_, pos_y_b_, sigma_b_;
  std::vector<std::vector<std::vector<double>>> amp_;  // [blob][channel][dim]
  std::vector<std::vector<double>> amp_b_;             // [blob][channel]
  std::vector<std::vector<double>> freq_;              // [channel][dim]
  std::vector<double> freq_b_, orient_;                // [channel]
};

// Full dataset: every gene gets n_replicates_per_gene wells spread round-robin
// over (experiment, plate) slots; every plate gets n_controls_per_plate
// NEG_CONTROL wells. Returns the images and the within-block relationship DB.
std::pair<std::vector<WellImage>, RelationshipDB> generate_synthetic_dataset(
    const SynthConfig& config, Exec ex = Exec::parallel);

}  // namespace phenom
