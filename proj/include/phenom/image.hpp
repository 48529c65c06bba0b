#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "phenom/parallel.hpp"

namespace phenom {

// Distinguished perturbation id for untreated control wells.
inline const std::string kNegControl = "NEG_CONTROL";

// One multi-channel well image. Pixels are float32, layout (y, x, c):
// index = (y*width + x)*channels + c.
struct WellImage {
  int height = 0;
  int width = 0;
  int channels = 0;
  std::vector<float> pixels;
  std::vector<std::string> channel_names;
  std::string well_id;
  std::string plate_id;
  std::string experiment_id;
  std::string perturbation_id;

  float at(int y, int x, int c) const {
    return pixels[(static_cast<size_t>(y) * width + x) * channels + c];
  }
  float& at(int y, int x, int c) {
    return pixels[(static_cast<size_t>(y) * width + x) * channels + c];
  }
  void validate() const;  // C >= 1, names distinct and of length C, size match
};

// A square SxSxC crop, same pixel layout as WellImage.
struct Crop {
  int size = 0;
  int channels = 0;
  std::vector<float> pixels;
  std::string well_id;
  int row_offset = 0;
  int col_offset = 0;
  bool standardized = false;

  float at(int y, int x, int c) const {
    return pixels[(static_cast<size_t>(y) * size + x) * channels + c];
  }
  float& at(int y, int x, int c) {
    return pixels[(static_cast<size_t>(y) * size + x) * channels + c];
  }
};

// Channel-wise self-standardization: per channel (x - mean) / max(std, eps)
// with eps = 1e-6 computed over the crop's own pixels. Constant channels map
// to all zeros. Throws if the crop is already standardized.
Crop self_standardize(const Crop& crop);

// Non-overlapping row-major tiling into (H/S)*(W/S) standardized crops.
// Throws if H or W is not divisible by crop_size.
std::vector<Crop> tile_image(const WellImage& image, int crop_size, Exec ex = Exec::serial);

// Uniformly random placement, deterministic given seed, standardized output.
Crop random_crop(const WellImage& image, int size, uint64_t seed);

// Raw (unstandardized) crop at a fixed offset; shared by the ops above.
Crop extract_crop(const WellImage& image, int row_offset, int col_offset, int size);

// Independent 50% horizontal and vertical flips, deterministic given seed.
// The channel axis is untouched.
Crop augment_flips(const Crop& crop, uint64_t seed);

Crop flip_horizontal(const Crop& crop);  // mirrors the x (column) axis
Crop flip_vertical(const Crop& crop);    // mirrors the y (row) axis

}  // namespace phenom
