#pragma once

#include <random>

#include "phenom/image.hpp"
#include "phenom/model.hpp"

namespace phenom::testutil {

// Standardized random crop with deterministic contents.
inline Crop random_crop_data(int size, int channels, uint64_t seed) {
  Crop c;
  c.size = size;
  c.channels = channels;
  c.pixels.resize(static_cast<size_t>(size) * size * channels);
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<float> u(0.5f, 4.0f);
  for (auto& v : c.pixels) v = u(rng);
  return self_standardize(c);
}

inline ViTConfig tiny_config() {
  ViTConfig cfg = ViTConfig::preset("tiny-test");
  return cfg;
}

}  // namespace phenom::testutil
