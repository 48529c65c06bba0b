#pragma once

#include <stdexcept>

#include "phenom/image.hpp"
#include "phenom/matrix.hpp"

namespace phenom {

// Row-major patch grid: token p = (py, px) with p = py*(S/P) + px; within a
// token the pixel (dy, dx, c) sits at ((dy*P) + dx)*C + c. unpatchify is the
// exact inverse.

inline int patch_grid_side(int crop_size, int patch_size) {
  if (patch_size <= 0 || crop_size % patch_size != 0)
    throw std::invalid_argument("patchify: crop size not divisible by patch size");
  return crop_size / patch_size;
}

template <typename T>
Matrix<T> patchify(const Crop& crop, int patch_size) {
  const int g = patch_grid_side(crop.size, patch_size);
  const int p = patch_size, c = crop.channels;
  Matrix<T> tokens(g * g, p * p * c);
  for (int py = 0; py < g; ++py)
    for (int px = 0; px < g; ++px) {
      T* tok = tokens.row(py * g + px);
      for (int dy = 0; dy < p; ++dy)
        for (int dx = 0; dx < p; ++dx)
          for (int ch = 0; ch < c; ++ch)
            tok[(dy * p + dx) * c + ch] =
                static_cast<T>(crop.at(py * p + dy, px * p + dx, ch));
    }
  return tokens;
}

// Single-channel patchify used by the channel-agnostic tokenizer (D = P*P).
template <typename T>
Matrix<T> patchify_channel(const Crop& crop, int patch_size, int channel) {
  const int g = patch_grid_side(crop.size, patch_size);
  const int p = patch_size;
  Matrix<T> tokens(g * g, p * p);
  for (int py = 0; py < g; ++py)
    for (int px = 0; px < g; ++px) {
      T* tok = tokens.row(py * g + px);
      for (int dy = 0; dy < p; ++dy)
        for (int dx = 0; dx < p; ++dx)
          tok[dy * p + dx] = static_cast<T>(crop.at(py * p + dy, px * p + dx, channel));
    }
  return tokens;
}

template <typename T>
std::vector<T> unpatchify(const Matrix<T>& tokens, int patch_size, int channels,
                          int crop_size) {
  const int g = patch_grid_side(crop_size, patch_size);
  const int p = patch_size, c = channels;
  if (tokens.rows() != g * g || tokens.cols() != p * p * c)
    throw std::invalid_argument("unpatchify: token shape mismatch");
  std::vector<T> out(static_cast<size_t>(crop_size) * crop_size * c);
  for (int py = 0; py < g; ++py)
    for (int px = 0; px < g; ++px) {
      const T* tok = tokens.row(py * g + px);
      for (int dy = 0; dy < p; ++dy)
        for (int dx = 0; dx < p; ++dx)
          for (int ch = 0; ch < c; ++ch)
            out[(static_cast<size_t>(py * p + dy) * crop_size + (px * p + dx)) * c + ch] =
                tok[(dy * p + dx) * c + ch];
    }
  return out;
}

}  // namespace phenom
