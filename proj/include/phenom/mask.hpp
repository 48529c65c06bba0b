#pragma once

#include <cstdint>
#include <random>
#include <stdexcept>
#include <vector>

#include "phenom/rng.hpp"

namespace phenom {

// Boolean masking plan over N tokens; true = masked (hidden from the
// encoder). Masked count is round-half-even(ratio * N), a pure function of
// (n_tokens, ratio, seed).
struct MaskSpec {
  std::vector<uint8_t> mask;
  double ratio = 0.0;
  uint64_t seed = 0;

  int n_tokens() const { return static_cast<int>(mask.size()); }
  int n_masked() const {
    int c = 0;
    for (auto m : mask) c += m ? 1 : 0;
    return c;
  }
};

inline MaskSpec sample_mask(int n_tokens, double ratio, uint64_t seed) {
  if (ratio < 0.0 || ratio >= 1.0)
    throw std::invalid_argument("sample_mask: ratio must be in [0, 1)");
  if (n_tokens <= 0) throw std::invalid_argument("sample_mask: n_tokens must be positive");
  MaskSpec spec;
  spec.ratio = ratio;
  spec.seed = seed;
  spec.mask.assign(n_tokens, 0);
  int k = static_cast<int>(round_half_even(ratio * n_tokens));
  // partial Fisher-Yates: uniformly random k-subset
  std::vector<int> idx(n_tokens);
  for (int i = 0; i < n_tokens; ++i) idx[i] = i;
  auto rng = make_rng(mix_seed(seed, 0x4d41534bULL));
  for (int i = 0; i < k; ++i) {
    std::uniform_int_distribution<int> d(i, n_tokens - 1);
    std::swap(idx[i], idx[d(rng)]);
    spec.mask[idx[i]] = 1;
  }
  return spec;
}

// Independent masks per channel, each with popcount round(ratio * N).
struct ChannelMaskSpec {
  std::vector<MaskSpec> per_channel;
  double ratio = 0.0;

  int n_channels() const { return static_cast<int>(per_channel.size()); }
};

inline ChannelMaskSpec sample_channel_masks(int n_channels, int n_tokens, double ratio,
                                            uint64_t seed) {
  if (n_channels <= 0) throw std::invalid_argument("sample_channel_masks: need channels");
  ChannelMaskSpec spec;
  spec.ratio = ratio;
  for (int c = 0; c < n_channels; ++c)
    spec.per_channel.push_back(
        sample_mask(n_tokens, ratio, mix_seed(seed, 0x43484d4bULL, static_cast<uint64_t>(c))));
  return spec;
}

}  // namespace phenom
