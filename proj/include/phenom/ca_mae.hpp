#pragma once

#include "phenom/model.hpp"

namespace phenom {

enum class EmbedMode { CLASS_TOKEN, MEAN_ALL, CONCAT_CHANNEL_MEANS };

inline EmbedMode embed_mode_from_string(const std::string& s) {
  if (s == "class_token") return EmbedMode::CLASS_TOKEN;
  if (s == "mean_all") return EmbedMode::MEAN_ALL;
  if (s == "concat_channel_means") return EmbedMode::CONCAT_CHANNEL_MEANS;
  throw std::invalid_argument("unknown embed mode: " + s);
}

inline const char* to_string(EmbedMode m) {
  switch (m) {
    case EmbedMode::CLASS_TOKEN: return "class_token";
    case EmbedMode::MEAN_ALL: return "mean_all";
    case EmbedMode::CONCAT_CHANNEL_MEANS: return "concat_channel_means";
  }
  return "?";
}

// Channel-major token batch after the shared projection and the shared
// per-channel positional embeddings. Every channel goes through the same
// parameters and receives the same position codes; no channel-identity
// embedding exists anywhere.
template <typename T>
struct ChannelTokenBatch {
  Matrix<T> tokens;  // (C*N) x width
  std::vector<int> channel_of_token;
  int n_channels = 0;
  int n_patches = 0;
};

template <typename T>
ChannelTokenBatch<T> tokenize_channels(const Model<T>& m, const Crop& crop,
                                       Exec ex = Exec::serial) {
  if (m.kind != ModelKind::CA_MAE)
    throw std::invalid_argument("tokenize_channels: channel-agnostic model required");
  const int p = m.cfg.patch_size;
  const int g = patch_grid_side(crop.size, p);
  const int n = g * g;
  if (n != m.enc_pos.rows())
    throw std::invalid_argument("tokenize_channels: crop size incompatible with pos embeddings");
  const int c = crop.channels;
  const int d = m.cfg.width;

  ChannelTokenBatch<T> batch;
  batch.n_channels = c;
  batch.n_patches = n;
  batch.tokens = Matrix<T>(c * n, d);
  batch.channel_of_token.resize(static_cast<size_t>(c) * n);
  for (int ch = 0; ch < c; ++ch) {
    Matrix<T> raw = patchify_channel<T>(crop, p, ch);
    kernels::matmul(raw.data(), m.encoder.proj_w.w.data(),
                    batch.tokens.data() + static_cast<size_t>(ch) * n * d, n, p * p, d, ex);
    for (int i = 0; i < n; ++i) {
      T* tok = batch.tokens.row(ch * n + i);
      const T* pe = m.enc_pos.row(i);
      for (int j = 0; j < d; ++j) tok[j] += m.encoder.proj_b.w[j] + pe[j];
      batch.channel_of_token[static_cast<size_t>(ch) * n + i] = ch;
    }
  }
  return batch;
}

template <typename T>
struct CaCache {
  EncoderCache<T> enc;
  std::vector<DecoderCache<T>> dec;
  std::vector<std::vector<int>> visible;  // per channel, spatial indices
  int n_patches = 0;
};

// Joint encoder over the visible subset of all C*N tokens (cross-channel
// attention unrestricted), then one decoder per channel over that channel's
// token sequence.
template <typename T>
std::vector<Reconstruction<T>> ca_forward(const Model<T>& m, const Crop& crop,
                                          const ChannelMaskSpec& masks, bool training,
                                          uint64_t step_seed, CaCache<T>& cache,
                                          Exec ex = Exec::serial) {
  if (m.kind != ModelKind::CA_MAE) throw std::invalid_argument("ca_forward: wrong model kind");
  const int c = crop.channels;
  if (c > static_cast<int>(m.decoders.size()))
    throw std::invalid_argument("ca_forward: more channels than decoders");
  if (masks.n_channels() != c)
    throw std::invalid_argument("ca_forward: mask channel count mismatch");
  if (crop.size != m.crop_size) throw std::invalid_argument("ca_forward: crop size mismatch");
  const int p = m.cfg.patch_size;
  const int n = m.n_patches();
  cache.n_patches = n;

  std::vector<Matrix<T>> raw(c);
  cache.visible.assign(c, {});
  int total_visible = 0;
  for (int ch = 0; ch < c; ++ch) {
    if (masks.per_channel[ch].n_tokens() != n)
      throw std::invalid_argument("ca_forward: mask length mismatch");
    raw[ch] = patchify_channel<T>(crop, p, ch);
    for (int i = 0; i < n; ++i)
      if (!masks.per_channel[ch].mask[i]) cache.visible[ch].push_back(i);
    total_visible += static_cast<int>(cache.visible[ch].size());
  }

  Matrix<T> vis_tokens(total_visible, p * p);
  std::vector<int> positions(total_visible);
  int row = 0;
  for (int ch = 0; ch < c; ++ch)
    for (int i : cache.visible[ch]) {
      std::copy(raw[ch].row(i), raw[ch].row(i) + p * p, vis_tokens.row(row));
      positions[row] = i;  // same positional embedding for every channel
      ++row;
    }

  Matrix<T> enc_out = encoder_forward(m.encoder, vis_tokens, positions, m.enc_pos, training,
                                      step_seed, cache.enc, ex);
  const int prefix = cache.enc.n_prefix;

  std::vector<Reconstruction<T>> recs(c);
  cache.dec.assign(c, DecoderCache<T>());
  int offset = 0;
  for (int ch = 0; ch < c; ++ch) {
    const int mv = static_cast<int>(cache.visible[ch].size());
    Matrix<T> states(mv, m.cfg.width);
    for (int i = 0; i < mv; ++i)
      std::copy(enc_out.row(prefix + offset + i), enc_out.row(prefix + offset + i) + m.cfg.width,
                states.row(i));
    offset += mv;
    recs[ch].pred = decoder_forward(m.decoders[ch], states, cache.visible[ch], n, m.dec_pos,
                                    cache.dec[ch], ex);
    recs[ch].target = std::move(raw[ch]);
    recs[ch].mask = masks.per_channel[ch];
    recs[ch].patch_size = p;
    recs[ch].channels = 1;
  }
  return recs;
}

// d_preds: one gradient matrix per channel (empty matrices are skipped, which
// lets tests drive a single channel's loss).
template <typename T>
void ca_backward(const Model<T>& m, CaCache<T>& cache, const std::vector<Matrix<T>>& d_preds,
                 Grads<T>& gs, Exec ex = Exec::serial) {
  const int c = static_cast<int>(cache.visible.size());
  const int prefix = cache.enc.n_prefix;
  int total_visible = 0;
  for (int ch = 0; ch < c; ++ch) total_visible += static_cast<int>(cache.visible[ch].size());
  Matrix<T> d_out(prefix + total_visible, m.cfg.width, T(0));
  int offset = 0;
  for (int ch = 0; ch < c; ++ch) {
    const int mv = static_cast<int>(cache.visible[ch].size());
    if (d_preds[ch].rows() > 0) {
      Matrix<T> d_enc = decoder_backward(m.decoders[ch], cache.dec[ch], d_preds[ch], gs, ex);
      for (int i = 0; i < mv; ++i)
        std::copy(d_enc.row(i), d_enc.row(i) + m.cfg.width, d_out.row(prefix + offset + i));
    }
    offset += mv;
  }
  encoder_backward(m.encoder, cache.enc, d_out, gs, ex);
}

// Channel-flexible embedding: full unmasked tokenization of all C' channels
// through the shared tokenizer; decoders are not involved. Works for channel
// counts different from the training configuration.
template <typename T>
std::vector<T> ca_embed(const Model<T>& m, const Crop& crop, EmbedMode mode,
                        Exec ex = Exec::serial) {
  if (m.kind != ModelKind::CA_MAE) throw std::invalid_argument("ca_embed: wrong model kind");
  const int p = m.cfg.patch_size;
  const int g = patch_grid_side(crop.size, p);
  const int n = g * g;
  if (n != m.enc_pos.rows())
    throw std::invalid_argument("ca_embed: crop size incompatible with model grid");
  const int c = crop.channels;
  const int d = m.cfg.width;

  Matrix<T> tokens(c * n, p * p);
  std::vector<int> positions(static_cast<size_t>(c) * n);
  for (int ch = 0; ch < c; ++ch) {
    Matrix<T> raw = patchify_channel<T>(crop, p, ch);
    for (int i = 0; i < n; ++i) {
      std::copy(raw.row(i), raw.row(i) + p * p, tokens.row(ch * n + i));
      positions[static_cast<size_t>(ch) * n + i] = i;
    }
  }
  EncoderCache<T> cache;
  Matrix<T> out = encoder_forward(m.encoder, tokens, positions, m.enc_pos, false, 0, cache, ex);
  const int prefix = cache.n_prefix;

  switch (mode) {
    case EmbedMode::CLASS_TOKEN: {
      if (!prefix) throw std::invalid_argument("ca_embed: model has no class token");
      return std::vector<T>(out.row(0), out.row(0) + d);
    }
    case EmbedMode::MEAN_ALL: {
      std::vector<T> emb(d, T(0));
      for (int i = 0; i < c * n; ++i) {
        const T* row = out.row(prefix + i);
        for (int j = 0; j < d; ++j) emb[j] += row[j];
      }
      for (int j = 0; j < d; ++j) emb[j] = static_cast<T>(emb[j] / (c * n));
      return emb;
    }
    case EmbedMode::CONCAT_CHANNEL_MEANS: {
      std::vector<T> emb(static_cast<size_t>(c) * d, T(0));
      for (int ch = 0; ch < c; ++ch) {
        T* dst = emb.data() + static_cast<size_t>(ch) * d;
        for (int i = 0; i < n; ++i) {
          const T* row = out.row(prefix + ch * n + i);
          for (int j = 0; j < d; ++j) dst[j] += row[j];
        }
        for (int j = 0; j < d; ++j) dst[j] = static_cast<T>(dst[j] / n);
      }
      return emb;
    }
  }
  throw std::logic_error("ca_embed: unreachable");
}

}  // namespace phenom
