#pragma once

#include <memory>
#include <numeric>

#include "phenom/image.hpp"
#include "phenom/loss.hpp"
#include "phenom/mask.hpp"
#include "phenom/patchify.hpp"
#include "phenom/vit.hpp"

namespace phenom {

enum class ModelKind { MAE, CA_MAE, WSL };

inline const char* to_string(ModelKind k) {
  switch (k) {
    case ModelKind::MAE: return "mae";
    case ModelKind::CA_MAE: return "ca_mae";
    case ModelKind::WSL: return "wsl";
  }
  return "?";
}

inline ModelKind model_kind_from_string(const std::string& s) {
  if (s == "mae") return ModelKind::MAE;
  if (s == "ca_mae") return ModelKind::CA_MAE;
  if (s == "wsl") return ModelKind::WSL;
  throw std::invalid_argument("unknown model kind: " + s);
}

// A full model: ViT encoder plus, depending on the kind, a reconstruction
// decoder (MAE), one decoder per channel (CA-MAE), or a classifier head
// (WSL). Non-copyable: the registry holds pointers into the parameter
// members.
template <typename T>
struct Model {
  ModelKind kind = ModelKind::MAE;
  ViTConfig cfg;
  int n_channels = 0;
  int crop_size = 0;
  int n_classes = 0;

  ParamRegistry<T> registry;
  Encoder<T> encoder;
  std::vector<Decoder<T>> decoders;
  Param<T> wsl_w, wsl_b;
  Matrix<T> enc_pos, dec_pos;

  Model() = default;
  Model(const Model&) = delete;
  Model& operator=(const Model&) = delete;

  int grid_side() const { return crop_size / cfg.patch_size; }
  int n_patches() const { return grid_side() * grid_side(); }

  static std::unique_ptr<Model<T>> create(ModelKind kind, const ViTConfig& cfg, int n_channels,
                                          int crop_size, int n_classes, uint64_t seed) {
    cfg.validate();
    if (crop_size % cfg.patch_size != 0)
      throw std::invalid_argument("Model: crop size not divisible by patch size");
    if (n_channels < 1) throw std::invalid_argument("Model: need at least one channel");
    auto m = std::make_unique<Model<T>>();
    m->kind = kind;
    m->cfg = cfg;
    if (kind == ModelKind::CA_MAE || kind == ModelKind::WSL) m->cfg.use_class_token = true;
    m->n_channels = n_channels;
    m->crop_size = crop_size;
    m->n_classes = kind == ModelKind::WSL ? n_classes : 0;
    if (kind == ModelKind::WSL && n_classes < 2)
      throw std::invalid_argument("Model: WSL needs at least 2 classes");

    auto rng = make_rng(mix_seed(seed, 0x4d4f44454cULL));
    const int p = cfg.patch_size;
    const int in_dim = kind == ModelKind::CA_MAE ? p * p : p * p * n_channels;
    m->encoder.build(m->registry, in_dim, m->cfg, rng);

    if (kind == ModelKind::MAE) {
      m->decoders.resize(1);
      m->decoders[0].build(m->registry, "decoder", m->cfg, m->cfg.width, p * p * n_channels, rng);
    } else if (kind == ModelKind::CA_MAE) {
      m->decoders.resize(n_channels);
      for (int c = 0; c < n_channels; ++c)
        m->decoders[c].build(m->registry, "decoder" + std::to_string(c), m->cfg, m->cfg.width,
                             p * p, rng);
    } else {
      m->registry.add(m->wsl_w, "wsl.head.w", {m->cfg.width, n_classes});
      m->registry.add(m->wsl_b, "wsl.head.b", {n_classes});
      init_trunc_normal(m->wsl_w, rng, 0.02);
    }

    const int g = m->grid_side();
    m->enc_pos = sincos_pos_embed_2d<T>(m->cfg.width, g, g);
    if (!m->decoders.empty()) m->dec_pos = sincos_pos_embed_2d<T>(m->cfg.decoder_width, g, g);
    return m;
  }
};

// ---------------------------------------------------------------------------
// standard MAE
// ---------------------------------------------------------------------------

template <typename T>
struct MaeCache {
  EncoderCache<T> enc;
  DecoderCache<T> dec;
  std::vector<int> visible;
};

// Encoder sees only visible tokens; decoder fills masked positions with the
// learned mask token and predicts every patch.
template <typename T>
Reconstruction<T> mae_forward(const Model<T>& m, const Crop& crop, const MaskSpec& mask,
                              bool training, uint64_t step_seed, MaeCache<T>& cache,
                              Exec ex = Exec::serial) {
  if (m.kind != ModelKind::MAE) throw std::invalid_argument("mae_forward: wrong model kind");
  if (crop.channels != m.n_channels)
    throw std::invalid_argument("mae_forward: channel count mismatch");
  if (crop.size != m.crop_size) throw std::invalid_argument("mae_forward: crop size mismatch");
  const int n = m.n_patches();
  if (mask.n_tokens() != n) throw std::invalid_argument("mae_forward: mask length mismatch");

  Matrix<T> tokens = patchify<T>(crop, m.cfg.patch_size);
  cache.visible.clear();
  for (int i = 0; i < n; ++i)
    if (!mask.mask[i]) cache.visible.push_back(i);
  Matrix<T> vis_tokens(static_cast<int>(cache.visible.size()), tokens.cols());
  for (size_t i = 0; i < cache.visible.size(); ++i)
    std::copy(tokens.row(cache.visible[i]), tokens.row(cache.visible[i]) + tokens.cols(),
              vis_tokens.row(static_cast<int>(i)));

  Matrix<T> enc_out = encoder_forward(m.encoder, vis_tokens, cache.visible, m.enc_pos, training,
                                      step_seed, cache.enc, ex);
  const int prefix = cache.enc.n_prefix;
  Matrix<T> enc_states(enc_out.rows() - prefix, enc_out.cols());
  for (int i = 0; i < enc_states.rows(); ++i)
    std::copy(enc_out.row(prefix + i), enc_out.row(prefix + i) + enc_out.cols(),
              enc_states.row(i));

  Reconstruction<T> rec;
  rec.pred = decoder_forward(m.decoders[0], enc_states, cache.visible, n, m.dec_pos, cache.dec,
                             ex);
  rec.target = std::move(tokens);
  rec.mask = mask;
  rec.patch_size = m.cfg.patch_size;
  rec.channels = m.n_channels;
  return rec;
}

template <typename T>
void mae_backward(const Model<T>& m, MaeCache<T>& cache, const Matrix<T>& d_pred, Grads<T>& gs,
                  Exec ex = Exec::serial) {
  Matrix<T> d_enc = decoder_backward(m.decoders[0], cache.dec, d_pred, gs, ex);
  const int prefix = cache.enc.n_prefix;
  Matrix<T> d_out(prefix + d_enc.rows(), d_enc.cols(), T(0));
  for (int i = 0; i < d_enc.rows(); ++i)
    std::copy(d_enc.row(i), d_enc.row(i) + d_enc.cols(), d_out.row(prefix + i));
  encoder_backward(m.encoder, cache.enc, d_out, gs, ex);
}

// Full unmasked encoder pass; mean of the final-layer patch embeddings.
template <typename T>
std::vector<T> extract_embedding(const Model<T>& m, const Crop& crop, Exec ex = Exec::serial) {
  if (m.kind == ModelKind::CA_MAE)
    throw std::invalid_argument("extract_embedding: use ca_embed for channel-agnostic models");
  if (crop.channels != m.n_channels)
    throw std::invalid_argument("extract_embedding: channel count mismatch");
  if (crop.size != m.crop_size)
    throw std::invalid_argument("extract_embedding: crop size mismatch");
  Matrix<T> tokens = patchify<T>(crop, m.cfg.patch_size);
  std::vector<int> positions(tokens.rows());
  std::iota(positions.begin(), positions.end(), 0);
  EncoderCache<T> cache;
  Matrix<T> out = encoder_forward(m.encoder, tokens, positions, m.enc_pos, false, 0, cache, ex);
  const int prefix = cache.n_prefix;
  const int n = tokens.rows(), d = out.cols();
  std::vector<T> emb(d, T(0));
  for (int i = 0; i < n; ++i) {
    const T* row = out.row(prefix + i);
    for (int j = 0; j < d; ++j) emb[j] += row[j];
  }
  for (int j = 0; j < d; ++j) emb[j] = static_cast<T>(emb[j] / n);
  return emb;
}

// ---------------------------------------------------------------------------
// WSL classifier
// ---------------------------------------------------------------------------

template <typename T>
struct WslCache {
  EncoderCache<T> enc;
  std::vector<T> cls_state;
  std::vector<T> probs;
  int rows = 0;
};

template <typename T>
struct WslOutput {
  std::vector<T> logits;
  std::vector<T> class_embedding;
};

template <typename T>
WslOutput<T> wsl_forward(const Model<T>& m, const Crop& crop, bool training, uint64_t step_seed,
                         WslCache<T>& cache, Exec ex = Exec::serial) {
  if (m.kind != ModelKind::WSL) throw std::invalid_argument("wsl_forward: wrong model kind");
  if (crop.channels != m.n_channels)
    throw std::invalid_argument("wsl_forward: channel count mismatch");
  Matrix<T> tokens = patchify<T>(crop, m.cfg.patch_size);
  std::vector<int> positions(tokens.rows());
  std::iota(positions.begin(), positions.end(), 0);
  Matrix<T> out =
      encoder_forward(m.encoder, tokens, positions, m.enc_pos, training, step_seed, cache.enc, ex);
  cache.rows = out.rows();
  cache.cls_state.assign(out.row(0), out.row(0) + out.cols());

  WslOutput<T> res;
  res.class_embedding = cache.cls_state;
  res.logits.assign(m.n_classes, T(0));
  for (int k = 0; k < m.n_classes; ++k) {
    double acc = m.wsl_b.w[k];
    for (int j = 0; j < m.cfg.width; ++j)
      acc += static_cast<double>(cache.cls_state[j]) * m.wsl_w.w[static_cast<size_t>(j) * m.n_classes + k];
    res.logits[k] = static_cast<T>(acc);
  }
  return res;
}

// Softmax cross-entropy against an integer label; returns the loss and fills
// cache.probs for the backward pass.
template <typename T>
T wsl_cross_entropy(const Model<T>& m, WslCache<T>& cache, const std::vector<T>& logits,
                    int label) {
  if (label < 0 || label >= m.n_classes)
    throw std::invalid_argument("wsl_cross_entropy: label out of range");
  double mx = logits[0];
  for (int k = 1; k < m.n_classes; ++k) mx = std::max(mx, static_cast<double>(logits[k]));
  double sum = 0.0;
  cache.probs.assign(m.n_classes, T(0));
  for (int k = 0; k < m.n_classes; ++k) {
    double e = std::exp(static_cast<double>(logits[k]) - mx);
    cache.probs[k] = static_cast<T>(e);
    sum += e;
  }
  for (int k = 0; k < m.n_classes; ++k)
    cache.probs[k] = static_cast<T>(cache.probs[k] / sum);
  return static_cast<T>(-std::log(static_cast<double>(cache.probs[label]) + 1e-300));
}

template <typename T>
void wsl_backward(const Model<T>& m, WslCache<T>& cache, int label, Grads<T>& gs, T upstream,
                  Exec ex = Exec::serial) {
  const int d = m.cfg.width, nc = m.n_classes;
  std::vector<T> dlogits(nc);
  for (int k = 0; k < nc; ++k)
    dlogits[k] = static_cast<T>((cache.probs[k] - (k == label ? T(1) : T(0))) * upstream);
  // head grads + d_cls
  std::vector<T> d_cls(d, T(0));
  T* gw = gs.of(m.wsl_w);
  T* gb = gs.of(m.wsl_b);
  for (int j = 0; j < d; ++j) {
    double acc = 0.0;
    for (int k = 0; k < nc; ++k) {
      gw[static_cast<size_t>(j) * nc + k] += cache.cls_state[j] * dlogits[k];
      acc += static_cast<double>(m.wsl_w.w[static_cast<size_t>(j) * nc + k]) * dlogits[k];
    }
    d_cls[j] = static_cast<T>(acc);
  }
  for (int k = 0; k < nc; ++k) gb[k] += dlogits[k];

  Matrix<T> d_out(cache.rows, d, T(0));
  for (int j = 0; j < d; ++j) d_out(0, j) = d_cls[j];
  encoder_backward(m.encoder, cache.enc, d_out, gs, ex);
}

}  // namespace phenom
