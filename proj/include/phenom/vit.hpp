#pragma once

#include <cmath>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "phenom/kernels.hpp"
#include "phenom/matrix.hpp"
#include "phenom/param.hpp"
#include "phenom/rng.hpp"

namespace phenom {

struct ViTConfig {
  std::string variant = "tiny-test";  // S | B | L | tiny-test
  int depth = 2;
  int width = 64;
  int heads = 4;
  int patch_size = 8;
  double mlp_ratio = 4.0;
  int decoder_depth = 1;
  int decoder_width = 64;
  int decoder_heads = 4;
  // architectural options; off by default for tiny-test
  double stochastic_depth_rate = 0.0;
  bool parallel_blocks = false;
  bool qk_norm = false;
  bool qk_bias = true;
  bool layer_scale = false;
  double layer_scale_init = 1e-4;
  bool use_class_token = false;

  void validate() const {
    if (width <= 0 || depth <= 0 || heads <= 0 || width % heads != 0)
      throw std::invalid_argument("ViTConfig: width must be a positive multiple of heads");
    if (decoder_width <= 0 || decoder_depth <= 0 || decoder_heads <= 0 ||
        decoder_width % decoder_heads != 0)
      throw std::invalid_argument("ViTConfig: bad decoder shape");
    if (width % 4 != 0 || decoder_width % 4 != 0)
      throw std::invalid_argument("ViTConfig: widths must be divisible by 4 (sincos embeddings)");
    if (variant != "tiny-test" && patch_size != 8 && patch_size != 16)
      throw std::invalid_argument("ViTConfig: patch_size must be 8 or 16 for paper variants");
    if (patch_size <= 0) throw std::invalid_argument("ViTConfig: patch_size must be positive");
    if (stochastic_depth_rate < 0.0 || stochastic_depth_rate >= 1.0)
      throw std::invalid_argument("ViTConfig: stochastic_depth_rate out of range");
  }

  static ViTConfig preset(const std::string& name) {
    ViTConfig c;
    c.variant = name;
    if (name == "tiny-test") {
      c.depth = 2, c.width = 64, c.heads = 4, c.patch_size = 8;
      c.decoder_depth = 1, c.decoder_width = 64, c.decoder_heads = 4;
    } else if (name == "S") {
      c.depth = 12, c.width = 384, c.heads = 6, c.patch_size = 16;
      c.decoder_depth = 8, c.decoder_width = 512, c.decoder_heads = 16;
    } else if (name == "B") {
      c.depth = 12, c.width = 768, c.heads = 12, c.patch_size = 16;
      c.decoder_depth = 8, c.decoder_width = 512, c.decoder_heads = 16;
    } else if (name == "L") {
      c.depth = 24, c.width = 1024, c.heads = 16, c.patch_size = 16;
      c.decoder_depth = 8, c.decoder_width = 512, c.decoder_heads = 16;
    } else {
      throw std::invalid_argument("unknown ViT variant: " + name);
    }
    return c;
  }
};

// ---------------------------------------------------------------------------
// fixed 2D sine-cosine positional embeddings
// ---------------------------------------------------------------------------

template <typename T>
void sincos_1d(int dim, double pos, T* out) {
  const int half = dim / 2;
  for (int i = 0; i < half; ++i) {
    double omega = std::pow(10000.0, -static_cast<double>(i) / half);
    out[i] = static_cast<T>(std::sin(pos * omega));
    out[half + i] = static_cast<T>(std::cos(pos * omega));
  }
}

template <typename T>
Matrix<T> sincos_pos_embed_2d(int dim, int grid_h, int grid_w) {
  if (dim % 4 != 0) throw std::invalid_argument("pos embed dim must be divisible by 4");
  Matrix<T> pe(grid_h * grid_w, dim);
  for (int r = 0; r < grid_h; ++r)
    for (int c = 0; c < grid_w; ++c) {
      T* row = pe.row(r * grid_w + c);
      sincos_1d(dim / 2, static_cast<double>(r), row);
      sincos_1d(dim / 2, static_cast<double>(c), row + dim / 2);
    }
  return pe;
}

// ---------------------------------------------------------------------------
// transformer block
// ---------------------------------------------------------------------------

constexpr double kLnEps = 1e-6;

template <typename T>
struct Block {
  int width = 0, heads = 0, mlp_hidden = 0;
  bool parallel = false, qk_norm = false, qk_bias = true, layer_scale = false;

  Param<T> ln1_g, ln1_b, ln2_g, ln2_b;
  Param<T> wq, bq, wk, bk, wv, bv, wo, bo;
  Param<T> w1, b1, w2, b2;
  Param<T> ls1, ls2;

  void build(ParamRegistry<T>& reg, const std::string& prefix, const ViTConfig& cfg, int width_,
             int heads_, std::mt19937_64& rng) {
    width = width_;
    heads = heads_;
    mlp_hidden = static_cast<int>(width * cfg.mlp_ratio);
    parallel = cfg.parallel_blocks;
    qk_norm = cfg.qk_norm;
    qk_bias = cfg.qk_bias;
    layer_scale = cfg.layer_scale;

    reg.add(ln1_g, prefix + ".ln1.gamma", {width});
    reg.add(ln1_b, prefix + ".ln1.beta", {width});
    reg.add(ln2_g, prefix + ".ln2.gamma", {width});
    reg.add(ln2_b, prefix + ".ln2.beta", {width});
    reg.add(wq, prefix + ".attn.wq", {width, width});
    reg.add(bq, prefix + ".attn.bq", {width});
    reg.add(wk, prefix + ".attn.wk", {width, width});
    reg.add(bk, prefix + ".attn.bk", {width});
    reg.add(wv, prefix + ".attn.wv", {width, width});
    reg.add(bv, prefix + ".attn.bv", {width});
    reg.add(wo, prefix + ".attn.wo", {width, width});
    reg.add(bo, prefix + ".attn.bo", {width});
    reg.add(w1, prefix + ".mlp.w1", {width, mlp_hidden});
    reg.add(b1, prefix + ".mlp.b1", {mlp_hidden});
    reg.add(w2, prefix + ".mlp.w2", {mlp_hidden, width});
    reg.add(b2, prefix + ".mlp.b2", {width});
    if (layer_scale) {
      reg.add(ls1, prefix + ".ls1", {width});
      reg.add(ls2, prefix + ".ls2", {width});
    }
    init_constant(ln1_g, 1.0);
    init_constant(ln2_g, 1.0);
    init_trunc_normal(wq, rng, 0.02);
    init_trunc_normal(wk, rng, 0.02);
    init_trunc_normal(wv, rng, 0.02);
    init_trunc_normal(wo, rng, 0.02);
    init_trunc_normal(w1, rng, 0.02);
    init_trunc_normal(w2, rng, 0.02);
    if (layer_scale) {
      init_constant(ls1, cfg.layer_scale_init);
      init_constant(ls2, cfg.layer_scale_init);
    }
  }
};

template <typename T>
struct BlockCache {
  Matrix<T> x, h1, q, k, v, qn, kn, o, attn_raw, x1, h2, u, gact, mlp_raw;
  std::vector<T> m1, r1, m2, r2;
  std::vector<T> qm, qr, km, kr;  // per (row, head) LN stats when qk_norm
  std::vector<Matrix<T>> att;     // per-head softmax matrices
  T keep1 = T(1), keep2 = T(1);   // stochastic-depth multipliers
};

namespace detail {

// LayerNorm without affine over a contiguous span (used for QK-normalization).
template <typename T>
void ln_noaffine_forward(T* x, int n, T& mean_out, T& rstd_out) {
  double mu = 0.0;
  for (int i = 0; i < n; ++i) mu += x[i];
  mu /= n;
  double var = 0.0;
  for (int i = 0; i < n; ++i) {
    double d = x[i] - mu;
    var += d * d;
  }
  var /= n;
  double rstd = 1.0 / std::sqrt(var + kLnEps);
  for (int i = 0; i < n; ++i) x[i] = static_cast<T>((x[i] - mu) * rstd);
  mean_out = static_cast<T>(mu);
  rstd_out = static_cast<T>(rstd);
}

template <typename T>
void ln_noaffine_backward(const T* xhat, T rstd, const T* dy, T* dx, int n) {
  double mean_dy = 0.0, mean_dyx = 0.0;
  for (int i = 0; i < n; ++i) {
    mean_dy += dy[i];
    mean_dyx += static_cast<double>(dy[i]) * xhat[i];
  }
  mean_dy /= n;
  mean_dyx /= n;
  for (int i = 0; i < n; ++i)
    dx[i] = static_cast<T>(rstd * (dy[i] - mean_dy - xhat[i] * mean_dyx));
}

// dgamma/dbeta for affine LayerNorm, accumulated serially.
template <typename T>
void ln_param_grads(const Matrix<T>& x, const std::vector<T>& mean, const std::vector<T>& rstd,
                    const Matrix<T>& dy, T* dgamma, T* dbeta) {
  const int rows = x.rows(), cols = x.cols();
  for (int i = 0; i < rows; ++i) {
    const T* xi = x.row(i);
    const T* dyi = dy.row(i);
    for (int j = 0; j < cols; ++j) {
      T xhat = static_cast<T>((xi[j] - mean[i]) * rstd[i]);
      dgamma[j] += dyi[j] * xhat;
      dbeta[j] += dyi[j];
    }
  }
}

}  // namespace detail

// Multi-head attention on a single sequence. Q/K/V are M x D with head h in
// columns [h*dh, (h+1)*dh).
template <typename T>
void attention_forward(const Block<T>& blk, const Matrix<T>& h1, BlockCache<T>& c, Exec ex) {
  const int m = h1.rows(), d = blk.width, nh = blk.heads, dh = d / nh;
  c.q = Matrix<T>(m, d);
  c.k = Matrix<T>(m, d);
  c.v = Matrix<T>(m, d);
  kernels::matmul(h1.data(), blk.wq.w.data(), c.q.data(), m, d, d, ex);
  kernels::matmul(h1.data(), blk.wk.w.data(), c.k.data(), m, d, d, ex);
  kernels::matmul(h1.data(), blk.wv.w.data(), c.v.data(), m, d, d, ex);
  if (blk.qk_bias) {
    kernels::add_row_vector(c.q.data(), blk.bq.w.data(), m, d, ex);
    kernels::add_row_vector(c.k.data(), blk.bk.w.data(), m, d, ex);
  }
  kernels::add_row_vector(c.v.data(), blk.bv.w.data(), m, d, ex);

  c.qn = c.q;
  c.kn = c.k;
  if (blk.qk_norm) {
    c.qm.assign(static_cast<size_t>(m) * nh, T(0));
    c.qr.assign(static_cast<size_t>(m) * nh, T(0));
    c.km.assign(static_cast<size_t>(m) * nh, T(0));
    c.kr.assign(static_cast<size_t>(m) * nh, T(0));
    for (int i = 0; i < m; ++i)
      for (int h = 0; h < nh; ++h) {
        detail::ln_noaffine_forward(c.qn.row(i) + h * dh, dh, c.qm[i * nh + h], c.qr[i * nh + h]);
        detail::ln_noaffine_forward(c.kn.row(i) + h * dh, dh, c.km[i * nh + h], c.kr[i * nh + h]);
      }
  }

  const double scale = 1.0 / std::sqrt(static_cast<double>(dh));
  c.att.assign(nh, Matrix<T>());
  c.o = Matrix<T>(m, d);
  for (int h = 0; h < nh; ++h) {
    Matrix<T>& a = c.att[h];
    a = Matrix<T>(m, m);
#pragma omp parallel for schedule(static) if (ex == Exec::parallel)
    for (int i = 0; i < m; ++i) {
      const T* qi = c.qn.row(i) + h * dh;
      T* ai = a.row(i);
      for (int j = 0; j < m; ++j) {
        const T* kj = c.kn.row(j) + h * dh;
        double acc = 0.0;
        for (int p = 0; p < dh; ++p) acc += static_cast<double>(qi[p]) * kj[p];
        ai[j] = static_cast<T>(acc * scale);
      }
    }
    kernels::softmax_rows(a.data(), m, m, ex);
#pragma omp parallel for schedule(static) if (ex == Exec::parallel)
    for (int i = 0; i < m; ++i) {
      const T* ai = a.row(i);
      T* oi = c.o.row(i) + h * dh;
      for (int p = 0; p < dh; ++p) {
        double acc = 0.0;
        for (int j = 0; j < m; ++j) acc += static_cast<double>(ai[j]) * (c.v.row(j) + h * dh)[p];
        oi[p] = static_cast<T>(acc);
      }
    }
  }
  c.attn_raw = Matrix<T>(m, d);
  kernels::matmul(c.o.data(), blk.wo.w.data(), c.attn_raw.data(), m, d, d, ex);
  kernels::add_row_vector(c.attn_raw.data(), blk.bo.w.data(), m, d, ex);
}

// Backward through attention; returns dH1 and accumulates parameter grads.
template <typename T>
Matrix<T> attention_backward(const Block<T>& blk, const BlockCache<T>& c,
                             const Matrix<T>& d_attn_raw, Grads<T>& gs, Exec ex) {
  const int m = d_attn_raw.rows(), d = blk.width, nh = blk.heads, dh = d / nh;
  Matrix<T> d_o(m, d);
  kernels::matmul_nt(d_attn_raw.data(), blk.wo.w.data(), d_o.data(), m, d, d, ex);
  kernels::matmul_tn(c.o.data(), d_attn_raw.data(), gs.of(blk.wo), d, m, d, true, ex);
  kernels::column_sums(d_attn_raw.data(), m, d, gs.of(blk.bo), true);

  Matrix<T> d_qn(m, d, T(0)), d_kn(m, d, T(0)), d_v(m, d, T(0));
  const double scale = 1.0 / std::sqrt(static_cast<double>(dh));
  for (int h = 0; h < nh; ++h) {
    const Matrix<T>& a = c.att[h];
    Matrix<T> da(m, m), ds(m, m);
#pragma omp parallel for schedule(static) if (ex == Exec::parallel)
    for (int i = 0; i < m; ++i) {
      // dA = dO V^T ; dV = A^T dO handled below
      const T* doi = d_o.row(i) + h * dh;
      T* dai = da.row(i);
      for (int j = 0; j < m; ++j) {
        const T* vj = c.v.row(j) + h * dh;
        double acc = 0.0;
        for (int p = 0; p < dh; ++p) acc += static_cast<double>(doi[p]) * vj[p];
        dai[j] = static_cast<T>(acc);
      }
      // softmax backward row-wise
      const T* ai = a.row(i);
      double rowdot = 0.0;
      for (int j = 0; j < m; ++j) rowdot += static_cast<double>(dai[j]) * ai[j];
      T* dsi = ds.row(i);
      for (int j = 0; j < m; ++j)
        dsi[j] = static_cast<T>(ai[j] * (static_cast<double>(dai[j]) - rowdot));
    }
#pragma omp parallel for schedule(static) if (ex == Exec::parallel)
    for (int i = 0; i < m; ++i) {
      // dV_h[i] = sum_j A[j][i] * dO_h[j]
      T* dvi = d_v.row(i) + h * dh;
      for (int p = 0; p < dh; ++p) {
        double acc = 0.0;
        for (int j = 0; j < m; ++j)
          acc += static_cast<double>(a(j, i)) * (d_o.row(j) + h * dh)[p];
        dvi[p] = static_cast<T>(acc);
      }
      // dQn_h[i] = sum_j dS[i][j] * Kn_h[j] * scale
      T* dqi = d_qn.row(i) + h * dh;
      const T* dsi = ds.row(i);
      for (int p = 0; p < dh; ++p) {
        double acc = 0.0;
        for (int j = 0; j < m; ++j) acc += static_cast<double>(dsi[j]) * (c.kn.row(j) + h * dh)[p];
        dqi[p] = static_cast<T>(acc * scale);
      }
      // dKn_h[i] = sum_j dS[j][i] * Qn_h[j] * scale
      T* dki = d_kn.row(i) + h * dh;
      for (int p = 0; p < dh; ++p) {
        double acc = 0.0;
        for (int j = 0; j < m; ++j) acc += static_cast<double>(ds(j, i)) * (c.qn.row(j) + h * dh)[p];
        dki[p] = static_cast<T>(acc * scale);
      }
    }
  }

  Matrix<T> d_q = d_qn, d_k = d_kn;
  if (blk.qk_norm) {
    for (int i = 0; i < m; ++i)
      for (int h = 0; h < nh; ++h) {
        detail::ln_noaffine_backward(c.qn.row(i) + h * dh, c.qr[i * nh + h],
                                     d_qn.row(i) + h * dh, d_q.row(i) + h * dh, dh);
        detail::ln_noaffine_backward(c.kn.row(i) + h * dh, c.kr[i * nh + h],
                                     d_kn.row(i) + h * dh, d_k.row(i) + h * dh, dh);
      }
  }

  Matrix<T> d_h1(m, d), tmp(m, d);
  kernels::matmul_nt(d_q.data(), blk.wq.w.data(), d_h1.data(), m, d, d, ex);
  kernels::matmul_nt(d_k.data(), blk.wk.w.data(), tmp.data(), m, d, d, ex);
  for (size_t i = 0; i < d_h1.size(); ++i) d_h1.data()[i] += tmp.data()[i];
  kernels::matmul_nt(d_v.data(), blk.wv.w.data(), tmp.data(), m, d, d, ex);
  for (size_t i = 0; i < d_h1.size(); ++i) d_h1.data()[i] += tmp.data()[i];

  kernels::matmul_tn(c.h1.data(), d_q.data(), gs.of(blk.wq), d, m, d, true, ex);
  kernels::matmul_tn(c.h1.data(), d_k.data(), gs.of(blk.wk), d, m, d, true, ex);
  kernels::matmul_tn(c.h1.data(), d_v.data(), gs.of(blk.wv), d, m, d, true, ex);
  if (blk.qk_bias) {
    kernels::column_sums(d_q.data(), m, d, gs.of(blk.bq), true);
    kernels::column_sums(d_k.data(), m, d, gs.of(blk.bk), true);
  }
  kernels::column_sums(d_v.data(), m, d, gs.of(blk.bv), true);
  return d_h1;
}

// Stochastic-depth multiplier for one residual branch.
template <typename T>
T droppath_keep(double rate, bool training, uint64_t seed) {
  if (!training || rate <= 0.0) return T(1);
  auto rng = make_rng(mix_seed(seed, 0x44524f50ULL));
  std::uniform_real_distribution<double> u(0.0, 1.0);
  if (u(rng) < rate) return T(0);
  return static_cast<T>(1.0 / (1.0 - rate));
}

template <typename T>
Matrix<T> block_forward(const Block<T>& blk, const Matrix<T>& x, double droppath_rate,
                        bool training, uint64_t droppath_seed, BlockCache<T>& c, Exec ex) {
  const int m = x.rows(), d = blk.width;
  c.x = x;
  c.keep1 = droppath_keep<T>(droppath_rate, training, mix_seed(droppath_seed, 1));
  c.keep2 = droppath_keep<T>(droppath_rate, training, mix_seed(droppath_seed, 2));

  c.h1 = Matrix<T>(m, d);
  c.m1.assign(m, T(0));
  c.r1.assign(m, T(0));
  kernels::layernorm_forward(x.data(), blk.ln1_g.w.data(), blk.ln1_b.w.data(), c.h1.data(),
                             c.m1.data(), c.r1.data(), m, d, kLnEps, ex);
  attention_forward(blk, c.h1, c, ex);

  // branch1 = keep1 * (ls1 ?) * attn_raw
  c.x1 = Matrix<T>(m, d);
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < d; ++j) {
      T b = c.attn_raw(i, j);
      if (blk.layer_scale) b = static_cast<T>(b * blk.ls1.w[j]);
      c.x1(i, j) = x(i, j) + c.keep1 * b;
    }

  const Matrix<T>& mlp_input = blk.parallel ? x : c.x1;
  c.h2 = Matrix<T>(m, d);
  c.m2.assign(m, T(0));
  c.r2.assign(m, T(0));
  kernels::layernorm_forward(mlp_input.data(), blk.ln2_g.w.data(), blk.ln2_b.w.data(),
                             c.h2.data(), c.m2.data(), c.r2.data(), m, d, kLnEps, ex);
  c.u = Matrix<T>(m, blk.mlp_hidden);
  kernels::matmul(c.h2.data(), blk.w1.w.data(), c.u.data(), m, d, blk.mlp_hidden, ex);
  kernels::add_row_vector(c.u.data(), blk.b1.w.data(), m, blk.mlp_hidden, ex);
  c.gact = Matrix<T>(m, blk.mlp_hidden);
  kernels::gelu_rows(c.u.data(), c.gact.data(), m, blk.mlp_hidden, ex);
  c.mlp_raw = Matrix<T>(m, d);
  kernels::matmul(c.gact.data(), blk.w2.w.data(), c.mlp_raw.data(), m, blk.mlp_hidden, d, ex);
  kernels::add_row_vector(c.mlp_raw.data(), blk.b2.w.data(), m, d, ex);

  Matrix<T> y(m, d);
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < d; ++j) {
      T b = c.mlp_raw(i, j);
      if (blk.layer_scale) b = static_cast<T>(b * blk.ls2.w[j]);
      y(i, j) = c.x1(i, j) + c.keep2 * b;
    }
  return y;
}

template <typename T>
Matrix<T> block_backward(const Block<T>& blk, const BlockCache<T>& c, const Matrix<T>& dy,
                         Grads<T>& gs, Exec ex) {
  const int m = dy.rows(), d = blk.width;

  // MLP branch
  Matrix<T> d_mlp_raw(m, d);
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < d; ++j) {
      T g = static_cast<T>(dy(i, j) * c.keep2);
      if (blk.layer_scale) {
        gs.of(blk.ls2)[j] += g * c.mlp_raw(i, j);
        g = static_cast<T>(g * blk.ls2.w[j]);
      }
      d_mlp_raw(i, j) = g;
    }
  Matrix<T> d_gact(m, blk.mlp_hidden);
  kernels::matmul_nt(d_mlp_raw.data(), blk.w2.w.data(), d_gact.data(), m, d, blk.mlp_hidden, ex);
  kernels::matmul_tn(c.gact.data(), d_mlp_raw.data(), gs.of(blk.w2), blk.mlp_hidden, m, d, true,
                     ex);
  kernels::column_sums(d_mlp_raw.data(), m, d, gs.of(blk.b2), true);
  Matrix<T> d_u(m, blk.mlp_hidden);
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < blk.mlp_hidden; ++j)
      d_u(i, j) = static_cast<T>(d_gact(i, j) * kernels::gelu_grad(c.u(i, j)));
  Matrix<T> d_h2(m, d);
  kernels::matmul_nt(d_u.data(), blk.w1.w.data(), d_h2.data(), m, blk.mlp_hidden, d, ex);
  kernels::matmul_tn(c.h2.data(), d_u.data(), gs.of(blk.w1), d, m, blk.mlp_hidden, true, ex);
  kernels::column_sums(d_u.data(), m, blk.mlp_hidden, gs.of(blk.b1), true);

  const Matrix<T>& mlp_input = blk.parallel ? c.x : c.x1;
  detail::ln_param_grads(mlp_input, c.m2, c.r2, d_h2, gs.of(blk.ln2_g), gs.of(blk.ln2_b));
  Matrix<T> d_mlp_input(m, d);
  kernels::layernorm_backward_input(mlp_input.data(), blk.ln2_g.w.data(), c.m2.data(),
                                    c.r2.data(), d_h2.data(), d_mlp_input.data(), m, d, ex);

  // gradient flowing into x1 (sequential) or directly into x (parallel)
  Matrix<T> d_x1 = dy;
  if (!blk.parallel)
    for (size_t i = 0; i < d_x1.size(); ++i) d_x1.data()[i] += d_mlp_input.data()[i];

  // attention branch: branch1 enters x1 = x + keep1 * ls1 * attn_raw
  Matrix<T> d_attn_raw(m, d);
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < d; ++j) {
      T g = static_cast<T>(d_x1(i, j) * c.keep1);
      if (blk.layer_scale) {
        gs.of(blk.ls1)[j] += g * c.attn_raw(i, j);
        g = static_cast<T>(g * blk.ls1.w[j]);
      }
      d_attn_raw(i, j) = g;
    }
  Matrix<T> d_h1 = attention_backward(blk, c, d_attn_raw, gs, ex);
  detail::ln_param_grads(c.x, c.m1, c.r1, d_h1, gs.of(blk.ln1_g), gs.of(blk.ln1_b));
  Matrix<T> d_x_ln1(m, d);
  kernels::layernorm_backward_input(c.x.data(), blk.ln1_g.w.data(), c.m1.data(), c.r1.data(),
                                    d_h1.data(), d_x_ln1.data(), m, d, ex);

  Matrix<T> dx = d_x1;  // identity path through x1 = x + ...
  for (size_t i = 0; i < dx.size(); ++i) dx.data()[i] += d_x_ln1.data()[i];
  if (blk.parallel)
    for (size_t i = 0; i < dx.size(); ++i) dx.data()[i] += d_mlp_input.data()[i];
  return dx;
}

// ---------------------------------------------------------------------------
// encoder / decoder stacks
// ---------------------------------------------------------------------------

template <typename T>
struct Encoder {
  ViTConfig cfg;
  int in_dim = 0;
  Param<T> proj_w, proj_b, cls_token;
  std::vector<Block<T>> blocks;
  Param<T> lnf_g, lnf_b;

  void build(ParamRegistry<T>& reg, int in_dim_, const ViTConfig& cfg_, std::mt19937_64& rng) {
    cfg = cfg_;
    in_dim = in_dim_;
    reg.add(proj_w, "encoder.proj.w", {in_dim, cfg.width});
    reg.add(proj_b, "encoder.proj.b", {cfg.width});
    init_trunc_normal(proj_w, rng, 0.02);
    if (cfg.use_class_token) {
      reg.add(cls_token, "encoder.cls_token", {cfg.width});
      init_trunc_normal(cls_token, rng, 0.02);
    }
    blocks.resize(cfg.depth);
    for (int i = 0; i < cfg.depth; ++i)
      blocks[i].build(reg, "encoder.block" + std::to_string(i), cfg, cfg.width, cfg.heads, rng);
    reg.add(lnf_g, "encoder.lnf.gamma", {cfg.width});
    reg.add(lnf_b, "encoder.lnf.beta", {cfg.width});
    init_constant(lnf_g, 1.0);
  }
};

template <typename T>
struct EncoderCache {
  Matrix<T> tokens;  // raw input tokens
  Matrix<T> x0;      // post projection + pos embed (+ cls)
  std::vector<BlockCache<T>> blocks;
  Matrix<T> pre_lnf;
  std::vector<T> mf, rf;
  int n_prefix = 0;  // 1 if class token is prepended
};

// tokens: M x in_dim raw patch pixels; positions[i] indexes pos_embed rows.
// Returns ((cls?1:0)+M) x width final-layer states, final LayerNorm applied.
template <typename T>
Matrix<T> encoder_forward(const Encoder<T>& enc, const Matrix<T>& tokens,
                          std::span<const int> positions, const Matrix<T>& pos_embed,
                          bool training, uint64_t droppath_seed, EncoderCache<T>& cache,
                          Exec ex = Exec::serial) {
  const int m = tokens.rows();
  if (static_cast<int>(positions.size()) != m)
    throw std::invalid_argument("encoder_forward: positions size mismatch");
  const int d = enc.cfg.width;
  const int prefix = enc.cfg.use_class_token ? 1 : 0;
  cache.n_prefix = prefix;
  cache.tokens = tokens;

  Matrix<T> x(prefix + m, d);
  kernels::matmul(tokens.data(), enc.proj_w.w.data(), x.data() + static_cast<size_t>(prefix) * d,
                  m, enc.in_dim, d, ex);
  for (int i = 0; i < m; ++i) {
    T* xi = x.row(prefix + i);
    const T* pe = pos_embed.row(positions[i]);
    for (int j = 0; j < d; ++j) xi[j] += enc.proj_b.w[j] + pe[j];
  }
  if (prefix)
    for (int j = 0; j < d; ++j) x(0, j) = enc.cls_token.w[j];

  cache.x0 = x;
  cache.blocks.assign(enc.blocks.size(), BlockCache<T>());
  for (size_t b = 0; b < enc.blocks.size(); ++b)
    x = block_forward(enc.blocks[b], x, enc.cfg.stochastic_depth_rate, training,
                      mix_seed(droppath_seed, 0x454e43ULL, static_cast<uint64_t>(b)),
                      cache.blocks[b], ex);

  cache.pre_lnf = x;
  cache.mf.assign(x.rows(), T(0));
  cache.rf.assign(x.rows(), T(0));
  Matrix<T> out(x.rows(), d);
  kernels::layernorm_forward(x.data(), enc.lnf_g.w.data(), enc.lnf_b.w.data(), out.data(),
                             cache.mf.data(), cache.rf.data(), x.rows(), d, kLnEps, ex);
  return out;
}

// d_out over the full (cls-prefixed) output; parameter grads accumulate in gs.
template <typename T>
void encoder_backward(const Encoder<T>& enc, EncoderCache<T>& cache, const Matrix<T>& d_out,
                      Grads<T>& gs, Exec ex = Exec::serial) {
  const int d = enc.cfg.width;
  const int rows = d_out.rows();
  detail::ln_param_grads(cache.pre_lnf, cache.mf, cache.rf, d_out, gs.of(enc.lnf_g),
                         gs.of(enc.lnf_b));
  Matrix<T> dx(rows, d);
  kernels::layernorm_backward_input(cache.pre_lnf.data(), enc.lnf_g.w.data(), cache.mf.data(),
                                    cache.rf.data(), d_out.data(), dx.data(), rows, d, ex);
  for (int b = static_cast<int>(enc.blocks.size()) - 1; b >= 0; --b)
    dx = block_backward(enc.blocks[b], cache.blocks[b], dx, gs, ex);

  const int prefix = cache.n_prefix;
  if (prefix) {
    T* g = gs.of(enc.cls_token);
    for (int j = 0; j < d; ++j) g[j] += dx(0, j);
  }
  const int m = cache.tokens.rows();
  // project back: d_tokens not needed, but proj grads are
  kernels::matmul_tn(cache.tokens.data(), dx.data() + static_cast<size_t>(prefix) * d,
                     gs.of(enc.proj_w), enc.in_dim, m, d, true, ex);
  kernels::column_sums(dx.data() + static_cast<size_t>(prefix) * d, m, d, gs.of(enc.proj_b),
                       true);
}

template <typename T>
struct Decoder {
  int in_width = 0, width = 0, heads = 0, depth = 0, out_dim = 0;
  Param<T> in_w, in_b, mask_token;
  std::vector<Block<T>> blocks;
  Param<T> lnf_g, lnf_b, head_w, head_b;

  void build(ParamRegistry<T>& reg, const std::string& prefix, const ViTConfig& cfg,
             int in_width_, int out_dim_, std::mt19937_64& rng) {
    in_width = in_width_;
    width = cfg.decoder_width;
    heads = cfg.decoder_heads;
    depth = cfg.decoder_depth;
    out_dim = out_dim_;
    reg.add(in_w, prefix + ".in.w", {in_width, width});
    reg.add(in_b, prefix + ".in.b", {width});
    reg.add(mask_token, prefix + ".mask_token", {width});
    init_trunc_normal(in_w, rng, 0.02);
    init_trunc_normal(mask_token, rng, 0.02);
    blocks.resize(depth);
    ViTConfig bc = cfg;  // decoder blocks: no stochastic depth
    bc.stochastic_depth_rate = 0.0;
    for (int i = 0; i < depth; ++i)
      blocks[i].build(reg, prefix + ".block" + std::to_string(i), bc, width, heads, rng);
    reg.add(lnf_g, prefix + ".lnf.gamma", {width});
    reg.add(lnf_b, prefix + ".lnf.beta", {width});
    init_constant(lnf_g, 1.0);
    reg.add(head_w, prefix + ".head.w", {width, out_dim});
    reg.add(head_b, prefix + ".head.b", {out_dim});
    init_trunc_normal(head_w, rng, 0.02);
  }
};

template <typename T>
struct DecoderCache {
  Matrix<T> enc_states;  // Mv x in_width
  std::vector<int> visible;
  Matrix<T> x0;
  std::vector<BlockCache<T>> blocks;
  Matrix<T> pre_lnf, post_lnf;
  std::vector<T> mf, rf;
};

// enc_states: one row per visible position (same order as `visible`);
// reconstructs all n_tokens positions. pos_embed has n_tokens rows.
template <typename T>
Matrix<T> decoder_forward(const Decoder<T>& dec, const Matrix<T>& enc_states,
                          std::span<const int> visible, int n_tokens,
                          const Matrix<T>& pos_embed, DecoderCache<T>& cache,
                          Exec ex = Exec::serial) {
  const int mv = enc_states.rows();
  if (static_cast<int>(visible.size()) != mv)
    throw std::invalid_argument("decoder_forward: visible size mismatch");
  cache.enc_states = enc_states;
  cache.visible.assign(visible.begin(), visible.end());

  Matrix<T> proj(mv, dec.width);
  kernels::matmul(enc_states.data(), dec.in_w.w.data(), proj.data(), mv, dec.in_width,
                  dec.width, ex);
  kernels::add_row_vector(proj.data(), dec.in_b.w.data(), mv, dec.width, ex);

  Matrix<T> x(n_tokens, dec.width);
  for (int i = 0; i < n_tokens; ++i) {
    T* xi = x.row(i);
    const T* pe = pos_embed.row(i);
    for (int j = 0; j < dec.width; ++j) xi[j] = dec.mask_token.w[j] + pe[j];
  }
  for (int vi = 0; vi < mv; ++vi) {
    T* xi = x.row(visible[vi]);
    const T* pr = proj.row(vi);
    const T* pe = pos_embed.row(visible[vi]);
    for (int j = 0; j < dec.width; ++j) xi[j] = pr[j] + pe[j];
  }

  cache.x0 = x;
  cache.blocks.assign(dec.blocks.size(), BlockCache<T>());
  for (size_t b = 0; b < dec.blocks.size(); ++b)
    x = block_forward(dec.blocks[b], x, 0.0, false, 0, cache.blocks[b], ex);

  cache.pre_lnf = x;
  cache.mf.assign(n_tokens, T(0));
  cache.rf.assign(n_tokens, T(0));
  cache.post_lnf = Matrix<T>(n_tokens, dec.width);
  kernels::layernorm_forward(x.data(), dec.lnf_g.w.data(), dec.lnf_b.w.data(),
                             cache.post_lnf.data(), cache.mf.data(), cache.rf.data(), n_tokens,
                             dec.width, kLnEps, ex);
  Matrix<T> pred(n_tokens, dec.out_dim);
  kernels::matmul(cache.post_lnf.data(), dec.head_w.w.data(), pred.data(), n_tokens, dec.width,
                  dec.out_dim, ex);
  kernels::add_row_vector(pred.data(), dec.head_b.w.data(), n_tokens, dec.out_dim, ex);
  return pred;
}

// Returns gradient w.r.t. the encoder states feeding the decoder.
template <typename T>
Matrix<T> decoder_backward(const Decoder<T>& dec, DecoderCache<T>& cache,
                           const Matrix<T>& d_pred, Grads<T>& gs, Exec ex = Exec::serial) {
  const int n_tokens = d_pred.rows();
  Matrix<T> d_post(n_tokens, dec.width);
  kernels::matmul_nt(d_pred.data(), dec.head_w.w.data(), d_post.data(), n_tokens, dec.out_dim,
                     dec.width, ex);
  kernels::matmul_tn(cache.post_lnf.data(), d_pred.data(), gs.of(dec.head_w), dec.width,
                     n_tokens, dec.out_dim, true, ex);
  kernels::column_sums(d_pred.data(), n_tokens, dec.out_dim, gs.of(dec.head_b), true);

  detail::ln_param_grads(cache.pre_lnf, cache.mf, cache.rf, d_post, gs.of(dec.lnf_g),
                         gs.of(dec.lnf_b));
  Matrix<T> dx(n_tokens, dec.width);
  kernels::layernorm_backward_input(cache.pre_lnf.data(), dec.lnf_g.w.data(), cache.mf.data(),
                                    cache.rf.data(), d_post.data(), dx.data(), n_tokens,
                                    dec.width, ex);
  for (int b = static_cast<int>(dec.blocks.size()) - 1; b >= 0; --b)
    dx = block_backward(dec.blocks[b], cache.blocks[b], dx, gs, ex);

  const int mv = static_cast<int>(cache.visible.size());
  // mask-token grad: every position contributes except the visible overwrites
  {
    std::vector<uint8_t> is_visible(n_tokens, 0);
    for (int v : cache.visible) is_visible[v] = 1;
    T* g = gs.of(dec.mask_token);
    for (int i = 0; i < n_tokens; ++i) {
      if (is_visible[i]) continue;
      const T* dxi = dx.row(i);
      for (int j = 0; j < dec.width; ++j) g[j] += dxi[j];
    }
  }
  Matrix<T> d_proj(mv, dec.width);
  for (int vi = 0; vi < mv; ++vi) {
    const T* dxi = dx.row(cache.visible[vi]);
    T* dp = d_proj.row(vi);
    for (int j = 0; j < dec.width; ++j) dp[j] = dxi[j];
  }
  Matrix<T> d_enc(mv, dec.in_width);
  kernels::matmul_nt(d_proj.data(), dec.in_w.w.data(), d_enc.data(), mv, dec.width,
                     dec.in_width, ex);
  kernels::matmul_tn(cache.enc_states.data(), d_proj.data(), gs.of(dec.in_w), dec.in_width, mv,
                     dec.width, true, ex);
  kernels::column_sums(d_proj.data(), mv, dec.width, gs.of(dec.in_b), true);
  return d_enc;
}

}  // namespace phenom
