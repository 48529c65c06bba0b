#pragma once

#include <stdexcept>

#include "phenom/fft.hpp"
#include "phenom/mask.hpp"
#include "phenom/matrix.hpp"
#include "phenom/parallel.hpp"

namespace phenom {

// Predicted and target patch pixels for all N positions, plus the mask that
// selects which patches the losses see. Token layout (dy*P+dx)*C + c.
template <typename T>
struct Reconstruction {
  Matrix<T> pred;
  Matrix<T> target;
  MaskSpec mask;
  int patch_size = 0;
  int channels = 0;

  void check() const {
    if (pred.rows() != target.rows() || pred.cols() != target.cols())
      throw std::invalid_argument("Reconstruction: pred/target shape mismatch");
    if (pred.rows() != mask.n_tokens())
      throw std::invalid_argument("Reconstruction: mask length mismatch");
    if (pred.cols() != patch_size * patch_size * channels)
      throw std::invalid_argument("Reconstruction: token dim mismatch");
  }
};

// Mean over masked patches of the per-patch mean squared error. Unmasked
// patches contribute exactly zero (they are never touched).
template <typename T>
T loss_mae(const Reconstruction<T>& r) {
  r.check();
  const int pm = r.mask.n_masked();
  if (pm == 0) throw std::invalid_argument("loss_mae: no masked patches");
  const int dp = r.pred.cols();
  double total = 0.0;
  for (int p = 0; p < r.pred.rows(); ++p) {
    if (!r.mask.mask[p]) continue;
    const T* yp = r.target.row(p);
    const T* yh = r.pred.row(p);
    double acc = 0.0;
    for (int j = 0; j < dp; ++j) {
      double d = static_cast<double>(yh[j]) - yp[j];
      acc += d * d;
    }
    total += acc / dp;
  }
  return static_cast<T>(total / pm);
}

// d(loss_mae)/d(pred), scaled by `upstream`.
template <typename T>
Matrix<T> loss_mae_backward(const Reconstruction<T>& r, T upstream = T(1)) {
  const int pm = r.mask.n_masked();
  if (pm == 0) throw std::invalid_argument("loss_mae: no masked patches");
  const int dp = r.pred.cols();
  Matrix<T> d(r.pred.rows(), dp, T(0));
  const double scale = 2.0 / (static_cast<double>(dp) * pm);
  for (int p = 0; p < r.pred.rows(); ++p) {
    if (!r.mask.mask[p]) continue;
    const T* yp = r.target.row(p);
    const T* yh = r.pred.row(p);
    T* dp_row = d.row(p);
    for (int j = 0; j < dp; ++j)
      dp_row[j] = static_cast<T>(upstream * scale * (static_cast<double>(yh[j]) - yp[j]));
  }
  return d;
}

namespace detail {

template <typename T>
void gather_plane(const T* token, int p, int c, int channel, std::vector<T>& plane) {
  plane.resize(static_cast<size_t>(p) * p);
  for (int i = 0; i < p * p; ++i) plane[i] = token[i * c + channel];
}

}  // namespace detail

// Fourier-domain loss: per masked patch, per channel, the mean absolute error
// between the unnormalized 2D DFT magnitudes of target and prediction;
// averaged over channels, then over masked patches.
template <typename T>
T loss_ft(const Reconstruction<T>& r, Exec ex = Exec::serial) {
  r.check();
  const int pm = r.mask.n_masked();
  if (pm == 0) throw std::invalid_argument("loss_ft: no masked patches");
  const int p = r.patch_size, c = r.channels;
  const int n = r.pred.rows();
  std::vector<double> per_patch(n, 0.0);
#pragma omp parallel for schedule(static) if (ex == Exec::parallel)
  for (int tok = 0; tok < n; ++tok) {
    if (!r.mask.mask[tok]) continue;
    std::vector<T> plane;
    double patch_acc = 0.0;
    for (int ch = 0; ch < c; ++ch) {
      detail::gather_plane(r.target.row(tok), p, c, ch, plane);
      auto st = fft::fft_magnitude_plane(plane.data(), p);
      detail::gather_plane(r.pred.row(tok), p, c, ch, plane);
      auto sp = fft::fft_magnitude_plane(plane.data(), p);
      double acc = 0.0;
      for (size_t k = 0; k < st.mag.size(); ++k)
        acc += std::abs(static_cast<double>(sp.mag[k]) - st.mag[k]);
      patch_acc += acc / static_cast<double>(p * p);
    }
    per_patch[tok] = patch_acc / c;
  }
  double total = 0.0;
  for (int tok = 0; tok < n; ++tok) total += per_patch[tok];
  return static_cast<T>(total / pm);
}

// d(loss_ft)/d(pred). Bins where the prediction's magnitude is zero use the
// zero subgradient; sign(0) = 0 at exact magnitude ties.
template <typename T>
Matrix<T> loss_ft_backward(const Reconstruction<T>& r, T upstream = T(1), Exec ex = Exec::serial) {
  r.check();
  const int pm = r.mask.n_masked();
  if (pm == 0) throw std::invalid_argument("loss_ft: no masked patches");
  const int p = r.patch_size, c = r.channels;
  const int n = r.pred.rows();
  Matrix<T> d(n, r.pred.cols(), T(0));
  const double scale = static_cast<double>(upstream) / (static_cast<double>(p * p) * c * pm);
#pragma omp parallel for schedule(static) if (ex == Exec::parallel)
  for (int tok = 0; tok < n; ++tok) {
    if (!r.mask.mask[tok]) continue;
    std::vector<T> plane, dmag(static_cast<size_t>(p) * p), dplane(static_cast<size_t>(p) * p);
    for (int ch = 0; ch < c; ++ch) {
      detail::gather_plane(r.target.row(tok), p, c, ch, plane);
      auto st = fft::fft_magnitude_plane(plane.data(), p);
      detail::gather_plane(r.pred.row(tok), p, c, ch, plane);
      auto sp = fft::fft_magnitude_plane(plane.data(), p);
      for (int k = 0; k < p * p; ++k) {
        double diff = static_cast<double>(sp.mag[k]) - st.mag[k];
        double s = diff > 0.0 ? 1.0 : (diff < 0.0 ? -1.0 : 0.0);
        dmag[k] = static_cast<T>(s * scale);
      }
      std::fill(dplane.begin(), dplane.end(), T(0));
      fft::fft_magnitude_backward_plane(sp, dmag.data(), dplane.data(), p);
      T* drow = d.row(tok);
      for (int i = 0; i < p * p; ++i) drow[i * c + ch] += dplane[i];
    }
  }
  return d;
}

// L = (1 - alpha) * L_MAE + alpha * L_FT with alpha in (0, 1).
template <typename T>
T loss_combined(const Reconstruction<T>& r, double alpha, Exec ex = Exec::serial) {
  if (alpha <= 0.0 || alpha >= 1.0)
    throw std::invalid_argument("loss_combined: alpha must be in (0, 1)");
  return static_cast<T>((1.0 - alpha) * static_cast<double>(loss_mae(r)) +
                        alpha * static_cast<double>(loss_ft(r, ex)));
}

template <typename T>
Matrix<T> loss_combined_backward(const Reconstruction<T>& r, double alpha, T upstream = T(1),
                                 Exec ex = Exec::serial) {
  if (alpha <= 0.0 || alpha >= 1.0)
    throw std::invalid_argument("loss_combined: alpha must be in (0, 1)");
  Matrix<T> d = loss_mae_backward(r, static_cast<T>(upstream * (1.0 - alpha)));
  Matrix<T> dft = loss_ft_backward(r, static_cast<T>(upstream * alpha), ex);
  for (size_t i = 0; i < d.size(); ++i) d.data()[i] += dft.data()[i];
  return d;
}

}  // namespace phenom
