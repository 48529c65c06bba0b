#pragma once

#include <complex>
#include <stdexcept>
#include <vector>

#include "phenom/parallel.hpp"

// Small 2D DFT for square patches. Forward transform is unnormalized
// (X_k = sum_n x_n exp(-2*pi*i*k*n/P)); radix-2 fast path for power-of-two
// sizes, direct evaluation otherwise. Patch sizes here are tiny (<= 32), so
// parallelism belongs to the callers that batch over patches.

namespace phenom::fft {

template <typename T>
using cvec = std::vector<std::complex<T>>;

inline bool is_pow2(int n) { return n > 0 && (n & (n - 1)) == 0; }

// In-place iterative radix-2 Cooley-Tukey, length must be a power of two.
template <typename T>
void fft_pow2(std::complex<T>* x, int n) {
  for (int i = 1, j = 0; i < n; ++i) {
    int bit = n >> 1;
    for (; j & bit; bit >>= 1) j ^= bit;
    j ^= bit;
    if (i < j) std::swap(x[i], x[j]);
  }
  for (int len = 2; len <= n; len <<= 1) {
    double ang = -2.0 * 3.14159265358979323846 / len;
    std::complex<double> wl(std::cos(ang), std::sin(ang));
    for (int i = 0; i < n; i += len) {
      std::complex<double> w(1.0, 0.0);
      for (int j = 0; j < len / 2; ++j) {
        std::complex<double> u(x[i + j]);
        std::complex<double> v = std::complex<double>(x[i + j + len / 2]) * w;
        x[i + j] = std::complex<T>(u + v);
        x[i + j + len / 2] = std::complex<T>(u - v);
        w *= wl;
      }
    }
  }
}

template <typename T>
void dft_direct(const std::complex<T>* in, std::complex<T>* out, int n) {
  for (int k = 0; k < n; ++k) {
    std::complex<double> acc(0.0, 0.0);
    for (int j = 0; j < n; ++j) {
      double ang = -2.0 * 3.14159265358979323846 * k * j / n;
      acc += std::complex<double>(in[j]) * std::complex<double>(std::cos(ang), std::sin(ang));
    }
    out[k] = std::complex<T>(acc);
  }
}

template <typename T>
void fft_1d(std::complex<T>* x, int n, std::vector<std::complex<T>>& scratch) {
  if (is_pow2(n)) {
    fft_pow2(x, n);
    return;
  }
  scratch.resize(n);
  dft_direct(x, scratch.data(), n);
  std::copy(scratch.begin(), scratch.end(), x);
}

// 2D DFT of a PxP plane via row-column decomposition, in place.
template <typename T>
void fft_2d(std::complex<T>* plane, int p) {
  std::vector<std::complex<T>> scratch;
  std::vector<std::complex<T>> col(p);
  for (int r = 0; r < p; ++r) fft_1d(plane + static_cast<size_t>(r) * p, p, scratch);
  for (int c = 0; c < p; ++c) {
    for (int r = 0; r < p; ++r) col[r] = plane[static_cast<size_t>(r) * p + c];
    fft_1d(col.data(), p, scratch);
    for (int r = 0; r < p; ++r) plane[static_cast<size_t>(r) * p + c] = col[r];
  }
}

// Spectrum of one channel plane stored for the loss backward pass.
template <typename T>
struct Spectrum {
  cvec<T> freq;           // P*P complex bins
  std::vector<T> mag;     // |freq|
};

// pixels: PxP row-major (single channel). Throws on non-square use by caller.
template <typename T>
Spectrum<T> fft_magnitude_plane(const T* pixels, int p) {
  Spectrum<T> s;
  s.freq.resize(static_cast<size_t>(p) * p);
  for (int i = 0; i < p * p; ++i) s.freq[i] = std::complex<T>(pixels[i], T(0));
  fft_2d(s.freq.data(), p);
  s.mag.resize(s.freq.size());
  for (size_t i = 0; i < s.freq.size(); ++i) s.mag[i] = std::abs(s.freq[i]);
  return s;
}

// Gradient of sum_k g_k * |F(x)|_k with respect to the real pixels x.
// d|z_k|/dx_j = Re(conj(z_k)/|z_k| * W_kj) and W^T = W for the DFT matrix,
// so the pixel gradient is Re(DFT2(g .* conj(z)/|z|)). Bins with |z| = 0
// contribute zero (subgradient convention).
template <typename T>
void fft_magnitude_backward_plane(const Spectrum<T>& s, const T* dmag, T* dpixels, int p) {
  cvec<T> u(static_cast<size_t>(p) * p);
  for (int i = 0; i < p * p; ++i) {
    T m = s.mag[i];
    if (m > T(0)) {
      std::complex<T> dir = std::conj(s.freq[i]) / m;
      u[i] = dir * dmag[i];
    } else {
      u[i] = std::complex<T>(T(0), T(0));
    }
  }
  fft_2d(u.data(), p);
  for (int i = 0; i < p * p; ++i) dpixels[i] += u[i].real();
}

}  // namespace phenom::fft
