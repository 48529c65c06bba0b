#pragma once

#include <cmath>
#include <complex>
#include <cstddef>
#include <vector>

// Serial reference implementations, written independently of the kernels and
// kept for testing and benchmarking. No OpenMP, no double-accumulator tricks
// beyond what correctness needs; these are the oracles the fast paths are
// checked against.

namespace phenom::reference {

template <typename T>
void matmul(const T* a, const T* b, T* c, int m, int k, int n) {
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < n; ++j) {
      double acc = 0.0;
      for (int p = 0; p < k; ++p)
        acc += static_cast<double>(a[static_cast<size_t>(i) * k + p]) *
               static_cast<double>(b[static_cast<size_t>(p) * n + j]);
      c[static_cast<size_t>(i) * n + j] = static_cast<T>(acc);
    }
}

// Brute-force O(P^4) 2D DFT magnitude of one PxP plane.
template <typename T>
std::vector<T> dft2_magnitude(const T* pixels, int p) {
  std::vector<T> mag(static_cast<size_t>(p) * p);
  const double two_pi = 2.0 * 3.14159265358979323846;
  for (int ku = 0; ku < p; ++ku)
    for (int kv = 0; kv < p; ++kv) {
      std::complex<double> acc(0.0, 0.0);
      for (int y = 0; y < p; ++y)
        for (int x = 0; x < p; ++x) {
          double ang = -two_pi * (static_cast<double>(ku) * y + static_cast<double>(kv) * x) / p;
          acc += static_cast<double>(pixels[static_cast<size_t>(y) * p + x]) *
                 std::complex<double>(std::cos(ang), std::sin(ang));
        }
      mag[static_cast<size_t>(ku) * p + kv] = static_cast<T>(std::abs(acc));
    }
  return mag;
}

template <typename T>
void cosine_similarity(const T* x, int m, int d, T* sims) {
  std::vector<double> norms(m);
  for (int i = 0; i < m; ++i) {
    double n = 0.0;
    for (int p = 0; p < d; ++p) {
      double v = x[static_cast<size_t>(i) * d + p];
      n += v * v;
    }
    norms[i] = std::sqrt(n);
  }
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < m; ++j) {
      if (i == j) {
        sims[static_cast<size_t>(i) * m + j] = T(1);
        continue;
      }
      double dot = 0.0;
      for (int p = 0; p < d; ++p)
        dot += static_cast<double>(x[static_cast<size_t>(i) * d + p]) *
               static_cast<double>(x[static_cast<size_t>(j) * d + p]);
      double v = dot / (norms[i] * norms[j]);
      v = std::min(1.0, std::max(-1.0, v));
      sims[static_cast<size_t>(i) * m + j] = static_cast<T>(v);
    }
}

}  // namespace phenom::reference
