#pragma once

#include <cmath>
#include <cstddef>

#include "phenom/matrix.hpp"
#include "phenom/parallel.hpp"

// Data-parallel compute kernels. Each kernel parallelizes over independent
// output rows (or elements) and keeps the per-output loop serial with a
// double accumulator, so Exec::serial and Exec::parallel are bit-identical
// and float32 models keep well-conditioned sums.

namespace phenom::kernels {

// C = A * B, A: MxK, B: KxN, C: MxN. The inner loop walks B rows
// contiguously and keeps per-output double accumulators; the summation
// order over k is fixed, so serial and parallel agree bitwise.
template <typename T>
void matmul(const T* a, const T* b, T* c, int m, int k, int n, Exec ex) {
#pragma omp parallel for schedule(static) if (ex == Exec::parallel)
  for (int i = 0; i < m; ++i) {
    const T* ai = a + static_cast<size_t>(i) * k;
    T* ci = c + static_cast<size_t>(i) * n;
    std::vector<double> acc(n, 0.0);
    for (int p = 0; p < k; ++p) {
      const double ap = ai[p];
      const T* bp = b + static_cast<size_t>(p) * n;
      for (int j = 0; j < n; ++j) acc[j] += ap * static_cast<double>(bp[j]);
    }
    for (int j = 0; j < n; ++j) ci[j] = static_cast<T>(acc[j]);
  }
}

// C = A * B^T, A: MxK, B: NxK, C: MxN. Four fixed partial sums per output;
// the reassociation is deterministic for any thread count.
template <typename T>
void matmul_nt(const T* a, const T* b, T* c, int m, int k, int n, Exec ex) {
#pragma omp parallel for schedule(static) if (ex == Exec::parallel)
  for (int i = 0; i < m; ++i) {
    const T* ai = a + static_cast<size_t>(i) * k;
    T* ci = c + static_cast<size_t>(i) * n;
    for (int j = 0; j < n; ++j) {
      const T* bj = b + static_cast<size_t>(j) * k;
      double a0 = 0.0, a1 = 0.0, a2 = 0.0, a3 = 0.0;
      int p = 0;
      for (; p + 4 <= k; p += 4) {
        a0 += static_cast<double>(ai[p]) * bj[p];
        a1 += static_cast<double>(ai[p + 1]) * bj[p + 1];
        a2 += static_cast<double>(ai[p + 2]) * bj[p + 2];
        a3 += static_cast<double>(ai[p + 3]) * bj[p + 3];
      }
      double acc = (a0 + a1) + (a2 + a3);
      for (; p < k; ++p) acc += static_cast<double>(ai[p]) * bj[p];
      ci[j] = static_cast<T>(acc);
    }
  }
}

// C (+)= A^T * B, A: KxM, B: KxN, C: MxN. Used for weight gradients.
template <typename T>
void matmul_tn(const T* a, const T* b, T* c, int m, int k, int n, bool accumulate, Exec ex) {
#pragma omp parallel for schedule(static) if (ex == Exec::parallel)
  for (int i = 0; i < m; ++i) {
    T* ci = c + static_cast<size_t>(i) * n;
    std::vector<double> acc(n);
    for (int j = 0; j < n; ++j) acc[j] = accumulate ? static_cast<double>(ci[j]) : 0.0;
    for (int p = 0; p < k; ++p) {
      const double ap = a[static_cast<size_t>(p) * m + i];
      const T* bp = b + static_cast<size_t>(p) * n;
      for (int j = 0; j < n; ++j) acc[j] += ap * static_cast<double>(bp[j]);
    }
    for (int j = 0; j < n; ++j) ci[j] = static_cast<T>(acc[j]);
  }
}

template <typename T>
void add_row_vector(T* x, const T* v, int rows, int cols, Exec ex) {
#pragma omp parallel for schedule(static) if (ex == Exec::parallel)
  for (int i = 0; i < rows; ++i) {
    T* xi = x + static_cast<size_t>(i) * cols;
    for (int j = 0; j < cols; ++j) xi[j] += v[j];
  }
}

// Column-wise sum of a MxN matrix into out[N]; serial fixed order so results
// do not depend on the thread count. Cheap relative to the matmuls around it.
template <typename T>
void column_sums(const T* x, int rows, int cols, T* out, bool accumulate) {
  if (!accumulate)
    for (int j = 0; j < cols; ++j) out[j] = T(0);
  for (int i = 0; i < rows; ++i) {
    const T* xi = x + static_cast<size_t>(i) * cols;
    for (int j = 0; j < cols; ++j) out[j] += xi[j];
  }
}

// exact GELU (erf form)
template <typename T>
inline T gelu(T x) {
  return static_cast<T>(0.5 * static_cast<double>(x) *
                        (1.0 + std::erf(static_cast<double>(x) / std::sqrt(2.0))));
}

template <typename T>
inline T gelu_grad(T x) {
  double xd = static_cast<double>(x);
  double cdf = 0.5 * (1.0 + std::erf(xd / std::sqrt(2.0)));
  double pdf = std::exp(-0.5 * xd * xd) / std::sqrt(2.0 * 3.14159265358979323846);
  return static_cast<T>(cdf + xd * pdf);
}

template <typename T>
void gelu_rows(const T* x, T* y, int rows, int cols, Exec ex) {
#pragma omp parallel for schedule(static) if (ex == Exec::parallel)
  for (int i = 0; i < rows; ++i) {
    const T* xi = x + static_cast<size_t>(i) * cols;
    T* yi = y + static_cast<size_t>(i) * cols;
    for (int j = 0; j < cols; ++j) yi[j] = gelu(xi[j]);
  }
}

// y = LN(x) * gamma + beta per row; saves mean and reciprocal std for backward.
template <typename T>
void layernorm_forward(const T* x, const T* gamma, const T* beta, T* y, T* mean_out,
                       T* rstd_out, int rows, int cols, double eps, Exec ex) {
#pragma omp parallel for schedule(static) if (ex == Exec::parallel)
  for (int i = 0; i < rows; ++i) {
    const T* xi = x + static_cast<size_t>(i) * cols;
    T* yi = y + static_cast<size_t>(i) * cols;
    double mu = 0.0;
    for (int j = 0; j < cols; ++j) mu += xi[j];
    mu /= cols;
    double var = 0.0;
    for (int j = 0; j < cols; ++j) {
      double d = xi[j] - mu;
      var += d * d;
    }
    var /= cols;
    double rstd = 1.0 / std::sqrt(var + eps);
    mean_out[i] = static_cast<T>(mu);
    rstd_out[i] = static_cast<T>(rstd);
    for (int j = 0; j < cols; ++j) {
      double xhat = (xi[j] - mu) * rstd;
      yi[j] = static_cast<T>(xhat * gamma[j] + beta[j]);
    }
  }
}

// dx for layernorm; dgamma/dbeta accumulated serially by the caller.
template <typename T>
void layernorm_backward_input(const T* x, const T* gamma, const T* mean, const T* rstd,
                              const T* dy, T* dx, int rows, int cols, Exec ex) {
#pragma omp parallel for schedule(static) if (ex == Exec::parallel)
  for (int i = 0; i < rows; ++i) {
    const T* xi = x + static_cast<size_t>(i) * cols;
    const T* dyi = dy + static_cast<size_t>(i) * cols;
    T* dxi = dx + static_cast<size_t>(i) * cols;
    double mu = mean[i], rs = rstd[i];
    double sum_dyg = 0.0, sum_dyg_xhat = 0.0;
    for (int j = 0; j < cols; ++j) {
      double xhat = (xi[j] - mu) * rs;
      double g = static_cast<double>(dyi[j]) * gamma[j];
      sum_dyg += g;
      sum_dyg_xhat += g * xhat;
    }
    for (int j = 0; j < cols; ++j) {
      double xhat = (xi[j] - mu) * rs;
      double g = static_cast<double>(dyi[j]) * gamma[j];
      dxi[j] = static_cast<T>(rs * (g - sum_dyg / cols - xhat * sum_dyg_xhat / cols));
    }
  }
}

// Row-wise softmax in place.
template <typename T>
void softmax_rows(T* x, int rows, int cols, Exec ex) {
#pragma omp parallel for schedule(static) if (ex == Exec::parallel)
  for (int i = 0; i < rows; ++i) {
    T* xi = x + static_cast<size_t>(i) * cols;
    double mx = xi[0];
    for (int j = 1; j < cols; ++j) mx = std::max(mx, static_cast<double>(xi[j]));
    double sum = 0.0;
    for (int j = 0; j < cols; ++j) {
      double e = std::exp(static_cast<double>(xi[j]) - mx);
      xi[j] = static_cast<T>(e);
      sum += e;
    }
    for (int j = 0; j < cols; ++j) xi[j] = static_cast<T>(xi[j] / sum);
  }
}

// MxM cosine similarity of the rows of an MxD matrix. Entries clamped to
// [-1,1]; diagonal forced to 1. Throws nothing: caller validates zero rows.
template <typename T>
void cosine_similarity(const T* x, int m, int d, T* sims, Exec ex) {
#pragma omp parallel for schedule(static) if (ex == Exec::parallel)
  for (int i = 0; i < m; ++i) {
    const T* xi = x + static_cast<size_t>(i) * d;
    double ni = 0.0;
    for (int p = 0; p < d; ++p) ni += static_cast<double>(xi[p]) * xi[p];
    ni = std::sqrt(ni);
    for (int j = 0; j < m; ++j) {
      if (j == i) {
        sims[static_cast<size_t>(i) * m + j] = T(1);
        continue;
      }
      const T* xj = x + static_cast<size_t>(j) * d;
      double nj = 0.0, dot = 0.0;
      for (int p = 0; p < d; ++p) {
        nj += static_cast<double>(xj[p]) * xj[p];
        dot += static_cast<double>(xi[p]) * xj[p];
      }
      double v = dot / (ni * std::sqrt(nj));
      v = std::min(1.0, std::max(-1.0, v));
      sims[static_cast<size_t>(i) * m + j] = static_cast<T>(v);
    }
  }
}

}  // namespace phenom::kernels
