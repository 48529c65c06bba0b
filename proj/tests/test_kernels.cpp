#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <random>

#include "phenom/kernels.hpp"
#include "phenom/reference.hpp"

using namespace phenom;

namespace {

template <typename T>
std::vector<T> random_vec(size_t n, uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> g(0.0, 1.0);
  std::vector<T> v(n);
  for (auto& x : v) x = static_cast<T>(g(rng));
  return v;
}

}  // namespace

TEST_CASE("matmul parallel path is bit-identical to serial and matches the reference") {
  const int m = 37, k = 29, n = 41;
  auto a = random_vec<float>(m * k, 1);
  auto b = random_vec<float>(k * n, 2);
  std::vector<float> c_serial(m * n), c_parallel(m * n), c_ref(m * n);
  kernels::matmul(a.data(), b.data(), c_serial.data(), m, k, n, Exec::serial);
  kernels::matmul(a.data(), b.data(), c_parallel.data(), m, k, n, Exec::parallel);
  reference::matmul(a.data(), b.data(), c_ref.data(), m, k, n);
  for (int i = 0; i < m * n; ++i) {
    CHECK(c_serial[i] == c_parallel[i]);  // exact: disjoint writes, serial inner loop
    CHECK(c_serial[i] == doctest::Approx(c_ref[i]).epsilon(1e-6));
  }
}

TEST_CASE("matmul_nt and matmul_tn agree with explicitly transposed reference matmul") {
  const int m = 13, k = 17, n = 11;
  auto a = random_vec<double>(m * k, 3);
  auto b = random_vec<double>(n * k, 4);  // n x k, used as B^T
  std::vector<double> c(m * n), c_ref(m * n), bt(k * n);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < k; ++j) bt[j * n + i] = b[i * k + j];
  kernels::matmul_nt(a.data(), b.data(), c.data(), m, k, n, Exec::parallel);
  reference::matmul(a.data(), bt.data(), c_ref.data(), m, k, n);
  for (int i = 0; i < m * n; ++i) CHECK(c[i] == doctest::Approx(c_ref[i]).epsilon(1e-12));

  // tn: C = A^T * B with A: k x m
  auto a2 = random_vec<double>(k * m, 5);
  std::vector<double> at(m * k);
  for (int i = 0; i < k; ++i)
    for (int j = 0; j < m; ++j) at[j * k + i] = a2[i * m + j];
  std::vector<double> b2 = random_vec<double>(k * n, 6), c2(m * n, 0.5), c2_ref(m * n);
  kernels::matmul_tn(a2.data(), b2.data(), c2.data(), m, k, n, /*accumulate=*/false,
                     Exec::serial);
  reference::matmul(at.data(), b2.data(), c2_ref.data(), m, k, n);
  for (int i = 0; i < m * n; ++i) CHECK(c2[i] == doctest::Approx(c2_ref[i]).epsilon(1e-12));

  // accumulate=true adds on top
  std::vector<double> c3(m * n, 1.0);
  kernels::matmul_tn(a2.data(), b2.data(), c3.data(), m, k, n, true, Exec::parallel);
  for (int i = 0; i < m * n; ++i) CHECK(c3[i] == doctest::Approx(1.0 + c2_ref[i]).epsilon(1e-12));
}

TEST_CASE("layernorm forward/backward match finite differences") {
  const int rows = 3, cols = 8;
  auto x = random_vec<double>(rows * cols, 7);
  auto gamma = random_vec<double>(cols, 8);
  auto beta = random_vec<double>(cols, 9);
  std::vector<double> y(rows * cols), mean(rows), rstd(rows);
  kernels::layernorm_forward(x.data(), gamma.data(), beta.data(), y.data(), mean.data(),
                             rstd.data(), rows, cols, 1e-6, Exec::serial);

  // loss = sum(y * w); check dx against central differences
  auto w = random_vec<double>(rows * cols, 10);
  std::vector<double> dx(rows * cols);
  kernels::layernorm_backward_input(x.data(), gamma.data(), mean.data(), rstd.data(), w.data(),
                                    dx.data(), rows, cols, Exec::parallel);
  const double h = 1e-6;
  for (int idx : {0, 5, 11, 17, 23}) {
    auto eval = [&](double delta) {
      auto xp = x;
      xp[idx] += delta;
      std::vector<double> yp(rows * cols), mp(rows), rp(rows);
      kernels::layernorm_forward(xp.data(), gamma.data(), beta.data(), yp.data(), mp.data(),
                                 rp.data(), rows, cols, 1e-6, Exec::serial);
      double s = 0;
      for (int i = 0; i < rows * cols; ++i) s += yp[i] * w[i];
      return s;
    };
    double num = (eval(h) - eval(-h)) / (2 * h);
    CHECK(dx[idx] == doctest::Approx(num).epsilon(1e-5));
  }
}

TEST_CASE("softmax rows: normalized, parallel identical to serial") {
  const int rows = 9, cols = 31;
  auto x = random_vec<float>(rows * cols, 11);
  auto x2 = x;
  kernels::softmax_rows(x.data(), rows, cols, Exec::serial);
  kernels::softmax_rows(x2.data(), rows, cols, Exec::parallel);
  for (int i = 0; i < rows * cols; ++i) CHECK(x[i] == x2[i]);
  for (int i = 0; i < rows; ++i) {
    double s = 0;
    for (int j = 0; j < cols; ++j) s += x[i * cols + j];
    CHECK(s == doctest::Approx(1.0).epsilon(1e-5));
  }
}

TEST_CASE("cosine similarity kernel equals reference, diagonal one, range bounded") {
  const int m = 23, d = 7;
  auto x = random_vec<double>(m * d, 12);
  std::vector<double> s(m * m), s_ref(m * m);
  kernels::cosine_similarity(x.data(), m, d, s.data(), Exec::parallel);
  reference::cosine_similarity(x.data(), m, d, s_ref.data());
  for (int i = 0; i < m; ++i) {
    CHECK(s[i * m + i] == 1.0);
    for (int j = 0; j < m; ++j) {
      CHECK(s[i * m + j] == doctest::Approx(s_ref[i * m + j]).epsilon(1e-12));
      CHECK(s[i * m + j] <= 1.0);
      CHECK(s[i * m + j] >= -1.0);
    }
  }
}

TEST_CASE("gelu gradient matches finite differences") {
  for (double x : {-2.5, -0.7, 0.0, 0.3, 1.9}) {
    const double h = 1e-6;
    double num = (kernels::gelu(x + h) - kernels::gelu(x - h)) / (2 * h);
    CHECK(kernels::gelu_grad(x) == doctest::Approx(num).epsilon(1e-6));
  }
}
