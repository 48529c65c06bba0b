#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <random>

#include "phenom/fft.hpp"
#include "phenom/reference.hpp"

using namespace phenom;

namespace {

std::vector<double> random_patch(int p, uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> g(0.0, 1.0);
  std::vector<double> v(static_cast<size_t>(p) * p);
  for (auto& x : v) x = g(rng);
  return v;
}

std::vector<double> circular_shift(const std::vector<double>& plane, int p, int dy, int dx) {
  std::vector<double> out(plane.size());
  for (int y = 0; y < p; ++y)
    for (int x = 0; x < p; ++x)
      out[((y + dy) % p) * p + ((x + dx) % p)] = plane[y * p + x];
  return out;
}

}  // namespace

TEST_CASE("all-zero patch gives all-zero magnitudes") {
  std::vector<double> zeros(64, 0.0);
  auto s = fft::fft_magnitude_plane(zeros.data(), 8);
  for (double m : s.mag) CHECK(m == 0.0);
}

TEST_CASE("constant patch: DC bin P^2*c, all other bins zero") {
  const int p = 8;
  const double c = 3.25;
  std::vector<double> plane(p * p, c);
  auto s = fft::fft_magnitude_plane(plane.data(), p);
  CHECK(s.mag[0] == doctest::Approx(64.0 * c).epsilon(1e-12));
  for (size_t k = 1; k < s.mag.size(); ++k) CHECK(std::abs(s.mag[k]) < 1e-10);
}

TEST_CASE("fft magnitude matches the brute-force O(P^4) DFT oracle") {
  for (int p : {4, 8, 16}) {
    auto plane = random_patch(p, 100 + p);
    auto fast = fft::fft_magnitude_plane(plane.data(), p);
    auto slow = reference::dft2_magnitude(plane.data(), p);
    for (int k = 0; k < p * p; ++k)
      CHECK(fast.mag[k] == doctest::Approx(slow[k]).epsilon(1e-9));
  }
}

TEST_CASE("non-power-of-two sizes fall back to the direct transform") {
  const int p = 6;
  auto plane = random_patch(p, 42);
  auto fast = fft::fft_magnitude_plane(plane.data(), p);
  auto slow = reference::dft2_magnitude(plane.data(), p);
  for (int k = 0; k < p * p; ++k) CHECK(fast.mag[k] == doctest::Approx(slow[k]).epsilon(1e-9));
}

TEST_CASE("magnitudes are invariant to circular spatial shifts") {
  const int p = 8;
  auto plane = random_patch(p, 5);
  auto shifted = circular_shift(plane, p, 3, 5);
  auto a = fft::fft_magnitude_plane(plane.data(), p);
  auto b = fft::fft_magnitude_plane(shifted.data(), p);
  for (int k = 0; k < p * p; ++k) CHECK(a.mag[k] == doctest::Approx(b.mag[k]).epsilon(1e-10));
}

TEST_CASE("magnitude backward matches finite differences of sum(g .* |F(x)|)") {
  const int p = 8;
  auto plane = random_patch(p, 9);
  auto weights = random_patch(p, 10);
  std::vector<double> grad(p * p, 0.0);
  {
    auto s = fft::fft_magnitude_plane(plane.data(), p);
    std::vector<double> dmag(p * p);
    for (int k = 0; k < p * p; ++k) dmag[k] = weights[k];
    fft::fft_magnitude_backward_plane(s, dmag.data(), grad.data(), p);
  }
  auto eval = [&](const std::vector<double>& x) {
    auto s = fft::fft_magnitude_plane(x.data(), p);
    double total = 0.0;
    for (int k = 0; k < p * p; ++k) total += weights[k] * s.mag[k];
    return total;
  };
  const double h = 1e-6;
  for (int idx : {0, 7, 13, 31, 63}) {
    auto xp = plane, xm = plane;
    xp[idx] += h;
    xm[idx] -= h;
    double num = (eval(xp) - eval(xm)) / (2 * h);
    CHECK(grad[idx] == doctest::Approx(num).epsilon(1e-5));
  }
}

TEST_CASE("float instantiation stays close to the double oracle") {
  const int p = 16;
  auto planed = random_patch(p, 77);
  std::vector<float> planef(planed.begin(), planed.end());
  auto sf = fft::fft_magnitude_plane(planef.data(), p);
  auto slow = reference::dft2_magnitude(planed.data(), p);
  for (int k = 0; k < p * p; ++k)
    CHECK(static_cast<double>(sf.mag[k]) == doctest::Approx(slow[k]).epsilon(5e-5));
}
