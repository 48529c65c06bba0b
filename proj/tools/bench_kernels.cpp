// Timing harness comparing the serial and OpenMP paths of the compute
// kernels, plus the independent reference implementations. Results must be
// bit-identical between modes; the table prints a max-abs-diff column as a
// sanity check alongside the speedup.

#include <chrono>
#include <cstdio>
#include <random>
#include <string>
#include <vector>

#include "phenom/fft.hpp"
#include "phenom/image.hpp"
#include "phenom/kernels.hpp"
#include "phenom/parallel.hpp"
#include "phenom/reference.hpp"
#include "phenom/synth.hpp"

using namespace phenom;

namespace {

double now_ms() {
  using clock = std::chrono::steady_clock;
  return std::chrono::duration<double, std::milli>(clock::now().time_since_epoch()).count();
}

template <typename F>
double time_best_of(F&& fn, int reps) {
  double best = 1e300;
  for (int r = 0; r < reps; ++r) {
    double t0 = now_ms();
    fn();
    best = std::min(best, now_ms() - t0);
  }
  return best;
}

void report(const std::string& name, double serial_ms, double parallel_ms, double max_diff) {
  std::printf("%-28s %10.2f ms %10.2f ms %7.2fx %12.3e\n", name.c_str(), serial_ms, parallel_ms,
              serial_ms / parallel_ms, max_diff);
}

double max_abs_diff(const std::vector<float>& a, const std::vector<float>& b) {
  double m = 0.0;
  for (size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(double(a[i]) - b[i]));
  return m;
}

}  // namespace

int main(int argc, char** argv) {
  int reps = 3;
  if (argc > 1) reps = std::atoi(argv[1]);
  std::printf("threads available: %d\n", max_threads());
  std::printf("%-28s %13s %13s %8s %12s\n", "kernel", "serial", "parallel", "speedup",
              "max|diff|");

  std::mt19937_64 rng(7);
  std::normal_distribution<float> g(0.f, 1.f);

  {  // matmul 384x384 * 384x384
    const int n = 384;
    std::vector<float> a(n * n), b(n * n), c_s(n * n), c_p(n * n), c_ref(n * n);
    for (auto& x : a) x = g(rng);
    for (auto& x : b) x = g(rng);
    double ts = time_best_of([&] { kernels::matmul(a.data(), b.data(), c_s.data(), n, n, n, Exec::serial); }, reps);
    double tp = time_best_of([&] { kernels::matmul(a.data(), b.data(), c_p.data(), n, n, n, Exec::parallel); }, reps);
    reference::matmul(a.data(), b.data(), c_ref.data(), n, n, n);
    report("matmul 384^3", ts, tp, std::max(max_abs_diff(c_s, c_p), max_abs_diff(c_p, c_ref)));
  }

  {  // batched fft magnitudes, 4096 16x16 patches
    const int p = 16, n_patches = 4096;
    std::vector<float> patches(n_patches * p * p);
    for (auto& x : patches) x = g(rng);
    std::vector<float> mag_s(n_patches * p * p), mag_p(n_patches * p * p);
    auto run = [&](Exec ex, std::vector<float>& out) {
#pragma omp parallel for schedule(static) if (ex == Exec::parallel)
      for (int i = 0; i < n_patches; ++i) {
        auto s = fft::fft_magnitude_plane(patches.data() + i * p * p, p);
        std::copy(s.mag.begin(), s.mag.end(), out.begin() + i * p * p);
      }
    };
    double ts = time_best_of([&] { run(Exec::serial, mag_s); }, reps);
    double tp = time_best_of([&] { run(Exec::parallel, mag_p); }, reps);
    auto ref = reference::dft2_magnitude(patches.data(), p);  // first patch oracle
    double diff = max_abs_diff(mag_s, mag_p);
    for (int k = 0; k < p * p; ++k) diff = std::max(diff, std::abs(double(mag_s[k]) - ref[k]));
    report("fft-mag 4096x16x16", ts, tp, diff);
  }

  {  // cosine similarity 512 x 256
    const int m = 512, d = 256;
    std::vector<float> x(m * d), s_s(m * m), s_p(m * m), s_ref(m * m);
    for (auto& v : x) v = g(rng) + 0.1f;
    double ts = time_best_of([&] { kernels::cosine_similarity(x.data(), m, d, s_s.data(), Exec::serial); }, reps);
    double tp = time_best_of([&] { kernels::cosine_similarity(x.data(), m, d, s_p.data(), Exec::parallel); }, reps);
    reference::cosine_similarity(x.data(), m, d, s_ref.data());
    report("cosine-sim 512x256", ts, tp, std::max(max_abs_diff(s_s, s_p), max_abs_diff(s_p, s_ref)));
  }

  {  // synthetic well rendering
    SynthConfig cfg;
    cfg.n_genes = 4;
    cfg.n_replicates_per_gene = 4;
    cfg.n_plates = 2;
    cfg.n_experiments = 2;
    cfg.image_size = 256;
    cfg.seed = 3;
    double ts = time_best_of([&] { generate_synthetic_dataset(cfg, Exec::serial); }, 1);
    double tp = time_best_of([&] { generate_synthetic_dataset(cfg, Exec::parallel); }, 1);
    auto a = generate_synthetic_dataset(cfg, Exec::serial);
    auto b = generate_synthetic_dataset(cfg, Exec::parallel);
    double diff = 0.0;
    for (size_t w = 0; w < a.first.size(); ++w)
      diff = std::max(diff, max_abs_diff(a.first[w].pixels, b.first[w].pixels));
    report("synth 32 wells 256^2x6", ts, tp, diff);
  }

  {  // image tiling + standardization
    SynthConfig cfg;
    cfg.n_genes = 1;
    cfg.n_replicates_per_gene = 1;
    cfg.image_size = 1024;
    cfg.seed = 5;
    auto ds = generate_synthetic_dataset(cfg, Exec::serial);
    const WellImage& img = ds.first.back();
    double ts = time_best_of([&] { tile_image(img, 256, Exec::serial); }, reps);
    double tp = time_best_of([&] { tile_image(img, 256, Exec::parallel); }, reps);
    auto ca = tile_image(img, 256, Exec::serial);
    auto cb = tile_image(img, 256, Exec::parallel);
    double diff = 0.0;
    for (size_t i = 0; i < ca.size(); ++i) diff = std::max(diff, max_abs_diff(ca[i].pixels, cb[i].pixels));
    report("tile+standardize 1024^2", ts, tp, diff);
  }

  return 0;
}
