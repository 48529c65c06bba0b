#include "phenom/image.hpp"

#include <cmath>
#include <random>
#include <set>
#include <stdexcept>

#include "phenom/rng.hpp"

namespace phenom {

void WellImage::validate() const {
  if (height <= 0 || width <= 0 || channels < 1)
    throw std::invalid_argument("WellImage: non-positive dimensions");
  if (pixels.size() != static_cast<size_t>(height) * width * channels)
    throw std::invalid_argument("WellImage: pixel buffer size mismatch");
  if (channel_names.size() != static_cast<size_t>(channels))
    throw std::invalid_argument("WellImage: channel_names length != channels");
  std::set<std::string> uniq(channel_names.begin(), channel_names.end());
  if (uniq.size() != channel_names.size())
    throw std::invalid_argument("WellImage: duplicate channel names");
}

Crop self_standardize(const Crop& crop) {
  if (crop.standardized)
    throw std::invalid_argument("self_standardize: crop already standardized");
  constexpr double kEps = 1e-6;
  Crop out = crop;
  const int s = crop.size, c = crop.channels;
  const size_t plane = static_cast<size_t>(s) * s;
  for (int ch = 0; ch < c; ++ch) {
    double mean = 0.0;
    for (size_t i = 0; i < plane; ++i) mean += crop.pixels[i * c + ch];
    mean /= static_cast<double>(plane);
    double var = 0.0;
    for (size_t i = 0; i < plane; ++i) {
      double d = crop.pixels[i * c + ch] - mean;
      var += d * d;
    }
    var /= static_cast<double>(plane);
    double denom = std::max(std::sqrt(var), kEps);
    for (size_t i = 0; i < plane; ++i)
      out.pixels[i * c + ch] = static_cast<float>((crop.pixels[i * c + ch] - mean) / denom);
  }
  out.standardized = true;
  return out;
}

Crop extract_crop(const WellImage& image, int row_offset, int col_offset, int size) {
  if (row_offset < 0 || col_offset < 0 || row_offset + size > image.height ||
      col_offset + size > image.width)
    throw std::invalid_argument("extract_crop: crop exceeds image bounds");
  Crop crop;
  crop.size = size;
  crop.channels = image.channels;
  crop.pixels.resize(static_cast<size_t>(size) * size * image.channels);
  crop.well_id = image.well_id;
  crop.row_offset = row_offset;
  crop.col_offset = col_offset;
  const int c = image.channels;
  for (int y = 0; y < size; ++y) {
    const float* src =
        image.pixels.data() +
        (static_cast<size_t>(row_offset + y) * image.width + col_offset) * c;
    float* dst = crop.pixels.data() + static_cast<size_t>(y) * size * c;
    std::copy(src, src + static_cast<size_t>(size) * c, dst);
  }
  return crop;
}

std::vector<Crop> tile_image(const WellImage& image, int crop_size, Exec ex) {
  if (crop_size <= 0 || image.height % crop_size != 0 || image.width % crop_size != 0)
    throw std::invalid_argument("tile_image: image dimensions not divisible by crop size");
  const int rows = image.height / crop_size;
  const int cols = image.width / crop_size;
  std::vector<Crop> crops(static_cast<size_t>(rows) * cols);
#pragma omp parallel for schedule(static) if (ex == Exec::parallel)
  for (int idx = 0; idx < rows * cols; ++idx) {
    int r = idx / cols, cc = idx % cols;
    crops[idx] = self_standardize(extract_crop(image, r * crop_size, cc * crop_size, crop_size));
  }
  return crops;
}

Crop random_crop(const WellImage& image, int size, uint64_t seed) {
  if (size > image.height || size > image.width)
    throw std::invalid_argument("random_crop: size exceeds image dimensions");
  auto rng = make_rng(mix_seed(seed, 0x43524f50ULL));
  std::uniform_int_distribution<int> row_d(0, image.height - size);
  std::uniform_int_distribution<int> col_d(0, image.width - size);
  int r = row_d(rng);
  int c = col_d(rng);
  return self_standardize(extract_crop(image, r, c, size));
}

Crop flip_horizontal(const Crop& crop) {
  Crop out = crop;
  const int s = crop.size, c = crop.channels;
  for (int y = 0; y < s; ++y)
    for (int x = 0; x < s; ++x)
      for (int ch = 0; ch < c; ++ch) out.at(y, x, ch) = crop.at(y, s - 1 - x, ch);
  return out;
}

Crop flip_vertical(const Crop& crop) {
  Crop out = crop;
  const int s = crop.size, c = crop.channels;
  for (int y = 0; y < s; ++y)
    for (int x = 0; x < s; ++x)
      for (int ch = 0; ch < c; ++ch) out.at(y, x, ch) = crop.at(s - 1 - y, x, ch);
  return out;
}

Crop augment_flips(const Crop& crop, uint64_t seed) {
  auto rng = make_rng(mix_seed(seed, 0x464c4950ULL));
  std::uniform_real_distribution<double> u(0.0, 1.0);
  bool h = u(rng) < 0.5;
  bool v = u(rng) < 0.5;
  Crop out = crop;
  if (h) out = flip_horizontal(out);
  if (v) out = flip_vertical(out);
  return out;
}

}  // namespace phenom
