#include "fixtures.hpp"

#include <atomic>
#include <cmath>
#include <fstream>
#include <unistd.h>

namespace admmprune::fixture {

Dataset toy_dataset(const FeatureShape& shape, std::size_t classes, std::size_t count, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> pixel(0.0, 1.0);
  const std::size_t n = shape.numel();
  // Class c owns a horizontal band of rows; the brightest band (by mean) wins.
  std::vector<double> templates(classes * n, 0.0);
  std::vector<double> band_size(classes, 0.0);
  for (std::size_t k = 0; k < n; ++k) band_size[((k / shape.width) % shape.height) * classes / shape.height] += 1.0;
  for (std::size_t k = 0; k < n; ++k) {
    const std::size_t band = ((k / shape.width) % shape.height) * classes / shape.height;
    templates[band * n + k] = 1.0 / band_size[band];
  }
  Dataset d;
  d.count = count;
  d.channels = shape.channels;
  d.height = shape.height;
  d.width = shape.width;
  d.classes = classes;
  d.images.resize(count * n);
  for (std::size_t i = 0; i < count; ++i) {
    double best = -1e300;
    std::uint8_t label = 0;
    for (std::size_t k = 0; k < n; ++k) d.images[i * n + k] = pixel(rng);
    for (std::size_t c = 0; c < classes; ++c) {
      double s = 0.0;
      for (std::size_t k = 0; k < n; ++k) s += templates[c * n + k] * d.images[i * n + k];
      if (s > best) best = s, label = static_cast<std::uint8_t>(c);
    }
    d.labels.push_back(label);
  }
  return d;
}

Model toy_model(std::size_t classes, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  Model m;
  m.input = FeatureShape{1, 6, 6};
  m.classes = classes;
  Layer conv;
  conv.name = "conv";
  conv.weights = WeightTensor::conv(4, 1, 3, 3);
  conv.bias.values.assign(4, 0.0);
  conv.padding = 1;
  conv.pooling = Pooling::max2;
  Layer fc1;
  fc1.name = "fc1";
  fc1.weights = WeightTensor::fc(8, 36);
  fc1.bias.values.assign(8, 0.0);
  Layer fc2;
  fc2.name = "fc2";
  fc2.weights = WeightTensor::fc(classes, 8);
  fc2.bias.values.assign(classes, 0.0);
  fc2.activation = Activation::none;
  m.layers = {conv, fc1, fc2};
  for (auto& l : m.layers) {
    const double bound = std::sqrt(6.0 / static_cast<double>(l.weights.dims().filter_size()));
    std::uniform_real_distribution<double> u(-bound, bound);
    for (double& v : l.weights.mutable_values()) v = u(rng);
  }
  m.validate();
  return m;
}

namespace {

void put_u32(std::ofstream& f, std::uint32_t v) {
  const unsigned char b[4] = {static_cast<unsigned char>(v >> 24), static_cast<unsigned char>(v >> 16),
                              static_cast<unsigned char>(v >> 8), static_cast<unsigned char>(v)};
  f.write(reinterpret_cast<const char*>(b), 4);
}

void write_split(const std::filesystem::path& images, const std::filesystem::path& labels, std::size_t n,
                 std::mt19937_64& rng) {
  std::ofstream fi(images, std::ios::binary), fl(labels, std::ios::binary);
  put_u32(fi, 0x00000803);
  put_u32(fi, static_cast<std::uint32_t>(n));
  put_u32(fi, 28);
  put_u32(fi, 28);
  put_u32(fl, 0x00000801);
  put_u32(fl, static_cast<std::uint32_t>(n));
  std::uniform_int_distribution<int> label(0, 9), noise(0, 60);
  for (std::size_t i = 0; i < n; ++i) {
    const int y = label(rng);
    fl.put(static_cast<char>(y));
    for (int r = 0; r < 28; ++r)
      for (int c = 0; c < 28; ++c) {
        const bool band = r >= 2 + 2 * y && r < 4 + 2 * y && c >= 4 && c < 24;
        fi.put(static_cast<char>(band ? 200 + noise(rng) / 2 : noise(rng)));
      }
  }
}

}  // namespace

void write_synthetic_mnist(const std::filesystem::path& dir, std::size_t train, std::size_t test,
                           std::uint64_t seed) {
  std::filesystem::create_directories(dir);
  std::mt19937_64 rng(seed);
  write_split(dir / "train-images-idx3-ubyte", dir / "train-labels-idx1-ubyte", train, rng);
  write_split(dir / "t10k-images-idx3-ubyte", dir / "t10k-labels-idx1-ubyte", test, rng);
}

TempDir::TempDir() {
  static std::atomic<unsigned> counter{0};
  path_ = std::filesystem::temp_directory_path() /
          ("admmprune-test-" + std::to_string(::getpid()) + "-" + std::to_string(counter++));
  std::filesystem::remove_all(path_);
  std::filesystem::create_directories(path_);
}

TempDir::~TempDir() {
  std::error_code ec;
  std::filesystem::remove_all(path_, ec);
}

}  // namespace admmprune::fixture
