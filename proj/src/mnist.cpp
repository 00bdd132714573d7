#include "admmprune/mnist.hpp"

#include <array>
#include <cstdlib>
#include <fstream>

namespace admmprune {

namespace {

std::uint32_t read_be32(std::istream& in, const std::filesystem::path& path) {
  std::array<unsigned char, 4> b{};
  if (!in.read(reinterpret_cast<char*>(b.data()), 4)) {
    throw FormatError(path.string() + ": truncated IDX header");
  }
  return (std::uint32_t{b[0]} << 24) | (std::uint32_t{b[1]} << 16) | (std::uint32_t{b[2]} << 8) |
         std::uint32_t{b[3]};
}

std::ifstream open_binary(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open " + path.string());
  return in;
}

}  // namespace

IdxImages read_idx_images(const std::filesystem::path& path) {
  auto in = open_binary(path);
  const auto magic = read_be32(in, path);
  if (magic != 0x00000803u) throw FormatError(path.string() + ": bad image magic");
  IdxImages out;
  out.count = read_be32(in, path);
  out.rows = read_be32(in, path);
  out.cols = read_be32(in, path);
  out.pixels.resize(std::size_t{out.count} * out.rows * out.cols);
  if (!in.read(reinterpret_cast<char*>(out.pixels.data()), static_cast<std::streamsize>(out.pixels.size()))) {
    throw FormatError(path.string() + ": truncated image payload");
  }
  return out;
}

std::vector<std::uint8_t> read_idx_labels(const std::filesystem::path& path) {
  auto in = open_binary(path);
  const auto magic = read_be32(in, path);
  if (magic != 0x00000801u) throw FormatError(path.string() + ": bad label magic");
  std::vector<std::uint8_t> labels(read_be32(in, path));
  if (!in.read(reinterpret_cast<char*>(labels.data()), static_cast<std::streamsize>(labels.size()))) {
    throw FormatError(path.string() + ": truncated label payload");
  }
  return labels;
}

Dataset load_mnist(const std::filesystem::path& dir, Split split) {
  const std::string prefix = split == Split::train ? "train" : "t10k";
  auto imgs = read_idx_images(dir / (prefix + "-images-idx3-ubyte"));
  auto labels = read_idx_labels(dir / (prefix + "-labels-idx1-ubyte"));
  if (labels.size() != imgs.count) throw FormatError("MNIST image/label count mismatch in " + dir.string());
  Dataset ds;
  ds.count = imgs.count;
  ds.height = imgs.rows;
  ds.width = imgs.cols;
  ds.images.resize(imgs.pixels.size());
  for (std::size_t k = 0; k < imgs.pixels.size(); ++k) ds.images[k] = imgs.pixels[k] / 255.0;
  for (auto l : labels) {
    if (l >= ds.classes) throw FormatError("MNIST label out of range in " + dir.string());
  }
  ds.labels = std::move(labels);
  return ds;
}

Dataset Dataset::head(std::size_t n) const {
  if (n == 0 || n >= count) return *this;
  Dataset d = *this;
  d.count = n;
  d.images.resize(n * image_size());
  d.labels.resize(n);
  return d;
}

std::optional<std::filesystem::path> data_dir_from_env() {
  if (const char* v = std::getenv(kDataDirEnv); v && *v) return std::filesystem::path(v);
  return std::nullopt;
}

}  // namespace admmprune
