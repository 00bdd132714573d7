#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace admmprune {

/// Images in N x C x H x W order, pixel values in [0, 1].
struct Dataset {
  std::size_t count = 0;
  std::size_t channels = 1;
  std::size_t height = 0;
  std::size_t width = 0;
  std::size_t classes = 10;
  std::vector<double> images;
  std::vector<std::uint8_t> labels;

  std::size_t image_size() const { return channels * height * width; }
  std::span<const double> image(std::size_t i) const {
    return std::span<const double>(images).subspan(i * image_size(), image_size());
  }
  /// First `n` samples (all when n == 0 or n >= count).
  Dataset head(std::size_t n) const;
};

class FormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct IdxImages {
  std::uint32_t count = 0;
  std::uint32_t rows = 0;
  std::uint32_t cols = 0;
  std::vector<std::uint8_t> pixels;
};

// IDX readers: big-endian header, magic 0x00000803 (images) / 0x00000801 (labels).
IdxImages read_idx_images(const std::filesystem::path& path);
std::vector<std::uint8_t> read_idx_labels(const std::filesystem::path& path);

enum class Split { train, test };

/// Loads train-images-idx3-ubyte / t10k-images-idx3-ubyte (and labels) from `dir`.
Dataset load_mnist(const std::filesystem::path& dir, Split split);

inline constexpr const char* kDataDirEnv = "ADMMPRUNE_DATA_DIR";

/// Value of ADMMPRUNE_DATA_DIR, if set.
std::optional<std::filesystem::path> data_dir_from_env();

}  // namespace admmprune
