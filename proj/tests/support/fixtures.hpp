#pragma once

// Small synthetic data sets and models shared by the unit tests.

#include <filesystem>
#include <random>

#include "admmprune/mnist.hpp"
#include "admmprune/model.hpp"

namespace admmprune::fixture {

/// Learnable toy data for a model with input `shape`: uniform random pixels,
/// labelled by the horizontal band of rows with the highest mean.
Dataset toy_dataset(const FeatureShape& shape, std::size_t classes, std::size_t count, std::uint64_t seed);

/// Deterministic toy network: conv 4x1x3x3 (pad 1, pooled) on 6x6 input, fc 36->8, fc 8->classes.
Model toy_model(std::size_t classes, std::uint64_t seed);

/// Writes MNIST-format IDX files with `train` and `test` synthetic digits
/// (class k lights up horizontal band k) into `dir`.
void write_synthetic_mnist(const std::filesystem::path& dir, std::size_t train, std::size_t test,
                           std::uint64_t seed);

/// Fresh empty directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  TempDir();
  ~TempDir();
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;
  const std::filesystem::path& path() const { return path_; }

 private:
  std::filesystem::path path_;
};

}  // namespace admmprune::fixture
