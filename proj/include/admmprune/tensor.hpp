#pragma once

#include <array>
#include <cstddef>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace admmprune {

class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class LayerKind { conv, fc };

const char* to_string(LayerKind kind);

/// (filters, channels, height, width). Fully-connected layers use
/// (rows, cols, 1, 1) so that every structured view applies uniformly.
struct Shape4 {
  std::size_t filters = 0;
  std::size_t channels = 0;
  std::size_t height = 1;
  std::size_t width = 1;

  std::size_t numel() const { return filters * channels * height * width; }
  std::size_t filter_size() const { return channels * height * width; }
  std::size_t kernel_area() const { return height * width; }

  bool operator==(const Shape4&) const = default;
};

/// Dense weight tensor in row-major (a, b, c, d) order.
class WeightTensor {
 public:
  WeightTensor() = default;
  WeightTensor(LayerKind kind, Shape4 dims, std::vector<double> values);

  static WeightTensor conv(std::size_t filters, std::size_t channels, std::size_t height,
                           std::size_t width, std::vector<double> values = {});
  static WeightTensor fc(std::size_t rows, std::size_t cols, std::vector<double> values = {});

  LayerKind kind() const { return kind_; }
  const Shape4& dims() const { return dims_; }
  std::size_t size() const { return values_.size(); }

  std::span<const double> values() const { return values_; }
  std::span<double> mutable_values() { return values_; }

  std::size_t index(std::size_t a, std::size_t b, std::size_t c, std::size_t d) const {
    return ((a * dims_.channels + b) * dims_.height + c) * dims_.width + d;
  }
  double at(std::size_t a, std::size_t b, std::size_t c, std::size_t d) const {
    return values_[index(a, b, c, d)];
  }

  // Throws NumericError when any entry is NaN or infinite.
  void require_finite(const std::string& context) const;

  bool operator==(const WeightTensor&) const = default;

 private:
  LayerKind kind_ = LayerKind::fc;
  Shape4 dims_;
  std::vector<double> values_;
};

struct BiasVector {
  std::vector<double> values;
  bool operator==(const BiasVector&) const = default;
};

/// GEMM view of a convolution: one row per filter, B*C*D columns.
struct GemmMatrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> values;

  double at(std::size_t r, std::size_t c) const { return values[r * cols + c]; }
  bool operator==(const GemmMatrix&) const = default;
};

GemmMatrix to_gemm(const WeightTensor& w);
WeightTensor from_gemm(const GemmMatrix& m, const Shape4& dims);

// Row-major matrix view that accepts both layer kinds (storage accounting).
GemmMatrix as_matrix(const WeightTensor& w);

enum class GroupAxis { filter, channel, column };

const char* to_string(GroupAxis axis);

/// Flat indices of every group along `axis`. Filter view: A groups of B*C*D;
/// channel view: B groups of A*C*D; column view: B*C*D groups of A.
std::vector<std::vector<std::size_t>> structured_view(const WeightTensor& w, GroupAxis axis);

std::size_t group_count(const Shape4& dims, GroupAxis axis);

// Group id of a flat index along `axis`.
inline std::size_t group_of(const Shape4& dims, GroupAxis axis, std::size_t flat) {
  switch (axis) {
    case GroupAxis::filter:
      return flat / dims.filter_size();
    case GroupAxis::channel:
      return (flat / dims.kernel_area()) % dims.channels;
    case GroupAxis::column:
      return flat % dims.filter_size();
  }
  return 0;
}

std::size_t count_nonzero(std::span<const double> values);
std::size_t count_nonzero(const WeightTensor& w);
std::size_t count_nonzero_groups(const WeightTensor& w, GroupAxis axis);

}  // namespace admmprune
