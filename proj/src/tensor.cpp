#include "admmprune/tensor.hpp"

#include <cmath>
#include <sstream>

namespace admmprune {

const char* to_string(LayerKind kind) { return kind == LayerKind::conv ? "conv" : "fc"; }

const char* to_string(GroupAxis axis) {
  switch (axis) {
    case GroupAxis::filter:
      return "filter";
    case GroupAxis::channel:
      return "channel";
    case GroupAxis::column:
      return "column";
  }
  return "?";
}

WeightTensor::WeightTensor(LayerKind kind, Shape4 dims, std::vector<double> values)
    : kind_(kind), dims_(dims), values_(std::move(values)) {
  if (kind_ == LayerKind::fc && (dims_.height != 1 || dims_.width != 1)) {
    throw ShapeError("fully-connected weights must have height = width = 1");
  }
  if (values_.empty()) {
    values_.assign(dims_.numel(), 0.0);
  }
  if (values_.size() != dims_.numel()) {
    std::ostringstream msg;
    msg << "weight tensor has " << values_.size() << " values but dims multiply to "
        << dims_.numel();
    throw ShapeError(msg.str());
  }
}

WeightTensor WeightTensor::conv(std::size_t filters, std::size_t channels, std::size_t height,
                                std::size_t width, std::vector<double> values) {
  return WeightTensor(LayerKind::conv, Shape4{filters, channels, height, width},
                      std::move(values));
}

WeightTensor WeightTensor::fc(std::size_t rows, std::size_t cols, std::vector<double> values) {
  return WeightTensor(LayerKind::fc, Shape4{rows, cols, 1, 1}, std::move(values));
}

void WeightTensor::require_finite(const std::string& context) const {
  for (std::size_t k = 0; k < values_.size(); ++k) {
    if (!std::isfinite(values_[k])) {
      std::ostringstream msg;
      msg << context << ": non-finite weight at flat index " << k;
      throw NumericError(msg.str());
    }
  }
}

GemmMatrix to_gemm(const WeightTensor& w) {
  if (w.kind() != LayerKind::conv) {
    throw ShapeError("to_gemm expects a convolution weight tensor");
  }
  return as_matrix(w);
}

GemmMatrix as_matrix(const WeightTensor& w) {
  const auto& d = w.dims();
  auto v = w.values();
  return GemmMatrix{d.filters, d.filter_size(), std::vector<double>(v.begin(), v.end())};
}

WeightTensor from_gemm(const GemmMatrix& m, const Shape4& dims) {
  if (m.rows != dims.filters || m.cols != dims.filter_size()) {
    throw ShapeError("GEMM matrix does not match target tensor dims");
  }
  return WeightTensor(LayerKind::conv, dims, m.values);
}

std::size_t group_count(const Shape4& dims, GroupAxis axis) {
  switch (axis) {
    case GroupAxis::filter:
      return dims.filters;
    case GroupAxis::channel:
      return dims.channels;
    case GroupAxis::column:
      return dims.filter_size();
  }
  return 0;
}

std::vector<std::vector<std::size_t>> structured_view(const WeightTensor& w, GroupAxis axis) {
  const auto& d = w.dims();
  std::vector<std::vector<std::size_t>> groups(group_count(d, axis));
  for (auto& g : groups) g.reserve(d.numel() / std::max<std::size_t>(groups.size(), 1));
  for (std::size_t k = 0; k < d.numel(); ++k) {
    groups[group_of(d, axis, k)].push_back(k);
  }
  return groups;
}

std::size_t count_nonzero(std::span<const double> values) {
  std::size_t n = 0;
  for (double v : values) n += (v != 0.0);
  return n;
}

std::size_t count_nonzero(const WeightTensor& w) { return count_nonzero(w.values()); }

std::size_t count_nonzero_groups(const WeightTensor& w, GroupAxis axis) {
  const auto& d = w.dims();
  std::vector<char> live(group_count(d, axis), 0);
  auto v = w.values();
  for (std::size_t k = 0; k < v.size(); ++k) {
    if (v[k] != 0.0) live[group_of(d, axis, k)] = 1;
  }
  std::size_t n = 0;
  for (char c : live) n += c;
  return n;
}

}  // namespace admmprune
