#pragma once

#include <cstdint>
#include <functional>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "admmprune/tensor.hpp"

namespace admmprune {

enum class Activation { none, relu };
enum class Pooling { none, max2 };

const char* to_string(Activation a);
const char* to_string(Pooling p);

/// Equal-distance quantization levels attached to a layer.
struct QuantizationInfo {
  std::size_t level_count = 0;
  double spacing = 0.0;
  bool operator==(const QuantizationInfo&) const = default;
};

/// One CONV or FC layer. A non-empty mask marks frozen coordinates with 0;
/// frozen coordinates keep their current value through every training step.
struct Layer {
  std::string name;
  WeightTensor weights;
  BiasVector bias;
  Activation activation = Activation::relu;
  Pooling pooling = Pooling::none;
  std::size_t padding = 0;
  std::vector<std::uint8_t> mask;
  std::vector<std::uint8_t> bias_mask;
  std::optional<QuantizationInfo> quantization;

  LayerKind kind() const { return weights.kind(); }
  bool is_free(std::size_t k) const { return mask.empty() || mask[k] != 0; }
  bool bias_is_free(std::size_t k) const { return bias_mask.empty() || bias_mask[k] != 0; }

  bool operator==(const Layer&) const = default;
};

struct FeatureShape {
  std::size_t channels = 0;
  std::size_t height = 1;
  std::size_t width = 1;
  std::size_t numel() const { return channels * height * width; }
  bool operator==(const FeatureShape&) const = default;
};

struct Model {
  FeatureShape input;
  std::size_t classes = 0;
  std::vector<Layer> layers;

  /// Throws ShapeError unless adjacent layer shapes compose and the last
  /// layer emits `classes` logits.
  void validate() const;

  bool operator==(const Model&) const = default;
};

/// Shapes after each layer (post-activation, post-pooling). Element 0 is the input.
std::vector<FeatureShape> feature_shapes(const Model& model);

/// Shape produced by the convolution itself, before pooling.
FeatureShape conv_output_shape(const Layer& layer, const FeatureShape& in);

// Built-in architectures. "lenet5": conv 6x1x5x5 (pad 2), pool, conv 16x6x5x5,
// pool, fc 400->120, fc 120->84, fc 84->10. "lenet5-caffe": conv 20, conv 50,
// fc 800->500, fc 500->10.
Model make_architecture(const std::string& id, std::uint64_t seed);
std::vector<std::string> architecture_ids();

/// Zeros and freezes the channels of layer+1 that consume the removed filters
/// of `layer`. The removed filters must already be zero; their biases are
/// zeroed and frozen too. For a last layer the model is returned unchanged and
/// `notice` (when given) receives an explanation.
Model propagate_filter_pruning(const Model& model, std::size_t layer,
                               const std::vector<std::size_t>& removed_filters,
                               std::string* notice = nullptr);

/// Physically removes all-zero filters (with zero bias) and the matching input
/// channels of the following layer.
Model compact(const Model& model);

/// Exact nonzero accounting. `rate()` is total/nonzero, +inf when nonzero == 0.
struct PruneRate {
  std::size_t total = 0;
  std::size_t nonzero = 0;
  double rate() const {
    return nonzero == 0 ? std::numeric_limits<double>::infinity()
                        : static_cast<double>(total) / static_cast<double>(nonzero);
  }
};

using LayerFilter = std::function<bool(const Layer&)>;

PruneRate pruning_rate(const Model& model, const LayerFilter& include = {});
bool is_conv_layer(const Layer& layer);

std::size_t parameter_count(const Model& model);

}  // namespace admmprune
