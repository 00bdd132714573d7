#include "admmprune/model.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <sstream>

namespace admmprune {

const char* to_string(Activation a) { return a == Activation::relu ? "relu" : "none"; }
const char* to_string(Pooling p) { return p == Pooling::max2 ? "max2" : "none"; }

FeatureShape conv_output_shape(const Layer& layer, const FeatureShape& in) {
  const auto& d = layer.weights.dims();
  const std::size_t h = in.height + 2 * layer.padding;
  const std::size_t w = in.width + 2 * layer.padding;
  if (h < d.height || w < d.width) {
    throw ShapeError("layer '" + layer.name + "': kernel larger than padded input");
  }
  return FeatureShape{d.filters, h - d.height + 1, w - d.width + 1};
}

std::vector<FeatureShape> feature_shapes(const Model& model) {
  std::vector<FeatureShape> shapes{model.input};
  for (const auto& layer : model.layers) {
    const FeatureShape& in = shapes.back();
    const auto& d = layer.weights.dims();
    FeatureShape out;
    if (layer.kind() == LayerKind::conv) {
      if (in.channels != d.channels) {
        std::ostringstream msg;
        msg << "layer '" << layer.name << "' expects " << d.channels << " input channels, got "
            << in.channels;
        throw ShapeError(msg.str());
      }
      out = conv_output_shape(layer, in);
    } else {
      if (in.numel() != d.channels) {
        std::ostringstream msg;
        msg << "layer '" << layer.name << "' expects " << d.channels << " inputs, got "
            << in.numel();
        throw ShapeError(msg.str());
      }
      out = FeatureShape{d.filters, 1, 1};
    }
    if (layer.pooling == Pooling::max2) {
      if (out.height % 2 != 0 || out.width % 2 != 0) {
        throw ShapeError("layer '" + layer.name + "': 2x2 pooling needs even spatial dims");
      }
      out.height /= 2;
      out.width /= 2;
    }
    shapes.push_back(out);
  }
  return shapes;
}

void Model::validate() const {
  if (layers.empty()) throw ShapeError("model has no layers");
  for (const auto& layer : layers) {
    if (layer.bias.values.size() != layer.weights.dims().filters) {
      throw ShapeError("layer '" + layer.name + "': bias length must equal filter/row count");
    }
    if (!layer.mask.empty() && layer.mask.size() != layer.weights.size()) {
      throw ShapeError("layer '" + layer.name + "': mask length mismatch");
    }
    if (!layer.bias_mask.empty() && layer.bias_mask.size() != layer.bias.values.size()) {
      throw ShapeError("layer '" + layer.name + "': bias mask length mismatch");
    }
    if (layer.kind() == LayerKind::fc && layer.padding != 0) {
      throw ShapeError("layer '" + layer.name + "': padding on a fully-connected layer");
    }
  }
  auto shapes = feature_shapes(*this);
  if (shapes.back().numel() != classes) {
    throw ShapeError("last layer emits " + std::to_string(shapes.back().numel()) +
                     " values, model has " + std::to_string(classes) + " classes");
  }
}

namespace {

// Kaiming-uniform weights, small uniform biases (fan-in scaled).
void init_layer(Layer& layer, std::mt19937_64& rng) {
  const auto& d = layer.weights.dims();
  const double fan_in = static_cast<double>(d.filter_size());
  const double wb = std::sqrt(6.0 / fan_in);
  const double bb = 1.0 / std::sqrt(fan_in);
  std::uniform_real_distribution<double> wdist(-wb, wb);
  std::uniform_real_distribution<double> bdist(-bb, bb);
  for (double& v : layer.weights.mutable_values()) v = wdist(rng);
  for (double& v : layer.bias.values) v = bdist(rng);
}

Layer make_conv(std::string name, std::size_t a, std::size_t b, std::size_t k, std::size_t pad) {
  Layer l;
  l.name = std::move(name);
  l.weights = WeightTensor::conv(a, b, k, k);
  l.bias.values.assign(a, 0.0);
  l.activation = Activation::relu;
  l.pooling = Pooling::max2;
  l.padding = pad;
  return l;
}

Layer make_fc(std::string name, std::size_t rows, std::size_t cols, Activation act) {
  Layer l;
  l.name = std::move(name);
  l.weights = WeightTensor::fc(rows, cols);
  l.bias.values.assign(rows, 0.0);
  l.activation = act;
  return l;
}

}  // namespace

std::vector<std::string> architecture_ids() { return {"lenet5", "lenet5-caffe"}; }

Model make_architecture(const std::string& id, std::uint64_t seed) {
  Model m;
  m.input = FeatureShape{1, 28, 28};
  m.classes = 10;
  if (id == "lenet5") {
    m.layers.push_back(make_conv("conv1", 6, 1, 5, 2));
    m.layers.push_back(make_conv("conv2", 16, 6, 5, 0));
    m.layers.push_back(make_fc("fc1", 120, 400, Activation::relu));
    m.layers.push_back(make_fc("fc2", 84, 120, Activation::relu));
    m.layers.push_back(make_fc("fc3", 10, 84, Activation::none));
  } else if (id == "lenet5-caffe") {
    m.layers.push_back(make_conv("conv1", 20, 1, 5, 0));
    m.layers.push_back(make_conv("conv2", 50, 20, 5, 0));
    m.layers.push_back(make_fc("fc1", 500, 800, Activation::relu));
    m.layers.push_back(make_fc("fc2", 10, 500, Activation::none));
  } else {
    throw std::invalid_argument("unknown architecture '" + id + "'");
  }
  std::mt19937_64 rng(seed);
  for (auto& layer : m.layers) init_layer(layer, rng);
  m.validate();
  return m;
}

namespace {

// Flat indices in `next` that read from output channel `channel` of the
// previous layer. `spatial` is the previous layer's output area when the next
// layer is fully connected (channel-major flattening).
template <typename F>
void for_each_consumer(const Layer& next, std::size_t channel, std::size_t spatial, F&& f) {
  const auto& d = next.weights.dims();
  if (next.kind() == LayerKind::conv) {
    for (std::size_t a = 0; a < d.filters; ++a)
      for (std::size_t c = 0; c < d.height; ++c)
        for (std::size_t w = 0; w < d.width; ++w) f(next.weights.index(a, channel, c, w));
  } else {
    for (std::size_t r = 0; r < d.filters; ++r)
      for (std::size_t s = 0; s < spatial; ++s) f(r * d.channels + channel * spatial + s);
  }
}

}  // namespace

Model propagate_filter_pruning(const Model& model, std::size_t layer,
                               const std::vector<std::size_t>& removed_filters,
                               std::string* notice) {
  if (layer >= model.layers.size()) throw std::out_of_range("layer index out of range");
  if (layer + 1 == model.layers.size()) {
    if (notice) *notice = "layer '" + model.layers[layer].name + "' is the last layer; nothing to propagate";
    return model;
  }
  Model out = model;
  Layer& cur = out.layers[layer];
  Layer& next = out.layers[layer + 1];
  const auto& d = cur.weights.dims();
  const auto shapes = feature_shapes(model);
  const std::size_t spatial = shapes[layer + 1].height * shapes[layer + 1].width;

  auto cur_w = cur.weights.mutable_values();
  auto next_w = next.weights.mutable_values();
  for (std::size_t a : removed_filters) {
    if (a >= d.filters) throw std::out_of_range("filter index out of range");
    for (std::size_t k = a * d.filter_size(); k < (a + 1) * d.filter_size(); ++k) {
      if (cur_w[k] != 0.0) {
        throw std::invalid_argument("filter " + std::to_string(a) + " of layer '" + cur.name +
                                    "' is not zero");
      }
    }
    if (cur.mask.empty()) cur.mask.assign(cur.weights.size(), 1);
    std::fill(cur.mask.begin() + a * d.filter_size(), cur.mask.begin() + (a + 1) * d.filter_size(), 0);
    cur.bias.values[a] = 0.0;
    if (cur.bias_mask.empty()) cur.bias_mask.assign(cur.bias.values.size(), 1);
    cur.bias_mask[a] = 0;

    if (next.mask.empty()) next.mask.assign(next.weights.size(), 1);
    for_each_consumer(next, a, spatial, [&](std::size_t k) {
      next_w[k] = 0.0;
      next.mask[k] = 0;
    });
  }
  return out;
}

Model compact(const Model& model) {
  Model out = model;
  const auto shapes = feature_shapes(model);
  for (std::size_t i = 0; i + 1 < out.layers.size(); ++i) {
    Layer& cur = out.layers[i];
    if (cur.kind() != LayerKind::conv) continue;
    const auto d = cur.weights.dims();
    auto w = cur.weights.values();
    std::vector<std::size_t> keep;
    for (std::size_t a = 0; a < d.filters; ++a) {
      bool zero = cur.bias.values[a] == 0.0;
      for (std::size_t k = a * d.filter_size(); zero && k < (a + 1) * d.filter_size(); ++k) zero = w[k] == 0.0;
      if (!zero) keep.push_back(a);
    }
    if (keep.size() == d.filters || keep.empty()) continue;

    auto take = [&](const std::vector<std::uint8_t>& src, std::size_t stride) {
      std::vector<std::uint8_t> dst;
      if (src.empty()) return dst;
      for (std::size_t a : keep) dst.insert(dst.end(), src.begin() + a * stride, src.begin() + (a + 1) * stride);
      return dst;
    };
    std::vector<double> nw;
    BiasVector nb;
    for (std::size_t a : keep) {
      nw.insert(nw.end(), w.begin() + a * d.filter_size(), w.begin() + (a + 1) * d.filter_size());
      nb.values.push_back(cur.bias.values[a]);
    }
    std::vector<std::uint8_t> nbm;
    if (!cur.bias_mask.empty())
      for (std::size_t a : keep) nbm.push_back(cur.bias_mask[a]);
    cur.mask = take(cur.mask, d.filter_size());
    cur.bias_mask = std::move(nbm);
    cur.weights = WeightTensor::conv(keep.size(), d.channels, d.height, d.width, std::move(nw));
    cur.bias = std::move(nb);

    // Drop the consumed channels of the next layer.
    Layer& next = out.layers[i + 1];
    const auto nd = next.weights.dims();
    auto nv = next.weights.values();
    const std::size_t spatial =
        next.kind() == LayerKind::conv ? nd.kernel_area() : shapes[i + 1].height * shapes[i + 1].width;
    const std::size_t rows = nd.filters;
    const std::size_t old_cols = nd.filter_size();
    std::vector<double> cw;
    std::vector<std::uint8_t> cm;
    cw.reserve(rows * keep.size() * spatial);
    for (std::size_t r = 0; r < rows; ++r) {
      for (std::size_t a : keep) {
        const std::size_t base = r * old_cols + a * spatial;
        cw.insert(cw.end(), nv.begin() + base, nv.begin() + base + spatial);
        if (!next.mask.empty()) cm.insert(cm.end(), next.mask.begin() + base, next.mask.begin() + base + spatial);
      }
    }
    if (next.kind() == LayerKind::conv) {
      next.weights = WeightTensor::conv(rows, keep.size(), nd.height, nd.width, std::move(cw));
    } else {
      next.weights = WeightTensor::fc(rows, keep.size() * spatial, std::move(cw));
    }
    next.mask = std::move(cm);
  }
  out.validate();
  return out;
}

bool is_conv_layer(const Layer& layer) { return layer.kind() == LayerKind::conv; }

PruneRate pruning_rate(const Model& model, const LayerFilter& include) {
  PruneRate r;
  for (const auto& layer : model.layers) {
    if (include && !include(layer)) continue;
    r.total += layer.weights.size();
    r.nonzero += count_nonzero(layer.weights);
  }
  return r;
}

std::size_t parameter_count(const Model& model) {
  std::size_t n = 0;
  for (const auto& l : model.layers) n += l.weights.size() + l.bias.values.size();
  return n;
}

}  // namespace admmprune
