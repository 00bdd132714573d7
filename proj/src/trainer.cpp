#include "admmprune/trainer.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <sstream>

namespace admmprune {

namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapRow = Eigen::Map<RowMat>;
using CMapRow = Eigen::Map<const RowMat>;

struct LayerBuffers {
  FeatureShape in_shape;
  FeatureShape conv_shape;  // pre-pooling
  FeatureShape out_shape;
  RowMat cols;              // conv: K x (N*P)
  std::vector<double> pre;  // N x A x P, after bias
  std::vector<double> act;  // after activation
  std::vector<double> out;  // after pooling (aliases act when no pooling)
  std::vector<std::uint32_t> argmax;
};

void check_finite(std::span<const double> v, const Layer& layer, const char* what) {
  for (double x : v) {
    if (!std::isfinite(x)) {
      throw NumericError("layer '" + layer.name + "': non-finite " + what);
    }
  }
}

void im2col(std::span<const double> in, std::size_t n_count, const FeatureShape& in_shape,
            const Shape4& k, std::size_t pad, const FeatureShape& out_shape, RowMat& cols) {
  const std::size_t P = out_shape.height * out_shape.width;
  const std::size_t K = k.filter_size();
  cols.resize(static_cast<Eigen::Index>(K), static_cast<Eigen::Index>(n_count * P));
  const std::size_t H = in_shape.height, W = in_shape.width;
  const std::size_t OH = out_shape.height, OW = out_shape.width;
  for (std::size_t b = 0; b < k.channels; ++b) {
    for (std::size_t c = 0; c < k.height; ++c) {
      for (std::size_t d = 0; d < k.width; ++d) {
        double* row = cols.data() + ((b * k.height + c) * k.width + d) * n_count * P;
        for (std::size_t n = 0; n < n_count; ++n) {
          const double* img = in.data() + (n * in_shape.channels + b) * H * W;
          double* dst = row + n * P;
          for (std::size_t y = 0; y < OH; ++y) {
            const std::ptrdiff_t iy = static_cast<std::ptrdiff_t>(y + c) - static_cast<std::ptrdiff_t>(pad);
            for (std::size_t x = 0; x < OW; ++x) {
              const std::ptrdiff_t ix = static_cast<std::ptrdiff_t>(x + d) - static_cast<std::ptrdiff_t>(pad);
              dst[y * OW + x] = (iy >= 0 && ix >= 0 && iy < static_cast<std::ptrdiff_t>(H) &&
                                 ix < static_cast<std::ptrdiff_t>(W))
                                    ? img[iy * W + ix]
                                    : 0.0;
            }
          }
        }
      }
    }
  }
}

void col2im(const RowMat& dcols, std::size_t n_count, const FeatureShape& in_shape, const Shape4& k,
            std::size_t pad, const FeatureShape& out_shape, std::vector<double>& din) {
  const std::size_t P = out_shape.height * out_shape.width;
  const std::size_t H = in_shape.height, W = in_shape.width;
  const std::size_t OH = out_shape.height, OW = out_shape.width;
  din.assign(n_count * in_shape.numel(), 0.0);
  for (std::size_t b = 0; b < k.channels; ++b) {
    for (std::size_t c = 0; c < k.height; ++c) {
      for (std::size_t d = 0; d < k.width; ++d) {
        const double* row = dcols.data() + ((b * k.height + c) * k.width + d) * n_count * P;
        for (std::size_t n = 0; n < n_count; ++n) {
          double* img = din.data() + (n * in_shape.channels + b) * H * W;
          const double* src = row + n * P;
          for (std::size_t y = 0; y < OH; ++y) {
            const std::ptrdiff_t iy = static_cast<std::ptrdiff_t>(y + c) - static_cast<std::ptrdiff_t>(pad);
            if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(H)) continue;
            for (std::size_t x = 0; x < OW; ++x) {
              const std::ptrdiff_t ix = static_cast<std::ptrdiff_t>(x + d) - static_cast<std::ptrdiff_t>(pad);
              if (ix < 0 || ix >= static_cast<std::ptrdiff_t>(W)) continue;
              img[iy * W + ix] += src[y * OW + x];
            }
          }
        }
      }
    }
  }
}

}  // namespace

void TrainConfig::validate() const {
  if (!(learning_rate > 0.0)) throw std::invalid_argument("train.learning_rate must be > 0");
  if (epochs < 1) throw std::invalid_argument("train.epochs must be >= 1");
  if (batch_size < 1) throw std::invalid_argument("train.batch_size must be >= 1");
  if (momentum < 0.0 || momentum >= 1.0) throw std::invalid_argument("train.momentum must be in [0, 1)");
  if (weight_decay < 0.0) throw std::invalid_argument("train.weight_decay must be >= 0");
}

double TrainConfig::learning_rate_at(std::size_t epoch) const {
  if (lr_step_epochs == 0) return learning_rate;
  return learning_rate * std::pow(lr_gamma, static_cast<double>(epoch / lr_step_epochs));
}

Batch batch_of(const Dataset& data, std::size_t first, std::size_t count) {
  count = std::min(count, data.count - first);
  return Batch{count, std::span<const double>(data.images).subspan(first * data.image_size(), count * data.image_size()),
               std::span<const std::uint8_t>(data.labels).subspan(first, count)};
}

Gradients zero_gradients(const Model& model) {
  Gradients g(model.layers.size());
  for (std::size_t i = 0; i < model.layers.size(); ++i) {
    g[i].weights.assign(model.layers[i].weights.size(), 0.0);
    g[i].bias.assign(model.layers[i].bias.values.size(), 0.0);
  }
  return g;
}

struct Network::Impl {
  std::vector<LayerBuffers> layers;
  std::vector<double> input;  // copy of the batch images
  std::vector<std::uint8_t> labels;
  std::vector<double> probs;
  std::size_t count = 0;
  std::size_t classes = 0;
};

Network::Network() : impl_(std::make_unique<Impl>()) {}
Network::~Network() = default;
Network::Network(Network&&) noexcept = default;
Network& Network::operator=(Network&&) noexcept = default;

ForwardOutput Network::forward(const Model& model, const Batch& batch) {
  auto& s = *impl_;
  const auto shapes = feature_shapes(model);
  const std::size_t N = batch.count;
  if (N == 0) throw ShapeError("empty batch");
  if (batch.images.size() != N * model.input.numel()) throw ShapeError("batch image size does not match model input");
  if (batch.labels.size() != N) throw ShapeError("batch label count mismatch");
  for (auto l : batch.labels) {
    if (l >= model.classes) throw ShapeError("label out of range for model class count");
  }
  s.count = N;
  s.classes = model.classes;
  s.input.assign(batch.images.begin(), batch.images.end());
  s.labels.assign(batch.labels.begin(), batch.labels.end());
  s.layers.resize(model.layers.size());

  std::span<const double> x = s.input;
  for (std::size_t i = 0; i < model.layers.size(); ++i) {
    const Layer& layer = model.layers[i];
    LayerBuffers& buf = s.layers[i];
    const auto& k = layer.weights.dims();
    buf.in_shape = shapes[i];
    buf.out_shape = shapes[i + 1];
    CMapRow W(layer.weights.values().data(), static_cast<Eigen::Index>(k.filters),
              static_cast<Eigen::Index>(k.filter_size()));
    if (layer.kind() == LayerKind::conv) {
      buf.conv_shape = conv_output_shape(layer, buf.in_shape);
      const std::size_t P = buf.conv_shape.height * buf.conv_shape.width;
      im2col(x, N, buf.in_shape, k, layer.padding, buf.conv_shape, buf.cols);
      RowMat Y = W * buf.cols;  // A x (N*P)
      buf.pre.resize(N * k.filters * P);
      for (std::size_t a = 0; a < k.filters; ++a) {
        const double b = layer.bias.values[a];
        const double* yrow = Y.data() + a * N * P;
        for (std::size_t n = 0; n < N; ++n) {
          double* dst = buf.pre.data() + (n * k.filters + a) * P;
          const double* src = yrow + n * P;
          for (std::size_t p = 0; p < P; ++p) dst[p] = src[p] + b;
        }
      }
    } else {
      buf.conv_shape = FeatureShape{k.filters, 1, 1};
      CMapRow X(x.data(), static_cast<Eigen::Index>(N), static_cast<Eigen::Index>(k.channels));
      buf.pre.resize(N * k.filters);
      MapRow Pm(buf.pre.data(), static_cast<Eigen::Index>(N), static_cast<Eigen::Index>(k.filters));
      Pm.noalias() = X * W.transpose();
      Eigen::Map<const Eigen::RowVectorXd> bias(layer.bias.values.data(), static_cast<Eigen::Index>(k.filters));
      Pm.rowwise() += bias;
    }

    buf.act.resize(buf.pre.size());
    if (layer.activation == Activation::relu) {
      for (std::size_t j = 0; j < buf.pre.size(); ++j) buf.act[j] = buf.pre[j] > 0.0 ? buf.pre[j] : 0.0;
    } else {
      std::copy(buf.pre.begin(), buf.pre.end(), buf.act.begin());
    }

    if (layer.pooling == Pooling::max2) {
      const std::size_t C = buf.conv_shape.channels, H = buf.conv_shape.height, Wd = buf.conv_shape.width;
      const std::size_t OH = H / 2, OW = Wd / 2;
      buf.out.resize(N * C * OH * OW);
      buf.argmax.resize(buf.out.size());
      for (std::size_t nc = 0; nc < N * C; ++nc) {
        const double* src = buf.act.data() + nc * H * Wd;
        for (std::size_t y = 0; y < OH; ++y) {
          for (std::size_t xo = 0; xo < OW; ++xo) {
            std::size_t best = (2 * y) * Wd + 2 * xo;
            for (std::size_t dy = 0; dy < 2; ++dy)
              for (std::size_t dx = 0; dx < 2; ++dx) {
                const std::size_t idx = (2 * y + dy) * Wd + 2 * xo + dx;
                if (src[idx] > src[best]) best = idx;
              }
            const std::size_t o = nc * OH * OW + y * OW + xo;
            buf.out[o] = src[best];
            buf.argmax[o] = static_cast<std::uint32_t>(nc * H * Wd + best);
          }
        }
      }
    } else {
      buf.out = buf.act;
    }
    check_finite(buf.out, layer, "activation");
    x = buf.out;
  }

  // Softmax cross-entropy, mean over the batch.
  ForwardOutput out;
  out.classes = model.classes;
  out.logits.assign(x.begin(), x.end());
  s.probs.resize(out.logits.size());
  double total = 0.0;
  const std::size_t Cn = model.classes;
  for (std::size_t n = 0; n < N; ++n) {
    const double* z = out.logits.data() + n * Cn;
    double* p = s.probs.data() + n * Cn;
    const double zmax = *std::max_element(z, z + Cn);
    double sum = 0.0;
    for (std::size_t c = 0; c < Cn; ++c) {
      p[c] = std::exp(z[c] - zmax);
      sum += p[c];
    }
    for (std::size_t c = 0; c < Cn; ++c) p[c] /= sum;
    total += -(z[s.labels[n]] - zmax - std::log(sum));
  }
  out.loss = total / static_cast<double>(N);
  if (!std::isfinite(out.loss)) throw NumericError("non-finite loss");
  return out;
}

Gradients Network::backward(const Model& model) {
  auto& s = *impl_;
  if (s.layers.size() != model.layers.size() || s.count == 0) {
    throw std::logic_error("backward() called without a matching forward()");
  }
  const std::size_t N = s.count;
  Gradients grads = zero_gradients(model);

  std::vector<double> dout(s.probs.size());
  const double inv_n = 1.0 / static_cast<double>(N);
  for (std::size_t n = 0; n < N; ++n) {
    for (std::size_t c = 0; c < s.classes; ++c) {
      dout[n * s.classes + c] = (s.probs[n * s.classes + c] - (c == s.labels[n] ? 1.0 : 0.0)) * inv_n;
    }
  }

  std::vector<double> dact, dpre, din;
  for (std::size_t ii = model.layers.size(); ii-- > 0;) {
    const Layer& layer = model.layers[ii];
    LayerBuffers& buf = s.layers[ii];
    const auto& k = layer.weights.dims();

    if (layer.pooling == Pooling::max2) {
      dact.assign(buf.act.size(), 0.0);
      for (std::size_t o = 0; o < dout.size(); ++o) dact[buf.argmax[o]] += dout[o];
    } else {
      dact = dout;
    }
    dpre.resize(dact.size());
    if (layer.activation == Activation::relu) {
      for (std::size_t j = 0; j < dact.size(); ++j) dpre[j] = buf.pre[j] > 0.0 ? dact[j] : 0.0;
    } else {
      dpre = dact;
    }

    const bool need_input_grad = ii > 0;
    std::span<const double> x = ii == 0 ? std::span<const double>(s.input) : std::span<const double>(s.layers[ii - 1].out);
    CMapRow W(layer.weights.values().data(), static_cast<Eigen::Index>(k.filters),
              static_cast<Eigen::Index>(k.filter_size()));
    MapRow dW(grads[ii].weights.data(), static_cast<Eigen::Index>(k.filters),
              static_cast<Eigen::Index>(k.filter_size()));
    if (layer.kind() == LayerKind::conv) {
      const std::size_t P = buf.conv_shape.height * buf.conv_shape.width;
      RowMat dY(static_cast<Eigen::Index>(k.filters), static_cast<Eigen::Index>(N * P));
      for (std::size_t a = 0; a < k.filters; ++a) {
        double* yrow = dY.data() + a * N * P;
        double bsum = 0.0;
        for (std::size_t n = 0; n < N; ++n) {
          const double* src = dpre.data() + (n * k.filters + a) * P;
          double* dst = yrow + n * P;
          for (std::size_t p = 0; p < P; ++p) {
            dst[p] = src[p];
            bsum += src[p];
          }
        }
        grads[ii].bias[a] = bsum;
      }
      dW.noalias() = dY * buf.cols.transpose();
      if (need_input_grad) {
        RowMat dcols = W.transpose() * dY;
        col2im(dcols, N, buf.in_shape, k, layer.padding, buf.conv_shape, din);
      }
    } else {
      CMapRow X(x.data(), static_cast<Eigen::Index>(N), static_cast<Eigen::Index>(k.channels));
      CMapRow dP(dpre.data(), static_cast<Eigen::Index>(N), static_cast<Eigen::Index>(k.filters));
      dW.noalias() = dP.transpose() * X;
      // Fixed summation order: Eigen reductions peel by pointer alignment,
      // which would make the result depend on buffer addresses.
      for (std::size_t a = 0; a < k.filters; ++a) {
        double bsum = 0.0;
        for (std::size_t n = 0; n < N; ++n) bsum += dpre[n * k.filters + a];
        grads[ii].bias[a] = bsum;
      }
      if (need_input_grad) {
        din.resize(N * k.channels);
        MapRow dX(din.data(), static_cast<Eigen::Index>(N), static_cast<Eigen::Index>(k.channels));
        dX.noalias() = dP * W;
      }
    }
    if (need_input_grad) dout.swap(din);
  }
  mask_gradients(model, grads);
  return grads;
}

void mask_gradients(const Model& model, Gradients& grads) {
  for (std::size_t i = 0; i < model.layers.size(); ++i) {
    const Layer& l = model.layers[i];
    if (!l.mask.empty()) {
      for (std::size_t k = 0; k < l.mask.size(); ++k)
        if (!l.mask[k]) grads[i].weights[k] = 0.0;
    }
    if (!l.bias_mask.empty()) {
      for (std::size_t k = 0; k < l.bias_mask.size(); ++k)
        if (!l.bias_mask[k]) grads[i].bias[k] = 0.0;
    }
  }
}

ForwardOutput forward(const Model& model, const Batch& batch) {
  Network net;
  return net.forward(model, batch);
}

Gradients backward(const Model& model, const Batch& batch) {
  Network net;
  net.forward(model, batch);
  return net.backward(model);
}

void SgdOptimizer::step(Model& model, const Gradients& grads, double lr) {
  if (grads.size() != model.layers.size()) throw ShapeError("gradient/model layer count mismatch");
  if (velocity_.size() != model.layers.size()) velocity_ = zero_gradients(model);
  for (std::size_t i = 0; i < model.layers.size(); ++i) {
    Layer& layer = model.layers[i];
    const auto& g = grads[i];
    for (double v : g.weights) {
      if (!std::isfinite(v)) throw NumericError("non-finite weight gradient in layer '" + layer.name + "'");
    }
    for (double v : g.bias) {
      if (!std::isfinite(v)) throw NumericError("non-finite bias gradient in layer '" + layer.name + "'");
    }
    auto w = layer.weights.mutable_values();
    auto& vw = velocity_[i].weights;
    for (std::size_t k = 0; k < w.size(); ++k) {
      if (!layer.is_free(k)) continue;
      const double gk = g.weights[k] + weight_decay_ * w[k];
      vw[k] = momentum_ * vw[k] + gk;
      w[k] -= lr * vw[k];
    }
    auto& b = layer.bias.values;
    auto& vb = velocity_[i].bias;
    for (std::size_t k = 0; k < b.size(); ++k) {
      if (!layer.bias_is_free(k)) continue;
      vb[k] = momentum_ * vb[k] + g.bias[k];
      b[k] -= lr * vb[k];
    }
  }
}

Model sgd_step(const Model& model, const Gradients& grads, const TrainConfig& config) {
  Model out = model;
  SgdOptimizer opt(config.momentum, config.weight_decay);
  opt.step(out, grads, config.learning_rate);
  return out;
}

std::vector<std::size_t> epoch_permutation(std::size_t n, std::uint64_t seed, std::size_t epoch) {
  std::vector<std::size_t> perm(n);
  std::iota(perm.begin(), perm.end(), std::size_t{0});
  std::mt19937_64 rng(seed * 0x9E3779B97F4A7C15ull + epoch + 1);
  for (std::size_t i = n; i > 1; --i) {
    const std::size_t j = static_cast<std::size_t>(rng() % i);
    std::swap(perm[i - 1], perm[j]);
  }
  return perm;
}

TrainingSession::TrainingSession(Model model, TrainConfig config)
    : model_(std::move(model)), config_(config), optimizer_(config.momentum, config.weight_decay) {
  config_.validate();
  model_.validate();
}

EpochStats TrainingSession::run_epoch(const Dataset& data, const GradientHook& hook) {
  const auto perm = epoch_permutation(data.count, config_.seed, epoch_);
  const double lr = config_.learning_rate_at(epoch_);
  const std::size_t isz = data.image_size();
  double loss_sum = 0.0;
  std::size_t correct = 0;
  for (std::size_t first = 0; first < data.count; first += config_.batch_size) {
    const std::size_t n = std::min(config_.batch_size, data.count - first);
    image_buf_.resize(n * isz);
    label_buf_.resize(n);
    for (std::size_t j = 0; j < n; ++j) {
      const std::size_t src = perm[first + j];
      std::copy_n(data.images.begin() + static_cast<std::ptrdiff_t>(src * isz), isz,
                  image_buf_.begin() + static_cast<std::ptrdiff_t>(j * isz));
      label_buf_[j] = data.labels[src];
    }
    Batch batch{n, image_buf_, label_buf_};
    auto out = network_.forward(model_, batch);
    loss_sum += out.loss * static_cast<double>(n);
    for (std::size_t j = 0; j < n; ++j) {
      const double* z = out.logits.data() + j * out.classes;
      const auto pred = static_cast<std::size_t>(std::max_element(z, z + out.classes) - z);
      correct += pred == label_buf_[j];
    }
    auto grads = network_.backward(model_);
    if (hook) {
      hook(model_, grads);
      mask_gradients(model_, grads);
    }
    optimizer_.step(model_, grads, lr);
  }
  EpochStats st;
  st.epoch = epoch_;
  st.loss = loss_sum / static_cast<double>(data.count);
  st.train_accuracy = static_cast<double>(correct) / static_cast<double>(data.count);
  st.learning_rate = lr;
  ++epoch_;
  return st;
}

Model train(Model model, const Dataset& data, const TrainConfig& config, std::vector<EpochStats>* log) {
  TrainingSession session(std::move(model), config);
  for (std::size_t e = 0; e < config.epochs; ++e) {
    auto st = session.run_epoch(data);
    if (log) log->push_back(st);
  }
  return session.model();
}

EvalResult evaluate(const Model& model, const Dataset& data, std::size_t batch_size) {
  Network net;
  std::size_t correct = 0;
  double loss_sum = 0.0;
  for (std::size_t first = 0; first < data.count; first += batch_size) {
    auto batch = batch_of(data, first, batch_size);
    auto out = net.forward(model, batch);
    loss_sum += out.loss * static_cast<double>(batch.count);
    for (std::size_t j = 0; j < batch.count; ++j) {
      const double* z = out.logits.data() + j * out.classes;
      const auto pred = static_cast<std::size_t>(std::max_element(z, z + out.classes) - z);
      correct += pred == batch.labels[j];
    }
  }
  return EvalResult{static_cast<double>(correct) / static_cast<double>(data.count),
                    loss_sum / static_cast<double>(data.count)};
}

}  // namespace admmprune
