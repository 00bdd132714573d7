#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <vector>

#include "admmprune/mnist.hpp"
#include "admmprune/model.hpp"

namespace admmprune {

struct TrainConfig {
  double learning_rate = 0.01;
  double momentum = 0.9;
  std::size_t batch_size = 64;
  std::size_t epochs = 1;
  std::uint64_t seed = 1;
  double weight_decay = 0.0;
  // Step decay: lr * gamma^(epoch / step). step == 0 keeps lr constant.
  std::size_t lr_step_epochs = 0;
  double lr_gamma = 0.1;

  void validate() const;
  double learning_rate_at(std::size_t epoch) const;
};

/// Contiguous view of `count` samples.
struct Batch {
  std::size_t count = 0;
  std::span<const double> images;
  std::span<const std::uint8_t> labels;
};

Batch batch_of(const Dataset& data, std::size_t first, std::size_t count);

struct ParamGradient {
  std::vector<double> weights;
  std::vector<double> bias;
};
using Gradients = std::vector<ParamGradient>;

Gradients zero_gradients(const Model& model);

struct ForwardOutput {
  std::vector<double> logits;  // count x classes
  std::size_t classes = 0;
  double loss = 0.0;           // mean softmax cross-entropy
};

/// Forward/backward engine holding per-layer activation buffers between calls.
class Network {
 public:
  Network();
  ~Network();
  Network(Network&&) noexcept;
  Network& operator=(Network&&) noexcept;

  ForwardOutput forward(const Model& model, const Batch& batch);
  /// Gradients of the mean loss of the last forward() batch. Gradients of
  /// frozen (masked) coordinates are zero.
  Gradients backward(const Model& model);

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

ForwardOutput forward(const Model& model, const Batch& batch);
Gradients backward(const Model& model, const Batch& batch);

void mask_gradients(const Model& model, Gradients& grads);

/// Momentum SGD: v = momentum * v + g (+ weight_decay * w), w -= lr * v.
/// Frozen coordinates are never written.
class SgdOptimizer {
 public:
  SgdOptimizer() = default;
  SgdOptimizer(double momentum, double weight_decay) : momentum_(momentum), weight_decay_(weight_decay) {}

  /// Throws NumericError naming the layer when a gradient is not finite.
  void step(Model& model, const Gradients& grads, double lr);
  void reset() { velocity_.clear(); }

 private:
  double momentum_ = 0.9;
  double weight_decay_ = 0.0;
  Gradients velocity_;
};

/// One optimizer step from zero velocity.
Model sgd_step(const Model& model, const Gradients& grads, const TrainConfig& config);

/// Hook that may add extra terms to the gradients before each step.
using GradientHook = std::function<void(const Model&, Gradients&)>;

struct EpochStats {
  std::size_t epoch = 0;
  double loss = 0.0;
  double train_accuracy = 0.0;
  double learning_rate = 0.0;
};

/// Continuous training over epochs: optimizer state and the epoch counter
/// (which drives shuffling and the lr schedule) persist between calls.
class TrainingSession {
 public:
  TrainingSession(Model model, TrainConfig config);

  EpochStats run_epoch(const Dataset& data, const GradientHook& hook = {});

  const Model& model() const { return model_; }
  Model& model() { return model_; }
  const TrainConfig& config() const { return config_; }
  std::size_t epoch() const { return epoch_; }
  void set_epoch(std::size_t epoch) { epoch_ = epoch; }

 private:
  Model model_;
  TrainConfig config_;
  SgdOptimizer optimizer_;
  Network network_;
  std::size_t epoch_ = 0;
  std::vector<double> image_buf_;
  std::vector<std::uint8_t> label_buf_;
};

/// Sample order of `epoch` for a dataset of size n.
std::vector<std::size_t> epoch_permutation(std::size_t n, std::uint64_t seed, std::size_t epoch);

Model train(Model model, const Dataset& data, const TrainConfig& config,
            std::vector<EpochStats>* log = nullptr);

struct EvalResult {
  double accuracy = 0.0;
  double loss = 0.0;
};

EvalResult evaluate(const Model& model, const Dataset& data, std::size_t batch_size = 1000);

}  // namespace admmprune
