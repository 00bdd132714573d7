#pragma once

#include <functional>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "admmprune/model.hpp"
#include "admmprune/projections.hpp"
#include "admmprune/trainer.hpp"
#include "json.hpp"

namespace admmprune {

class DivergenceError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class AccuracyCollapseError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// rho_k = initial * growth^k for ADMM iteration k (0-based).
struct RhoSchedule {
  double initial = 1.5e-3;
  double growth = 1.5;
  std::size_t max_iterations = 12;

  double at(std::size_t iteration) const;
  void validate() const;
};

/// ADMM variables of one constrained layer.
struct LayerAdmmState {
  std::size_t layer = 0;
  ConstraintSpec spec;
  std::vector<double> z;
  std::vector<double> u;
  double rho = 0.0;
};

struct IterationRecord {
  std::size_t iteration = 0;
  std::vector<double> rho;
  std::vector<double> residual;           // ||W - Z||_F per constrained layer
  std::vector<double> relative_residual;  // ||W - Z||_F / ||W||_F
  bool dual_update_exact = true;          // U^k == U^{k-1} + (W^k - Z^k), bitwise
  std::size_t dual_difference_mismatches = 0;  // entries where U^k - U^{k-1} != W^k - Z^k after rounding
  bool z_feasible = true;
  double train_loss = 0.0;
  double test_accuracy = std::numeric_limits<double>::quiet_NaN();

  double max_relative_residual() const;
};

struct AdmmState {
  std::vector<LayerAdmmState> layers;
  std::size_t iteration = 0;
  std::size_t session_epoch = 0;
  std::vector<IterationRecord> history;
  std::vector<std::string> warnings;
};

nlohmann::json to_json(const IterationRecord& r);
nlohmann::json to_json(const AdmmState& s, bool include_tensors);
AdmmState admm_state_from_json(const nlohmann::json& j);

struct AdmmOptions {
  RhoSchedule schedule;
  TrainConfig train;  // train.epochs = epochs per ADMM iteration
  const Dataset* eval = nullptr;
  std::function<void(const IterationRecord&)> on_iteration;
  std::size_t residual_growth_warn = 3;
  double divergence_factor = 10.0;
  // 10 x 0.25 lies just above the chance-level loss ln(10) of a 10-class model.
  double divergence_floor = 0.25;
};

/// An epoch loss diverges when it is not finite or exceeds factor x
/// max(initial, floor); the floor keeps a nearly converged starting model from
/// tripping the check on ordinary fluctuation.
bool diverged(double loss, double initial, double factor, double floor);

/// Projection onto S intersected with {frozen coordinates keep their current
/// value in `layer`}. For quantization the frozen values are left as-is.
ProjectionResult project_respecting_mask(const WeightTensor& x, const ConstraintSpec& spec, const Layer& layer);

/// Whether `w` is feasible for `spec` given the frozen pattern of `layer`.
/// Quantization: every free coordinate is on a level and frozen ones are zero
/// or on a level.
bool feasible_with_mask(const WeightTensor& w, const ConstraintSpec& spec, const Layer& layer);

/// ADMM regularization: alternates training with the quadratic term
/// rho_i/2 ||W_i - Z_i + U_i||^2, projection Z_i = Pi(W_i + U_i) and the dual
/// update U_i += W_i - Z_i. `specs` has one entry per model layer; layers with
/// ConstraintKind::none are left out entirely.
class AdmmEngine {
 public:
  AdmmEngine(Model model, const std::vector<ConstraintSpec>& specs, AdmmOptions options);
  /// Resume from a saved state (momentum restarts from zero).
  AdmmEngine(Model model, AdmmState state, AdmmOptions options);

  const IterationRecord& step(const Dataset& train);
  void run(const Dataset& train);
  bool done() const { return state_.iteration >= options_.schedule.max_iterations; }

  const Model& model() const { return session_.model(); }
  const AdmmState& state() const { return state_; }

  /// Sum over constrained layers of rho_i/2 ||W_i - Z_i + U_i||_F^2.
  double regularizer_value() const;
  /// Adds rho_i (W_i - Z_i + U_i) to the weight gradients.
  void add_regularizer_gradient(const Model& model, Gradients& grads) const;

 private:
  AdmmOptions options_;
  TrainingSession session_;
  AdmmState state_;
  double initial_loss_ = -1.0;
};

struct AdmmResult {
  Model model;
  AdmmState state;
};

AdmmResult admm_regularize(Model model, const std::vector<ConstraintSpec>& specs, const Dataset& train,
                           const AdmmOptions& options);

/// Trains with the ADMM quadratic term against fixed Z/U for config.epochs.
Model solve_subproblem1(Model model, const AdmmState& state, const Dataset& train, const TrainConfig& config,
                        double divergence_factor = 10.0, double divergence_floor = 0.25);

struct RetrainOptions {
  TrainConfig train;
  const Dataset* eval = nullptr;
  std::optional<double> baseline_accuracy;
  double collapse_points = 0.20;  // abort when accuracy < baseline - 20 points
};

/// Projects every constrained layer, freezes the zeros and retrains the rest.
/// Filter-pruned layers also freeze the consuming channels of the next layer.
Model masked_map_retrain_prune(Model model, const std::vector<ConstraintSpec>& specs, const Dataset& train,
                               const RetrainOptions& options);

/// Quantization specs carry the levels. Phase 1 fixes free weights within
/// `epsilon[i]` of a level, phase 2 retrains the rest, phase 3 maps the rest.
/// Afterwards the pre-existing mask (pruned zeros) is restored.
Model masked_map_retrain_quant(Model model, const std::vector<ConstraintSpec>& specs,
                               const std::vector<double>& epsilon, const Dataset& train,
                               const RetrainOptions& options);

struct CompressionPlan {
  std::vector<ConstraintSpec> round1;
  std::vector<ConstraintSpec> round2;
  std::vector<double> round1_rates;
  std::vector<double> round2_rates;
  std::size_t epochs_per_round = 120;
  double quant_epsilon_fraction = 0.2;
  std::vector<std::string> warnings;

  /// Throws std::invalid_argument if a round-2 budget exceeds its round-1 budget.
  void validate(const Model& model) const;
};

struct MarginPolicy {
  double round1_factor = 1.5;
  double round2_factor = 2.0;
  double extra = 1.0;  // manual "increase further" multiplier on round 2
};

/// Round-1 rate = 1.5x prior, round-2 = 2x round-1, converted to floor budgets.
/// A prior rate of 0 leaves that layer unconstrained.
CompressionPlan derive_plan(const Model& model, const std::vector<double>& prior_rates, ConstraintKind kind,
                            const MarginPolicy& margin = {});

/// floor(groups / rate), clamped to >= 1 (a warning is appended when clamped).
std::size_t budget_for_rate(std::size_t groups, double rate, std::vector<std::string>* warnings = nullptr);

/// Total groups of `dims` for a pruning kind (weights, filters, channels, columns).
std::size_t group_total(const Shape4& dims, ConstraintKind kind);

/// Two-round plan reaching `target_rates` in round 2, with round 1 at
/// target / round2_factor. A target of 0 leaves the layer alone.
CompressionPlan plan_from_targets(const Model& model, const std::vector<double>& target_rates, ConstraintKind kind,
                                  double round2_factor = 2.0);

struct ProgressiveResult {
  Model round1_model;
  Model model;
  AdmmState round1_state;
  AdmmState round2_state;
};

/// Rounds without any constrained layer are skipped.
ProgressiveResult progressive_prune(Model model, const CompressionPlan& plan, const Dataset& train,
                                    const AdmmOptions& admm, const RetrainOptions& retrain);

/// Per-layer quantization specs with calibrated symmetric levels. Layers with
/// `bits[i] == 0` are left unconstrained; `bits` may be 1 (binary: two levels).
std::vector<ConstraintSpec> calibrated_quantization(const Model& model, const std::vector<unsigned>& bits);

std::vector<double> epsilon_for(const std::vector<ConstraintSpec>& specs, double fraction);

struct QuantizeResult {
  Model model;
  AdmmState state;
  std::vector<ConstraintSpec> specs;
};

/// Calibrated levels, ADMM regularization towards them, then three-phase
/// masked mapping and retraining. Pruned zeros stay zero.
QuantizeResult admm_quantize(Model model, const std::vector<unsigned>& bits, const Dataset& train,
                             const AdmmOptions& admm, const RetrainOptions& retrain, double epsilon_fraction = 0.2);

nlohmann::json to_json(const CompressionPlan& plan);
nlohmann::json to_json(const RhoSchedule& schedule);

}  // namespace admmprune
