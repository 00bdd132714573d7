#pragma once

#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "admmprune/admm.hpp"
#include "admmprune/storage.hpp"
#include "json.hpp"

namespace admmprune {

/// Pruning-to-performance ratio: a rate-x weight reduction gives a
/// (rate / ppr)-x speedup.
struct PprModel {
  double structured_ppr = 1.0;
  double nonstructured_ppr = 2.7;

  void validate() const;
};

double effective_speedup(double prune_rate, double ppr);

enum class Winner { structured, nonstructured, tie };

const char* to_string(Winner w);

struct ComputeVerdict {
  Winner winner = Winner::structured;
  double rate_ratio = 0.0;  // structured rate / non-structured rate
  double nonstructured_speedup = 0.0;
  double structured_speedup = 0.0;
  bool nonstructured_no_benefit = false;  // effective speedup <= 1
  bool structured_no_benefit = false;
};

/// Non-structured wins iff ns_rate / s_rate > nonstructured_ppr.
ComputeVerdict decide_compute(double ns_rate, double s_rate, const PprModel& ppr = {});

class AccuracyMismatchError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct StorageVerdict {
  Winner winner = Winner::tie;
  double nonstructured_bytes = 0.0;
  double structured_bytes = 0.0;
  double margin = 1.0;  // loser bytes / winner bytes
  std::string annotation;
};

/// Compares weight+index bytes (relative indices for non-structured). Throws
/// AccuracyMismatchError when |ns_acc - s_acc| > band.
StorageVerdict decide_storage(const StorageReport& ns, double ns_accuracy, const StorageReport& s, double s_accuracy,
                              double band);

/// Structured unless non-structured wins compute; a split decision
/// (non-structured compute, structured storage) is a tie.
Winner overall_verdict(const ComputeVerdict& compute, const std::optional<StorageVerdict>& storage);

/// Replaces the built-in quantizer: receives the pruned model and per-layer
/// bit widths (0 = leave unconstrained).
using Quantizer = std::function<Model(const Model&, const std::vector<unsigned>&, const Dataset& train)>;

struct PipelineSettings {
  double accuracy_band = 0.001;  // allowed |accuracy - baseline| per step
  std::size_t max_backoff = 4;
  bool conv_only = true;         // constrain only convolution layers
  unsigned quant_bits = 3;       // 0 skips quantization
  double quant_epsilon_fraction = 0.2;
  AdmmOptions admm;
  RetrainOptions retrain;
  /// Per-layer target rates (ignored outside the scope). Non-structured
  /// pipeline: weights; structured pipeline: columns.
  std::vector<double> target_rates;
  /// Structured pipeline: per-layer filter rates for the second step.
  std::vector<double> filter_rates;
  Quantizer quantizer;
};

struct PipelineStep {
  std::string name;
  std::vector<ConstraintSpec> specs;
  std::size_t backoffs = 0;
  double accuracy = 0.0;
  bool accepted = true;
  std::vector<AdmmState> admm_states;
};

struct PipelineResult {
  std::string regime;  // "nonstructured" or "structured"
  double baseline_accuracy = 0.0;
  Model pruned;
  double pruned_accuracy = 0.0;
  Model final_model;
  double final_accuracy = 0.0;
  unsigned quant_bits = 32;
  std::vector<PipelineStep> steps;
  std::vector<std::string> warnings;
};

PipelineResult run_nonstructured_pipeline(const Model& baseline, const Dataset& train, const Dataset& test,
                                          const PipelineSettings& settings);
PipelineResult run_structured_pipeline(const Model& baseline, const Dataset& train, const Dataset& test,
                                       const PipelineSettings& settings);

/// One pruning step with back-off: on an accuracy loss beyond the band the
/// removed-group count is halved, up to `max_backoff` times. The step is
/// dropped (input returned) when every attempt fails.
Model prune_step(const Model& model, ConstraintKind kind, const std::vector<double>& rates, const Dataset& train,
                 const Dataset& test, double baseline_accuracy, const PipelineSettings& settings,
                 PipelineStep& record);

struct RegimeSummary {
  double prune_rate = 1.0;  // over the storage scope
  unsigned quant_bits = 32;
  double accuracy = 0.0;
  StorageReport storage;
};

struct ComparisonReport {
  double baseline_accuracy = 0.0;
  RegimeSummary nonstructured;
  RegimeSummary structured;
  PprModel ppr;
  double accuracy_band = 0.0;
  ComputeVerdict compute;
  std::optional<StorageVerdict> storage;  // empty when the accuracies are not matched
  std::string storage_refusal;
  Winner overall = Winner::structured;
  std::vector<std::string> notes;
};

/// Assembles the report from the two pipeline outcomes (CONV-layer storage).
ComparisonReport make_report(const PipelineResult& ns, const PipelineResult& s, const PprModel& ppr, double band);

struct ComparisonSettings {
  PipelineSettings nonstructured;
  PipelineSettings structured;
  PprModel ppr;
  double accuracy_band = 0.001;
};

ComparisonReport run_comparison(const Model& baseline, const Dataset& train, const Dataset& test,
                                const ComparisonSettings& settings);

/// Exit status for scripts: 0 structured, 3 non-structured, 4 tie.
int exit_code_for(Winner overall);

nlohmann::json to_json(const ComparisonReport& r);
ComparisonReport comparison_report_from_json(const nlohmann::json& j);
std::string comparison_table_text(const ComparisonReport& r);

}  // namespace admmprune
