#pragma once

#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "admmprune/admm.hpp"
#include "admmprune/comparator.hpp"
#include "admmprune/trainer.hpp"
#include "json.hpp"

namespace admmprune {

/// Invalid configuration; the message starts with the offending field path.
class ConfigError : public std::invalid_argument {
 public:
  ConfigError(const std::string& field, const std::string& what)
      : std::invalid_argument(field + ": " + what), field_(field) {}
  const std::string& field() const { return field_; }

 private:
  std::string field_;
};

struct QuantizationConfig {
  std::vector<unsigned> bits;  // one per layer, 0 = unconstrained; a single entry applies to every layer
  double epsilon_fraction = 0.2;
};

struct CompressConfig {
  /// Final per-layer rates (0 = leave the layer alone). Non-structured: weights.
  std::vector<double> nonstructured_rates;
  std::vector<double> column_rates;
  std::vector<double> filter_rates;
  double round2_factor = 2.0;  // round 1 aims at rate / round2_factor
};

struct ComparisonConfig {
  double accuracy_band = 0.001;
  std::size_t max_backoff = 4;
  double ppr_nonstructured = 2.7;
  unsigned quant_bits = 3;
  bool conv_only = true;
};

struct ExperimentConfig {
  std::string architecture = "lenet5";
  std::string data_dir;        // empty: taken from the environment
  std::string init_checkpoint; // starting model for train (optional) and compress/compare (required)
  std::string output_dir = "runs";
  std::uint64_t seed = 1;
  TrainConfig train;
  RhoSchedule rho;
  TrainConfig admm_train;      // epochs = epochs per ADMM iteration
  double divergence_factor = 10.0;
  double divergence_floor = 0.25;
  std::size_t residual_growth_warn = 3;
  TrainConfig retrain;
  double collapse_points = 0.20;
  CompressConfig compress;
  QuantizationConfig quantization;
  ComparisonConfig comparison;

  /// Schema checks on values and referenced paths. Throws ConfigError.
  void validate(bool check_paths = true) const;
};

ExperimentConfig default_config();

/// Parses with strict key checking; unknown keys and type errors name the field.
ExperimentConfig config_from_json(const nlohmann::json& j);
nlohmann::json to_json(const ExperimentConfig& c);

/// Applies "a.b.c=value" (value parsed as JSON, else taken as a string).
void apply_override(nlohmann::json& j, const std::string& assignment);

ExperimentConfig load_config(const std::string& path, const std::vector<std::string>& overrides = {});

nlohmann::json to_json(const TrainConfig& c);
TrainConfig train_config_from_json(const nlohmann::json& j, const std::string& field);

/// Per-layer bits with the single-entry shorthand expanded.
std::vector<unsigned> expand_bits(const std::vector<unsigned>& bits, std::size_t layers);

}  // namespace admmprune
