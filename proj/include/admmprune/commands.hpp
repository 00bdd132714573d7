#pragma once

#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "admmprune/config.hpp"
#include "admmprune/mnist.hpp"
#include "admmprune/storage.hpp"

namespace admmprune {

/// Output directory of one run. Files are written into a hidden staging
/// directory that is renamed into place by commit(); an uncommitted run
/// leaves nothing behind.
class RunDirectory {
 public:
  RunDirectory(const std::filesystem::path& output_dir, const std::string& name, bool overwrite);
  ~RunDirectory();
  RunDirectory(const RunDirectory&) = delete;
  RunDirectory& operator=(const RunDirectory&) = delete;

  std::filesystem::path file(const std::string& name) const { return staging_ / name; }
  const std::filesystem::path& final_path() const { return final_; }
  void commit();

 private:
  std::filesystem::path final_;
  std::filesystem::path staging_;
  bool overwrite_ = false;
  bool committed_ = false;
};

struct Datasets {
  Dataset train;
  Dataset test;
};

/// From config.data_dir, falling back to the ADMMPRUNE_DATA_DIR environment variable.
Datasets load_datasets(const ExperimentConfig& config);

enum class Regime { nonstructured, structured, quantize };

Regime regime_from(const std::string& s);  // ns | struct | quant
const char* to_string(Regime r);

struct CommandOptions {
  std::string run_name;  // default derived from the command and seed
  bool overwrite = false;
  std::ostream* log = nullptr;
};

struct CommandResult {
  std::filesystem::path run_dir;
  int exit_code = 0;
  std::string summary;
};

CommandResult cmd_train(const ExperimentConfig& config, const Datasets& data, const CommandOptions& options);
CommandResult cmd_compress(const ExperimentConfig& config, Regime regime, const Datasets& data,
                           const CommandOptions& options);
CommandResult cmd_compare(const ExperimentConfig& config, const Datasets& data, const CommandOptions& options);

enum class ReportFormat { text, csv, json };

ReportFormat report_format_from(const std::string& s);

struct AnalyzeOptions {
  std::optional<unsigned> quant_bits;  // default: inferred from the checkpoint
  IndexScheme scheme = IndexScheme::csr_relative;
  StorageRegime regime = StorageRegime::automatic;
  bool conv_only = true;
  std::optional<unsigned> index_bits;  // default: optimized
  ReportFormat format = ReportFormat::text;
};

/// Storage report for a checkpoint or a standalone matrix file (detected by content).
StorageReport analyze_file(const std::string& path, const AnalyzeOptions& options);
std::string cmd_analyze(const std::string& path, const AnalyzeOptions& options);

std::string cmd_tables(const std::string& input, ReportFormat format, double ppr_nonstructured = 2.7);

/// Constraint violations of `model` against per-layer specs (empty when feasible).
std::vector<std::string> constraint_violations(const Model& model, const std::vector<ConstraintSpec>& specs);

}  // namespace admmprune
