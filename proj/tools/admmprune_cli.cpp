#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "admmprune/commands.hpp"

using namespace admmprune;

namespace {

// Exit codes: 0 success (compare: structured preferred), 1 runtime failure,
// 2 invalid configuration or arguments, 3/4 compare verdicts.
constexpr int kRuntimeError = 1;
constexpr int kConfigError = 2;

struct ConfigFlags {
  std::string config_path;
  std::vector<std::string> overrides;
  std::optional<std::uint64_t> seed;
  std::string data_dir;
  std::string init_checkpoint;
  std::string output_dir;
  std::string name;
  bool overwrite = false;
  bool quiet = false;
};

void add_config_flags(CLI::App* cmd, ConfigFlags& f, bool needs_init) {
  cmd->add_option("-c,--config", f.config_path, "Experiment configuration (JSON)")->check(CLI::ExistingFile);
  cmd->add_option("--set", f.overrides, "Override a config field: key.path=value (repeatable)");
  cmd->add_option("--seed", f.seed, "Random seed");
  cmd->add_option("--data-dir", f.data_dir, std::string("MNIST directory (default: $") + kDataDirEnv + ")");
  cmd->add_option(needs_init ? "-i,--init" : "--init", f.init_checkpoint,
                  needs_init ? "Input checkpoint" : "Starting checkpoint (default: fresh initialization)");
  cmd->add_option("-o,--output-dir", f.output_dir, "Directory that receives the run directory");
  cmd->add_option("--name", f.name, "Run directory name");
  cmd->add_flag("--overwrite", f.overwrite, "Replace an existing run directory");
  cmd->add_flag("-q,--quiet", f.quiet, "Suppress progress output");
}

ExperimentConfig resolve_config(const ConfigFlags& f) {
  std::vector<std::string> overrides = f.overrides;
  auto set_string = [&](const char* key, const std::string& v) {
    if (!v.empty()) overrides.push_back(std::string(key) + "=" + nlohmann::json(v).dump());
  };
  set_string("data_dir", f.data_dir);
  set_string("init_checkpoint", f.init_checkpoint);
  set_string("output_dir", f.output_dir);
  if (f.seed) overrides.push_back("seed=" + std::to_string(*f.seed));
  return load_config(f.config_path, overrides);
}

CommandOptions command_options(const ConfigFlags& f) {
  CommandOptions o;
  o.run_name = f.name;
  o.overwrite = f.overwrite;
  o.log = f.quiet ? nullptr : &std::cerr;
  return o;
}

void print_result(const CommandResult& r) {
  std::cout << r.summary;
  if (!r.summary.empty() && r.summary.back() != '\n') std::cout << '\n';
  std::cout << "run directory: " << r.run_dir.string() << '\n';
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"ADMM-based structured and non-structured DNN weight pruning"};
  app.require_subcommand(1);

  ConfigFlags train_flags;
  auto* train = app.add_subcommand("train", "Train a baseline model");
  add_config_flags(train, train_flags, false);

  ConfigFlags compress_flags;
  std::string regime_text;
  auto* compress = app.add_subcommand("compress", "Compress a checkpoint with ADMM");
  add_config_flags(compress, compress_flags, true);
  compress->add_option("--regime", regime_text, "ns, struct or quant")
      ->required()
      ->check(CLI::IsMember({"ns", "struct", "quant"}));

  ConfigFlags compare_flags;
  auto* compare = app.add_subcommand("compare", "Compare structured and non-structured pruning at matched accuracy");
  add_config_flags(compare, compare_flags, true);

  std::string analyze_path;
  std::optional<unsigned> analyze_bits;
  std::optional<unsigned> analyze_index_bits;
  std::string scheme_text = "rel";
  std::string storage_regime = "auto";
  std::string analyze_format = "text";
  bool all_layers = false;
  auto* analyze = app.add_subcommand("analyze", "Storage report for a checkpoint or matrix file");
  analyze->add_option("file", analyze_path, "Checkpoint or matrix JSON")->required()->check(CLI::ExistingFile);
  analyze->add_option("--bits", analyze_bits, "Weight bits (default: inferred)")->check(CLI::Range(1u, 32u));
  analyze->add_option("--scheme", scheme_text, "Index scheme: rel or abs")->check(CLI::IsMember({"rel", "abs"}));
  analyze->add_option("--index-bits", analyze_index_bits, "Relative index bits (default: optimized)")
      ->check(CLI::Range(1u, 32u));
  analyze->add_option("--regime", storage_regime, "auto, ns or struct")
      ->check(CLI::IsMember({"auto", "ns", "struct"}));
  analyze->add_flag("--all-layers", all_layers, "Include FC layers (default: CONV only)");
  analyze->add_option("--format", analyze_format, "text, csv or json")->check(CLI::IsMember({"text", "csv", "json"}));

  std::string tables_input;
  std::string tables_format = "text";
  double tables_ppr = 2.7;
  auto* tables = app.add_subcommand("tables", "Recompute storage and rate columns of published tables");
  tables->add_option("--input", tables_input, "Published table data (JSON)")->required()->check(CLI::ExistingFile);
  tables->add_option("--format", tables_format, "text, csv or json")->check(CLI::IsMember({"text", "csv", "json"}));
  tables->add_option("--ppr", tables_ppr, "Non-structured pruning-to-performance ratio");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kConfigError;
  }

  try {
    if (train->parsed()) {
      const auto config = resolve_config(train_flags);
      print_result(cmd_train(config, load_datasets(config), command_options(train_flags)));
      return 0;
    }
    if (compress->parsed()) {
      const auto config = resolve_config(compress_flags);
      const Regime regime = regime_from(regime_text);
      print_result(cmd_compress(config, regime, load_datasets(config), command_options(compress_flags)));
      return 0;
    }
    if (compare->parsed()) {
      const auto config = resolve_config(compare_flags);
      const auto r = cmd_compare(config, load_datasets(config), command_options(compare_flags));
      print_result(r);
      return r.exit_code;
    }
    if (analyze->parsed()) {
      AnalyzeOptions o;
      o.quant_bits = analyze_bits;
      o.index_bits = analyze_index_bits;
      o.scheme = index_scheme_from(scheme_text);
      o.regime = storage_regime == "ns"       ? StorageRegime::nonstructured
                 : storage_regime == "struct" ? StorageRegime::structured
                                              : StorageRegime::automatic;
      o.conv_only = !all_layers;
      o.format = report_format_from(analyze_format);
      std::cout << cmd_analyze(analyze_path, o);
      return 0;
    }
    if (tables->parsed()) {
      std::cout << cmd_tables(tables_input, report_format_from(tables_format), tables_ppr);
      return 0;
    }
  } catch (const ConfigError& e) {
    std::cerr << "configuration error: " << e.what() << '\n';
    return kConfigError;
  } catch (const std::invalid_argument& e) {
    std::cerr << "invalid argument: " << e.what() << '\n';
    return kConfigError;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kRuntimeError;
  }
  return 0;
}
