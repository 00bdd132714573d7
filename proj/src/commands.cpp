#include "admmprune/commands.hpp"

#include <atomic>
#include <chrono>
#include <iomanip>
#include <iostream>
#include <sstream>
#include <unistd.h>

#include "admmprune/checkpoint.hpp"
#include "admmprune/comparator.hpp"
#include "admmprune/published_tables.hpp"

namespace fs = std::filesystem;

namespace admmprune {

using nlohmann::json;

RunDirectory::RunDirectory(const fs::path& output_dir, const std::string& name, bool overwrite)
    : final_(output_dir / name), overwrite_(overwrite) {
  if (name.empty() || name.find('/') != std::string::npos || name.front() == '.') {
    throw std::invalid_argument("invalid run name '" + name + "'");
  }
  if (fs::exists(final_) && !overwrite) {
    throw std::runtime_error("run directory " + final_.string() + " already exists (use --overwrite)");
  }
  static std::atomic<unsigned> counter{0};
  staging_ = output_dir / ("." + name + ".staging-" + std::to_string(::getpid()) + "-" + std::to_string(counter++));
  fs::create_directories(staging_);
}

RunDirectory::~RunDirectory() {
  if (!committed_) {
    std::error_code ec;
    fs::remove_all(staging_, ec);
  }
}

void RunDirectory::commit() {
  if (fs::exists(final_)) {
    if (!overwrite_) throw std::runtime_error("run directory " + final_.string() + " appeared while running");
    fs::remove_all(final_);
  }
  fs::rename(staging_, final_);
  committed_ = true;
}

Datasets load_datasets(const ExperimentConfig& config) {
  fs::path dir;
  if (!config.data_dir.empty()) {
    dir = config.data_dir;
  } else if (auto env = data_dir_from_env()) {
    dir = *env;
  } else {
    throw ConfigError("data_dir", std::string("not set; pass --data-dir or set ") + kDataDirEnv);
  }
  return Datasets{load_mnist(dir, Split::train), load_mnist(dir, Split::test)};
}

Regime regime_from(const std::string& s) {
  if (s == "ns" || s == "nonstructured") return Regime::nonstructured;
  if (s == "struct" || s == "structured") return Regime::structured;
  if (s == "quant" || s == "quantize") return Regime::quantize;
  throw std::invalid_argument("unknown regime '" + s + "' (expected ns, struct or quant)");
}

const char* to_string(Regime r) {
  switch (r) {
    case Regime::nonstructured:
      return "ns";
    case Regime::structured:
      return "struct";
    case Regime::quantize:
      return "quant";
  }
  return "?";
}

ReportFormat report_format_from(const std::string& s) {
  if (s == "text") return ReportFormat::text;
  if (s == "csv") return ReportFormat::csv;
  if (s == "json") return ReportFormat::json;
  throw std::invalid_argument("unknown format '" + s + "' (expected text, csv or json)");
}

namespace {

std::ostream& logger(const CommandOptions& o) {
  static std::ostream null_stream(nullptr);
  return o.log ? *o.log : null_stream;
}

std::string default_name(const std::string& command, std::uint64_t seed) {
  return command + "-seed" + std::to_string(seed);
}

Model initial_model(const ExperimentConfig& c, bool required) {
  if (!c.init_checkpoint.empty()) return load_checkpoint(c.init_checkpoint);
  if (required) throw ConfigError("init_checkpoint", "required for this command");
  return make_architecture(c.architecture, c.seed);
}

void write_json(const fs::path& p, const json& j) { write_text_atomic(p, j.dump(2) + "\n"); }

std::string percent(double acc) {
  std::ostringstream o;
  o << std::fixed << std::setprecision(2) << acc * 100.0 << "%";
  return o.str();
}

json history_json(const AdmmState& s) { return to_json(s, false); }

void require_layers(const std::vector<double>& rates, const Model& m, const std::string& field) {
  if (rates.empty()) throw ConfigError(field, "required for this regime");
  if (rates.size() != m.layers.size()) {
    throw ConfigError(field, "expected " + std::to_string(m.layers.size()) + " entries (one per layer), got " +
                                 std::to_string(rates.size()));
  }
}

json specs_json(const std::vector<ConstraintSpec>& specs) {
  json a = json::array();
  for (const auto& s : specs) {
    json j{{"kind", to_string(s.kind)}, {"budget", s.budget}};
    if (!s.levels.empty()) j["levels"] = s.levels;
    a.push_back(j);
  }
  return a;
}

}  // namespace

std::vector<std::string> constraint_violations(const Model& model, const std::vector<ConstraintSpec>& specs) {
  std::vector<std::string> out;
  if (specs.size() != model.layers.size()) return {"spec count does not match the layer count"};
  for (std::size_t i = 0; i < specs.size(); ++i) {
    const Layer& layer = model.layers[i];
    const ConstraintSpec& s = specs[i];
    if (s.kind == ConstraintKind::none) continue;
    const bool ok = s.kind == ConstraintKind::quantization ? feasible_with_mask(layer.weights, s, layer)
                                                           : satisfies(layer.weights, s);
    if (!ok) out.push_back("layer '" + layer.name + "' violates its " + std::string(to_string(s.kind)) + " constraint");
    auto w = layer.weights.values();
    for (std::size_t k = 0; k < w.size(); ++k) {
      if (!layer.mask.empty() && !layer.mask[k] && s.is_pruning() && w[k] != 0.0) {
        out.push_back("layer '" + layer.name + "' has a nonzero masked weight at " + std::to_string(k));
        break;
      }
    }
  }
  return out;
}

CommandResult cmd_train(const ExperimentConfig& config, const Datasets& data, const CommandOptions& options) {
  config.validate();
  Model model = initial_model(config, false);
  RunDirectory run(config.output_dir, options.run_name.empty() ? default_name("train", config.seed) : options.run_name,
                   options.overwrite);
  write_json(run.file("config.json"), to_json(config));
  auto& log = logger(options);
  TrainConfig tc = config.train;
  tc.seed = config.seed;
  TrainingSession session(std::move(model), tc);
  json epochs = json::array();
  for (std::size_t e = 0; e < tc.epochs; ++e) {
    const auto st = session.run_epoch(data.train);
    const auto ev = evaluate(session.model(), data.test);
    log << "epoch " << e + 1 << "/" << tc.epochs << "  loss " << st.loss << "  test accuracy " << percent(ev.accuracy)
        << std::endl;
    epochs.push_back({{"epoch", e + 1}, {"train_loss", st.loss}, {"test_accuracy", ev.accuracy}, {"test_loss", ev.loss}});
  }
  const Model& trained = session.model();
  const double acc = evaluate(trained, data.test).accuracy;
  save_checkpoint(trained, run.file("model.ckpt.json"));
  write_json(run.file("manifest.json"), json{{"command", "train"},
                                             {"architecture", config.architecture},
                                             {"seed", config.seed},
                                             {"init_checkpoint", config.init_checkpoint},
                                             {"epochs", epochs},
                                             {"test_accuracy", acc},
                                             {"parameters", parameter_count(trained)},
                                             {"checkpoint", "model.ckpt.json"}});
  run.commit();
  return CommandResult{run.final_path(), 0, "trained " + config.architecture + ": test accuracy " + percent(acc)};
}

CommandResult cmd_compress(const ExperimentConfig& config, Regime regime, const Datasets& data,
                           const CommandOptions& options) {
  config.validate();
  Model model = initial_model(config, true);
  const std::size_t n = model.layers.size();
  // Validate the regime inputs before any work.
  std::vector<unsigned> bits;
  switch (regime) {
    case Regime::nonstructured:
      require_layers(config.compress.nonstructured_rates, model, "compress.nonstructured_rates");
      break;
    case Regime::structured:
      require_layers(config.compress.column_rates, model, "compress.column_rates");
      require_layers(config.compress.filter_rates, model, "compress.filter_rates");
      break;
    case Regime::quantize:
      if (config.quantization.bits.empty()) throw ConfigError("quantization.bits", "required for this regime");
      bits = expand_bits(config.quantization.bits, n);
      break;
  }
  RunDirectory run(config.output_dir,
                   options.run_name.empty() ? default_name(std::string("compress-") + to_string(regime), config.seed)
                                            : options.run_name,
                   options.overwrite);
  write_json(run.file("config.json"), to_json(config));
  auto& log = logger(options);

  const double baseline_acc = evaluate(model, data.test).accuracy;
  log << "input accuracy " << percent(baseline_acc) << std::endl;
  AdmmOptions admm;
  admm.schedule = config.rho;
  admm.train = config.admm_train;
  admm.train.seed = config.seed;
  admm.eval = &data.test;
  admm.divergence_factor = config.divergence_factor;
  admm.divergence_floor = config.divergence_floor;
  admm.residual_growth_warn = config.residual_growth_warn;
  admm.on_iteration = [&log](const IterationRecord& r) {
    log << "  admm iteration " << r.iteration + 1 << "  rho " << (r.rho.empty() ? 0.0 : r.rho.front())
        << "  loss " << r.train_loss << "  max relative residual " << r.max_relative_residual();
    if (!std::isnan(r.test_accuracy)) log << "  test accuracy " << percent(r.test_accuracy);
    log << std::endl;
  };
  RetrainOptions retrain;
  retrain.train = config.retrain;
  retrain.train.seed = config.seed;
  retrain.eval = &data.test;
  retrain.baseline_accuracy = baseline_acc;
  retrain.collapse_points = config.collapse_points;

  json stages = json::array();
  std::vector<std::pair<std::string, std::vector<ConstraintSpec>>> constraint_sets;
  std::vector<std::string> warnings;
  auto prune = [&](ConstraintKind kind, const std::vector<double>& rates, const char* name) {
    CompressionPlan plan = plan_from_targets(model, rates, kind, config.compress.round2_factor);
    for (const auto& w : plan.warnings) warnings.push_back(std::string(name) + ": " + w);
    log << name << " pruning" << std::endl;
    auto r = progressive_prune(std::move(model), plan, data.train, admm, retrain);
    model = std::move(r.model);
    constraint_sets.emplace_back(name, plan.round2);
    for (const auto& w : r.round1_state.warnings) warnings.push_back(std::string(name) + " round 1: " + w);
    for (const auto& w : r.round2_state.warnings) warnings.push_back(std::string(name) + " round 2: " + w);
    const double acc = evaluate(model, data.test).accuracy;
    log << name << " pruning done: test accuracy " << percent(acc) << std::endl;
    stages.push_back({{"stage", name},
                      {"plan", to_json(plan)},
                      {"round1_admm", history_json(r.round1_state)},
                      {"round2_admm", history_json(r.round2_state)},
                      {"test_accuracy", acc}});
  };
  switch (regime) {
    case Regime::nonstructured:
      prune(ConstraintKind::nonstructured, config.compress.nonstructured_rates, "nonstructured");
      break;
    case Regime::structured:
      prune(ConstraintKind::column, config.compress.column_rates, "column");
      prune(ConstraintKind::filter, config.compress.filter_rates, "filter");
      break;
    case Regime::quantize: {
      log << "quantization" << std::endl;
      auto q = admm_quantize(std::move(model), bits, data.train, admm, retrain, config.quantization.epsilon_fraction);
      model = std::move(q.model);
      constraint_sets.emplace_back("quantize", q.specs);
      for (const auto& w : q.state.warnings) warnings.push_back("quantization: " + w);
      const double acc = evaluate(model, data.test).accuracy;
      stages.push_back({{"stage", "quantize"},
                        {"bits", bits},
                        {"specs", specs_json(q.specs)},
                        {"admm", history_json(q.state)},
                        {"test_accuracy", acc}});
      break;
    }
  }
  json constraints = json::array();
  for (const auto& [stage, specs] : constraint_sets) {
    const auto violations = constraint_violations(model, specs);
    if (!violations.empty()) {
      throw std::logic_error("compressed model is infeasible after " + stage + ": " + violations.front());
    }
    constraints.push_back({{"stage", stage}, {"specs", specs_json(specs)}});
  }

  const double acc = evaluate(model, data.test).accuracy;
  const auto overall = pruning_rate(model);
  const auto conv = pruning_rate(model, is_conv_layer);
  save_checkpoint(model, run.file("model.ckpt.json"));
  const StorageReport storage = storage_report(model, inferred_quant_bits(model), StorageRegime::automatic);
  write_text_atomic(run.file("storage.txt"), storage_table_text({{"compressed", acc, storage}}));
  write_json(run.file("manifest.json"),
             json{{"command", "compress"},
                  {"regime", to_string(regime)},
                  {"seed", config.seed},
                  {"init_checkpoint", config.init_checkpoint},
                  {"input_accuracy", baseline_acc},
                  {"test_accuracy", acc},
                  {"stages", stages},
                  {"constraints", constraints},
                  {"overall_prune_rate", std::isinf(overall.rate()) ? json(nullptr) : json(overall.rate())},
                  {"conv_prune_rate", std::isinf(conv.rate()) ? json(nullptr) : json(conv.rate())},
                  {"storage", to_json(storage)},
                  {"warnings", warnings},
                  {"checkpoint", "model.ckpt.json"}});
  run.commit();
  std::ostringstream summary;
  summary << "compressed (" << to_string(regime) << "): test accuracy " << percent(acc) << " (input "
          << percent(baseline_acc) << "), overall prune rate " << std::setprecision(4) << overall.rate()
          << "x, CONV prune rate " << conv.rate() << "x";
  return CommandResult{run.final_path(), 0, summary.str()};
}

CommandResult cmd_compare(const ExperimentConfig& config, const Datasets& data, const CommandOptions& options) {
  config.validate();
  Model baseline = initial_model(config, true);
  require_layers(config.compress.nonstructured_rates, baseline, "compress.nonstructured_rates");
  require_layers(config.compress.column_rates, baseline, "compress.column_rates");
  require_layers(config.compress.filter_rates, baseline, "compress.filter_rates");
  RunDirectory run(config.output_dir,
                   options.run_name.empty() ? default_name("compare", config.seed) : options.run_name,
                   options.overwrite);
  write_json(run.file("config.json"), to_json(config));
  auto& log = logger(options);

  PipelineSettings base;
  base.accuracy_band = config.comparison.accuracy_band;
  base.max_backoff = config.comparison.max_backoff;
  base.conv_only = config.comparison.conv_only;
  base.quant_bits = config.comparison.quant_bits;
  base.quant_epsilon_fraction = config.quantization.epsilon_fraction;
  base.admm.schedule = config.rho;
  base.admm.train = config.admm_train;
  base.admm.train.seed = config.seed;
  base.admm.divergence_factor = config.divergence_factor;
  base.admm.divergence_floor = config.divergence_floor;
  base.admm.residual_growth_warn = config.residual_growth_warn;
  base.retrain.train = config.retrain;
  base.retrain.train.seed = config.seed;
  base.retrain.collapse_points = config.collapse_points;

  PipelineSettings ns = base;
  ns.target_rates = config.compress.nonstructured_rates;
  PipelineSettings st = base;
  st.target_rates = config.compress.column_rates;
  st.filter_rates = config.compress.filter_rates;

  PprModel ppr;
  ppr.nonstructured_ppr = config.comparison.ppr_nonstructured;
  log << "non-structured pipeline" << std::endl;
  auto a = run_nonstructured_pipeline(baseline, data.train, data.test, ns);
  log << "  accuracy " << percent(a.final_accuracy) << std::endl;
  log << "structured pipeline" << std::endl;
  auto b = run_structured_pipeline(baseline, data.train, data.test, st);
  log << "  accuracy " << percent(b.final_accuracy) << std::endl;
  const ComparisonReport report = make_report(a, b, ppr, config.comparison.accuracy_band);

  save_checkpoint(a.final_model, run.file("nonstructured.ckpt.json"));
  save_checkpoint(b.final_model, run.file("structured.ckpt.json"));
  write_json(run.file("report.json"), to_json(report));
  write_text_atomic(run.file("report.txt"), comparison_table_text(report));
  json steps = json::array();
  for (const auto* p : {&a, &b}) {
    for (const auto& s : p->steps) {
      json admm_states = json::array();
      for (const auto& st_ : s.admm_states) admm_states.push_back(history_json(st_));
      steps.push_back({{"pipeline", p->regime},
                       {"step", s.name},
                       {"accepted", s.accepted},
                       {"backoffs", s.backoffs},
                       {"accuracy", s.accuracy},
                       {"specs", specs_json(s.specs)},
                       {"admm", admm_states}});
    }
  }
  write_json(run.file("manifest.json"), json{{"command", "compare"},
                                             {"seed", config.seed},
                                             {"init_checkpoint", config.init_checkpoint},
                                             {"steps", steps},
                                             {"overall", to_string(report.overall)}});
  run.commit();
  return CommandResult{run.final_path(), exit_code_for(report.overall), comparison_table_text(report)};
}

StorageReport analyze_file(const std::string& path, const AnalyzeOptions& options) {
  const json j = [&] {
    try {
      return json::parse(read_text(path));
    } catch (const json::parse_error& e) {
      throw FormatError(path + ": " + e.what());
    }
  }();
  if (j.is_object() && j.contains("format")) {
    const Model model = model_from_json(j);
    StorageScope scope{options.conv_only};
    const unsigned bits = options.quant_bits.value_or(inferred_quant_bits(model, scope));
    std::vector<GemmMatrix> mats;
    for (const auto& layer : model.layers)
      if (!scope.conv_only || layer.kind() == LayerKind::conv) mats.push_back(as_matrix(layer.weights));
    if (mats.empty()) throw std::invalid_argument(path + ": no layers in scope");
    return storage_report(mats, bits, options.regime, options.scheme, options.index_bits);
  }
  const GemmMatrix m = read_matrix_file(path);
  return storage_report({m}, options.quant_bits.value_or(32), options.regime, options.scheme, options.index_bits);
}

std::string cmd_analyze(const std::string& path, const AnalyzeOptions& options) {
  const StorageReport r = analyze_file(path, options);
  const std::vector<StorageRow> rows{{fs::path(path).filename().string(), std::nullopt, r}};
  switch (options.format) {
    case ReportFormat::csv:
      return storage_table_csv(rows);
    case ReportFormat::json:
      return to_json(r).dump(2) + "\n";
    case ReportFormat::text:
      break;
  }
  std::ostringstream out;
  out << storage_table_text(rows);
  out << (r.structured ? "structured" : "non-structured") << " accounting, " << r.dummy_zeros
      << " dummy zeros; " << (r.scheme == IndexScheme::csr_relative ? "relative" : "absolute")
      << " total " << format_bytes(r.primary_total_bytes()) << '\n';
  return out.str();
}

std::string cmd_tables(const std::string& input, ReportFormat format, double ppr_nonstructured) {
  PprModel ppr;
  ppr.nonstructured_ppr = ppr_nonstructured;
  const auto result = recompute_tables(load_published_tables(input), ppr);
  switch (format) {
    case ReportFormat::csv:
      return tables_csv(result);
    case ReportFormat::json:
      return to_json(result).dump(2) + "\n";
    case ReportFormat::text:
      break;
  }
  return tables_text(result);
}

}  // namespace admmprune
