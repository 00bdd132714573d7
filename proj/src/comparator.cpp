#include "admmprune/comparator.hpp"

#include <cmath>
#include <iomanip>
#include <limits>
#include <sstream>

namespace admmprune {

using nlohmann::json;

void PprModel::validate() const {
  if (!(structured_ppr >= 1.0)) throw std::invalid_argument("ppr.structured must be >= 1");
  if (!(nonstructured_ppr >= 1.0)) throw std::invalid_argument("ppr.nonstructured must be >= 1");
}

double effective_speedup(double prune_rate, double ppr) {
  if (!(prune_rate >= 1.0)) throw std::invalid_argument("prune rate must be >= 1");
  if (!(ppr >= 1.0)) throw std::invalid_argument("PPR must be >= 1");
  return prune_rate / ppr;
}

const char* to_string(Winner w) {
  switch (w) {
    case Winner::structured:
      return "structured";
    case Winner::nonstructured:
      return "nonstructured";
    case Winner::tie:
      return "tie";
  }
  return "?";
}

namespace {

Winner winner_from(const std::string& s) {
  for (auto w : {Winner::structured, Winner::nonstructured, Winner::tie})
    if (s == to_string(w)) return w;
  throw std::invalid_argument("unknown verdict '" + s + "'");
}

}  // namespace

ComputeVerdict decide_compute(double ns_rate, double s_rate, const PprModel& ppr) {
  ppr.validate();
  ComputeVerdict v;
  v.nonstructured_speedup = effective_speedup(ns_rate, ppr.nonstructured_ppr);
  v.structured_speedup = effective_speedup(s_rate, ppr.structured_ppr);
  v.nonstructured_no_benefit = v.nonstructured_speedup <= 1.0;
  v.structured_no_benefit = v.structured_speedup <= 1.0;
  v.rate_ratio = s_rate / ns_rate;
  v.winner = ns_rate / s_rate > ppr.nonstructured_ppr ? Winner::nonstructured : Winner::structured;
  return v;
}

StorageVerdict decide_storage(const StorageReport& ns, double ns_accuracy, const StorageReport& s, double s_accuracy,
                              double band) {
  if (!(band >= 0.0)) throw std::invalid_argument("accuracy band must be >= 0");
  const double gap = std::abs(ns_accuracy - s_accuracy);
  if (gap > band) {
    std::ostringstream msg;
    msg << "accuracies are not matched: non-structured " << ns_accuracy << " vs structured " << s_accuracy
        << " differ by " << gap << " > band " << band;
    throw AccuracyMismatchError(msg.str());
  }
  StorageVerdict v;
  v.nonstructured_bytes = ns.structured ? ns.weight_store_bytes : ns.relative_bytes;
  v.structured_bytes = s.weight_store_bytes;
  const double lo = std::min(v.nonstructured_bytes, v.structured_bytes);
  const double hi = std::max(v.nonstructured_bytes, v.structured_bytes);
  if (v.nonstructured_bytes == v.structured_bytes) {
    v.winner = Winner::tie;
    v.margin = 1.0;
    v.annotation = "identical storage";
    return v;
  }
  v.winner = v.nonstructured_bytes < v.structured_bytes ? Winner::nonstructured : Winner::structured;
  v.margin = lo > 0.0 ? hi / lo : std::numeric_limits<double>::infinity();
  if (v.margin <= 1.5) {
    v.annotation = std::string(to_string(v.winner)) + " slightly better; storage comparable";
  } else {
    v.annotation = std::string(to_string(v.winner)) + " better";
  }
  if (v.winner == Winner::nonstructured) {
    v.annotation += "; non-structured sparsity needs dedicated hardware support for its indices";
  }
  return v;
}

Winner overall_verdict(const ComputeVerdict& compute, const std::optional<StorageVerdict>& storage) {
  if (compute.winner != Winner::nonstructured) return Winner::structured;
  if (storage && storage->winner == Winner::structured) return Winner::tie;
  return Winner::nonstructured;
}

namespace {

bool in_scope(const Layer& layer, const PipelineSettings& s) { return !s.conv_only || layer.kind() == LayerKind::conv; }

std::size_t groups_of(const Shape4& d, ConstraintKind kind) {
  switch (kind) {
    case ConstraintKind::nonstructured:
      return d.numel();
    case ConstraintKind::filter:
      return d.filters;
    case ConstraintKind::channel:
      return d.channels;
    case ConstraintKind::column:
      return d.filter_size();
    default:
      throw std::invalid_argument("not a pruning constraint");
  }
}

std::size_t live_groups(const WeightTensor& w, ConstraintKind kind) {
  switch (kind) {
    case ConstraintKind::nonstructured:
      return count_nonzero(w);
    case ConstraintKind::filter:
      return count_nonzero_groups(w, GroupAxis::filter);
    case ConstraintKind::channel:
      return count_nonzero_groups(w, GroupAxis::channel);
    case ConstraintKind::column:
      return count_nonzero_groups(w, GroupAxis::column);
    default:
      throw std::invalid_argument("not a pruning constraint");
  }
}

}  // namespace

Model prune_step(const Model& model, ConstraintKind kind, const std::vector<double>& rates, const Dataset& train,
                 const Dataset& test, double baseline_accuracy, const PipelineSettings& settings,
                 PipelineStep& record) {
  if (rates.size() != model.layers.size()) {
    throw std::invalid_argument("step '" + record.name + "' needs one rate per layer");
  }
  // Removal targets per layer, measured from the current live groups.
  std::vector<std::size_t> groups(rates.size(), 0), live(rates.size(), 0), removal(rates.size(), 0);
  bool any = false;
  for (std::size_t i = 0; i < rates.size(); ++i) {
    const Layer& layer = model.layers[i];
    if (!in_scope(layer, settings) || rates[i] <= 1.0) continue;
    groups[i] = groups_of(layer.weights.dims(), kind);
    live[i] = live_groups(layer.weights, kind);
    const std::size_t target = budget_for_rate(groups[i], rates[i]);
    if (live[i] > target) {
      removal[i] = live[i] - target;
      any = true;
    }
  }
  record.specs.assign(rates.size(), ConstraintSpec::none());
  if (!any) {
    record.accuracy = evaluate(model, test).accuracy;
    return model;
  }

  RetrainOptions retrain = settings.retrain;
  retrain.eval = &test;
  retrain.baseline_accuracy = baseline_accuracy;
  for (std::size_t attempt = 0; attempt <= settings.max_backoff; ++attempt) {
    CompressionPlan plan;
    plan.round1.assign(rates.size(), ConstraintSpec::none());
    plan.round2.assign(rates.size(), ConstraintSpec::none());
    for (std::size_t i = 0; i < rates.size(); ++i) {
      if (removal[i] == 0) continue;
      const std::size_t remove = removal[i] >> attempt;
      if (remove == 0) continue;
      const std::size_t final_budget = live[i] - remove;
      // Round 1 aims at half the final rate.
      const double rate = static_cast<double>(groups[i]) / static_cast<double>(final_budget);
      std::size_t round1 = budget_for_rate(groups[i], std::max(1.0, rate / 2.0));
      round1 = std::clamp(round1, final_budget, live[i]);
      plan.round1[i] = ConstraintSpec{kind, round1, {}};
      plan.round2[i] = ConstraintSpec{kind, final_budget, {}};
    }
    record.specs = plan.round2;
    record.backoffs = attempt;
    try {
      auto result = progressive_prune(model, plan, train, settings.admm, retrain);
      const double acc = evaluate(result.model, test).accuracy;
      record.accuracy = acc;
      record.admm_states = {result.round1_state, result.round2_state};
      if (baseline_accuracy - acc <= settings.accuracy_band) {
        record.accepted = true;
        return result.model;
      }
    } catch (const AccuracyCollapseError&) {
      record.accuracy = 0.0;
    } catch (const DivergenceError&) {
      record.accuracy = 0.0;
    }
  }
  record.accepted = false;
  record.specs.assign(rates.size(), ConstraintSpec::none());
  record.accuracy = evaluate(model, test).accuracy;
  return model;
}

namespace {

void check_rates(const std::vector<double>& rates, const Model& model, const char* what) {
  if (rates.size() != model.layers.size()) {
    throw std::invalid_argument(std::string(what) + " must have one entry per layer (" +
                                std::to_string(model.layers.size()) + ")");
  }
  for (double r : rates)
    if (!(r == 0.0 || r >= 1.0)) throw std::invalid_argument(std::string(what) + " entries must be 0 or >= 1");
}

void quantize_stage(PipelineResult& out, const Dataset& train, const Dataset& test,
                    const PipelineSettings& settings) {
  out.quant_bits = 32;
  out.final_model = out.pruned;
  out.final_accuracy = out.pruned_accuracy;
  if (settings.quant_bits == 0) return;
  std::vector<unsigned> bits(out.pruned.layers.size(), 0);
  for (std::size_t i = 0; i < bits.size(); ++i)
    if (in_scope(out.pruned.layers[i], settings)) bits[i] = settings.quant_bits;
  PipelineStep step;
  step.name = "quantize";
  if (settings.quantizer) {
    out.final_model = settings.quantizer(out.pruned, bits, train);
  } else {
    RetrainOptions retrain = settings.retrain;
    retrain.eval = &test;
    retrain.baseline_accuracy = out.baseline_accuracy;
    auto q = admm_quantize(out.pruned, bits, train, settings.admm, retrain, settings.quant_epsilon_fraction);
    step.specs = q.specs;
    step.admm_states = {q.state};
    out.final_model = std::move(q.model);
  }
  out.quant_bits = settings.quant_bits;
  out.final_accuracy = evaluate(out.final_model, test).accuracy;
  step.accuracy = out.final_accuracy;
  if (out.baseline_accuracy - out.final_accuracy > settings.accuracy_band) {
    std::ostringstream msg;
    msg << "quantization to " << settings.quant_bits << " bits lost " << (out.pruned_accuracy - out.final_accuracy)
        << " accuracy (band " << settings.accuracy_band << ")";
    out.warnings.push_back(msg.str());
  }
  out.steps.push_back(std::move(step));
}

void collect_warnings(PipelineResult& out) {
  for (const auto& s : out.steps)
    if (!s.accepted) out.warnings.push_back("step '" + s.name + "' could not hold the accuracy band; skipped");
}

}  // namespace

PipelineResult run_nonstructured_pipeline(const Model& baseline, const Dataset& train, const Dataset& test,
                                          const PipelineSettings& settings) {
  check_rates(settings.target_rates, baseline, "target_rates");
  PipelineResult out;
  out.regime = "nonstructured";
  out.baseline_accuracy = evaluate(baseline, test).accuracy;
  PipelineStep step;
  step.name = "nonstructured";
  out.pruned = prune_step(baseline, ConstraintKind::nonstructured, settings.target_rates, train, test,
                          out.baseline_accuracy, settings, step);
  out.pruned_accuracy = step.accuracy;
  out.steps.push_back(std::move(step));
  collect_warnings(out);
  quantize_stage(out, train, test, settings);
  return out;
}

PipelineResult run_structured_pipeline(const Model& baseline, const Dataset& train, const Dataset& test,
                                       const PipelineSettings& settings) {
  check_rates(settings.target_rates, baseline, "target_rates");
  check_rates(settings.filter_rates, baseline, "filter_rates");
  PipelineResult out;
  out.regime = "structured";
  out.baseline_accuracy = evaluate(baseline, test).accuracy;
  PipelineStep column;
  column.name = "column";
  Model m = prune_step(baseline, ConstraintKind::column, settings.target_rates, train, test, out.baseline_accuracy,
                       settings, column);
  out.steps.push_back(std::move(column));
  PipelineStep filter;
  filter.name = "filter";
  out.pruned = prune_step(m, ConstraintKind::filter, settings.filter_rates, train, test, out.baseline_accuracy,
                          settings, filter);
  out.pruned_accuracy = filter.accuracy;
  out.steps.push_back(std::move(filter));
  collect_warnings(out);
  quantize_stage(out, train, test, settings);
  return out;
}

ComparisonReport make_report(const PipelineResult& ns, const PipelineResult& s, const PprModel& ppr, double band) {
  ComparisonReport r;
  r.baseline_accuracy = ns.baseline_accuracy;
  r.ppr = ppr;
  r.accuracy_band = band;
  r.nonstructured.storage = storage_report(ns.final_model, ns.quant_bits, StorageRegime::nonstructured);
  r.nonstructured.prune_rate = r.nonstructured.storage.prune_rate();
  r.nonstructured.quant_bits = ns.quant_bits;
  r.nonstructured.accuracy = ns.final_accuracy;
  r.structured.storage = storage_report(s.final_model, s.quant_bits, StorageRegime::structured);
  r.structured.prune_rate = r.structured.storage.prune_rate();
  r.structured.quant_bits = s.quant_bits;
  r.structured.accuracy = s.final_accuracy;
  for (const auto& w : ns.warnings) r.notes.push_back("nonstructured: " + w);
  for (const auto& w : s.warnings) r.notes.push_back("structured: " + w);
  r.compute = decide_compute(r.nonstructured.prune_rate, r.structured.prune_rate, ppr);
  try {
    r.storage = decide_storage(r.nonstructured.storage, r.nonstructured.accuracy, r.structured.storage,
                               r.structured.accuracy, band);
  } catch (const AccuracyMismatchError& e) {
    r.storage_refusal = e.what();
  }
  r.overall = overall_verdict(r.compute, r.storage);
  return r;
}

ComparisonReport run_comparison(const Model& baseline, const Dataset& train, const Dataset& test,
                                const ComparisonSettings& settings) {
  settings.ppr.validate();
  PipelineSettings ns = settings.nonstructured;
  PipelineSettings st = settings.structured;
  ns.accuracy_band = st.accuracy_band = settings.accuracy_band;
  auto a = run_nonstructured_pipeline(baseline, train, test, ns);
  auto b = run_structured_pipeline(baseline, train, test, st);
  return make_report(a, b, settings.ppr, settings.accuracy_band);
}

int exit_code_for(Winner overall) {
  switch (overall) {
    case Winner::structured:
      return 0;
    case Winner::nonstructured:
      return 3;
    case Winner::tie:
      return 4;
  }
  return 4;
}

namespace {

json summary_json(const RegimeSummary& s) {
  return json{{"prune_rate", s.prune_rate},
              {"quant_bits", s.quant_bits},
              {"accuracy", s.accuracy},
              {"storage", to_json(s.storage)}};
}

RegimeSummary summary_from(const json& j) {
  RegimeSummary s;
  s.prune_rate = j.at("prune_rate").get<double>();
  s.quant_bits = j.at("quant_bits").get<unsigned>();
  s.accuracy = j.at("accuracy").get<double>();
  s.storage = storage_report_from_json(j.at("storage"));
  return s;
}

}  // namespace

json to_json(const ComparisonReport& r) {
  json j{{"baseline_accuracy", r.baseline_accuracy},
         {"nonstructured", summary_json(r.nonstructured)},
         {"structured", summary_json(r.structured)},
         {"ppr", {{"structured", r.ppr.structured_ppr}, {"nonstructured", r.ppr.nonstructured_ppr}}},
         {"accuracy_band", r.accuracy_band},
         {"compute",
          {{"winner", to_string(r.compute.winner)},
           {"rate_ratio", r.compute.rate_ratio},
           {"nonstructured_speedup", r.compute.nonstructured_speedup},
           {"structured_speedup", r.compute.structured_speedup},
           {"nonstructured_no_benefit", r.compute.nonstructured_no_benefit},
           {"structured_no_benefit", r.compute.structured_no_benefit}}},
         {"overall", to_string(r.overall)},
         {"notes", r.notes}};
  if (r.storage) {
    j["storage"] = {{"winner", to_string(r.storage->winner)},
                    {"nonstructured_bytes", r.storage->nonstructured_bytes},
                    {"structured_bytes", r.storage->structured_bytes},
                    {"margin", r.storage->margin},
                    {"annotation", r.storage->annotation}};
  } else {
    j["storage"] = nullptr;
    j["storage_refusal"] = r.storage_refusal;
  }
  return j;
}

ComparisonReport comparison_report_from_json(const json& j) {
  ComparisonReport r;
  r.baseline_accuracy = j.at("baseline_accuracy").get<double>();
  r.nonstructured = summary_from(j.at("nonstructured"));
  r.structured = summary_from(j.at("structured"));
  r.ppr.structured_ppr = j.at("ppr").at("structured").get<double>();
  r.ppr.nonstructured_ppr = j.at("ppr").at("nonstructured").get<double>();
  r.accuracy_band = j.at("accuracy_band").get<double>();
  r.notes = j.value("notes", std::vector<std::string>{});
  // Verdicts are recomputed from the numbers.
  r.compute = decide_compute(r.nonstructured.prune_rate, r.structured.prune_rate, r.ppr);
  try {
    r.storage = decide_storage(r.nonstructured.storage, r.nonstructured.accuracy, r.structured.storage,
                               r.structured.accuracy, r.accuracy_band);
  } catch (const AccuracyMismatchError& e) {
    r.storage_refusal = e.what();
  }
  r.overall = overall_verdict(r.compute, r.storage);
  if (j.contains("overall") && winner_from(j.at("overall").get<std::string>()) != r.overall) {
    throw std::runtime_error("stored overall verdict disagrees with the report numbers");
  }
  return r;
}

std::string comparison_table_text(const ComparisonReport& r) {
  std::ostringstream out;
  out << storage_table_text({{"Non-structured", r.nonstructured.accuracy, r.nonstructured.storage},
                             {"Structured", r.structured.accuracy, r.structured.storage}});
  out << std::fixed << std::setprecision(3);
  out << "\nbaseline accuracy: " << r.baseline_accuracy * 100.0 << "%\n";
  out << "rate ratio (structured / non-structured): " << std::setprecision(1) << r.compute.rate_ratio * 100.0
      << "%\n";
  out << std::setprecision(3) << "effective speedup: non-structured " << r.compute.nonstructured_speedup
      << "x (PPR " << r.ppr.nonstructured_ppr << "), structured " << r.compute.structured_speedup << "x (PPR "
      << r.ppr.structured_ppr << ")\n";
  out << "compute: " << to_string(r.compute.winner) << " preferred\n";
  if (r.storage) {
    out << "storage: " << to_string(r.storage->winner) << " (margin " << r.storage->margin << "x; "
        << r.storage->annotation << ")\n";
  } else {
    out << "storage: not compared (" << r.storage_refusal << ")\n";
  }
  out << "overall: " << to_string(r.overall) << '\n';
  for (const auto& n : r.notes) out << "note: " << n << '\n';
  return out.str();
}

}  // namespace admmprune
