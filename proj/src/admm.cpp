#include "admmprune/admm.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <sstream>

namespace admmprune {

using nlohmann::json;

double RhoSchedule::at(std::size_t iteration) const {
  return initial * std::pow(growth, static_cast<double>(iteration));
}

void RhoSchedule::validate() const {
  if (!(initial > 0.0)) throw std::invalid_argument("rho.initial must be > 0");
  if (!(growth >= 1.0)) throw std::invalid_argument("rho.growth must be >= 1");
  if (max_iterations < 1) throw std::invalid_argument("rho.max_iterations must be >= 1");
}

double IterationRecord::max_relative_residual() const {
  double m = 0.0;
  for (double r : relative_residual) m = std::max(m, r);
  return m;
}

ProjectionResult project_respecting_mask(const WeightTensor& x, const ConstraintSpec& spec, const Layer& layer) {
  if (layer.mask.empty()) return project(x, spec);
  auto xv = x.values();
  auto wv = layer.weights.values();
  std::vector<double> in(xv.begin(), xv.end());
  for (std::size_t k = 0; k < in.size(); ++k)
    if (!layer.is_free(k)) in[k] = wv[k];
  WeightTensor masked(x.kind(), x.dims(), std::move(in));
  ProjectionResult r = project(masked, spec);
  if (spec.kind == ConstraintKind::quantization) {
    auto z = r.projected.mutable_values();
    for (std::size_t k = 0; k < z.size(); ++k) {
      if (!layer.is_free(k)) {
        z[k] = wv[k];
        r.mask[k] = z[k] != 0.0;
      }
    }
  }
  double dist = 0.0;
  auto z = r.projected.values();
  for (std::size_t k = 0; k < z.size(); ++k) dist += (xv[k] - z[k]) * (xv[k] - z[k]);
  r.distance = dist;
  return r;
}

bool feasible_with_mask(const WeightTensor& w, const ConstraintSpec& spec, const Layer& layer) {
  if (spec.kind != ConstraintKind::quantization) {
    if (!satisfies(w, spec)) return false;
    auto v = w.values();
    auto cur = layer.weights.values();
    for (std::size_t k = 0; k < v.size(); ++k)
      if (!layer.is_free(k) && v[k] != cur[k]) return false;
    return true;
  }
  auto v = w.values();
  for (std::size_t k = 0; k < v.size(); ++k) {
    const bool on_level = std::binary_search(spec.levels.begin(), spec.levels.end(), v[k]);
    if (layer.is_free(k) ? !on_level : !(on_level || v[k] == 0.0)) return false;
  }
  return true;
}

namespace {

double frobenius(std::span<const double> a) {
  double s = 0.0;
  for (double v : a) s += v * v;
  return std::sqrt(s);
}

bool bit_equal(double a, double b) { return std::memcmp(&a, &b, sizeof(double)) == 0; }

std::vector<LayerAdmmState> init_layers(const Model& model, const std::vector<ConstraintSpec>& specs) {
  if (specs.size() != model.layers.size()) {
    throw std::invalid_argument("one constraint spec per layer is required");
  }
  std::vector<LayerAdmmState> out;
  for (std::size_t i = 0; i < specs.size(); ++i) {
    if (specs[i].kind == ConstraintKind::none) continue;
    const Layer& layer = model.layers[i];
    specs[i].validate(layer.weights.dims());
    LayerAdmmState st;
    st.layer = i;
    st.spec = specs[i];
    auto z = project_respecting_mask(layer.weights, specs[i], layer).projected.values();
    st.z.assign(z.begin(), z.end());
    st.u.assign(layer.weights.size(), 0.0);
    out.push_back(std::move(st));
  }
  return out;
}

}  // namespace

bool diverged(double loss, double initial, double factor, double floor) {
  return !std::isfinite(loss) || loss > factor * std::max(initial, floor);
}

AdmmEngine::AdmmEngine(Model model, const std::vector<ConstraintSpec>& specs, AdmmOptions options)
    : options_(std::move(options)), session_(std::move(model), options_.train) {
  options_.schedule.validate();
  state_.layers = init_layers(session_.model(), specs);
  for (auto& l : state_.layers) l.rho = options_.schedule.at(0);
}

AdmmEngine::AdmmEngine(Model model, AdmmState state, AdmmOptions options)
    : options_(std::move(options)), session_(std::move(model), options_.train), state_(std::move(state)) {
  options_.schedule.validate();
  for (const auto& l : state_.layers) {
    if (l.layer >= session_.model().layers.size() || l.z.size() != session_.model().layers[l.layer].weights.size() ||
        l.u.size() != l.z.size()) {
      throw std::invalid_argument("ADMM state does not match the model");
    }
  }
  // Continue shuffling and the lr schedule where the saved run stopped.
  session_.set_epoch(state_.session_epoch);
}

double AdmmEngine::regularizer_value() const {
  double total = 0.0;
  for (const auto& l : state_.layers) {
    auto w = session_.model().layers[l.layer].weights.values();
    double s = 0.0;
    for (std::size_t k = 0; k < w.size(); ++k) {
      const double r = w[k] - l.z[k] + l.u[k];
      s += r * r;
    }
    total += 0.5 * l.rho * s;
  }
  return total;
}

void AdmmEngine::add_regularizer_gradient(const Model& model, Gradients& grads) const {
  for (const auto& l : state_.layers) {
    auto w = model.layers[l.layer].weights.values();
    auto& g = grads[l.layer].weights;
    for (std::size_t k = 0; k < w.size(); ++k) g[k] += l.rho * (w[k] - l.z[k] + l.u[k]);
  }
}

const IterationRecord& AdmmEngine::step(const Dataset& train) {
  IterationRecord rec;
  rec.iteration = state_.iteration;
  for (auto& l : state_.layers) l.rho = options_.schedule.at(state_.iteration);

  // Subproblem 1: loss + quadratic term, solved by SGD.
  const GradientHook hook = [this](const Model& m, Gradients& g) { add_regularizer_gradient(m, g); };
  double loss = 0.0;
  for (std::size_t e = 0; e < options_.train.epochs; ++e) {
    auto st = session_.run_epoch(train, state_.layers.empty() ? GradientHook{} : hook);
    loss = st.loss;
    if (initial_loss_ < 0.0) initial_loss_ = st.loss;
    if (diverged(st.loss, initial_loss_, options_.divergence_factor, options_.divergence_floor)) {
      std::ostringstream msg;
      msg << "ADMM iteration " << state_.iteration << ": epoch loss " << st.loss << " exceeds "
          << options_.divergence_factor << "x the reference loss "
          << std::max(initial_loss_, options_.divergence_floor);
      throw DivergenceError(msg.str());
    }
  }
  rec.train_loss = loss;
  state_.session_epoch = session_.epoch();

  // Subproblem 2 (projection) and dual update.
  const Model& model = session_.model();
  for (auto& l : state_.layers) {
    const Layer& layer = model.layers[l.layer];
    auto w = layer.weights.values();
    std::vector<double> wu(w.size());
    for (std::size_t k = 0; k < w.size(); ++k) wu[k] = w[k] + l.u[k];
    auto proj = project_respecting_mask(WeightTensor(layer.kind(), layer.weights.dims(), std::move(wu)), l.spec, layer);
    auto z = proj.projected.values();
    l.z.assign(z.begin(), z.end());
    rec.z_feasible = rec.z_feasible && feasible_with_mask(proj.projected, l.spec, layer);

    std::vector<double> u_prev = l.u;
    std::vector<double> diff(w.size());
    for (std::size_t k = 0; k < w.size(); ++k) {
      diff[k] = w[k] - l.z[k];
      l.u[k] = u_prev[k] + diff[k];
    }
    for (std::size_t k = 0; k < w.size(); ++k) {
      const double recomputed = u_prev[k] + (w[k] - l.z[k]);
      if (!bit_equal(l.u[k], recomputed)) rec.dual_update_exact = false;
      if (!bit_equal(l.u[k] - u_prev[k], diff[k])) ++rec.dual_difference_mismatches;
    }
    const double res = frobenius(diff);
    const double wn = frobenius(w);
    rec.rho.push_back(l.rho);
    rec.residual.push_back(res);
    rec.relative_residual.push_back(wn > 0.0 ? res / wn : (res > 0.0 ? std::numeric_limits<double>::infinity() : 0.0));
  }
  if (options_.eval) rec.test_accuracy = evaluate(model, *options_.eval).accuracy;

  state_.history.push_back(rec);
  ++state_.iteration;

  // Residual growth guard: warn after `residual_growth_warn` consecutive increases.
  const auto& h = state_.history;
  const std::size_t n = options_.residual_growth_warn;
  if (n > 0 && h.size() > n) {
    bool growing = true;
    for (std::size_t j = h.size() - n; j < h.size() && growing; ++j) {
      double cur = 0.0, prev = 0.0;
      for (double r : h[j].residual) cur += r * r;
      for (double r : h[j - 1].residual) prev += r * r;
      growing = cur > prev;
    }
    if (growing) {
      state_.warnings.push_back("residual grew for " + std::to_string(n) + " consecutive iterations (iteration " +
                                std::to_string(rec.iteration) + ")");
    }
  }
  if (options_.on_iteration) options_.on_iteration(state_.history.back());
  return state_.history.back();
}

void AdmmEngine::run(const Dataset& train) {
  while (!done()) step(train);
}

AdmmResult admm_regularize(Model model, const std::vector<ConstraintSpec>& specs, const Dataset& train,
                           const AdmmOptions& options) {
  AdmmEngine engine(std::move(model), specs, options);
  engine.run(train);
  return AdmmResult{engine.model(), engine.state()};
}

Model solve_subproblem1(Model model, const AdmmState& state, const Dataset& train, const TrainConfig& config,
                        double divergence_factor, double divergence_floor) {
  TrainingSession session(std::move(model), config);
  const GradientHook hook = [&state](const Model& m, Gradients& g) {
    for (const auto& l : state.layers) {
      auto w = m.layers[l.layer].weights.values();
      auto& gw = g[l.layer].weights;
      for (std::size_t k = 0; k < w.size(); ++k) gw[k] += l.rho * (w[k] - l.z[k] + l.u[k]);
    }
  };
  double initial = -1.0;
  for (std::size_t e = 0; e < config.epochs; ++e) {
    auto st = session.run_epoch(train, state.layers.empty() ? GradientHook{} : hook);
    if (initial < 0.0) initial = st.loss;
    if (diverged(st.loss, initial, divergence_factor, divergence_floor)) {
      throw DivergenceError("subproblem 1 diverged: epoch loss " + std::to_string(st.loss));
    }
  }
  return session.model();
}

namespace {

void guard_collapse(const Model& model, const RetrainOptions& opt, const char* stage) {
  if (!opt.eval || !opt.baseline_accuracy) return;
  const double acc = evaluate(model, *opt.eval).accuracy;
  if (acc < *opt.baseline_accuracy - opt.collapse_points) {
    std::ostringstream msg;
    msg << stage << ": accuracy " << acc << " collapsed below baseline " << *opt.baseline_accuracy << " - "
        << opt.collapse_points;
    throw AccuracyCollapseError(msg.str());
  }
}

Model retrain(Model model, const RetrainOptions& opt, const Dataset& train) {
  TrainingSession session(std::move(model), opt.train);
  for (std::size_t e = 0; e < opt.train.epochs; ++e) session.run_epoch(train);
  return session.model();
}

}  // namespace

Model masked_map_retrain_prune(Model model, const std::vector<ConstraintSpec>& specs, const Dataset& train,
                               const RetrainOptions& options) {
  if (specs.size() != model.layers.size()) throw std::invalid_argument("one constraint spec per layer is required");
  for (std::size_t i = 0; i < specs.size(); ++i) {
    if (specs[i].kind == ConstraintKind::none) continue;
    if (!specs[i].is_pruning()) throw std::invalid_argument("masked_map_retrain_prune expects pruning specs");
    Layer& layer = model.layers[i];
    auto proj = project_respecting_mask(layer.weights, specs[i], layer);
    const auto& d = layer.weights.dims();
    std::vector<std::uint8_t> mask(layer.weights.size(), 1);
    auto z = proj.projected.values();
    for (std::size_t k = 0; k < z.size(); ++k)
      if (z[k] == 0.0) mask[k] = 0;
    if (specs[i].kind != ConstraintKind::nonstructured) {
      // Structured masks follow the kept groups.
      const GroupAxis axis = specs[i].kind == ConstraintKind::filter    ? GroupAxis::filter
                             : specs[i].kind == ConstraintKind::channel ? GroupAxis::channel
                                                                        : GroupAxis::column;
      std::vector<char> live(group_count(d, axis), 0);
      for (std::size_t k = 0; k < z.size(); ++k)
        if (z[k] != 0.0) live[group_of(d, axis, k)] = 1;
      for (std::size_t k = 0; k < z.size(); ++k) mask[k] = live[group_of(d, axis, k)] && layer.is_free(k);
    } else {
      for (std::size_t k = 0; k < z.size(); ++k) mask[k] = mask[k] && layer.is_free(k);
    }
    layer.weights = proj.projected;
    layer.mask = std::move(mask);
  }
  for (std::size_t i = 0; i < specs.size(); ++i) {
    if (specs[i].kind != ConstraintKind::filter) continue;
    const auto& d = model.layers[i].weights.dims();
    std::vector<std::size_t> removed;
    for (std::size_t a = 0; a < d.filters; ++a) {
      bool zero = true;
      for (std::size_t k = a * d.filter_size(); zero && k < (a + 1) * d.filter_size(); ++k)
        zero = model.layers[i].weights.values()[k] == 0.0;
      if (zero) removed.push_back(a);
    }
    model = propagate_filter_pruning(model, i, removed);
  }
  guard_collapse(model, options, "masked mapping");
  model = retrain(std::move(model), options, train);
  guard_collapse(model, options, "masked retraining");
  for (std::size_t i = 0; i < specs.size(); ++i) {
    if (!satisfies(model.layers[i].weights, specs[i])) {
      throw std::logic_error("retrained layer '" + model.layers[i].name + "' violates its constraint");
    }
  }
  return model;
}

Model masked_map_retrain_quant(Model model, const std::vector<ConstraintSpec>& specs,
                               const std::vector<double>& epsilon, const Dataset& train,
                               const RetrainOptions& options) {
  if (specs.size() != model.layers.size() || epsilon.size() != specs.size()) {
    throw std::invalid_argument("one quantization spec and epsilon per layer is required");
  }
  std::vector<std::vector<std::uint8_t>> original_masks(model.layers.size());
  for (std::size_t i = 0; i < specs.size(); ++i) {
    original_masks[i] = model.layers[i].mask;
    if (specs[i].kind == ConstraintKind::none) continue;
    if (specs[i].kind != ConstraintKind::quantization) {
      throw std::invalid_argument("masked_map_retrain_quant expects quantization specs");
    }
    specs[i].validate(model.layers[i].weights.dims());
    if (!(epsilon[i] >= 0.0)) throw std::invalid_argument("epsilon must be >= 0");
    // Phase 1: map the weights that are already close to a level.
    Layer& layer = model.layers[i];
    if (layer.mask.empty()) layer.mask.assign(layer.weights.size(), 1);
    auto w = layer.weights.mutable_values();
    for (std::size_t k = 0; k < w.size(); ++k) {
      if (!layer.mask[k]) continue;
      const double q = nearest_level(w[k], specs[i].levels);
      if (std::abs(w[k] - q) <= epsilon[i]) {
        w[k] = q;
        layer.mask[k] = 0;
      }
    }
  }
  // Phase 2: retrain the unquantized weights.
  model = retrain(std::move(model), options, train);
  guard_collapse(model, options, "quantization retraining");
  // Phase 3: map the rest.
  for (std::size_t i = 0; i < specs.size(); ++i) {
    if (specs[i].kind == ConstraintKind::none) continue;
    Layer& layer = model.layers[i];
    auto w = layer.weights.mutable_values();
    for (std::size_t k = 0; k < w.size(); ++k)
      if (layer.mask[k]) w[k] = nearest_level(w[k], specs[i].levels);
    layer.mask = original_masks[i];
    const auto& lv = specs[i].levels;
    layer.quantization = QuantizationInfo{lv.size(), lv.size() > 1 ? lv[1] - lv[0] : 0.0};
    if (!feasible_with_mask(layer.weights, specs[i], layer)) {
      throw std::logic_error("quantized layer '" + layer.name + "' is not on its levels");
    }
  }
  return model;
}

void CompressionPlan::validate(const Model& model) const {
  if (round1.size() != model.layers.size() || (!round2.empty() && round2.size() != model.layers.size())) {
    throw std::invalid_argument("plan must have one spec per layer");
  }
  for (std::size_t i = 0; i < round1.size(); ++i) {
    round1[i].validate(model.layers[i].weights.dims());
    if (round2.empty()) continue;
    round2[i].validate(model.layers[i].weights.dims());
    if (round2[i].kind == ConstraintKind::none) continue;
    if (round1[i].kind != round2[i].kind && round1[i].kind != ConstraintKind::none) {
      throw std::invalid_argument("layer '" + model.layers[i].name + "': rounds use different constraint kinds");
    }
    if (round1[i].kind != ConstraintKind::none && round2[i].budget > round1[i].budget) {
      throw std::invalid_argument("layer '" + model.layers[i].name + "': round-2 budget " +
                                  std::to_string(round2[i].budget) + " exceeds round-1 budget " +
                                  std::to_string(round1[i].budget));
    }
  }
}

std::size_t budget_for_rate(std::size_t groups, double rate, std::vector<std::string>* warnings) {
  if (!(rate >= 1.0)) throw std::invalid_argument("pruning rate must be >= 1");
  auto b = static_cast<std::size_t>(std::floor(static_cast<double>(groups) / rate));
  if (b == 0 && groups > 0) {
    if (warnings) {
      std::ostringstream msg;
      msg << "budget for " << groups << " groups at rate " << rate << " rounds to 0; clamped to 1";
      warnings->push_back(msg.str());
    }
    b = 1;
  }
  return b;
}

std::size_t group_total(const Shape4& d, ConstraintKind kind) {
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
      throw std::invalid_argument("not a pruning constraint kind");
  }
}

CompressionPlan derive_plan(const Model& model, const std::vector<double>& prior_rates, ConstraintKind kind,
                            const MarginPolicy& margin) {
  if (prior_rates.size() != model.layers.size()) throw std::invalid_argument("one prior rate per layer is required");
  if (!(margin.extra >= 1.0)) throw std::invalid_argument("margin extra factor must be >= 1");
  CompressionPlan plan;
  for (std::size_t i = 0; i < model.layers.size(); ++i) {
    const double prior = prior_rates[i];
    if (prior == 0.0) {
      plan.round1.push_back(ConstraintSpec::none());
      plan.round2.push_back(ConstraintSpec::none());
      plan.round1_rates.push_back(1.0);
      plan.round2_rates.push_back(1.0);
      continue;
    }
    if (!(prior >= 1.0)) throw std::invalid_argument("prior rate for layer '" + model.layers[i].name + "' must be >= 1");
    const double r1 = prior * margin.round1_factor;
    const double r2 = r1 * margin.round2_factor * margin.extra;
    const auto& d = model.layers[i].weights.dims();
    const std::size_t groups = group_total(d, kind);
    plan.round1.push_back(ConstraintSpec{kind, budget_for_rate(groups, r1, &plan.warnings), {}});
    plan.round2.push_back(ConstraintSpec{kind, budget_for_rate(groups, r2, &plan.warnings), {}});
    plan.round1_rates.push_back(r1);
    plan.round2_rates.push_back(r2);
  }
  return plan;
}

namespace {

bool any_constrained(const std::vector<ConstraintSpec>& specs) {
  return std::any_of(specs.begin(), specs.end(), [](const ConstraintSpec& s) { return s.kind != ConstraintKind::none; });
}

}  // namespace

ProgressiveResult progressive_prune(Model model, const CompressionPlan& plan, const Dataset& train,
                                    const AdmmOptions& admm, const RetrainOptions& retrain) {
  plan.validate(model);
  if (plan.round2.empty()) throw std::invalid_argument("progressive pruning needs two rounds");
  ProgressiveResult out;
  // A round without constrained layers has nothing to prune and is skipped.
  if (any_constrained(plan.round1)) {
    auto r1 = admm_regularize(std::move(model), plan.round1, train, admm);
    out.round1_state = std::move(r1.state);
    out.round1_model = masked_map_retrain_prune(std::move(r1.model), plan.round1, train, retrain);
  } else {
    out.round1_model = std::move(model);
  }

  // Round 2 starts from round 1; its zeros stay frozen through the masks.
  if (!any_constrained(plan.round2)) {
    out.model = out.round1_model;
    return out;
  }
  auto r2 = admm_regularize(out.round1_model, plan.round2, train, admm);
  out.round2_state = std::move(r2.state);
  out.model = masked_map_retrain_prune(std::move(r2.model), plan.round2, train, retrain);
  return out;
}

CompressionPlan plan_from_targets(const Model& model, const std::vector<double>& target_rates, ConstraintKind kind,
                                  double round2_factor) {
  if (!(round2_factor >= 1.0)) throw std::invalid_argument("round-2 factor must be >= 1");
  std::vector<double> prior(target_rates.size(), 0.0);
  for (std::size_t i = 0; i < prior.size(); ++i) {
    if (target_rates[i] == 0.0) continue;
    if (!(target_rates[i] >= 1.0)) throw std::invalid_argument("target rates must be 0 or >= 1");
    prior[i] = target_rates[i];
  }
  MarginPolicy margin{1.0, round2_factor, 1.0};
  // derive_plan multiplies round 1 by round2_factor; start from target / factor.
  for (auto& p : prior)
    if (p != 0.0) p = std::max(1.0, p / round2_factor);
  CompressionPlan plan = derive_plan(model, prior, kind, margin);
  for (std::size_t i = 0; i < prior.size(); ++i) {
    if (prior[i] == 0.0) continue;
    const std::size_t groups = group_total(model.layers[i].weights.dims(), kind);
    plan.round2[i].budget = budget_for_rate(groups, target_rates[i], &plan.warnings);
    plan.round2_rates[i] = target_rates[i];
    plan.round1[i].budget = std::max(plan.round1[i].budget, plan.round2[i].budget);
  }
  return plan;
}

std::vector<ConstraintSpec> calibrated_quantization(const Model& model, const std::vector<unsigned>& bits) {
  if (bits.size() != model.layers.size()) throw std::invalid_argument("one bit width per layer is required");
  std::vector<ConstraintSpec> specs;
  for (std::size_t i = 0; i < model.layers.size(); ++i) {
    if (bits[i] == 0) {
      specs.push_back(ConstraintSpec::none());
      continue;
    }
    if (bits[i] > 16) throw std::invalid_argument("quantization bits must be <= 16");
    const std::size_t m = std::size_t{1} << bits[i];
    const Layer& layer = model.layers[i];
    std::vector<std::uint8_t> include(layer.weights.size(), 1);
    auto w = layer.weights.values();
    for (std::size_t k = 0; k < include.size(); ++k) include[k] = layer.is_free(k) && w[k] != 0.0;
    // 24 significant bits keep every level and level difference exact, so
    // the grid regenerates bit-for-bit from (count, spacing).
    const double raw = calibrate_spacing(w, m, include);
    int e = 0;
    std::frexp(raw, &e);
    const double d = std::ldexp(std::round(std::ldexp(raw, 24 - e)), e - 24);
    specs.push_back(ConstraintSpec::quantization(symmetric_levels(m, d)));
  }
  return specs;
}

std::vector<double> epsilon_for(const std::vector<ConstraintSpec>& specs, double fraction) {
  std::vector<double> eps;
  for (const auto& s : specs) {
    if (s.kind == ConstraintKind::quantization && s.levels.size() > 1) {
      eps.push_back(fraction * (s.levels[1] - s.levels[0]));
    } else {
      eps.push_back(0.0);
    }
  }
  return eps;
}

QuantizeResult admm_quantize(Model model, const std::vector<unsigned>& bits, const Dataset& train,
                             const AdmmOptions& admm, const RetrainOptions& retrain, double epsilon_fraction) {
  if (!(epsilon_fraction >= 0.0 && epsilon_fraction <= 0.5)) {
    throw std::invalid_argument("quantization epsilon fraction must be in [0, 0.5]");
  }
  QuantizeResult out;
  out.specs = calibrated_quantization(model, bits);
  auto r = admm_regularize(std::move(model), out.specs, train, admm);
  out.state = std::move(r.state);
  out.model = masked_map_retrain_quant(std::move(r.model), out.specs, epsilon_for(out.specs, epsilon_fraction), train,
                                       retrain);
  return out;
}

json to_json(const IterationRecord& r) {
  return json{{"iteration", r.iteration},
              {"rho", r.rho},
              {"residual", r.residual},
              {"relative_residual", r.relative_residual},
              {"dual_update_exact", r.dual_update_exact},
              {"dual_difference_mismatches", r.dual_difference_mismatches},
              {"z_feasible", r.z_feasible},
              {"train_loss", r.train_loss},
              {"test_accuracy", std::isnan(r.test_accuracy) ? json(nullptr) : json(r.test_accuracy)}};
}

namespace {

json spec_to_json(const ConstraintSpec& s) {
  json j{{"kind", to_string(s.kind)}, {"budget", s.budget}};
  if (!s.levels.empty()) j["levels"] = s.levels;
  return j;
}

ConstraintSpec spec_from_json(const json& j) {
  ConstraintSpec s;
  s.kind = constraint_kind_from(j.at("kind").get<std::string>());
  s.budget = j.value("budget", std::size_t{0});
  if (j.contains("levels")) s.levels = j.at("levels").get<std::vector<double>>();
  return s;
}

}  // namespace

json to_json(const AdmmState& s, bool include_tensors) {
  json layers = json::array();
  for (const auto& l : s.layers) {
    json jl{{"layer", l.layer}, {"spec", spec_to_json(l.spec)}, {"rho", l.rho}};
    if (include_tensors) {
      jl["z"] = l.z;
      jl["u"] = l.u;
    }
    layers.push_back(std::move(jl));
  }
  json hist = json::array();
  for (const auto& r : s.history) hist.push_back(to_json(r));
  return json{{"iteration", s.iteration},
              {"session_epoch", s.session_epoch},
              {"layers", std::move(layers)},
              {"history", std::move(hist)},
              {"warnings", s.warnings}};
}

AdmmState admm_state_from_json(const json& j) {
  AdmmState s;
  s.iteration = j.at("iteration").get<std::size_t>();
  s.session_epoch = j.value("session_epoch", std::size_t{0});
  for (const auto& jl : j.at("layers")) {
    LayerAdmmState l;
    l.layer = jl.at("layer").get<std::size_t>();
    l.spec = spec_from_json(jl.at("spec"));
    l.rho = jl.at("rho").get<double>();
    l.z = jl.at("z").get<std::vector<double>>();
    l.u = jl.at("u").get<std::vector<double>>();
    s.layers.push_back(std::move(l));
  }
  for (const auto& jr : j.at("history")) {
    IterationRecord r;
    r.iteration = jr.at("iteration").get<std::size_t>();
    r.rho = jr.at("rho").get<std::vector<double>>();
    r.residual = jr.at("residual").get<std::vector<double>>();
    r.relative_residual = jr.at("relative_residual").get<std::vector<double>>();
    r.dual_update_exact = jr.at("dual_update_exact").get<bool>();
    r.dual_difference_mismatches = jr.at("dual_difference_mismatches").get<std::size_t>();
    r.z_feasible = jr.at("z_feasible").get<bool>();
    r.train_loss = jr.at("train_loss").get<double>();
    if (!jr.at("test_accuracy").is_null()) r.test_accuracy = jr.at("test_accuracy").get<double>();
    s.history.push_back(std::move(r));
  }
  s.warnings = j.value("warnings", std::vector<std::string>{});
  return s;
}

json to_json(const CompressionPlan& plan) {
  json r1 = json::array(), r2 = json::array();
  for (const auto& s : plan.round1) r1.push_back(spec_to_json(s));
  for (const auto& s : plan.round2) r2.push_back(spec_to_json(s));
  return json{{"round1", r1},
              {"round2", r2},
              {"round1_rates", plan.round1_rates},
              {"round2_rates", plan.round2_rates},
              {"epochs_per_round", plan.epochs_per_round},
              {"quant_epsilon_fraction", plan.quant_epsilon_fraction},
              {"warnings", plan.warnings}};
}

json to_json(const RhoSchedule& s) {
  return json{{"initial", s.initial}, {"growth", s.growth}, {"max_iterations", s.max_iterations}};
}

}  // namespace admmprune
