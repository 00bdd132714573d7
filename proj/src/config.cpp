#include "admmprune/config.hpp"

#include <filesystem>
#include <set>

#include "admmprune/checkpoint.hpp"
#include "admmprune/mnist.hpp"
#include "admmprune/model.hpp"

namespace admmprune {

using nlohmann::json;

namespace {

std::string join(const std::string& prefix, const std::string& key) {
  return prefix.empty() ? key : prefix + "." + key;
}

// Reads one JSON object, remembering which keys were consumed.
class ObjectReader {
 public:
  ObjectReader(const json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) throw ConfigError(path_.empty() ? "<root>" : path_, "expected an object");
  }

  template <typename T>
  void read(const char* key, T& out) {
    seen_.insert(key);
    if (!j_.contains(key)) return;
    const json& v = j_.at(key);
    bool ok = true;
    if constexpr (std::is_same_v<T, bool>) ok = v.is_boolean();
    else if constexpr (std::is_same_v<T, std::string>) ok = v.is_string();
    else if constexpr (std::is_unsigned_v<T>) ok = v.is_number_unsigned();
    else if constexpr (std::is_integral_v<T>) ok = v.is_number_integer();
    else if constexpr (std::is_arithmetic_v<T>) ok = v.is_number();
    if (!ok) throw ConfigError(join(path_, key), "expected " + type_name<T>() + ", got " + v.dump());
    try {
      out = v.get<T>();
    } catch (const json::exception&) {
      throw ConfigError(join(path_, key), "expected " + type_name<T>() + ", got " + j_.at(key).dump());
    }
  }

  const json* child(const char* key) {
    seen_.insert(key);
    return j_.contains(key) ? &j_.at(key) : nullptr;
  }

  std::string field(const char* key) const { return join(path_, key); }

  void finish() const {
    for (const auto& [k, v] : j_.items())
      if (!seen_.count(k)) throw ConfigError(join(path_, k), "unknown field");
  }

 private:
  template <typename T>
  static std::string type_name() {
    if constexpr (std::is_same_v<T, bool>) return "a boolean";
    else if constexpr (std::is_same_v<T, std::string>) return "a string";
    else if constexpr (std::is_unsigned_v<T>) return "a non-negative integer";
    else if constexpr (std::is_arithmetic_v<T>) return "a number";
    else return "an array";
  }

  const json& j_;
  std::string path_;
  std::set<std::string> seen_;
};

void check(bool ok, const std::string& field, const std::string& what) {
  if (!ok) throw ConfigError(field, what);
}

void check_train(const TrainConfig& c, const std::string& field) {
  check(c.learning_rate > 0.0, field + ".learning_rate", "must be > 0");
  check(c.momentum >= 0.0 && c.momentum < 1.0, field + ".momentum", "must be in [0, 1)");
  check(c.batch_size >= 1, field + ".batch_size", "must be >= 1");
  check(c.weight_decay >= 0.0, field + ".weight_decay", "must be >= 0");
  check(c.lr_gamma > 0.0, field + ".lr_gamma", "must be > 0");
}

void check_rates(const std::vector<double>& rates, const std::string& field) {
  for (std::size_t i = 0; i < rates.size(); ++i)
    check(rates[i] == 0.0 || rates[i] >= 1.0, field + "[" + std::to_string(i) + "]", "must be 0 or >= 1");
}

}  // namespace

json to_json(const TrainConfig& c) {
  return json{{"learning_rate", c.learning_rate}, {"momentum", c.momentum},
              {"batch_size", c.batch_size},       {"epochs", c.epochs},
              {"weight_decay", c.weight_decay},   {"lr_step_epochs", c.lr_step_epochs},
              {"lr_gamma", c.lr_gamma}};
}

TrainConfig train_config_from_json(const json& j, const std::string& field) {
  TrainConfig c;
  ObjectReader r(j, field);
  r.read("learning_rate", c.learning_rate);
  r.read("momentum", c.momentum);
  r.read("batch_size", c.batch_size);
  r.read("epochs", c.epochs);
  r.read("weight_decay", c.weight_decay);
  r.read("lr_step_epochs", c.lr_step_epochs);
  r.read("lr_gamma", c.lr_gamma);
  r.finish();
  return c;
}

namespace {

TrainConfig merged_train(const json* j, const std::string& field, TrainConfig base) {
  if (!j) return base;
  // Start from the defaults of this section, then overlay.
  json full = to_json(base);
  if (!j->is_object()) throw ConfigError(field, "expected an object");
  for (const auto& [k, v] : j->items()) full[k] = v;
  return train_config_from_json(full, field);
}

}  // namespace

ExperimentConfig default_config() {
  ExperimentConfig c;
  c.train.learning_rate = 0.02;
  c.train.weight_decay = 5e-4;
  c.train.epochs = 20;
  c.train.lr_step_epochs = 8;
  c.admm_train.learning_rate = 0.005;
  c.admm_train.epochs = 1;
  c.retrain.learning_rate = 0.005;
  c.retrain.epochs = 3;
  return c;
}

ExperimentConfig config_from_json(const json& j) {
  ExperimentConfig c = default_config();
  ObjectReader r(j, "");
  r.read("architecture", c.architecture);
  r.read("data_dir", c.data_dir);
  r.read("init_checkpoint", c.init_checkpoint);
  r.read("output_dir", c.output_dir);
  r.read("seed", c.seed);
  c.train = merged_train(r.child("train"), "train", c.train);
  if (const json* a = r.child("admm")) {
    ObjectReader ar(*a, "admm");
    if (const json* rho = ar.child("rho")) {
      ObjectReader rr(*rho, "admm.rho");
      rr.read("initial", c.rho.initial);
      rr.read("growth", c.rho.growth);
      rr.read("max_iterations", c.rho.max_iterations);
      rr.finish();
    }
    c.admm_train = merged_train(ar.child("train"), "admm.train", c.admm_train);
    ar.read("divergence_factor", c.divergence_factor);
    ar.read("divergence_floor", c.divergence_floor);
    ar.read("residual_growth_warn", c.residual_growth_warn);
    ar.finish();
  }
  if (const json* rt = r.child("retrain")) {
    json copy = *rt;
    if (!copy.is_object()) throw ConfigError("retrain", "expected an object");
    if (copy.contains("collapse_points")) {
      try {
        c.collapse_points = copy.at("collapse_points").get<double>();
      } catch (const json::exception&) {
        throw ConfigError("retrain.collapse_points", "expected a number");
      }
      copy.erase("collapse_points");
    }
    c.retrain = merged_train(&copy, "retrain", c.retrain);
  }
  if (const json* cp = r.child("compress")) {
    ObjectReader cr(*cp, "compress");
    cr.read("nonstructured_rates", c.compress.nonstructured_rates);
    cr.read("column_rates", c.compress.column_rates);
    cr.read("filter_rates", c.compress.filter_rates);
    cr.read("round2_factor", c.compress.round2_factor);
    cr.finish();
  }
  if (const json* q = r.child("quantization")) {
    ObjectReader qr(*q, "quantization");
    if (const json* bits = qr.child("bits"); bits && bits->is_number_unsigned()) {
      c.quantization.bits = {bits->get<unsigned>()};
    } else {
      qr.read("bits", c.quantization.bits);
    }
    qr.read("epsilon_fraction", c.quantization.epsilon_fraction);
    qr.finish();
  }
  if (const json* cm = r.child("comparison")) {
    ObjectReader cr(*cm, "comparison");
    cr.read("accuracy_band", c.comparison.accuracy_band);
    cr.read("max_backoff", c.comparison.max_backoff);
    cr.read("ppr_nonstructured", c.comparison.ppr_nonstructured);
    cr.read("quant_bits", c.comparison.quant_bits);
    cr.read("conv_only", c.comparison.conv_only);
    cr.finish();
  }
  r.finish();
  c.train.seed = c.admm_train.seed = c.retrain.seed = c.seed;
  return c;
}

json to_json(const ExperimentConfig& c) {
  json retrain = to_json(c.retrain);
  retrain["collapse_points"] = c.collapse_points;
  return json{{"architecture", c.architecture},
              {"data_dir", c.data_dir},
              {"init_checkpoint", c.init_checkpoint},
              {"output_dir", c.output_dir},
              {"seed", c.seed},
              {"train", to_json(c.train)},
              {"admm",
               {{"rho", to_json(c.rho)},
                {"train", to_json(c.admm_train)},
                {"divergence_factor", c.divergence_factor},
                {"divergence_floor", c.divergence_floor},
                {"residual_growth_warn", c.residual_growth_warn}}},
              {"retrain", retrain},
              {"compress",
               {{"nonstructured_rates", c.compress.nonstructured_rates},
                {"column_rates", c.compress.column_rates},
                {"filter_rates", c.compress.filter_rates},
                {"round2_factor", c.compress.round2_factor}}},
              {"quantization", {{"bits", c.quantization.bits}, {"epsilon_fraction", c.quantization.epsilon_fraction}}},
              {"comparison",
               {{"accuracy_band", c.comparison.accuracy_band},
                {"max_backoff", c.comparison.max_backoff},
                {"ppr_nonstructured", c.comparison.ppr_nonstructured},
                {"quant_bits", c.comparison.quant_bits},
                {"conv_only", c.comparison.conv_only}}}};
}

void ExperimentConfig::validate(bool check_paths) const {
  const auto ids = architecture_ids();
  check(std::find(ids.begin(), ids.end(), architecture) != ids.end(), "architecture",
        "unknown architecture '" + architecture + "'");
  check_train(train, "train");
  check_train(admm_train, "admm.train");
  check_train(retrain, "retrain");
  check(rho.initial > 0.0, "admm.rho.initial", "must be > 0");
  check(rho.growth >= 1.0, "admm.rho.growth", "must be >= 1");
  check(rho.max_iterations >= 1, "admm.rho.max_iterations", "must be >= 1");
  check(divergence_factor > 1.0, "admm.divergence_factor", "must be > 1");
  check(divergence_floor >= 0.0, "admm.divergence_floor", "must be >= 0");
  check(collapse_points > 0.0 && collapse_points <= 1.0, "retrain.collapse_points", "must be in (0, 1]");
  check_rates(compress.nonstructured_rates, "compress.nonstructured_rates");
  check_rates(compress.column_rates, "compress.column_rates");
  check_rates(compress.filter_rates, "compress.filter_rates");
  check(compress.round2_factor >= 1.0, "compress.round2_factor", "must be >= 1");
  for (std::size_t i = 0; i < quantization.bits.size(); ++i)
    check(quantization.bits[i] <= 16, "quantization.bits[" + std::to_string(i) + "]", "must be <= 16");
  check(quantization.epsilon_fraction >= 0.0 && quantization.epsilon_fraction <= 0.5, "quantization.epsilon_fraction",
        "must be in [0, 0.5]");
  check(comparison.accuracy_band >= 0.0, "comparison.accuracy_band", "must be >= 0");
  check(comparison.ppr_nonstructured >= 1.0, "comparison.ppr_nonstructured", "must be >= 1");
  check(comparison.quant_bits <= 16, "comparison.quant_bits", "must be <= 16");
  check(!output_dir.empty(), "output_dir", "must not be empty");
  if (!check_paths) return;
  if (!data_dir.empty()) {
    check(std::filesystem::is_directory(data_dir), "data_dir", "directory '" + data_dir + "' does not exist");
  }
  if (!init_checkpoint.empty()) {
    check(std::filesystem::is_regular_file(init_checkpoint), "init_checkpoint",
          "file '" + init_checkpoint + "' does not exist");
  }
}

void apply_override(json& j, const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos || eq == 0) {
    throw ConfigError(assignment, "override must have the form key=value");
  }
  const std::string key = assignment.substr(0, eq);
  const std::string text = assignment.substr(eq + 1);
  json value;
  try {
    value = json::parse(text);
  } catch (const json::parse_error&) {
    value = text;
  }
  json* node = &j;
  std::size_t start = 0;
  while (true) {
    const auto dot = key.find('.', start);
    const std::string part = key.substr(start, dot == std::string::npos ? std::string::npos : dot - start);
    if (part.empty()) throw ConfigError(key, "empty path component");
    if (!node->is_object()) throw ConfigError(key.substr(0, start ? start - 1 : 0), "is not an object");
    if (dot == std::string::npos) {
      (*node)[part] = value;
      return;
    }
    node = &(*node)[part];
    if (node->is_null()) *node = json::object();
    start = dot + 1;
  }
}

ExperimentConfig load_config(const std::string& path, const std::vector<std::string>& overrides) {
  json j = json::object();
  if (!path.empty()) {
    try {
      j = json::parse(read_text(path));
    } catch (const json::parse_error& e) {
      throw ConfigError(path, std::string("invalid JSON: ") + e.what());
    }
  }
  for (const auto& o : overrides) apply_override(j, o);
  ExperimentConfig c = config_from_json(j);
  c.validate();
  return c;
}

std::vector<unsigned> expand_bits(const std::vector<unsigned>& bits, std::size_t layers) {
  if (bits.size() == 1) return std::vector<unsigned>(layers, bits[0]);
  if (bits.size() != layers) {
    throw ConfigError("quantization.bits", "expected 1 or " + std::to_string(layers) + " entries, got " +
                                               std::to_string(bits.size()));
  }
  return bits;
}

}  // namespace admmprune
