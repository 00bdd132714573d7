#include "admmprune/checkpoint.hpp"

#include <fstream>
#include <sstream>

namespace admmprune {

using nlohmann::json;

namespace {

LayerKind kind_from(const std::string& s) {
  if (s == "conv") return LayerKind::conv;
  if (s == "fc") return LayerKind::fc;
  throw std::invalid_argument("checkpoint: unknown layer kind '" + s + "'");
}

Activation activation_from(const std::string& s) {
  if (s == "relu") return Activation::relu;
  if (s == "none") return Activation::none;
  throw std::invalid_argument("checkpoint: unknown activation '" + s + "'");
}

Pooling pooling_from(const std::string& s) {
  if (s == "max2") return Pooling::max2;
  if (s == "none") return Pooling::none;
  throw std::invalid_argument("checkpoint: unknown pooling '" + s + "'");
}

}  // namespace

json model_to_json(const Model& model) {
  json layers = json::array();
  for (const auto& l : model.layers) {
    const auto& d = l.weights.dims();
    auto w = l.weights.values();
    json jl = {
        {"name", l.name},
        {"kind", to_string(l.kind())},
        {"dims", {d.filters, d.channels, d.height, d.width}},
        {"padding", l.padding},
        {"activation", to_string(l.activation)},
        {"pooling", to_string(l.pooling)},
        {"weights", std::vector<double>(w.begin(), w.end())},
        {"bias", l.bias.values},
        {"mask", l.mask.empty() ? json(nullptr) : json(l.mask)},
        {"bias_mask", l.bias_mask.empty() ? json(nullptr) : json(l.bias_mask)},
    };
    if (l.quantization) {
      jl["quantization"] = {{"levels", l.quantization->level_count},
                            {"spacing", l.quantization->spacing}};
    } else {
      jl["quantization"] = nullptr;
    }
    layers.push_back(std::move(jl));
  }
  return json{{"format", kCheckpointFormat},
              {"version", kCheckpointVersion},
              {"dtype", "f64"},
              {"input", {model.input.channels, model.input.height, model.input.width}},
              {"classes", model.classes},
              {"layers", std::move(layers)}};
}

Model model_from_json(const json& j) {
  if (j.value("format", "") != kCheckpointFormat) {
    throw std::invalid_argument("checkpoint: not an admmprune checkpoint");
  }
  if (j.at("version").get<int>() != kCheckpointVersion) {
    throw std::invalid_argument("checkpoint: unsupported version " + j.at("version").dump());
  }
  if (j.value("dtype", "") != "f64") throw std::invalid_argument("checkpoint: dtype must be f64");
  Model m;
  auto in = j.at("input").get<std::vector<std::size_t>>();
  if (in.size() != 3) throw std::invalid_argument("checkpoint: input must have 3 dims");
  m.input = FeatureShape{in[0], in[1], in[2]};
  m.classes = j.at("classes").get<std::size_t>();
  for (const auto& jl : j.at("layers")) {
    Layer l;
    l.name = jl.at("name").get<std::string>();
    auto dims = jl.at("dims").get<std::vector<std::size_t>>();
    if (dims.size() != 4) throw std::invalid_argument("checkpoint: layer dims must have 4 entries");
    l.weights = WeightTensor(kind_from(jl.at("kind").get<std::string>()),
                             Shape4{dims[0], dims[1], dims[2], dims[3]},
                             jl.at("weights").get<std::vector<double>>());
    l.bias.values = jl.at("bias").get<std::vector<double>>();
    l.padding = jl.at("padding").get<std::size_t>();
    l.activation = activation_from(jl.at("activation").get<std::string>());
    l.pooling = pooling_from(jl.at("pooling").get<std::string>());
    if (!jl.at("mask").is_null()) l.mask = jl.at("mask").get<std::vector<std::uint8_t>>();
    if (!jl.at("bias_mask").is_null()) l.bias_mask = jl.at("bias_mask").get<std::vector<std::uint8_t>>();
    if (jl.contains("quantization") && !jl.at("quantization").is_null()) {
      l.quantization = QuantizationInfo{jl["quantization"].at("levels").get<std::size_t>(),
                                        jl["quantization"].at("spacing").get<double>()};
    }
    l.weights.require_finite("checkpoint layer '" + l.name + "'");
    m.layers.push_back(std::move(l));
  }
  m.validate();
  return m;
}

void write_text_atomic(const std::filesystem::path& path, const std::string& text) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write " + tmp.string());
    out << text;
    if (!out) throw std::runtime_error("write failed for " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

std::string read_text(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void save_checkpoint(const Model& model, const std::filesystem::path& path) {
  write_text_atomic(path, model_to_json(model).dump());
}

Model load_checkpoint(const std::filesystem::path& path) {
  return model_from_json(json::parse(read_text(path)));
}

}  // namespace admmprune
